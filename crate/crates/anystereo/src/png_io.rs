//! PNG rasters: KITTI 16-bit disparity maps and 8/16-bit images.

use std::io::Cursor;

use anystereo_core::{DisparityMap, Image};
use png::{BitDepth, ColorType, Transformations};

use crate::error::{format_err, Error, Result};

struct Decoded {
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    samples: Vec<u16>,
}

fn decode(bytes: &[u8], expand: bool) -> Result<Decoded> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    if expand {
        dec.set_transformations(Transformations::EXPAND);
    }
    let mut reader = dec.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Invalid("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());
    let samples = match info.bit_depth {
        BitDepth::Sixteen => buf
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect(),
        BitDepth::Eight => buf.iter().map(|&b| b as u16).collect(),
        other => return format_err(0, format!("unsupported PNG bit depth {other:?}")),
    };
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        samples,
    })
}

fn encode(width: usize, height: usize, color: ColorType, depth: BitDepth, samples: &[u16]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut w = enc.write_header()?;
        let bytes: Vec<u8> = match depth {
            BitDepth::Sixteen => samples.iter().flat_map(|s| s.to_be_bytes()).collect(),
            _ => samples.iter().map(|&s| s as u8).collect(),
        };
        w.write_image_data(&bytes)?;
        w.finish()?;
    }
    Ok(out)
}

/// Decodes a KITTI disparity PNG: `disparity = stored / 256`, 0 invalid.
pub fn read_kitti_disparity(bytes: &[u8]) -> Result<DisparityMap> {
    let d = decode(bytes, false)?;
    if d.color != ColorType::Grayscale || d.depth != BitDepth::Sixteen {
        return format_err(
            0,
            format!(
                "KITTI disparity must be 16-bit grayscale, got {:?} at {:?}",
                d.color, d.depth
            ),
        );
    }
    let values = d
        .samples
        .iter()
        .map(|&s| if s == 0 { f32::INFINITY } else { s as f32 / 256.0 })
        .collect();
    Ok(DisparityMap::from_values(d.width, d.height, values)?)
}

/// Encodes a disparity map as a KITTI PNG, rounding `256·d` to the nearest
/// code. Invalid pixels, and valid ones that round to 0, store 0.
pub fn write_kitti_disparity(map: &DisparityMap) -> Result<Vec<u8>> {
    if map.is_empty() {
        return Err(Error::Invalid("cannot write an empty disparity map".into()));
    }
    let mut samples = Vec::with_capacity(map.len());
    for (i, &v) in map.values().iter().enumerate() {
        if !map.is_valid_at(i) {
            samples.push(0);
            continue;
        }
        let code = (v as f64 * 256.0).round();
        if code > u16::MAX as f64 {
            return Err(Error::Invalid(format!(
                "disparity {v} at pixel {i} exceeds the KITTI range"
            )));
        }
        samples.push(code as u16);
    }
    encode(map.width(), map.height(), ColorType::Grayscale, BitDepth::Sixteen, &samples)
}

/// Decodes an 8- or 16-bit PNG into an image normalised by the maximum code
/// value. Gray stays one channel; colour becomes three; alpha is dropped.
pub fn read_png_image(bytes: &[u8]) -> Result<Image> {
    let d = decode(bytes, true)?;
    let (stride, channels) = match d.color {
        ColorType::Grayscale => (1, 1),
        ColorType::GrayscaleAlpha => (2, 1),
        ColorType::Rgb => (3, 3),
        ColorType::Rgba => (4, 3),
        other => return format_err(0, format!("unsupported PNG colour type {other:?}")),
    };
    let max = match d.depth {
        BitDepth::Sixteen => 65535.0f64,
        _ => 255.0,
    };
    let n = d.width * d.height;
    let mut planar = vec![0.0f32; n * channels];
    for (i, px) in d.samples.chunks_exact(stride).enumerate() {
        for c in 0..channels {
            planar[c * n + i] = (px[c] as f64 / max) as f32;
        }
    }
    Ok(Image::new(d.width, d.height, channels, planar)?)
}

/// Encodes a 1- or 3-channel image at 8 or 16 bits, clamping to `[0, 1]`.
pub fn write_png_image(img: &Image, sixteen_bit: bool) -> Result<Vec<u8>> {
    let color = match img.channels() {
        1 => ColorType::Grayscale,
        3 => ColorType::Rgb,
        c => return Err(Error::Invalid(format!("PNG output needs 1 or 3 channels, got {c}"))),
    };
    let (depth, max) = if sixteen_bit {
        (BitDepth::Sixteen, 65535.0f64)
    } else {
        (BitDepth::Eight, 255.0)
    };
    let (n, ch) = (img.width() * img.height(), img.channels());
    let mut samples = vec![0u16; n * ch];
    for c in 0..ch {
        for (i, &v) in img.plane(c).iter().enumerate() {
            samples[i * ch + c] = ((v as f64).clamp(0.0, 1.0) * max).round() as u16;
        }
    }
    encode(img.width(), img.height(), color, depth, &samples)
}
