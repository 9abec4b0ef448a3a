//! Portable float map (PFM) codec.
//!
//! A PFM file is a text header (`Pf` or `PF`, `width height`, scale) and a
//! float32 payload stored bottom row first. A negative scale means the
//! payload is little-endian. Disparity maps use `+inf` for invalid pixels.

use anystereo_core::{DisparityMap, Image};

use crate::error::{format_err, Error, Result};

/// A decoded PFM raster, rows top-down, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    /// 1 (`Pf`) or 3 (`PF`).
    pub channels: usize,
    /// Magnitude of the header scale.
    pub scale: f32,
    pub little_endian: bool,
    pub data: Vec<f32>,
}

impl Pfm {
    /// Single-channel little-endian raster with scale 1.
    pub fn gray(width: usize, height: usize, data: Vec<f32>) -> Self {
        Self {
            width,
            height,
            channels: 1,
            scale: 1.0,
            little_endian: true,
            data,
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Next whitespace-delimited token, consuming exactly one trailing
    /// whitespace byte.
    fn token(&mut self, what: &str) -> Result<(usize, &str)> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return format_err(start, format!("missing {what}"));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Format {
                offset: start,
                message: format!("{what} is not ASCII"),
            })?;
        if self.pos >= self.bytes.len() {
            return format_err(self.pos, format!("header ends after {what}"));
        }
        self.pos += 1;
        Ok((start, text))
    }
}

/// Decodes PFM bytes.
pub fn read_pfm(bytes: &[u8]) -> Result<Pfm> {
    let mut c = Cursor { bytes, pos: 0 };
    let (at, magic) = c.token("magic")?;
    let channels = match magic {
        "Pf" => 1,
        "PF" => 3,
        other => return format_err(at, format!("unknown magic {other:?}")),
    };
    let mut dim = |what: &str| -> Result<usize> {
        let (at, t) = c.token(what)?;
        match t.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => format_err(at, format!("bad {what} {t:?}")),
        }
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let (at, t) = c.token("scale")?;
    let scale: f32 = t.parse().map_err(|_| Error::Format {
        offset: at,
        message: format!("bad scale {t:?}"),
    })?;
    if scale == 0.0 || !scale.is_finite() {
        return format_err(at, format!("scale must be finite and nonzero, got {t}"));
    }
    let little_endian = scale < 0.0;
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::Format {
            offset: at,
            message: "dimensions overflow".into(),
        })?;
    let payload = &bytes[c.pos..];
    if payload.len() < 4 * n {
        return format_err(
            bytes.len(),
            format!("payload truncated: {} of {} bytes", payload.len(), 4 * n),
        );
    }
    if payload.len() > 4 * n {
        return format_err(c.pos + 4 * n, "trailing bytes after payload");
    }
    let row = width * channels;
    let mut data = vec![0.0f32; n];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (file_row, col) = (i / row, i % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Ok(Pfm {
        width,
        height,
        channels,
        scale: scale.abs(),
        little_endian,
        data,
    })
}

/// Encodes a raster. NaN anywhere is rejected; `±inf` is kept.
pub fn write_pfm(pfm: &Pfm) -> Result<Vec<u8>> {
    if pfm.width == 0 || pfm.height == 0 {
        return Err(Error::Invalid("cannot write an empty PFM".into()));
    }
    if !matches!(pfm.channels, 1 | 3) {
        return Err(Error::Invalid(format!("PFM holds 1 or 3 channels, got {}", pfm.channels)));
    }
    if pfm.data.len() != pfm.width * pfm.height * pfm.channels {
        return Err(Error::Invalid("PFM data length does not match its shape".into()));
    }
    if !(pfm.scale.is_finite() && pfm.scale > 0.0) {
        return Err(Error::Invalid(format!("PFM scale must be finite and > 0, got {}", pfm.scale)));
    }
    if let Some(i) = pfm.data.iter().position(|v| v.is_nan()) {
        return Err(Error::Invalid(format!("NaN at sample {i}")));
    }
    let magic = if pfm.channels == 1 { "Pf" } else { "PF" };
    let scale = if pfm.little_endian { -pfm.scale } else { pfm.scale };
    let mut out = format!("{magic}\n{} {}\n{scale:?}\n", pfm.width, pfm.height).into_bytes();
    out.reserve(4 * pfm.data.len());
    let row = pfm.width * pfm.channels;
    for r in (0..pfm.height).rev() {
        for &v in &pfm.data[r * row..(r + 1) * row] {
            out.extend_from_slice(&if pfm.little_endian {
                v.to_le_bytes()
            } else {
                v.to_be_bytes()
            });
        }
    }
    Ok(out)
}

/// Reads a single-channel PFM as a disparity map; infinite, NaN and
/// negative samples are invalid.
pub fn read_pfm_disparity(bytes: &[u8]) -> Result<DisparityMap> {
    let p = read_pfm(bytes)?;
    if p.channels != 1 {
        return format_err(0, "disparity PFM must be single-channel (Pf)");
    }
    Ok(DisparityMap::from_values(p.width, p.height, p.data)?)
}

/// Writes a disparity map with `+inf` at invalid pixels.
pub fn write_pfm_disparity(map: &DisparityMap) -> Result<Vec<u8>> {
    write_pfm(&Pfm::gray(map.width(), map.height(), map.values().to_vec()))
}

/// Reads a 1- or 3-channel PFM as an image. All samples must be finite.
pub fn read_pfm_image(bytes: &[u8]) -> Result<Image> {
    let p = read_pfm(bytes)?;
    if p.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("image PFM contains non-finite samples".into()));
    }
    let n = p.width * p.height;
    let mut planar = vec![0.0f32; n * p.channels];
    for (i, px) in p.data.chunks_exact(p.channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            planar[c * n + i] = v;
        }
    }
    Ok(Image::new(p.width, p.height, p.channels, planar)?)
}

/// Writes an image as a 1- or 3-channel PFM.
pub fn write_pfm_image(img: &Image) -> Result<Vec<u8>> {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let n = w * h;
    let mut data = vec![0.0f32; n * ch];
    for c in 0..ch {
        for (i, &v) in img.plane(c).iter().enumerate() {
            data[i * ch + c] = v;
        }
    }
    write_pfm(&Pfm {
        width: w,
        height: h,
        channels: ch,
        scale: 1.0,
        little_endian: true,
        data,
    })
}
