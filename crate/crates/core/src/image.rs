//! Planar float rasters and disparity maps.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::math;

/// Planar float raster with 1 or 3 channels, nominal range `[0, 1]`.
///
/// Samples are stored channel-major: `data[c * w * h + y * w + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            bail!(Shape, "image must have 1 or 3 channels, got {channels}");
        }
        if data.len() != width * height * channels {
            bail!(
                Shape,
                "image data length {} does not match {width}x{height}x{channels}",
                data.len()
            );
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            bail!(Domain, "non-finite image sample at index {i}");
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        assert!(channels == 1 || channels == 3);
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Builds a single-channel image from a function of `(x, y)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Per-channel mean over the whole raster, accumulated in f64.
    pub fn channel_means(&self) -> Vec<f32> {
        (0..self.channels)
            .map(|c| {
                let p = self.plane(c);
                (p.iter().map(|&v| v as f64).sum::<f64>() / p.len() as f64) as f32
            })
            .collect()
    }

    /// Luma with BT.601 weights; single-channel input is returned as is.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        let data = r
            .iter()
            .zip(g)
            .zip(b)
            .map(|((&r, &g), &b)| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Bilinear sample of channel `c` at continuous pixel coordinates, with
    /// clamp-to-edge outside the raster.
    #[inline]
    pub fn sample_bilinear(&self, c: usize, x: f32, y: f32) -> f32 {
        sample_bilinear(self.plane(c), self.width, self.height, x, y)
    }
}

/// Bilinear sample on a single plane with clamp-to-edge.
///
/// Integer coordinates return the stored sample exactly.
#[inline]
pub fn sample_bilinear(plane: &[f32], width: usize, height: usize, x: f32, y: f32) -> f32 {
    let max_x = (width - 1) as f32;
    let max_y = (height - 1) as f32;
    let x = x.clamp(0.0, max_x);
    let y = y.clamp(0.0, max_y);
    let x0 = math::floorf(x);
    let y0 = math::floorf(y);
    let fx = x - x0;
    let fy = y - y0;
    let x0 = x0 as usize;
    let y0 = y0 as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let row0 = &plane[y0 * width..];
    let row1 = &plane[y1 * width..];
    if fx == 0.0 && fy == 0.0 {
        return row0[x0];
    }
    let top = if fx == 0.0 {
        row0[x0]
    } else {
        row0[x0] * (1.0 - fx) + row0[x1] * fx
    };
    if fy == 0.0 {
        return top;
    }
    let bottom = if fx == 0.0 {
        row1[x0]
    } else {
        row1[x0] * (1.0 - fx) + row1[x1] * fx
    };
    top * (1.0 - fy) + bottom * fy
}

/// 2×2 mean pooling. Odd trailing rows/columns are replicated, so the
/// output is `ceil(w/2) × ceil(h/2)`.
pub fn downsample_half(img: &Image) -> Result<Image> {
    if img.width < 2 || img.height < 2 {
        bail!(
            Shape,
            "cannot halve a {}x{} image (both sides must be >= 2)",
            img.width,
            img.height
        );
    }
    let (w, h) = (img.width, img.height);
    let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));
    let mut data = Vec::with_capacity(ow * oh * img.channels);
    for c in 0..img.channels {
        let p = img.plane(c);
        for oy in 0..oh {
            let y0 = 2 * oy;
            let y1 = (y0 + 1).min(h - 1);
            for ox in 0..ow {
                let x0 = 2 * ox;
                let x1 = (x0 + 1).min(w - 1);
                let s = p[y0 * w + x0] + p[y0 * w + x1] + p[y1 * w + x0] + p[y1 * w + x1];
                data.push(s * 0.25);
            }
        }
    }
    Ok(Image {
        width: ow,
        height: oh,
        channels: img.channels,
        data,
    })
}

/// Area-averaging downscale by `2^halvings`.
pub fn downsample_pow2(img: &Image, halvings: u32) -> Result<Image> {
    let mut out = img.clone();
    for _ in 0..halvings {
        out = downsample_half(&out)?;
    }
    Ok(out)
}

/// Bilinear resize with pixel-center alignment.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        bail!(Shape, "resize target {width}x{height} is empty");
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let sx = img.width as f32 / width as f32;
    let sy = img.height as f32 / height as f32;
    let mut data = Vec::with_capacity(width * height * img.channels);
    for c in 0..img.channels {
        let p = img.plane(c);
        for y in 0..height {
            let fy = (y as f32 + 0.5) * sy - 0.5;
            for x in 0..width {
                let fx = (x as f32 + 0.5) * sx - 0.5;
                data.push(sample_bilinear(p, img.width, img.height, fx, fy));
            }
        }
    }
    Ok(Image {
        width,
        height,
        channels: img.channels,
        data,
    })
}

/// Dense disparity map in pixels. Invalid pixels are stored as `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DisparityMap {
    /// All pixels invalid.
    pub fn new_invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![f32::INFINITY; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds a map from raw values; any non-finite or negative value marks the
    /// pixel invalid.
    pub fn from_values(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            bail!(
                Shape,
                "disparity data length {} does not match {width}x{height}",
                data.len()
            );
        }
        for v in data.iter_mut() {
            if !v.is_finite() || *v < 0.0 {
                *v = f32::INFINITY;
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a map from values and an explicit validity mask.
    pub fn from_parts(width: usize, height: usize, values: &[f32], valid: &[bool]) -> Result<Self> {
        if values.len() != width * height || valid.len() != width * height {
            bail!(Shape, "disparity parts do not match {width}x{height}");
        }
        let data = values
            .iter()
            .zip(valid)
            .map(|(&v, &ok)| if ok { v } else { f32::INFINITY })
            .collect();
        Self::from_values(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Raw values; invalid pixels read as `+inf`.
    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn is_valid_at(&self, i: usize) -> bool {
        self.data[i].is_finite()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        let v = self.data[y * self.width + x];
        v.is_finite().then_some(v)
    }

    /// Sets a pixel; `None`, non-finite or negative values invalidate it.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: Option<f32>) {
        self.data[y * self.width + x] = match v {
            Some(d) if d.is_finite() && d >= 0.0 => d,
            _ => f32::INFINITY,
        };
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.data.iter().map(|v| v.is_finite()).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| v.is_finite()).count()
    }

    /// Multiplies every valid disparity by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        let data = self
            .data
            .iter()
            .map(|&v| if v.is_finite() { v * factor } else { v })
            .collect();
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Invalidates every pixel where `keep` is false.
    pub fn masked(&self, keep: &[bool]) -> Self {
        let data = self
            .data
            .iter()
            .zip(keep)
            .map(|(&v, &k)| if k { v } else { f32::INFINITY })
            .collect();
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Validity-aware bilinear resize: interpolates over valid neighbours only
    /// and invalidates a pixel when none of its four neighbours is valid.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        self.resample(width, height, sx, sy)
    }

    /// Upsamples a map whose pixels cover `factor × factor` output pixels
    /// (cropping the padded border of a ceil-divided level).
    pub fn upsample_by(&self, factor: usize, width: usize, height: usize) -> Self {
        let s = 1.0 / factor as f32;
        self.resample(width, height, s, s)
    }

    fn resample(&self, width: usize, height: usize, sx: f32, sy: f32) -> Self {
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            let y0 = math::floorf(fy) as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f32;
            for x in 0..width {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                let x0 = math::floorf(fx) as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f32;
                let taps = [
                    (x0, y0, (1.0 - tx) * (1.0 - ty)),
                    (x1, y0, tx * (1.0 - ty)),
                    (x0, y1, (1.0 - tx) * ty),
                    (x1, y1, tx * ty),
                ];
                let mut acc = 0.0f32;
                let mut wsum = 0.0f32;
                for (xx, yy, w) in taps {
                    let v = self.data[yy * self.width + xx];
                    if v.is_finite() && w > 0.0 {
                        acc += v * w;
                        wsum += w;
                    }
                }
                out.push(if wsum > 0.0 { acc / wsum } else { f32::INFINITY });
            }
        }
        Self {
            width,
            height,
            data: out,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsample_constant_stays_constant() {
        let img = Image::filled(7, 5, 1, 0.3);
        let half = downsample_half(&img).unwrap();
        assert_eq!((half.width(), half.height()), (4, 3));
        assert!(half.data().iter().all(|&v| (v - 0.3).abs() < 1e-7));
    }

    #[test]
    fn downsample_block_mean() {
        let img = Image::new(2, 2, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let half = downsample_half(&img).unwrap();
        assert_eq!(half.data(), &[0.5]);
    }

    #[test]
    fn downsample_three_times_is_ceil_eighth() {
        let img = Image::filled(101, 67, 1, 0.0);
        let out = downsample_pow2(&img, 3).unwrap();
        assert_eq!((out.width(), out.height()), (101usize.div_ceil(8), 67usize.div_ceil(8)));
    }

    #[test]
    fn downsample_rejects_single_pixel_side() {
        assert!(downsample_half(&Image::filled(1, 4, 1, 0.0)).is_err());
        assert!(downsample_half(&Image::filled(4, 1, 1, 0.0)).is_err());
    }

    #[test]
    fn image_rejects_bad_shapes() {
        assert!(Image::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(Image::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn bilinear_exact_on_grid() {
        let img = Image::from_fn(4, 3, |x, y| (x * 10 + y) as f32);
        assert_eq!(img.sample_bilinear(0, 2.0, 1.0), 21.0);
        assert_eq!(img.sample_bilinear(0, 1.5, 0.0), 15.0);
        assert_eq!(img.sample_bilinear(0, -3.0, 0.0), 0.0);
    }

    #[test]
    fn disparity_invalid_sentinel() {
        let m = DisparityMap::from_values(2, 1, vec![1.0, f32::NAN]).unwrap();
        assert_eq!(m.get(0, 0), Some(1.0));
        assert_eq!(m.get(1, 0), None);
        assert_eq!(m.valid_count(), 1);
    }

    #[test]
    fn disparity_resize_ignores_invalid() {
        let m = DisparityMap::from_values(2, 1, vec![4.0, f32::INFINITY]).unwrap();
        let up = m.resize_bilinear(4, 2);
        for y in 0..2 {
            assert_eq!(
                [up.get(0, y), up.get(1, y), up.get(2, y), up.get(3, y)],
                [Some(4.0), Some(4.0), Some(4.0), None]
            );
        }
    }
}
