//! 4D feature volumes of signed descriptor differences.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::par;
use crate::pyramid::{divisor, FeatureLevel, LEVELS};

/// Disparity stride (level pixels per bin) for each level, finest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StridePolicy {
    pub strides: [usize; LEVELS],
}

impl Default for StridePolicy {
    /// Strided bins on the two finest volumes: `{2, 2, 1, 1}`.
    fn default() -> Self {
        Self {
            strides: [2, 2, 1, 1],
        }
    }
}

impl StridePolicy {
    /// One bin per level pixel on every level.
    pub fn unit() -> Self {
        Self { strides: [1; LEVELS] }
    }

    /// Strides whose bin counts follow the ratios `{1/4, 1/2, 1, 1}` (finest
    /// first) of the coarse-level bin count.
    pub fn table_ratios() -> Self {
        Self {
            strides: [32, 8, 2, 1],
        }
    }

    /// Stride of level `k` (1-based).
    pub fn stride(&self, k: usize) -> Result<usize> {
        if !(1..=LEVELS).contains(&k) {
            bail!(Config, "level {k} outside 1..={LEVELS}");
        }
        let s = self.strides[k - 1];
        if s < 1 {
            bail!(Config, "stride for level {k} must be >= 1, got {s}");
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for k in 1..=LEVELS {
            self.stride(k)?;
        }
        Ok(())
    }
}

/// Number of disparity bins at level `k` so that `bins · stride · divisor`
/// covers `d_max` full-resolution pixels.
#[inline]
pub fn bin_count(d_max: usize, k: usize, stride: usize) -> usize {
    d_max.div_ceil(divisor(k) * stride)
}

/// `(channels, bins, height, width)` volume at one pyramid scale.
///
/// `data[((c * bins + d) * height + y) * width + x]`. The reach mask marks
/// `(d, x)` cells whose right-view sample lies inside the image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    pub scale_index: usize,
    pub channels: usize,
    pub bins: usize,
    pub stride: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
    pub reach: Vec<bool>,
}

impl FeatureVolume {
    /// Zero volume with every cell reachable.
    pub fn zeros(
        scale_index: usize,
        channels: usize,
        bins: usize,
        stride: usize,
        height: usize,
        width: usize,
    ) -> Self {
        Self {
            scale_index,
            channels,
            bins,
            stride,
            height,
            width,
            data: vec![0.0; channels * bins * height * width],
            reach: vec![true; bins * width],
        }
    }

    #[inline]
    pub fn divisor(&self) -> usize {
        divisor(self.scale_index)
    }

    /// Full-resolution disparity covered by one bin.
    #[inline]
    pub fn bin_spacing(&self) -> usize {
        self.stride * self.divisor()
    }

    /// `(channels, bins, height, width)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.channels, self.bins, self.height, self.width)
    }

    pub fn cells(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn index(&self, c: usize, d: usize, y: usize, x: usize) -> usize {
        ((c * self.bins + d) * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, d: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(c, d, y, x)]
    }

    #[inline]
    pub fn reachable(&self, d: usize, x: usize) -> bool {
        self.reach[d * self.width + x]
    }

    /// Same geometry, new data.
    pub fn with_data(&self, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            scale_index: self.scale_index,
            channels: self.channels,
            bins: self.bins,
            stride: self.stride,
            height: self.height,
            width: self.width,
            data,
            reach: self.reach.clone(),
        }
    }
}

/// Builds `V[c,d,y,x] = f_L[c,y,x] − f_R[c,y,x − d·s]`.
///
/// Right-view samples left of the image are clamped to column 0 and the
/// `(d, x)` cell is flagged unreachable.
pub fn build_feature_volume(
    left: &FeatureLevel,
    right: &FeatureLevel,
    d_max: usize,
    stride: usize,
) -> Result<FeatureVolume> {
    if left.shape() != right.shape() || left.scale_index() != right.scale_index() {
        bail!(
            Shape,
            "left level {:?} (k={}) and right level {:?} (k={}) differ",
            left.shape(),
            left.scale_index(),
            right.shape(),
            right.scale_index()
        );
    }
    if d_max == 0 {
        bail!(Domain, "maximum disparity must be > 0");
    }
    if stride == 0 {
        bail!(Config, "stride must be >= 1");
    }
    let k = left.scale_index();
    let (channels, height, width) = left.shape();
    let bins = bin_count(d_max, k, stride);
    let fl = left.materialize();
    let fr = right.materialize();
    let plane = height * width;
    let mut data = vec![0.0f32; channels * bins * plane];
    par::for_each_chunk(&mut data, width, |row_idx, row| {
        let y = row_idx % height;
        let cd = row_idx / height;
        let d = cd % bins;
        let c = cd / bins;
        let shift = d * stride;
        let l = &fl[c * plane + y * width..c * plane + (y + 1) * width];
        let r = &fr[c * plane + y * width..c * plane + (y + 1) * width];
        for (x, out) in row.iter_mut().enumerate() {
            let xr = x.saturating_sub(shift);
            *out = l[x] - r[xr];
        }
    });
    let mut reach = vec![false; bins * width];
    for d in 0..bins {
        for x in 0..width {
            reach[d * width + x] = x >= d * stride;
        }
    }
    Ok(FeatureVolume {
        scale_index: k,
        channels,
        bins,
        stride,
        height,
        width,
        data,
        reach,
    })
}
