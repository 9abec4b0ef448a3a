//! Multi-scale descriptor pyramid.
//!
//! Each of the four levels sits at a spatial divisor of 8, 16, 32 or 64 and
//! carries `C_k` channels: intensity, horizontal and vertical gradient, a
//! local rank-transform score, then pooled-context channels. Pooled channels
//! are box means over a grid whose cell size equals the window; they are
//! stored at that grid resolution and only expanded (nearest cell) when a
//! dense channel stack is requested for volume construction.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::image::{downsample_half, Image};
use crate::par;

/// Number of pyramid levels.
pub const LEVELS: usize = 4;

/// Number of fixed (non-pooled) descriptor channels.
pub const BASE_CHANNELS: usize = 4;

/// Spatial divisor of level `k` (1-based): `8 * 2^(k-1)`.
#[inline]
pub fn divisor(k: usize) -> usize {
    debug_assert!((1..=LEVELS).contains(&k));
    8 << (k - 1)
}

/// Descriptor configuration shared by every level.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorConfig {
    /// Channel count per level, finest first.
    pub channels: [usize; LEVELS],
    /// Pooled-context window sizes in level pixels, used in ascending order.
    pub windows: Vec<usize>,
    /// Radius of the rank-transform neighbourhood.
    pub rank_radius: usize,
    /// 3×3 box smoothing passes applied to a level's working image.
    pub smoothing_passes: usize,
    pub intensity_gain: f32,
    pub gradient_gain: f32,
    pub rank_gain: f32,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            channels: [16, 16, 16, 32],
            windows: vec![4, 8, 16, 32],
            rank_radius: 2,
            smoothing_passes: 1,
            intensity_gain: 4.0,
            gradient_gain: 16.0,
            rank_gain: 1.0,
        }
    }
}

impl DescriptorConfig {
    pub fn validate(&self) -> Result<()> {
        for (i, &c) in self.channels.iter().enumerate() {
            if c < BASE_CHANNELS {
                bail!(
                    Config,
                    "level {} has {c} channels; at least {BASE_CHANNELS} are required",
                    i + 1
                );
            }
        }
        if self.windows.iter().any(|&w| w == 0) {
            bail!(Config, "pooled-context windows must be >= 1");
        }
        if self.rank_radius == 0 {
            bail!(Config, "rank radius must be >= 1");
        }
        for (name, g) in [
            ("intensity_gain", self.intensity_gain),
            ("gradient_gain", self.gradient_gain),
            ("rank_gain", self.rank_gain),
        ] {
            if !(g.is_finite() && g >= 0.0) {
                bail!(Config, "{name} must be finite and >= 0, got {g}");
            }
        }
        Ok(())
    }
}

/// Source channel a pooled-context grid averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelSource {
    Intensity = 0,
    HorizontalGradient = 1,
    VerticalGradient = 2,
    Rank = 3,
}

const POOL_SOURCES: [ChannelSource; BASE_CHANNELS] = [
    ChannelSource::Intensity,
    ChannelSource::Rank,
    ChannelSource::HorizontalGradient,
    ChannelSource::VerticalGradient,
];

/// Box means of one (gain-scaled) source channel on a grid of `window`-sized
/// cells, held at grid resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledGrid {
    pub window: usize,
    pub source: ChannelSource,
    pub grid_width: usize,
    pub grid_height: usize,
    pub cells: Vec<f32>,
}

impl PooledGrid {
    /// Nearest-cell value at level pixel `(x, y)`.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.cells[(y / self.window) * self.grid_width + x / self.window]
    }

    /// Expands the grid to a dense `width × height` channel.
    pub fn expand(&self, width: usize, height: usize, out: &mut [f32]) {
        for y in 0..height {
            let row = &mut out[y * width..(y + 1) * width];
            for (x, v) in row.iter_mut().enumerate() {
                *v = self.at(x, y);
            }
        }
    }
}

/// Result of [`pooled_context`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PooledContext {
    pub grids: Vec<PooledGrid>,
    pub warnings: Vec<String>,
}

/// One pyramid level: dense base channels plus coarse pooled grids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLevel {
    scale_index: usize,
    width: usize,
    height: usize,
    channels: usize,
    base: Vec<f32>,
    pooled: Vec<PooledGrid>,
    warnings: Vec<String>,
}

impl FeatureLevel {
    /// Builds a level from a dense channel stack (no pooled grids).
    pub fn from_dense(
        scale_index: usize,
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if !(1..=LEVELS).contains(&scale_index) {
            bail!(Shape, "scale index {scale_index} outside 1..={LEVELS}");
        }
        if data.len() != width * height * channels {
            bail!(Shape, "feature data length does not match {channels}x{height}x{width}");
        }
        Ok(Self {
            scale_index,
            width,
            height,
            channels,
            base: data,
            pooled: Vec::new(),
            warnings: Vec::new(),
        })
    }

    #[inline]
    pub fn scale_index(&self) -> usize {
        self.scale_index
    }

    #[inline]
    pub fn divisor(&self) -> usize {
        divisor(self.scale_index)
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

    /// `(channels, height, width)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn pooled(&self) -> &[PooledGrid] {
        &self.pooled
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn dense_channels(&self) -> usize {
        self.base.len() / (self.width * self.height)
    }

    /// Writes channel `c` densely into `out` (`width * height` long).
    pub fn channel_into(&self, c: usize, out: &mut [f32]) {
        let n = self.width * self.height;
        let dense = self.dense_channels();
        if c < dense {
            out.copy_from_slice(&self.base[c * n..(c + 1) * n]);
        } else if let Some(g) = self.pooled.get(c - dense) {
            g.expand(self.width, self.height, out);
        } else {
            out.fill(0.0);
        }
    }

    /// Dense `(c, y, x)` stack of all `channels` channels.
    pub fn materialize(&self) -> Vec<f32> {
        let n = self.width * self.height;
        let mut out = vec![0.0; n * self.channels];
        par::for_each_chunk(&mut out, n, |c, chunk| self.channel_into(c, chunk));
        out
    }
}

/// Descriptor pyramid, finest level first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    pub levels: Vec<FeatureLevel>,
}

impl FeaturePyramid {
    pub fn level(&self, k: usize) -> &FeatureLevel {
        &self.levels[k - 1]
    }
}

/// Working images for every level: the input converted to gray and halved
/// until each divisor is reached. Index 0 is level 1 (÷8).
pub fn working_images(image: &Image) -> Result<Vec<Image>> {
    if image.width() < 64 || image.height() < 64 {
        bail!(
            Shape,
            "image {}x{} is smaller than 64x64; the coarsest level would be empty",
            image.width(),
            image.height()
        );
    }
    let mut cur = image.to_gray();
    for _ in 0..3 {
        cur = downsample_half(&cur)?;
    }
    let mut out = Vec::with_capacity(LEVELS);
    out.push(cur);
    for k in 1..LEVELS {
        let next = downsample_half(&out[k - 1])?;
        out.push(next);
    }
    Ok(out)
}

fn box3_pass(src: &[f32], w: usize, h: usize) -> Vec<f32> {
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(1);
            let hi = (x + 1).min(w - 1);
            let s: f32 = row[lo..=hi].iter().sum();
            tmp[y * w + x] = s / (hi - lo + 1) as f32;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(1);
        let hi = (y + 1).min(h - 1);
        for x in 0..w {
            let mut s = 0.0;
            for yy in lo..=hi {
                s += tmp[yy * w + x];
            }
            out[y * w + x] = s / (hi - lo + 1) as f32;
        }
    }
    out
}

/// Rank-transform score: fraction of neighbours darker than the centre,
/// shifted to `[-0.5, 0.5]`. Depends only on the ordering of intensities.
fn rank_transform(src: &[f32], w: usize, h: usize, radius: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; w * h];
    par::for_each_chunk(&mut out, w, |y, row| {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius).min(h - 1);
        for (x, o) in row.iter_mut().enumerate() {
            let x0 = x.saturating_sub(radius);
            let x1 = (x + radius).min(w - 1);
            let centre = src[y * w + x];
            let mut below = 0u32;
            let mut total = 0u32;
            for yy in y0..=y1 {
                for xx in x0..=x1 {
                    if yy == y && xx == x {
                        continue;
                    }
                    total += 1;
                    if src[yy * w + xx] < centre {
                        below += 1;
                    }
                }
            }
            *o = if total == 0 {
                0.0
            } else {
                below as f32 / total as f32 - 0.5
            };
        }
    });
    out
}

/// Box means of `src` over `window`-sized cells. Edge cells average only the
/// in-bounds pixels.
fn pool_grid(src: &[f32], w: usize, h: usize, window: usize, source: ChannelSource) -> PooledGrid {
    let gw = w.div_ceil(window);
    let gh = h.div_ceil(window);
    let mut cells = vec![0.0f32; gw * gh];
    for gy in 0..gh {
        let y0 = gy * window;
        let y1 = (y0 + window).min(h);
        for gx in 0..gw {
            let x0 = gx * window;
            let x1 = (x0 + window).min(w);
            let mut s = 0.0f64;
            for y in y0..y1 {
                for &v in &src[y * w + x0..y * w + x1] {
                    s += v as f64;
                }
            }
            cells[gy * gw + gx] = (s / ((y1 - y0) * (x1 - x0)) as f64) as f32;
        }
    }
    PooledGrid {
        window,
        source,
        grid_width: gw,
        grid_height: gh,
        cells,
    }
}

/// Pooled-context grids for a level whose base channels are already present.
///
/// Windows are visited in ascending order; for each window the sources are
/// visited as intensity, rank, horizontal gradient, vertical gradient, until
/// `max_grids` grids exist. Windows that do not fit inside the level are
/// skipped with a warning.
pub fn pooled_context(level: &FeatureLevel, windows: &[usize], max_grids: usize) -> PooledContext {
    let (w, h) = (level.width, level.height);
    let n = w * h;
    let mut sorted: Vec<usize> = windows.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut ctx = PooledContext::default();
    let dense = level.dense_channels();
    for &win in &sorted {
        if win > w || win > h {
            ctx.warnings.push(format!(
                "pooled window {win} exceeds level {} size {w}x{h}; skipped",
                level.scale_index
            ));
            continue;
        }
        for &src in POOL_SOURCES.iter() {
            if ctx.grids.len() >= max_grids {
                return ctx;
            }
            let c = src as usize;
            if c >= dense {
                continue;
            }
            let plane = &level.base[c * n..(c + 1) * n];
            ctx.grids.push(pool_grid(plane, w, h, win, src));
        }
    }
    ctx
}

/// Descriptors for level `k` computed from its working image.
pub fn extract_descriptors(
    working: &Image,
    scale_index: usize,
    cfg: &DescriptorConfig,
) -> Result<FeatureLevel> {
    cfg.validate()?;
    if !(1..=LEVELS).contains(&scale_index) {
        bail!(Shape, "scale index {scale_index} outside 1..={LEVELS}");
    }
    let channels = cfg.channels[scale_index - 1];
    let gray = working.to_gray();
    let (w, h) = (gray.width(), gray.height());
    if w == 0 || h == 0 {
        bail!(Shape, "level {scale_index} working image is empty");
    }
    let mut smooth = gray.into_data();
    for _ in 0..cfg.smoothing_passes {
        smooth = box3_pass(&smooth, w, h);
    }
    let n = w * h;
    let mut base = vec![0.0f32; BASE_CHANNELS * n];
    {
        let (intensity, rest) = base.split_at_mut(n);
        let (gx, rest) = rest.split_at_mut(n);
        let (gy, rank) = rest.split_at_mut(n);
        for (o, &v) in intensity.iter_mut().zip(&smooth) {
            *o = v * cfg.intensity_gain;
        }
        for y in 0..h {
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            for x in 0..w {
                let xm = x.saturating_sub(1);
                let xp = (x + 1).min(w - 1);
                gx[y * w + x] =
                    0.5 * (smooth[y * w + xp] - smooth[y * w + xm]) * cfg.gradient_gain;
                gy[y * w + x] =
                    0.5 * (smooth[yp * w + x] - smooth[ym * w + x]) * cfg.gradient_gain;
            }
        }
        let r = rank_transform(&smooth, w, h, cfg.rank_radius);
        for (o, v) in rank.iter_mut().zip(r) {
            *o = v * cfg.rank_gain;
        }
    }
    let mut level = FeatureLevel {
        scale_index,
        width: w,
        height: h,
        channels,
        base,
        pooled: Vec::new(),
        warnings: Vec::new(),
    };
    let ctx = pooled_context(&level, &cfg.windows, channels - BASE_CHANNELS);
    let grids = ctx.grids;
    let filled = BASE_CHANNELS + grids.len();
    level.pooled = grids;
    level.warnings = ctx.warnings;
    if filled < channels {
        level.warnings.push(format!(
            "level {scale_index}: {} of {channels} channels left at zero",
            channels - filled
        ));
    }
    Ok(level)
}

/// Full four-level pyramid for one view.
pub fn build_feature_pyramid(image: &Image, cfg: &DescriptorConfig) -> Result<FeaturePyramid> {
    cfg.validate()?;
    let work = working_images(image)?;
    let levels = work
        .iter()
        .enumerate()
        .map(|(i, img)| extract_descriptors(img, i + 1, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeaturePyramid { levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Image::new(w, h, 1, (0..w * h).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    fn channel(level: &FeatureLevel, c: usize) -> Vec<f32> {
        let mut out = vec![0.0; level.width() * level.height()];
        level.channel_into(c, &mut out);
        out
    }

    #[test]
    fn level_shapes_match_divisors_and_channel_counts() {
        let img = noise(640, 512, 1);
        let p = build_feature_pyramid(&img, &DescriptorConfig::default()).unwrap();
        let shapes: Vec<_> = p.levels.iter().map(|l| l.shape()).collect();
        assert_eq!(shapes, vec![(16, 64, 80), (16, 32, 40), (16, 16, 20), (32, 8, 10)]);
    }

    #[test]
    fn constant_image_has_zero_gradients() {
        let img = Image::filled(128, 96, 1, 0.4);
        let p = build_feature_pyramid(&img, &DescriptorConfig::default()).unwrap();
        for level in &p.levels {
            assert!(channel(level, 1).iter().all(|&v| v == 0.0));
            assert!(channel(level, 2).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn vertical_step_peaks_on_edge() {
        let img = Image::from_fn(24, 8, |x, _| if x >= 10 { 1.0 } else { 0.0 });
        let cfg = DescriptorConfig {
            smoothing_passes: 0,
            ..DescriptorConfig::default()
        };
        let level = extract_descriptors(&img, 1, &cfg).unwrap();
        let gx = channel(&level, 1);
        let row = &gx[3 * 24..4 * 24];
        let max = row.iter().cloned().fold(f32::MIN, f32::max);
        assert!(max > 0.0);
        assert_eq!(row[10], max);
        assert_eq!(row[9], max);
        assert!(row.iter().enumerate().all(|(x, &v)| x == 9 || x == 10 || v == 0.0));
    }

    #[test]
    fn rank_channel_invariant_under_gamma() {
        let img = noise(48, 40, 7);
        let remapped = Image::from_fn(48, 40, |x, y| libm::powf(img.get(0, x, y), 1.5));
        let cfg = DescriptorConfig {
            smoothing_passes: 0,
            ..DescriptorConfig::default()
        };
        let a = extract_descriptors(&img, 1, &cfg).unwrap();
        let b = extract_descriptors(&remapped, 1, &cfg).unwrap();
        assert_eq!(channel(&a, 3), channel(&b, 3));
    }

    #[test]
    fn pooled_constant_and_identity_window() {
        let img = Image::filled(16, 16, 1, 0.25);
        let cfg = DescriptorConfig {
            windows: vec![1, 4],
            intensity_gain: 1.0,
            ..DescriptorConfig::default()
        };
        let level = extract_descriptors(&img, 1, &cfg).unwrap();
        for (i, g) in level.pooled().iter().enumerate() {
            if g.source == ChannelSource::Intensity {
                assert!(channel(&level, BASE_CHANNELS + i).iter().all(|&v| v == 0.25));
            }
        }

        let noisy = noise(16, 12, 3);
        let level = extract_descriptors(&noisy, 1, &cfg).unwrap();
        let g = &level.pooled()[0];
        assert_eq!((g.window, g.source), (1, ChannelSource::Intensity));
        assert_eq!(channel(&level, BASE_CHANNELS), channel(&level, 0));
    }

    #[test]
    fn pooled_checkerboard_is_half() {
        let img = Image::from_fn(8, 8, |x, y| ((x + y) % 2) as f32);
        let level = FeatureLevel::from_dense(1, 8, 8, 4, {
            let mut d = img.data().to_vec();
            d.extend(vec![0.0; 3 * 64]);
            d
        })
        .unwrap();
        let ctx = pooled_context(&level, &[2], 1);
        assert_eq!(ctx.grids.len(), 1);
        assert!(ctx.grids[0].cells.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn oversized_window_is_skipped_with_warning() {
        let level = FeatureLevel::from_dense(4, 8, 8, 4, vec![0.0; 4 * 64]).unwrap();
        let ctx = pooled_context(&level, &[4, 16], 8);
        assert_eq!(ctx.grids.len(), 4);
        assert!(ctx.grids.iter().all(|g| g.window == 4));
        assert_eq!(ctx.warnings.len(), 1);
    }

    #[test]
    fn too_few_channels_is_config_error() {
        let cfg = DescriptorConfig {
            channels: [3, 16, 16, 32],
            ..DescriptorConfig::default()
        };
        assert!(matches!(
            extract_descriptors(&Image::filled(8, 8, 1, 0.0), 1, &cfg),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn small_image_rejected() {
        assert!(build_feature_pyramid(&Image::filled(63, 100, 1, 0.0), &DescriptorConfig::default()).is_err());
    }

    #[test]
    fn identical_inputs_identical_pyramids() {
        let img = noise(160, 128, 11);
        let cfg = DescriptorConfig::default();
        let a = build_feature_pyramid(&img, &cfg).unwrap();
        let b = build_feature_pyramid(&img.clone(), &cfg).unwrap();
        assert_eq!(a, b);
        for level in &a.levels {
            assert!(level.materialize().iter().all(|v| v.is_finite()));
        }
    }
}
