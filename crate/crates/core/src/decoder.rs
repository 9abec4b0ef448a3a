//! Feature-volume decoding: residual box aggregation, volumetric pyramid
//! pooling, coarse-to-fine fusion, cost reduction and expected-disparity
//! readout.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::image::DisparityMap;
use crate::math;
use crate::par;
use crate::pyramid::divisor;
use crate::volume::FeatureVolume;

/// What gets carried from a coarse level into the next finer one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuseMode {
    /// Upsample the decoded 4D feature volume and add it to the fine one.
    Feature,
    /// Upsample the coarse 3D cost volume and add it to the fine cost.
    Cost,
}

/// Free parameters of the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    /// Residual box-filter blocks per level.
    pub agg_blocks: usize,
    /// Box window `(d, y, x)`; each side odd and >= 1.
    pub agg_window: [usize; 3],
    /// Residual mix `α`: `V ← (1−α)·V + α·box(V)`.
    pub residual_mix: f32,
    /// Volumetric pyramid pooling grid sizes (cells per spatial axis).
    pub vpp_grids: Vec<usize>,
    /// Pooling mix `γ`.
    pub vpp_mix: f32,
    /// Per-channel weights of the finest level. Levels with twice as many
    /// channels reuse weight `c / 2` for channel `c`.
    pub channel_weights: Vec<f32>,
    /// Softmax temperature `β`.
    pub beta: f64,
    pub fuse_mode: FuseMode,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            agg_blocks: 0,
            agg_window: [3, 3, 3],
            residual_mix: 0.5,
            vpp_grids: vec![2, 4, 8],
            vpp_mix: 0.1,
            channel_weights: vec![1.0; 16],
            beta: 10.0,
            fuse_mode: FuseMode::Feature,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        for (axis, &w) in ["d", "y", "x"].iter().zip(&self.agg_window) {
            if w < 1 || w % 2 == 0 {
                bail!(Config, "aggregation window along {axis} must be odd and >= 1, got {w}");
            }
        }
        if !(0.0..=1.0).contains(&self.residual_mix) {
            bail!(Config, "residual mix must lie in [0, 1], got {}", self.residual_mix);
        }
        if !(0.0..=1.0).contains(&self.vpp_mix) {
            bail!(Config, "vpp mix must lie in [0, 1], got {}", self.vpp_mix);
        }
        if self.vpp_grids.iter().any(|&g| g == 0) {
            bail!(Config, "vpp grid sizes must be >= 1");
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            bail!(Config, "softmax temperature must be finite and > 0, got {}", self.beta);
        }
        check_weights(&self.channel_weights)?;
        Ok(())
    }

    /// Weights for a volume with `channels` channels.
    pub fn weights_for(&self, channels: usize) -> Result<Vec<f32>> {
        let n = self.channel_weights.len();
        if channels == n {
            Ok(self.channel_weights.clone())
        } else if n > 0 && channels % n == 0 {
            let rep = channels / n;
            Ok((0..channels).map(|c| self.channel_weights[c / rep]).collect())
        } else {
            bail!(
                Config,
                "{n} channel weights cannot serve a {channels}-channel volume"
            )
        }
    }
}

fn check_weights(w: &[f32]) -> Result<()> {
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        bail!(Config, "channel weights must be finite and >= 0");
    }
    if w.iter().all(|&v| v == 0.0) {
        bail!(Config, "channel weights are all zero");
    }
    Ok(())
}

/// Matching cost over `(d, y, x)`; lower is better.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub scale_index: usize,
    pub bins: usize,
    pub stride: usize,
    pub height: usize,
    pub width: usize,
    /// `cost[(d * height + y) * width + x]`.
    pub cost: Vec<f64>,
    /// `(d, x)` reach mask inherited from the feature volume.
    pub reach: Vec<bool>,
}

impl CostVolume {
    /// Volume with every cell reachable.
    pub fn from_costs(
        scale_index: usize,
        stride: usize,
        bins: usize,
        height: usize,
        width: usize,
        cost: Vec<f64>,
    ) -> Result<Self> {
        if cost.len() != bins * height * width {
            bail!(Shape, "cost length {} does not match {bins}x{height}x{width}", cost.len());
        }
        if cost.iter().any(|c| !c.is_finite()) {
            bail!(Domain, "costs must be finite");
        }
        Ok(Self {
            scale_index,
            bins,
            stride,
            height,
            width,
            cost,
            reach: vec![true; bins * width],
        })
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

    #[inline]
    pub fn get(&self, d: usize, y: usize, x: usize) -> f64 {
        self.cost[(d * self.height + y) * self.width + x]
    }

    /// Lowest-cost bin at `(y, x)` (first on ties).
    pub fn argmin(&self, y: usize, x: usize) -> usize {
        let mut best = 0;
        for d in 1..self.bins {
            if self.get(d, y, x) < self.get(best, y, x) {
                best = d;
            }
        }
        best
    }

    /// Applies `f` to every cost.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.cost.iter_mut().for_each(|c| *c = f(*c));
        out
    }

    /// Sets every unreachable cell to the largest reachable cost of its
    /// column plus one.
    pub fn suppress_unreachable(&mut self) {
        let (bins, h, w) = (self.bins, self.height, self.width);
        let plane = h * w;
        for y in 0..h {
            for x in 0..w {
                let mut max = f64::NEG_INFINITY;
                let mut any_blocked = false;
                for d in 0..bins {
                    if self.reach[d * w + x] {
                        max = max.max(self.cost[d * plane + y * w + x]);
                    } else {
                        any_blocked = true;
                    }
                }
                if !any_blocked {
                    continue;
                }
                let fill = if max.is_finite() { max + 1.0 } else { 0.0 };
                for d in 0..bins {
                    if !self.reach[d * w + x] {
                        self.cost[d * plane + y * w + x] = fill;
                    }
                }
            }
        }
    }
}

// Separable mean filter with shrinking windows at the borders. Each pass
// accumulates in f64 so means of equal values are exact.
fn box_pass_x(src: &[f32], dst: &mut [f32], width: usize, radius: usize) {
    par::for_each_chunk(dst, width, |row, out| {
        let line = &src[row * width..(row + 1) * width];
        for (x, o) in out.iter_mut().enumerate() {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(width - 1);
            let s: f64 = line[lo..=hi].iter().map(|&v| v as f64).sum();
            *o = (s / (hi - lo + 1) as f64) as f32;
        }
    });
}

fn box_pass_strided(
    src: &[f32],
    dst: &mut [f32],
    outer: usize,
    len: usize,
    inner: usize,
    radius: usize,
) {
    // Layout: [outer][len][inner]; filter along `len`.
    par::for_each_chunk(dst, inner, |idx, out| {
        let o = idx / len;
        let i = idx % len;
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(len - 1);
        let n = (hi - lo + 1) as f64;
        for (k, v) in out.iter_mut().enumerate() {
            let mut s = 0.0f64;
            for j in lo..=hi {
                s += src[(o * len + j) * inner + k] as f64;
            }
            *v = (s / n) as f32;
        }
        debug_assert!(o < outer);
    });
}

fn box3d(vol: &FeatureVolume, window: [usize; 3]) -> Vec<f32> {
    let (c, d, h, w) = vol.shape();
    let [rd, ry, rx] = window.map(|v| v / 2);
    let mut a = vol.data.clone();
    let mut b = vec![0.0f32; a.len()];
    if rx > 0 {
        box_pass_x(&a, &mut b, w, rx);
        core::mem::swap(&mut a, &mut b);
    }
    if ry > 0 {
        box_pass_strided(&a, &mut b, c * d, h, w, ry);
        core::mem::swap(&mut a, &mut b);
    }
    if rd > 0 {
        box_pass_strided(&a, &mut b, c, d, h * w, rd);
        core::mem::swap(&mut a, &mut b);
    }
    a
}

/// `agg_blocks` rounds of `V ← (1−α)·V + α·box(V)` per channel over
/// `(d, y, x)`.
pub fn aggregate(vol: &FeatureVolume, cfg: &DecoderConfig) -> Result<FeatureVolume> {
    cfg.validate()?;
    let alpha = cfg.residual_mix as f64;
    if cfg.agg_blocks == 0 || alpha == 0.0 {
        return Ok(vol.clone());
    }
    let mut cur = vol.clone();
    for _ in 0..cfg.agg_blocks {
        let smooth = box3d(&cur, cfg.agg_window);
        for (v, s) in cur.data.iter_mut().zip(&smooth) {
            *v = ((1.0 - alpha) * *v as f64 + alpha * *s as f64) as f32;
        }
    }
    Ok(cur)
}

/// Output of [`volumetric_pyramid_pool`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub volume: FeatureVolume,
    pub warnings: Vec<String>,
}

// Cell boundaries splitting `len` into `g` nearly equal parts.
fn cell_edges(len: usize, g: usize) -> Vec<usize> {
    (0..=g).map(|i| i * len / g).collect()
}

/// Multi-grid average pooling: for each grid size `g`, the `(y, x)` plane is
/// split into `g × g` cells, each averaged over its full disparity extent,
/// and broadcast back. Output is `(1−γ)·V + γ·mean_g(broadcast_g)`.
pub fn volumetric_pyramid_pool(vol: &FeatureVolume, cfg: &DecoderConfig) -> Result<Pooled> {
    cfg.validate()?;
    let gamma = cfg.vpp_mix as f64;
    let (c, d, h, w) = vol.shape();
    let mut warnings = Vec::new();
    let grids: Vec<usize> = cfg
        .vpp_grids
        .iter()
        .copied()
        .filter(|&g| {
            let fits = g <= h && g <= w;
            if !fits {
                warnings.push(format!(
                    "vpp grid {g} exceeds level {} size {w}x{h}; skipped",
                    vol.scale_index
                ));
            }
            fits
        })
        .collect();
    if gamma == 0.0 || grids.is_empty() {
        return Ok(Pooled {
            volume: vol.clone(),
            warnings,
        });
    }
    let plane = h * w;
    // Broadcast context per (channel, y, x), identical across d.
    let mut context = vec![0.0f64; c * plane];
    for &g in &grids {
        let ye = cell_edges(h, g);
        let xe = cell_edges(w, g);
        for ch in 0..c {
            for gy in 0..g {
                for gx in 0..g {
                    let (y0, y1, x0, x1) = (ye[gy], ye[gy + 1], xe[gx], xe[gx + 1]);
                    let mut s = 0.0f64;
                    for dd in 0..d {
                        for y in y0..y1 {
                            let base = ((ch * d + dd) * h + y) * w;
                            for &v in &vol.data[base + x0..base + x1] {
                                s += v as f64;
                            }
                        }
                    }
                    let mean = s / (d * (y1 - y0) * (x1 - x0)) as f64;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            context[ch * plane + y * w + x] += mean;
                        }
                    }
                }
            }
        }
    }
    let n = grids.len() as f64;
    let mut data = vol.data.clone();
    par::for_each_chunk(&mut data, plane, |cd, out| {
        let ch = cd / d;
        let ctx = &context[ch * plane..(ch + 1) * plane];
        for (v, &m) in out.iter_mut().zip(ctx) {
            *v = ((1.0 - gamma) * *v as f64 + gamma * (m / n)) as f32;
        }
    });
    Ok(Pooled {
        volume: vol.with_data(data),
        warnings,
    })
}

/// Linear interpolation taps `(i0, i1, t)` mapping each of `fine` output
/// positions to source coordinate `pos(i)` clamped to `[0, coarse-1]`.
fn taps(fine: usize, coarse: usize, pos: impl Fn(usize) -> f64) -> Vec<(usize, usize, f64)> {
    (0..fine)
        .map(|i| {
            let p = pos(i).clamp(0.0, (coarse - 1) as f64);
            let i0 = math::floor(p) as usize;
            let i1 = (i0 + 1).min(coarse - 1);
            (i0, i1, p - i0 as f64)
        })
        .collect()
}

/// Interpolation taps from a coarse `(bins, height, width)` grid at scale
/// `k+1` onto a fine grid at scale `k`. Spatially the coarse grid has half
/// the resolution; along disparity, bins are matched in full-resolution
/// pixel units (`bin · spacing`).
struct Resampler {
    td: Vec<(usize, usize, f64)>,
    ty: Vec<(usize, usize, f64)>,
    tx: Vec<(usize, usize, f64)>,
    coarse_hw: (usize, usize),
}

impl Resampler {
    #[allow(clippy::too_many_arguments)]
    fn new(
        coarse_bins: usize,
        coarse_spacing: usize,
        coarse_h: usize,
        coarse_w: usize,
        fine_bins: usize,
        fine_spacing: usize,
        fine_h: usize,
        fine_w: usize,
    ) -> Self {
        let ratio = fine_spacing as f64 / coarse_spacing as f64;
        let td = taps(fine_bins, coarse_bins, |j| j as f64 * ratio);
        let ty = taps(fine_h, coarse_h, |y| (y as f64 + 0.5) * 0.5 - 0.5);
        let tx = taps(fine_w, coarse_w, |x| (x as f64 + 0.5) * 0.5 - 0.5);
        Self {
            td,
            ty,
            tx,
            coarse_hw: (coarse_h, coarse_w),
        }
    }

    /// Trilinear sample of one coarse `(bins, h, w)` block (given by `get`)
    /// at fine cell `(d, y, x)`.
    #[inline]
    fn sample(&self, get: impl Fn(usize) -> f64, d: usize, y: usize, x: usize) -> f64 {
        let (ch, cw) = self.coarse_hw;
        let (d0, d1, td) = self.td[d];
        let (y0, y1, ty) = self.ty[y];
        let (x0, x1, tx) = self.tx[x];
        let at = |dd: usize, yy: usize, xx: usize| get((dd * ch + yy) * cw + xx);
        let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + (b - a) * t };
        let plane = |dd: usize| {
            let top = lerp(at(dd, y0, x0), at(dd, y0, x1), tx);
            let bot = lerp(at(dd, y1, x0), at(dd, y1, x1), tx);
            lerp(top, bot, ty)
        };
        let a = plane(d0);
        if td == 0.0 {
            a
        } else {
            lerp(a, plane(d1), td)
        }
    }
}

fn check_adjacent(coarse: usize, fine: usize) -> Result<()> {
    if coarse != fine + 1 {
        bail!(
            Shape,
            "fusion needs adjacent scales (coarse = fine + 1), got coarse {coarse} and fine {fine}"
        );
    }
    Ok(())
}

/// Trilinearly upsamples the coarse volume onto the fine volume's grid and
/// adds it. A coarse volume with twice the channels is folded by averaging
/// channel pairs first.
pub fn upsample_fuse(coarse: &FeatureVolume, fine: &FeatureVolume) -> Result<FeatureVolume> {
    check_adjacent(coarse.scale_index, fine.scale_index)?;
    let fold = if coarse.channels == fine.channels {
        1
    } else if coarse.channels == 2 * fine.channels {
        2
    } else {
        bail!(
            Shape,
            "cannot fuse {} coarse channels into {} fine channels",
            coarse.channels,
            fine.channels
        );
    };
    let rs = Resampler::new(
        coarse.bins,
        coarse.bin_spacing(),
        coarse.height,
        coarse.width,
        fine.bins,
        fine.bin_spacing(),
        fine.height,
        fine.width,
    );
    let block = coarse.bins * coarse.height * coarse.width;
    let (fd, fh, fw) = (fine.bins, fine.height, fine.width);
    let mut data = fine.data.clone();
    par::for_each_chunk(&mut data, fw, |row, out| {
        let y = row % fh;
        let d = (row / fh) % fd;
        let c = row / (fh * fd);
        for (x, v) in out.iter_mut().enumerate() {
            let mut up = 0.0f64;
            for f in 0..fold {
                let src = &coarse.data[(c * fold + f) * block..(c * fold + f + 1) * block];
                up += rs.sample(|i| src[i] as f64, d, y, x);
            }
            let up = up / fold as f64;
            if up != 0.0 {
                *v = (*v as f64 + up) as f32;
            }
        }
    });
    Ok(fine.with_data(data))
}

/// Cost-volume fusion: upsamples the coarse cost onto the fine grid, adds it,
/// and re-applies the unreachable-cell rule.
pub fn upsample_fuse_cost(coarse: &CostVolume, fine: &CostVolume) -> Result<CostVolume> {
    check_adjacent(coarse.scale_index, fine.scale_index)?;
    let rs = Resampler::new(
        coarse.bins,
        coarse.bin_spacing(),
        coarse.height,
        coarse.width,
        fine.bins,
        fine.bin_spacing(),
        fine.height,
        fine.width,
    );
    let (fh, fw) = (fine.height, fine.width);
    let mut out = fine.clone();
    par::for_each_chunk(&mut out.cost, fw, |row, line| {
        let y = row % fh;
        let d = row / fh;
        for (x, v) in line.iter_mut().enumerate() {
            *v += rs.sample(|i| coarse.cost[i], d, y, x);
        }
    });
    out.suppress_unreachable();
    Ok(out)
}

/// `cost[d,y,x] = Σ_c w_c·|V[c,d,y,x]|`, with unreachable cells set to their
/// column maximum plus one.
pub fn to_cost_volume(vol: &FeatureVolume, weights: &[f32]) -> Result<CostVolume> {
    if weights.len() != vol.channels {
        bail!(
            Config,
            "{} channel weights for a {}-channel volume",
            weights.len(),
            vol.channels
        );
    }
    check_weights(weights)?;
    let (c, d, h, w) = vol.shape();
    let block = d * h * w;
    let mut cost = vec![0.0f64; block];
    par::for_each_chunk(&mut cost, w, |row, out| {
        for (ch, &wc) in weights.iter().enumerate().take(c) {
            if wc == 0.0 {
                continue;
            }
            let src = &vol.data[ch * block + row * w..ch * block + (row + 1) * w];
            for (o, &v) in out.iter_mut().zip(src) {
                *o += wc as f64 * (v as f64).abs();
            }
        }
    });
    let mut cv = CostVolume {
        scale_index: vol.scale_index,
        bins: d,
        stride: vol.stride,
        height: h,
        width: w,
        cost,
        reach: vol.reach.clone(),
    };
    cv.suppress_unreachable();
    Ok(cv)
}

/// Soft-argmin readout at the cost volume's own resolution, in
/// full-resolution pixel units.
///
/// `p(d) ∝ exp(−β·(cost[d] − min cost))`; `d̂ = Σ d·p(d) · stride · divisor`.
/// A pixel with no reachable bin is invalid.
pub fn expected_disparity(cost: &CostVolume, beta: f64) -> Result<DisparityMap> {
    let bins = expected_bins(cost, beta)?;
    let spacing = cost.bin_spacing() as f64;
    let data = bins
        .into_iter()
        .map(|b| match b {
            Some(v) => (v * spacing) as f32,
            None => f32::INFINITY,
        })
        .collect();
    DisparityMap::from_values(cost.width, cost.height, data)
}

/// Soft-argmin readout upsampled to `width × height` output pixels.
pub fn expected_disparity_at(
    cost: &CostVolume,
    beta: f64,
    width: usize,
    height: usize,
) -> Result<DisparityMap> {
    let native = expected_disparity(cost, beta)?;
    Ok(native.upsample_by(cost.divisor(), width, height))
}

/// Expected bin index per pixel (`None` where no bin is reachable).
pub fn expected_bins(cost: &CostVolume, beta: f64) -> Result<Vec<Option<f64>>> {
    if !(beta.is_finite() && beta > 0.0) {
        bail!(Domain, "softmax temperature must be finite and > 0, got {beta}");
    }
    let (bins, h, w) = (cost.bins, cost.height, cost.width);
    let plane = h * w;
    Ok(par::map_range(plane, |i| {
        let x = i % w;
        if !(0..bins).any(|d| cost.reach[d * w + x]) {
            return None;
        }
        let mut min = f64::INFINITY;
        for d in 0..bins {
            min = min.min(cost.cost[d * plane + i]);
        }
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for d in 0..bins {
            let p = math::exp(-beta * (cost.cost[d * plane + i] - min));
            num += d as f64 * p;
            den += p;
        }
        Some(num / den)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol_from(c: usize, d: usize, h: usize, w: usize, f: impl Fn(usize, usize, usize, usize) -> f32) -> FeatureVolume {
        let mut v = FeatureVolume::zeros(1, c, d, 1, h, w);
        for ch in 0..c {
            for dd in 0..d {
                for y in 0..h {
                    for x in 0..w {
                        let i = v.index(ch, dd, y, x);
                        v.data[i] = f(ch, dd, y, x);
                    }
                }
            }
        }
        v
    }

    #[test]
    fn aggregate_constant_and_identity() {
        let v = vol_from(2, 5, 6, 7, |_, _, _, _| 0.3);
        let cfg = DecoderConfig::default();
        assert_eq!(aggregate(&v, &cfg).unwrap(), v);
        let noisy = vol_from(2, 5, 6, 7, |c, d, y, x| ((c * 31 + d * 7 + y * 3 + x) % 11) as f32);
        let id = DecoderConfig {
            residual_mix: 0.0,
            ..cfg.clone()
        };
        assert_eq!(aggregate(&noisy, &id).unwrap(), noisy);
    }

    #[test]
    fn aggregate_impulse_spreads_to_27_cells() {
        let v = vol_from(1, 7, 7, 7, |_, d, y, x| if (d, y, x) == (3, 3, 3) { 1.0 } else { 0.0 });
        let cfg = DecoderConfig {
            agg_blocks: 1,
            residual_mix: 1.0,
            ..DecoderConfig::default()
        };
        let out = aggregate(&v, &cfg).unwrap();
        let mut nonzero = 0;
        for d in 0..7 {
            for y in 0..7 {
                for x in 0..7 {
                    let val = out.get(0, d, y, x);
                    let inside = (2..=4).contains(&d) && (2..=4).contains(&y) && (2..=4).contains(&x);
                    if inside {
                        assert!((val - 1.0 / 27.0).abs() < 1e-7);
                        nonzero += 1;
                    } else {
                        assert_eq!(val, 0.0);
                    }
                }
            }
        }
        assert_eq!(nonzero, 27);
    }

    #[test]
    fn aggregate_rejects_even_window() {
        let v = vol_from(1, 3, 3, 3, |_, _, _, _| 0.0);
        let cfg = DecoderConfig {
            agg_window: [3, 2, 3],
            ..DecoderConfig::default()
        };
        assert!(matches!(aggregate(&v, &cfg), Err(crate::Error::Config(_))));
    }

    #[test]
    fn vpp_constant_identity_and_global_mean() {
        let v = vol_from(2, 3, 8, 8, |_, _, _, _| 0.3);
        let cfg = DecoderConfig::default();
        assert_eq!(volumetric_pyramid_pool(&v, &cfg).unwrap().volume, v);

        let noisy = vol_from(2, 3, 8, 8, |c, d, y, x| ((c * 13 + d * 5 + y * 3 + x) % 7) as f32);
        let off = DecoderConfig {
            vpp_mix: 0.0,
            ..cfg.clone()
        };
        assert_eq!(volumetric_pyramid_pool(&noisy, &off).unwrap().volume, noisy);

        let global = DecoderConfig {
            vpp_grids: vec![1],
            vpp_mix: 1.0,
            ..cfg
        };
        let out = volumetric_pyramid_pool(&noisy, &global).unwrap().volume;
        for c in 0..2 {
            let n = 3 * 8 * 8;
            let mean: f64 = noisy.data[c * n..(c + 1) * n].iter().map(|&v| v as f64).sum::<f64>() / n as f64;
            assert!(out.data[c * n..(c + 1) * n].iter().all(|&v| v == mean as f32));
        }
    }

    #[test]
    fn vpp_skips_oversized_grid() {
        let v = vol_from(1, 2, 4, 4, |_, _, _, _| 1.0);
        let cfg = DecoderConfig {
            vpp_grids: vec![2, 8],
            ..DecoderConfig::default()
        };
        let out = volumetric_pyramid_pool(&v, &cfg).unwrap();
        assert_eq!(out.warnings.len(), 1);
    }

    fn scaled(v: FeatureVolume, k: usize, stride: usize) -> FeatureVolume {
        FeatureVolume {
            scale_index: k,
            stride,
            ..v
        }
    }

    #[test]
    fn fuse_zero_and_constant() {
        let fine = scaled(vol_from(16, 8, 6, 8, |c, d, y, x| (c + d + y + x) as f32 * 0.1), 1, 2);
        let zero = scaled(FeatureVolume::zeros(2, 32, 4, 1, 3, 4), 2, 2);
        assert_eq!(upsample_fuse(&zero, &fine).unwrap(), fine);

        let f = scaled(vol_from(16, 8, 6, 8, |_, _, _, _| 0.5), 1, 2);
        let mut c = scaled(FeatureVolume::zeros(2, 32, 4, 1, 3, 4), 2, 2);
        c.data.iter_mut().for_each(|v| *v = 0.25);
        let out = upsample_fuse(&c, &f).unwrap();
        assert_eq!(out.shape(), (16, 8, 6, 8));
        assert!(out.data.iter().all(|&v| v == 0.75));
    }

    #[test]
    fn fuse_requires_adjacent_scales() {
        let fine = scaled(FeatureVolume::zeros(1, 4, 4, 2, 4, 4), 1, 2);
        let coarse = scaled(FeatureVolume::zeros(3, 4, 2, 1, 1, 1), 3, 1);
        assert!(upsample_fuse(&coarse, &fine).is_err());
    }

    #[test]
    fn cost_weights_and_reach() {
        let mut v = vol_from(2, 3, 1, 4, |c, d, _, x| (c as f32 + 1.0) * (d as f32 - x as f32));
        v.reach = (0..3).flat_map(|d| (0..4).map(move |x| x >= d)).collect();
        let cv = to_cost_volume(&v, &[1.0, 1.0]).unwrap();
        // x = 3: all bins reachable, |d-3|*(1+2)
        assert_eq!(cv.get(0, 0, 3), 9.0);
        assert_eq!(cv.get(2, 0, 3), 3.0);
        // x = 0: only d = 0 reachable with cost 0 → others 1
        assert_eq!(cv.get(0, 0, 0), 0.0);
        assert_eq!(cv.get(1, 0, 0), 1.0);
        let doubled = to_cost_volume(&v, &[2.0, 2.0]).unwrap();
        for (a, b) in cv.cost.iter().zip(&doubled.cost) {
            if *a != 0.0 {
                assert!(*b == 2.0 * a || *b == a + 1.0 || *b == 2.0 * (a - 1.0) + 1.0);
            }
        }
        assert!(matches!(to_cost_volume(&v, &[0.0, 0.0]), Err(crate::Error::Config(_))));
        assert!(to_cost_volume(&v, &[1.0]).is_err());
    }

    #[test]
    fn cost_homogeneous_in_weights_when_reachable() {
        let v = vol_from(3, 4, 2, 3, |c, d, y, x| ((c * 7 + d * 3 + y + x * 5) % 9) as f32 - 4.0);
        let a = to_cost_volume(&v, &[1.0, 0.5, 2.0]).unwrap();
        let b = to_cost_volume(&v, &[2.0, 1.0, 4.0]).unwrap();
        for (x, y) in a.cost.iter().zip(&b.cost) {
            assert_eq!(*y, 2.0 * x);
        }
    }

    #[test]
    fn readout_degenerate_and_uniform() {
        let mut costs = vec![1e6; 5];
        costs[3] = 0.0;
        let cv = CostVolume::from_costs(1, 2, 5, 1, 1, costs).unwrap();
        let d = expected_disparity(&cv, 1.0).unwrap();
        assert_eq!(d.get(0, 0), Some(3.0 * 16.0));

        let cv = CostVolume::from_costs(2, 1, 6, 1, 1, vec![2.5; 6]).unwrap();
        let d = expected_disparity(&cv, 1.0).unwrap();
        assert_eq!(d.get(0, 0), Some(2.5 * 16.0));
    }

    #[test]
    fn readout_shift_invariant_on_exact_offsets() {
        let costs: Vec<f64> = (0..8).map(|i| 1.0 + ((i * 37) % 11) as f64 / 4.0).collect();
        let cv = CostVolume::from_costs(3, 1, 8, 1, 1, costs).unwrap();
        let shifted = cv.map(|c| c + 7.3);
        assert_eq!(
            expected_disparity(&cv, 0.7).unwrap(),
            expected_disparity(&shifted, 0.7).unwrap()
        );
    }

    #[test]
    fn readout_rejects_bad_beta() {
        let cv = CostVolume::from_costs(1, 1, 2, 1, 1, vec![0.0, 1.0]).unwrap();
        assert!(expected_disparity(&cv, 0.0).is_err());
        assert!(expected_disparity(&cv, f64::NAN).is_err());
    }
}
