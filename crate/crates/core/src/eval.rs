//! Error metrics, depth conversion, the stopping-range protocol and
//! robustness sweeps.
//!
//! A pixel is evaluated when the ground truth is valid there. Invalid
//! predictions on such pixels count as bad for every threshold and are left
//! out of the error means and quantiles; `n_valid` counts the rest.

use alloc::vec::Vec;

use crate::augment::{asymmetric_mask, ydisparity_warp, Rect};
use crate::error::{bail, Result};
use crate::image::{DisparityMap, Image};
use crate::math;
use crate::pipeline::{Clock, Matcher};

/// Quantiles reported by [`compute_metrics`], in percent.
pub const QUANTILES: [u32; 3] = [90, 95, 99];

/// Default bad-pixel thresholds in pixels.
pub const DEFAULT_TAUS: [f64; 3] = [1.0, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `(τ, percent of evaluated pixels with error > τ)`, in input order.
    pub bad: Vec<(f64, f64)>,
    pub avgerr: f64,
    pub rms: f64,
    /// `(q, nearest-rank q-th percentile of |error|)` for [`QUANTILES`].
    pub quantiles: Vec<(u32, f64)>,
    /// Pixels where both maps are valid.
    pub n_valid: usize,
    /// Pixels where the ground truth is valid.
    pub n_evaluated: usize,
}

impl Metrics {
    pub fn bad_at(&self, tau: f64) -> Option<f64> {
        self.bad.iter().find(|(t, _)| *t == tau).map(|&(_, p)| p)
    }

    pub fn quantile(&self, q: u32) -> Option<f64> {
        self.quantiles.iter().find(|(k, _)| *k == q).map(|&(_, v)| v)
    }
}

/// Index (0-based) of the nearest-rank `q`-th percentile among `n` sorted
/// values: `ceil(q·n/100) − 1`, clamped to the first element.
pub fn nearest_rank(q: u32, n: usize) -> usize {
    ((q as usize * n).div_ceil(100)).max(1) - 1
}

/// Compares `pred` against `gt`.
///
/// `bad-τ` uses a strict `|e| > τ`.
pub fn compute_metrics(pred: &DisparityMap, gt: &DisparityMap, taus: &[f64]) -> Result<Metrics> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        bail!(
            Shape,
            "prediction {}x{} and ground truth {}x{} differ",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        );
    }
    if taus.iter().any(|t| !t.is_finite() || *t < 0.0) {
        bail!(Domain, "thresholds must be finite and >= 0");
    }
    let mut errors = Vec::with_capacity(gt.len());
    let mut n_evaluated = 0usize;
    let mut bad_counts = alloc::vec![0usize; taus.len()];
    let (p, g) = (pred.values(), gt.values());
    for i in 0..gt.len() {
        if !gt.is_valid_at(i) {
            continue;
        }
        n_evaluated += 1;
        if !pred.is_valid_at(i) {
            bad_counts.iter_mut().for_each(|c| *c += 1);
            continue;
        }
        let e = (p[i] as f64 - g[i] as f64).abs();
        for (c, &t) in bad_counts.iter_mut().zip(taus) {
            if e > t {
                *c += 1;
            }
        }
        errors.push(e);
    }
    let n = errors.len();
    if n == 0 {
        bail!(Empty, "no pixel is valid in both prediction and ground truth");
    }
    let sum: f64 = errors.iter().sum();
    let sq: f64 = errors.iter().map(|e| e * e).sum();
    let avgerr = sum / n as f64;
    let rms = math::sqrt(sq / n as f64);
    errors.sort_unstable_by(f64::total_cmp);
    let quantiles = QUANTILES
        .iter()
        .map(|&q| (q, errors[nearest_rank(q, n)]))
        .collect();
    let bad = taus
        .iter()
        .zip(&bad_counts)
        .map(|(&t, &c)| (t, 100.0 * c as f64 / n_evaluated as f64))
        .collect();
    Ok(Metrics {
        bad,
        avgerr,
        rms,
        quantiles,
        n_valid: n,
        n_evaluated,
    })
}

/// Depth in metres of disparity `d` pixels: `b·f/d`.
pub fn disparity_to_depth(d: f64, baseline: f64, focal: f64) -> Result<f64> {
    if !(d > 0.0) {
        bail!(Domain, "disparity must be > 0, got {d}");
    }
    Ok(baseline * focal / d)
}

/// First-order depth error of a `delta_d` pixel matching error at depth
/// `z`: `z²·Δd/(b·f)`.
pub fn depth_error(z: f64, delta_d: f64, baseline: f64, focal: f64) -> Result<f64> {
    if !(z > 0.0 && delta_d >= 0.0 && baseline > 0.0 && focal > 0.0) {
        bail!(Domain, "depth, baseline and focal must be > 0 and the error >= 0");
    }
    Ok(z * z * delta_d / (baseline * focal))
}

/// Depth bands tied to safe braking distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DepthRange {
    /// `[0, 25)` m.
    Short,
    /// `[25, 60)` m.
    Middle,
    /// `[60, 115]` m.
    Long,
    /// Every evaluated pixel, including those beyond 115 m.
    All,
}

impl DepthRange {
    pub const BANDS: [DepthRange; 3] = [DepthRange::Short, DepthRange::Middle, DepthRange::Long];

    pub fn label(self) -> &'static str {
        match self {
            DepthRange::Short => "S",
            DepthRange::Middle => "M",
            DepthRange::Long => "L",
            DepthRange::All => "All",
        }
    }

    /// Band containing depth `z`, or `None` past 115 m.
    pub fn classify(z: f64) -> Option<DepthRange> {
        if !(z >= 0.0) {
            None
        } else if z < 25.0 {
            Some(DepthRange::Short)
        } else if z < 60.0 {
            Some(DepthRange::Middle)
        } else if z <= 115.0 {
            Some(DepthRange::Long)
        } else {
            None
        }
    }
}

/// Metrics per depth band. Bands with no ground-truth pixel are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub short: Option<Metrics>,
    pub middle: Option<Metrics>,
    pub long: Option<Metrics>,
    pub all: Metrics,
    pub baseline: f64,
    pub focal: f64,
}

impl EvalReport {
    pub fn get(&self, range: DepthRange) -> Option<&Metrics> {
        match range {
            DepthRange::Short => self.short.as_ref(),
            DepthRange::Middle => self.middle.as_ref(),
            DepthRange::Long => self.long.as_ref(),
            DepthRange::All => Some(&self.all),
        }
    }

    /// Present ranges in S, M, L, All order.
    pub fn rows(&self) -> Vec<(DepthRange, &Metrics)> {
        [DepthRange::Short, DepthRange::Middle, DepthRange::Long, DepthRange::All]
            .into_iter()
            .filter_map(|r| self.get(r).map(|m| (r, m)))
            .collect()
    }
}

/// Band of every pixel of `gt` (`None` for invalid pixels and pixels past
/// the long band).
pub fn range_labels(gt: &DisparityMap, baseline: f64, focal: f64) -> Vec<Option<DepthRange>> {
    gt.values()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if !gt.is_valid_at(i) || d <= 0.0 {
                return None;
            }
            DepthRange::classify(baseline * focal / d as f64)
        })
        .collect()
}

/// Partitions the ground truth by depth and evaluates every band.
pub fn evaluate_protocol(
    pred: &DisparityMap,
    gt: &DisparityMap,
    baseline: f64,
    focal: f64,
    taus: &[f64],
) -> Result<EvalReport> {
    if !(baseline > 0.0 && focal > 0.0) {
        bail!(Domain, "baseline and focal must be > 0");
    }
    let all = compute_metrics(pred, gt, taus)?;
    let labels = range_labels(gt, baseline, focal);
    let band = |r: DepthRange| -> Result<Option<Metrics>> {
        let keep: Vec<bool> = labels.iter().map(|l| *l == Some(r)).collect();
        if !keep.iter().any(|&k| k) {
            return Ok(None);
        }
        match compute_metrics(pred, &gt.masked(&keep), taus) {
            Ok(m) => Ok(Some(m)),
            // Every prediction in the band is invalid: report it as all bad.
            Err(crate::Error::Empty(_)) => Ok(Some(Metrics {
                bad: taus.iter().map(|&t| (t, 100.0)).collect(),
                avgerr: f64::NAN,
                rms: f64::NAN,
                quantiles: QUANTILES.iter().map(|&q| (q, f64::NAN)).collect(),
                n_valid: 0,
                n_evaluated: keep.iter().filter(|&&k| k).count(),
            })),
            Err(e) => Err(e),
        }
    };
    Ok(EvalReport {
        short: band(DepthRange::Short)?,
        middle: band(DepthRange::Middle)?,
        long: band(DepthRange::Long)?,
        all,
        baseline,
        focal,
    })
}

/// Target-view perturbation swept by [`robustness_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    /// Rotation about the image centre, in degrees.
    Rotation(Vec<f64>),
    /// Vertical translation in pixels.
    YTranslation(Vec<f64>),
    /// Side in pixels of a square mean-gray patch at the image centre.
    Occlusion(Vec<usize>),
}

impl Perturbation {
    /// `0, 0.05, …, 0.4` degrees.
    pub fn rotation() -> Self {
        Perturbation::Rotation((0..=8).map(|i| i as f64 * 0.05).collect())
    }

    /// `0, 0.5, …, 4` pixels.
    pub fn y_translation() -> Self {
        Perturbation::YTranslation((0..=8).map(|i| i as f64 * 0.5).collect())
    }

    /// Patch sides `0, 25, …, 200` pixels.
    pub fn occlusion() -> Self {
        Perturbation::Occlusion((0..=8).map(|i| i * 25).collect())
    }

    pub fn len(&self) -> usize {
        match self {
            Perturbation::Rotation(g) | Perturbation::YTranslation(g) => g.len(),
            Perturbation::Occlusion(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid value `i` as a number.
    pub fn param(&self, i: usize) -> f64 {
        match self {
            Perturbation::Rotation(g) | Perturbation::YTranslation(g) => g[i],
            Perturbation::Occlusion(g) => g[i] as f64,
        }
    }

    /// The target view perturbed by grid value `i`.
    pub fn apply(&self, target: &Image, i: usize) -> Result<Image> {
        match self {
            Perturbation::Rotation(g) => ydisparity_warp(target, g[i], 0.0),
            Perturbation::YTranslation(g) => ydisparity_warp(target, 0.0, g[i]),
            Perturbation::Occlusion(g) => {
                let side = g[i];
                if side == 0 {
                    return Ok(target.clone());
                }
                let s = side as i64;
                let rect = Rect {
                    x: target.width() as i64 / 2 - s / 2,
                    y: target.height() as i64 / 2 - s / 2,
                    w: s,
                    h: s,
                };
                asymmetric_mask(target, rect)
            }
        }
    }
}

struct Frozen;

impl Clock for Frozen {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

/// Runs the matcher on the pair with the target perturbed at every grid
/// value and returns `(param, avgerr)` of the last stage report.
pub fn robustness_sweep(
    matcher: &Matcher,
    left: &Image,
    right: &Image,
    gt: &DisparityMap,
    perturbation: &Perturbation,
) -> Result<Vec<(f64, f64)>> {
    (0..perturbation.len())
        .map(|i| {
            let target = perturbation.apply(right, i)?;
            let out = matcher.run_with(left, &target, None, &Frozen, |_| {})?;
            let Some(last) = out.reports.last() else {
                bail!(Empty, "matcher produced no report");
            };
            let m = compute_metrics(&last.disparity, gt, &DEFAULT_TAUS)?;
            Ok((perturbation.param(i), m.avgerr))
        })
        .collect()
}
