//! Multi-scale disparity loss and a derivative-free search over decoder
//! parameters.
//!
//! Level `k` is scored at its native resolution against the ground truth
//! area-averaged to that resolution and divided by the level divisor, so
//! every level's loss is in its own pixel units. The total weights level `k`
//! by `4^-(k-1)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::config::MatcherConfig;
use crate::decoder::{DecoderConfig, FuseMode};
use crate::error::{bail, Result};
use crate::image::{DisparityMap, Image};
use crate::math;
use crate::par;
use crate::pipeline::{LevelPrediction, Matcher};
use crate::pyramid::{divisor, LEVELS};

/// Huber loss with a 1 px transition: `0.5e²` inside, `|e| − 0.5` outside.
#[inline]
pub fn smooth_l1(e: f64) -> f64 {
    let a = e.abs();
    if a <= 1.0 {
        0.5 * a * a
    } else {
        a - 0.5
    }
}

/// Area-averages `gt` over `factor × factor` blocks into a `width × height`
/// map and divides the values by `factor`. A block is valid when at least
/// half of its in-image pixels are; its value is the mean of those.
pub fn downsample_gt(gt: &DisparityMap, factor: usize, width: usize, height: usize) -> Result<DisparityMap> {
    if factor == 0 {
        bail!(Domain, "downsampling factor must be >= 1");
    }
    if width * factor < gt.width() || height * factor < gt.height() {
        bail!(
            Shape,
            "{width}x{height} blocks of {factor} px do not cover a {}x{} map",
            gt.width(),
            gt.height()
        );
    }
    let mut out = DisparityMap::new_invalid(width, height);
    for by in 0..height {
        for bx in 0..width {
            let (x0, y0) = (bx * factor, by * factor);
            let x1 = (x0 + factor).min(gt.width());
            let y1 = (y0 + factor).min(gt.height());
            if x0 >= x1 || y0 >= y1 {
                continue;
            }
            let (mut sum, mut valid) = (0.0f64, 0usize);
            for y in y0..y1 {
                for x in x0..x1 {
                    if let Some(v) = gt.get(x, y) {
                        sum += v as f64;
                        valid += 1;
                    }
                }
            }
            if valid > 0 && 2 * valid >= (x1 - x0) * (y1 - y0) {
                out.set(bx, by, Some((sum / valid as f64 / factor as f64) as f32));
            }
        }
    }
    Ok(out)
}

/// Per-level losses, finest first, and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub levels: [f64; LEVELS],
    /// Levels that had no pixel to score; their loss is 0.
    pub empty: [bool; LEVELS],
    pub total: f64,
}

/// `L1 + L2/4 + L3/16 + L4/64`, summed with compensation at the common
/// scale 64 so that powers-of-two weights stay exact.
pub fn weighted_total(levels: &[f64; LEVELS]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (k, &l) in levels.iter().enumerate() {
        let term = l * (1u32 << (2 * (LEVELS - 1 - k))) as f64;
        let t = sum + term;
        comp += if sum.abs() >= term.abs() {
            (sum - t) + term
        } else {
            (term - t) + sum
        };
        sum = t;
    }
    (sum + comp) / (1u32 << (2 * (LEVELS - 1))) as f64
}

/// Scores per-level predictions against full-resolution ground truth.
///
/// `preds[k-1]` is level `k` in its own pixel units at its own resolution.
pub fn multiscale_loss(preds: &[DisparityMap], gt: &DisparityMap) -> Result<LossBreakdown> {
    if preds.len() != LEVELS {
        bail!(Shape, "expected {LEVELS} level predictions, got {}", preds.len());
    }
    let mut levels = [0.0; LEVELS];
    let mut empty = [false; LEVELS];
    for (i, pred) in preds.iter().enumerate() {
        let g = downsample_gt(gt, divisor(i + 1), pred.width(), pred.height())?;
        let (mut sum, mut n) = (0.0f64, 0usize);
        for j in 0..g.len() {
            if g.is_valid_at(j) && pred.is_valid_at(j) {
                sum += smooth_l1(pred.values()[j] as f64 - g.values()[j] as f64);
                n += 1;
            }
        }
        if n == 0 {
            empty[i] = true;
        } else {
            levels[i] = sum / n as f64;
        }
    }
    Ok(LossBreakdown {
        levels,
        empty,
        total: weighted_total(&levels),
    })
}

/// Convenience wrapper over [`Matcher::level_predictions`] output.
pub fn level_loss(preds: &[LevelPrediction], gt: &DisparityMap) -> Result<LossBreakdown> {
    let mut maps: Vec<DisparityMap> = Vec::with_capacity(LEVELS);
    for k in 1..=LEVELS {
        match preds.iter().find(|p| p.scale_index == k) {
            Some(p) => maps.push(p.disparity.clone()),
            None => bail!(Shape, "missing prediction for level {k}"),
        }
    }
    multiscale_loss(&maps, gt)
}

/// One training pair.
#[derive(Debug, Clone)]
pub struct Sample {
    pub left: Image,
    pub right: Image,
    pub gt: DisparityMap,
}

/// A decoder parameter the search may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    /// Softmax temperature, searched in log space.
    Beta,
    ResidualMix,
    VppMix,
    AggBlocks,
    FuseMode,
}

impl Param {
    pub const ALL: [Param; 5] = [
        Param::Beta,
        Param::ResidualMix,
        Param::VppMix,
        Param::AggBlocks,
        Param::FuseMode,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Beta => "beta",
            Param::ResidualMix => "residual_mix",
            Param::VppMix => "vpp_mix",
            Param::AggBlocks => "agg_blocks",
            Param::FuseMode => "fuse_mode",
        }
    }

    fn get(self, c: &DecoderConfig) -> f64 {
        match self {
            Param::Beta => math::ln(c.beta),
            Param::ResidualMix => c.residual_mix as f64,
            Param::VppMix => c.vpp_mix as f64,
            Param::AggBlocks => c.agg_blocks as f64,
            Param::FuseMode => match c.fuse_mode {
                FuseMode::Feature => 0.0,
                FuseMode::Cost => 1.0,
            },
        }
    }

    fn set(self, c: &mut DecoderConfig, v: f64) {
        match self {
            Param::Beta => c.beta = math::exp(v),
            Param::ResidualMix => c.residual_mix = v.clamp(0.0, 1.0) as f32,
            Param::VppMix => c.vpp_mix = v.clamp(0.0, 1.0) as f32,
            Param::AggBlocks => c.agg_blocks = v as usize,
            Param::FuseMode => {
                c.fuse_mode = if v < 0.5 { FuseMode::Feature } else { FuseMode::Cost }
            }
        }
    }

    /// Search interval of a continuous parameter (in search space).
    fn interval(self) -> Option<(f64, f64)> {
        match self {
            Param::Beta => Some((math::ln(0.05), math::ln(64.0))),
            Param::ResidualMix | Param::VppMix => Some((0.0, 1.0)),
            Param::AggBlocks | Param::FuseMode => None,
        }
    }

    /// Candidate values of a discrete parameter.
    fn grid(self) -> Vec<f64> {
        match self {
            Param::AggBlocks => (0..=6).map(|b| b as f64).collect(),
            Param::FuseMode => alloc::vec![0.0, 1.0],
            _ => Vec::new(),
        }
    }

    /// Human-readable value of the parameter in `c`.
    pub fn display(self, c: &DecoderConfig) -> String {
        match self {
            Param::Beta => format!("{}", c.beta),
            Param::ResidualMix => format!("{}", c.residual_mix),
            Param::VppMix => format!("{}", c.vpp_mix),
            Param::AggBlocks => format!("{}", c.agg_blocks),
            Param::FuseMode => match c.fuse_mode {
                FuseMode::Feature => "feature".into(),
                FuseMode::Cost => "cost".into(),
            },
        }
    }
}

/// An accepted step: the objective after moving `param` to `value`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// Evaluations used so far, including this one.
    pub eval: usize,
    /// `None` for the starting point.
    pub param: Option<Param>,
    pub value: String,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub config: DecoderConfig,
    /// Dataset loss of `config`; `None` when nothing was evaluated.
    pub loss: Option<f64>,
    pub trace: Vec<TraceStep>,
    pub evals: usize,
}

/// Golden-section probes per continuous line search.
const LINE_EVALS: usize = 8;

/// Mean multi-scale loss of `decoder` (on top of `base`) over `dataset`.
pub fn dataset_loss(base: &MatcherConfig, decoder: &DecoderConfig, dataset: &[Sample]) -> Result<f64> {
    if dataset.is_empty() {
        bail!(Empty, "dataset is empty");
    }
    let mut cfg = base.clone();
    cfg.decoder = decoder.clone();
    let matcher = Matcher::new(cfg)?;
    let losses = par::map_range(dataset.len(), |i| {
        let s = &dataset[i];
        let preds = matcher.level_predictions(&s.left, &s.right)?;
        level_loss(&preds, &s.gt).map(|l| l.total)
    });
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / dataset.len() as f64)
}

struct Search<'a> {
    base: &'a MatcherConfig,
    dataset: &'a [Sample],
    budget: usize,
    evals: usize,
    best: DecoderConfig,
    best_loss: f64,
    trace: Vec<TraceStep>,
}

impl Search<'_> {
    fn exhausted(&self) -> bool {
        self.evals >= self.budget
    }

    /// Evaluates `p = v` on top of the best config; accepts strict gains.
    fn probe(&mut self, p: Param, v: f64) -> Result<Option<f64>> {
        if self.exhausted() {
            return Ok(None);
        }
        let mut cand = self.best.clone();
        p.set(&mut cand, v);
        if cand == self.best || cand.validate().is_err() {
            return Ok(None);
        }
        self.evals += 1;
        let loss = dataset_loss(self.base, &cand, self.dataset)?;
        if loss < self.best_loss {
            self.trace.push(TraceStep {
                eval: self.evals,
                param: Some(p),
                value: p.display(&cand),
                loss,
            });
            self.best = cand;
            self.best_loss = loss;
        }
        Ok(Some(loss))
    }

    fn line(&mut self, p: Param) -> Result<bool> {
        let before = self.best_loss;
        if let Some((mut lo, mut hi)) = p.interval() {
            let r = 0.5 * (math::sqrt(5.0) - 1.0);
            let mut a = hi - r * (hi - lo);
            let mut b = lo + r * (hi - lo);
            let mut fa = self.probe(p, a)?.unwrap_or(f64::INFINITY);
            let mut fb = self.probe(p, b)?.unwrap_or(f64::INFINITY);
            for _ in 2..LINE_EVALS {
                if self.exhausted() {
                    break;
                }
                if fa <= fb {
                    hi = b;
                    b = a;
                    fb = fa;
                    a = hi - r * (hi - lo);
                    fa = self.probe(p, a)?.unwrap_or(f64::INFINITY);
                } else {
                    lo = a;
                    a = b;
                    fa = fb;
                    b = lo + r * (hi - lo);
                    fb = self.probe(p, b)?.unwrap_or(f64::INFINITY);
                }
            }
        } else {
            let current = p.get(&self.best);
            for v in p.grid() {
                if v != current {
                    self.probe(p, v)?;
                }
            }
        }
        Ok(self.best_loss < before)
    }
}

/// Cyclic coordinate search over `params`, starting from `base.decoder`
/// and spending at most `budget_evals` dataset evaluations (the starting
/// point costs one). Only strict improvements are accepted, so the trace
/// losses decrease and the result never scores worse than the start.
pub fn tune(
    base: &MatcherConfig,
    dataset: &[Sample],
    params: &[Param],
    budget_evals: usize,
) -> Result<TuneResult> {
    if dataset.is_empty() {
        bail!(Empty, "dataset is empty");
    }
    base.validate()?;
    if budget_evals == 0 {
        return Ok(TuneResult {
            config: base.decoder.clone(),
            loss: None,
            trace: Vec::new(),
            evals: 0,
        });
    }
    let start = dataset_loss(base, &base.decoder, dataset)?;
    let mut s = Search {
        base,
        dataset,
        budget: budget_evals,
        evals: 1,
        best: base.decoder.clone(),
        best_loss: start,
        trace: alloc::vec![TraceStep {
            eval: 1,
            param: None,
            value: String::new(),
            loss: start,
        }],
    };
    while !s.exhausted() {
        let mut improved = false;
        for &p in params {
            improved |= s.line(p)?;
        }
        if !improved {
            break;
        }
    }
    Ok(TuneResult {
        config: s.best,
        loss: Some(s.best_loss),
        trace: s.trace,
        evals: s.evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_l1_is_continuous_at_one() {
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(-3.0), 2.5);
        let below = smooth_l1(1.0 - 1e-6);
        let above = smooth_l1(1.0 + 1e-6);
        assert!((below - 0.5).abs() < 2e-6 && (above - 0.5).abs() < 2e-6);
    }

    #[test]
    fn equal_levels_weigh_85_over_64() {
        for l in [0.3, 1.0, 7.25, 1e-9, 123.456] {
            assert_eq!(weighted_total(&[l; 4]), l * 85.0 / 64.0);
        }
        assert_eq!(weighted_total(&[2.5, 0.0, 0.0, 0.0]), 2.5);
    }

    #[test]
    fn gt_downsampling_halves_validity() {
        let mut gt = DisparityMap::constant(4, 2, 8.0);
        gt.set(0, 0, None);
        gt.set(1, 0, None);
        gt.set(0, 1, None);
        let d = downsample_gt(&gt, 2, 2, 1).unwrap();
        assert_eq!(d.get(0, 0), None);
        assert_eq!(d.get(1, 0), Some(4.0));
        gt.set(0, 1, Some(8.0));
        let d = downsample_gt(&gt, 2, 2, 1).unwrap();
        assert_eq!(d.get(0, 0), Some(4.0));
    }

    #[test]
    fn perfect_levels_give_zero_loss() {
        let gt = DisparityMap::constant(128, 64, 32.0);
        let preds: Vec<DisparityMap> = (1..=4)
            .map(|k| {
                let f = divisor(k);
                DisparityMap::constant(128usize.div_ceil(f), 64usize.div_ceil(f), 32.0 / f as f32)
            })
            .collect();
        let l = multiscale_loss(&preds, &gt).unwrap();
        assert_eq!(l.total, 0.0);
        assert_eq!(l.empty, [false; 4]);
    }
}
