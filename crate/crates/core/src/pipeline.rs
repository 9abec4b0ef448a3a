//! Staged coarse-to-fine matcher.
//!
//! Level 4 (÷64) is decoded first and only feeds fusion. Levels 3, 2 and 1
//! are stages 1, 2 and 3; each emits a [`StageReport`] as soon as its cost
//! volume has been read out. Descriptors and volumes of a level are built
//! only when its stage starts, so halting after stage `s` never touches
//! finer data. The latency budget is checked between stages.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::config::MatcherConfig;
use crate::decoder::{
    aggregate, expected_disparity, to_cost_volume, upsample_fuse, upsample_fuse_cost,
    volumetric_pyramid_pool, CostVolume, FuseMode,
};
use crate::error::{bail, Error, Result};
use crate::image::{downsample_pow2, DisparityMap, Image};
use crate::pyramid::{divisor, extract_descriptors, working_images, FeatureLevel, LEVELS};
use crate::volume::{build_feature_volume, FeatureVolume};

/// Monotonic millisecond clock.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// [`std::time::Instant`]-backed clock.
#[cfg(feature = "std")]
#[derive(Debug, Clone, Copy)]
pub struct WallClock(std::time::Instant);

#[cfg(feature = "std")]
impl WallClock {
    pub fn new() -> Self {
        Self(std::time::Instant::now())
    }
}

#[cfg(feature = "std")]
impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(feature = "std")]
impl Clock for WallClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

/// Input pre-scaling: full, half or quarter resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    Full,
    Half,
    Quarter,
}

impl InputMode {
    /// Linear downscale factor.
    pub fn factor(self) -> usize {
        match self {
            InputMode::Full => 1,
            InputMode::Half => 2,
            InputMode::Quarter => 4,
        }
    }

    /// Report prefix letter (`F`, `H`, `Q`).
    pub fn letter(self) -> char {
        match self {
            InputMode::Full => 'F',
            InputMode::Half => 'H',
            InputMode::Quarter => 'Q',
        }
    }

    fn halvings(self) -> u32 {
        self.factor().trailing_zeros()
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "F" | "f" => Ok(InputMode::Full),
            "H" | "h" => Ok(InputMode::Half),
            "Q" | "q" => Ok(InputMode::Quarter),
            other => Err(Error::Config(format!("unknown input mode {other:?}; expected F, H or Q"))),
        }
    }
}

/// One on-demand disparity report.
#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    /// 1 = coarsest report.
    pub stage: usize,
    /// Pyramid level the report was read out from.
    pub scale_index: usize,
    /// Disparity at the original input resolution, in original pixel units.
    pub disparity: DisparityMap,
    /// Milliseconds since the match started.
    pub elapsed_ms: f64,
    /// Cumulative volume and cost cells processed since the match started.
    pub work_counter: u64,
}

impl StageReport {
    /// Name such as `F3` or `H2`.
    pub fn name(&self, mode: InputMode) -> String {
        format!("{}{}", mode.letter(), self.stage)
    }
}

/// Everything a match call produced.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutput {
    pub reports: Vec<StageReport>,
    /// Scale indices whose feature volumes were built, in build order.
    pub levels_built: Vec<usize>,
    /// Bytes of feature-volume data allocated, per built level.
    pub volume_bytes: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Per-level soft-argmin output at native level resolution, in level pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPrediction {
    pub scale_index: usize,
    pub disparity: DisparityMap,
}

/// Stage number of level `k`, if it reports.
#[inline]
pub fn stage_of_level(k: usize) -> Option<usize> {
    (k < LEVELS).then(|| LEVELS - k)
}

/// Level read out by stage `s`.
#[inline]
pub fn level_of_stage(s: usize) -> usize {
    LEVELS - s
}

/// Safe stopping distance in metres on a dry road for 25, 40 or 55 mph.
pub fn stopping_distance(speed_mph: u32) -> Result<f64> {
    match speed_mph {
        25 => Ok(25.0),
        40 => Ok(60.0),
        55 => Ok(115.0),
        other => bail!(Domain, "no stopping distance tabulated for {other} mph"),
    }
}

/// Coarse-to-fine matcher bound to one configuration.
#[derive(Debug, Clone)]
pub struct Matcher {
    cfg: MatcherConfig,
}

struct Prepared {
    left: Vec<Image>,
    right: Vec<Image>,
    d_max: usize,
    factor: usize,
    out_w: usize,
    out_h: usize,
}

/// What a decoded level hands to the next finer one.
struct Decoded {
    volume: FeatureVolume,
    cost: CostVolume,
}

struct Run<'a> {
    cfg: &'a MatcherConfig,
    prep: Prepared,
    work: u64,
    levels_built: Vec<usize>,
    volume_bytes: Vec<usize>,
    warnings: Vec<String>,
}

impl<'a> Run<'a> {
    fn level_features(&mut self, k: usize) -> Result<(FeatureLevel, FeatureLevel)> {
        let l = extract_descriptors(&self.prep.left[k - 1], k, &self.cfg.descriptor)?;
        let r = extract_descriptors(&self.prep.right[k - 1], k, &self.cfg.descriptor)?;
        self.warnings.extend(l.warnings().iter().cloned());
        self.work += 2 * (l.channels() * l.width() * l.height()) as u64;
        Ok((l, r))
    }

    /// Decodes level `k`, fusing the coarser result when present.
    fn decode(&mut self, k: usize, coarser: Option<&Decoded>, fuse: bool) -> Result<Decoded> {
        let (l, r) = self.level_features(k)?;
        let stride = self.cfg.strides.stride(k)?;
        let dec = &self.cfg.decoder;
        let raw = build_feature_volume(&l, &r, self.prep.d_max, stride)?;
        drop((l, r));
        let cells = raw.cells() as u64;
        self.levels_built.push(k);
        self.volume_bytes.push(raw.cells() * core::mem::size_of::<f32>());
        self.work += cells;
        let mut vol = aggregate(&raw, dec)?;
        drop(raw);
        self.work += cells * dec.agg_blocks as u64;
        let feature_fusion = fuse && dec.fuse_mode == FuseMode::Feature;
        if let (true, Some(c)) = (feature_fusion, coarser) {
            vol = upsample_fuse(&c.volume, &vol)?;
            self.work += cells;
        }
        let pooled = volumetric_pyramid_pool(&vol, dec)?;
        self.warnings.extend(pooled.warnings);
        vol = pooled.volume;
        self.work += cells;
        let weights = dec.weights_for(vol.channels)?;
        let mut cost = to_cost_volume(&vol, &weights)?;
        let cost_cells = cost.cost.len() as u64;
        self.work += cost_cells;
        if let (true, FuseMode::Cost, Some(c)) = (fuse, dec.fuse_mode, coarser) {
            cost = upsample_fuse_cost(&c.cost, &cost)?;
            self.work += cost_cells;
        }
        Ok(Decoded { volume: vol, cost })
    }

    fn readout(&self, cost: &CostVolume) -> Result<DisparityMap> {
        let native = expected_disparity(cost, self.cfg.decoder.beta)?;
        let f = self.prep.factor;
        let scaled = if f == 1 { native } else { native.scaled(f as f32) };
        Ok(scaled.upsample_by(cost.divisor() * f, self.prep.out_w, self.prep.out_h))
    }
}

impl Matcher {
    pub fn new(cfg: MatcherConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &MatcherConfig {
        &self.cfg
    }

    fn prepare(&self, left: &Image, right: &Image) -> Result<Prepared> {
        if left.width() != right.width() || left.height() != right.height() {
            bail!(
                Shape,
                "left {}x{} and right {}x{} differ",
                left.width(),
                left.height(),
                right.width(),
                right.height()
            );
        }
        if self.cfg.d_max >= left.width() {
            bail!(
                Config,
                "d_max {} must be smaller than the image width {}",
                self.cfg.d_max,
                left.width()
            );
        }
        let mode = self.cfg.input_mode;
        let factor = mode.factor();
        let (l, r) = if factor == 1 {
            (left.to_gray(), right.to_gray())
        } else {
            (
                downsample_pow2(&left.to_gray(), mode.halvings())?,
                downsample_pow2(&right.to_gray(), mode.halvings())?,
            )
        };
        Ok(Prepared {
            left: working_images(&l)?,
            right: working_images(&r)?,
            d_max: self.cfg.d_max.div_ceil(factor),
            factor,
            out_w: left.width(),
            out_h: left.height(),
        })
    }

    /// Runs the staged matcher without a budget.
    #[cfg(feature = "std")]
    pub fn run(&self, left: &Image, right: &Image) -> Result<MatchOutput> {
        self.run_with(left, right, None, &WallClock::new(), |_| {})
    }

    /// Runs the staged matcher.
    ///
    /// Stage 1 always completes. A later stage starts only while the
    /// previous one finished under `budget_ms`. `on_report` sees each report
    /// the moment it is ready.
    pub fn run_with(
        &self,
        left: &Image,
        right: &Image,
        budget_ms: Option<f64>,
        clock: &dyn Clock,
        mut on_report: impl FnMut(&StageReport),
    ) -> Result<MatchOutput> {
        let start = clock.now_ms();
        let prep = self.prepare(left, right)?;
        let mut run = Run {
            cfg: &self.cfg,
            prep,
            work: 0,
            levels_built: Vec::new(),
            volume_bytes: Vec::new(),
            warnings: Vec::new(),
        };
        let mut reports: Vec<StageReport> = Vec::new();
        let mut prev = run.decode(LEVELS, None, true)?;
        for stage in 1..=self.cfg.stages {
            if let (Some(budget), Some(last)) = (budget_ms, reports.last()) {
                if last.elapsed_ms >= budget {
                    break;
                }
            }
            let k = level_of_stage(stage);
            let cur = run.decode(k, Some(&prev), true)?;
            let disparity = run.readout(&cur.cost)?;
            let report = StageReport {
                stage,
                scale_index: k,
                disparity,
                elapsed_ms: clock.now_ms() - start,
                work_counter: run.work,
            };
            on_report(&report);
            reports.push(report);
            prev = cur;
        }
        Ok(MatchOutput {
            reports,
            levels_built: run.levels_built,
            volume_bytes: run.volume_bytes,
            warnings: run.warnings,
        })
    }

    /// Decodes all four levels and returns each level's readout at native
    /// resolution in level-pixel units (full-resolution disparity divided by
    /// the level's divisor).
    pub fn level_predictions(&self, left: &Image, right: &Image) -> Result<Vec<LevelPrediction>> {
        let prep = self.prepare(left, right)?;
        if prep.factor != 1 {
            bail!(Config, "level predictions are defined for full-resolution input only");
        }
        let mut run = Run {
            cfg: &self.cfg,
            prep,
            work: 0,
            levels_built: Vec::new(),
            volume_bytes: Vec::new(),
            warnings: Vec::new(),
        };
        let mut out = Vec::with_capacity(LEVELS);
        let mut prev: Option<Decoded> = None;
        for k in (1..=LEVELS).rev() {
            let cur = run.decode(k, prev.as_ref(), true)?;
            let native = expected_disparity(&cur.cost, self.cfg.decoder.beta)?;
            out.push(LevelPrediction {
                scale_index: k,
                disparity: native.scaled(1.0 / divisor(k) as f32),
            });
            prev = Some(cur);
        }
        out.reverse();
        Ok(out)
    }

    /// Single-scale baseline: the finest level alone, without fusion, read
    /// out at the original resolution.
    pub fn finest_only(&self, left: &Image, right: &Image) -> Result<DisparityMap> {
        let prep = self.prepare(left, right)?;
        let mut run = Run {
            cfg: &self.cfg,
            prep,
            work: 0,
            levels_built: Vec::new(),
            volume_bytes: Vec::new(),
            warnings: Vec::new(),
        };
        let cur = run.decode(1, None, false)?;
        run.readout(&cur.cost)
    }
}
