//! Matcher configuration and its flat `key=value` text form.
//!
//! ```text
//! # comments and blank lines are ignored
//! d_max=256
//! input_mode=F
//! dec.beta=2.5
//! ```
//!
//! Missing keys keep their defaults; unknown keys are rejected. Floats are
//! written in shortest round-trip form, so `parse(render(c)) == c`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;
use core::str::FromStr;

use crate::decoder::{DecoderConfig, FuseMode};
use crate::error::{bail, Error, Result};
use crate::pipeline::InputMode;
use crate::pyramid::{DescriptorConfig, LEVELS};
use crate::volume::StridePolicy;

/// Every tunable pipeline parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct MatcherConfig {
    /// Full-resolution disparity search range in pixels.
    pub d_max: usize,
    pub input_mode: InputMode,
    /// Number of reported stages to run (1..=3).
    pub stages: usize,
    pub strides: StridePolicy,
    pub descriptor: DescriptorConfig,
    pub decoder: DecoderConfig,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            d_max: 256,
            input_mode: InputMode::Full,
            stages: 3,
            strides: StridePolicy::default(),
            descriptor: DescriptorConfig::default(),
            decoder: DecoderConfig::default(),
        }
    }
}

impl MatcherConfig {
    pub fn with_d_max(mut self, d_max: usize) -> Self {
        self.d_max = d_max;
        self
    }

    pub fn with_mode(mut self, mode: InputMode) -> Self {
        self.input_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_max == 0 {
            bail!(Config, "d_max must be > 0");
        }
        if !(1..=3).contains(&self.stages) {
            bail!(Config, "stages must lie in 1..=3, got {}", self.stages);
        }
        self.strides.validate()?;
        self.descriptor.validate()?;
        self.decoder.validate()?;
        for &c in &self.descriptor.channels {
            self.decoder.weights_for(c)?;
        }
        Ok(())
    }

    /// Renders the configuration as `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let d = &self.descriptor;
        let k = &self.decoder;
        let _ = writeln!(s, "d_max={}", self.d_max);
        let _ = writeln!(s, "input_mode={}", self.input_mode.letter());
        let _ = writeln!(s, "stages={}", self.stages);
        let _ = writeln!(s, "strides={}", join(&self.strides.strides));
        let _ = writeln!(s, "desc.channels={}", join(&d.channels));
        let _ = writeln!(s, "desc.windows={}", join(&d.windows));
        let _ = writeln!(s, "desc.rank_radius={}", d.rank_radius);
        let _ = writeln!(s, "desc.smoothing_passes={}", d.smoothing_passes);
        let _ = writeln!(s, "desc.intensity_gain={}", d.intensity_gain);
        let _ = writeln!(s, "desc.gradient_gain={}", d.gradient_gain);
        let _ = writeln!(s, "desc.rank_gain={}", d.rank_gain);
        let _ = writeln!(s, "dec.agg_blocks={}", k.agg_blocks);
        let _ = writeln!(s, "dec.agg_window={}", join(&k.agg_window));
        let _ = writeln!(s, "dec.residual_mix={}", k.residual_mix);
        let _ = writeln!(s, "dec.vpp_grids={}", join(&k.vpp_grids));
        let _ = writeln!(s, "dec.vpp_mix={}", k.vpp_mix);
        let _ = writeln!(s, "dec.channel_weights={}", join(&k.channel_weights));
        let _ = writeln!(s, "dec.beta={}", k.beta);
        let _ = writeln!(
            s,
            "dec.fuse_mode={}",
            match k.fuse_mode {
                FuseMode::Feature => "feature",
                FuseMode::Cost => "cost",
            }
        );
        s
    }

    /// Parses `key=value` text on top of the defaults and validates the result.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected key=value, got {line:?}"),
                });
            };
            cfg.set(key.trim(), value.trim())
                .map_err(|message| Error::Parse {
                    line: line_no,
                    message,
                })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> core::result::Result<(), String> {
        let d = &mut self.descriptor;
        let k = &mut self.decoder;
        match key {
            "d_max" => self.d_max = one(v)?,
            "input_mode" => self.input_mode = v.parse().map_err(|e: Error| e.to_string())?,
            "stages" => self.stages = one(v)?,
            "strides" => self.strides.strides = fixed::<usize, LEVELS>(v)?,
            "desc.channels" => d.channels = fixed::<usize, LEVELS>(v)?,
            "desc.windows" => d.windows = list(v)?,
            "desc.rank_radius" => d.rank_radius = one(v)?,
            "desc.smoothing_passes" => d.smoothing_passes = one(v)?,
            "desc.intensity_gain" => d.intensity_gain = one(v)?,
            "desc.gradient_gain" => d.gradient_gain = one(v)?,
            "desc.rank_gain" => d.rank_gain = one(v)?,
            "dec.agg_blocks" => k.agg_blocks = one(v)?,
            "dec.agg_window" => k.agg_window = fixed::<usize, 3>(v)?,
            "dec.residual_mix" => k.residual_mix = one(v)?,
            "dec.vpp_grids" => k.vpp_grids = list(v)?,
            "dec.vpp_mix" => k.vpp_mix = one(v)?,
            "dec.channel_weights" => k.channel_weights = list(v)?,
            "dec.beta" => k.beta = one(v)?,
            "dec.fuse_mode" => {
                k.fuse_mode = match v {
                    "feature" => FuseMode::Feature,
                    "cost" => FuseMode::Cost,
                    other => return Err(format!("unknown fuse mode {other:?}")),
                }
            }
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }
}

fn join<T: core::fmt::Display>(items: &[T]) -> String {
    let mut s = String::new();
    for (i, v) in items.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v}");
    }
    s
}

fn one<T: FromStr>(v: &str) -> core::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn list<T: FromStr>(v: &str) -> core::result::Result<Vec<T>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| one(p.trim())).collect()
}

fn fixed<T: FromStr + Copy, const N: usize>(v: &str) -> core::result::Result<[T; N], String> {
    let items: Vec<T> = list(v)?;
    items
        .try_into()
        .map_err(|got: Vec<T>| format!("expected {N} values, got {}", got.len()))
}
