//! `key=value` calibration files.

use crate::error::{Error, Result};

/// Search range and, when present, the rig geometry for depth conversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calib {
    pub ndisp: usize,
    /// Metres.
    pub baseline: Option<f64>,
    /// Pixels.
    pub focal: Option<f64>,
}

/// Parses `key=value` lines.
///
/// `ndisp` is required and must be positive. `baseline` is read in metres.
/// The focal length comes from `focal`, or else from the first entry of a
/// `cam0=[f 0 cx; 0 f cy; 0 0 1]` matrix. Other keys are ignored.
pub fn read_calib(text: &str) -> Result<Calib> {
    let mut ndisp = None;
    let mut baseline = None;
    let mut focal = None;
    let mut cam0 = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Calib(format!("line {}: expected key=value", i + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Calib(format!("line {}: {k} is not a number: {v:?}", i + 1)))
        };
        match k {
            "ndisp" => {
                ndisp = Some(v.parse::<usize>().map_err(|_| {
                    Error::Calib(format!("line {}: ndisp is not an integer: {v:?}", i + 1))
                })?)
            }
            "baseline" => baseline = Some(num(v)?),
            "focal" => focal = Some(num(v)?),
            "cam0" => {
                let first = v.trim_start_matches('[').split_whitespace().next().unwrap_or("");
                cam0 = Some(num(first.trim_end_matches(';'))?);
            }
            _ => {}
        }
    }
    let ndisp = ndisp.ok_or_else(|| Error::Calib("missing ndisp".into()))?;
    if ndisp == 0 {
        return Err(Error::Calib("ndisp=0 leaves an empty search range".into()));
    }
    for (name, v) in [("baseline", baseline), ("focal", focal.or(cam0))] {
        if let Some(v) = v {
            if v <= 0.0 {
                return Err(Error::Calib(format!("{name} must be > 0, got {v}")));
            }
        }
    }
    Ok(Calib {
        ndisp,
        baseline,
        focal: focal.or(cam0),
    })
}
