//! CSV renderings of evaluation results.

use std::fmt::Write;

use anystereo_core::eval::{EvalReport, Metrics, QUANTILES};

fn tau_label(t: f64) -> String {
    format!("bad{t}")
}

/// Header row: `range,bad1,bad2,bad4,avgerr,rms,A90,A95,A99,n`.
pub fn metrics_header(taus: &[f64]) -> String {
    let mut cols = vec!["range".to_string()];
    cols.extend(taus.iter().map(|&t| tau_label(t)));
    cols.extend(["avgerr".into(), "rms".into()]);
    cols.extend(QUANTILES.iter().map(|q| format!("A{q}")));
    cols.push("n".into());
    cols.join(",")
}

/// One row; `None` renders as NaN metrics with `n = 0`.
pub fn metrics_row(label: &str, m: Option<&Metrics>, taus: &[f64]) -> String {
    let mut s = label.to_string();
    match m {
        Some(m) => {
            for &t in taus {
                let _ = write!(s, ",{:.6}", m.bad_at(t).unwrap_or(f64::NAN));
            }
            let _ = write!(s, ",{:.6},{:.6}", m.avgerr, m.rms);
            for &q in &QUANTILES {
                let _ = write!(s, ",{:.6}", m.quantile(q).unwrap_or(f64::NAN));
            }
            let _ = write!(s, ",{}", m.n_evaluated);
        }
        None => {
            for _ in 0..taus.len() + 2 + QUANTILES.len() {
                s.push_str(",NaN");
            }
            s.push_str(",0");
        }
    }
    s
}

/// Header plus a single `All` row.
pub fn all_only_csv(m: &Metrics, taus: &[f64]) -> String {
    format!("{}\n{}\n", metrics_header(taus), metrics_row("All", Some(m), taus))
}

/// Header plus `S`, `M`, `L` and `All` rows.
pub fn protocol_csv(r: &EvalReport, taus: &[f64]) -> String {
    let mut s = metrics_header(taus);
    s.push('\n');
    for (label, m) in [
        ("S", r.short.as_ref()),
        ("M", r.middle.as_ref()),
        ("L", r.long.as_ref()),
        ("All", Some(&r.all)),
    ] {
        s.push_str(&metrics_row(label, m, taus));
        s.push('\n');
    }
    s
}

/// `param,avgerr` rows of a robustness sweep.
pub fn sweep_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("param,avgerr\n");
    for (p, e) in points {
        let _ = writeln!(s, "{p},{e:.6}");
    }
    s
}
