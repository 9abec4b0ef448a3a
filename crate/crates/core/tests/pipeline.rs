use std::cell::Cell;

use anystereo_core::pipeline::{level_of_stage, stage_of_level, Clock};
use anystereo_core::rds::{generate, SceneKind, SceneSpec, SyntheticScene};
use anystereo_core::{Image, InputMode, Matcher, MatcherConfig};

/// Advances by a fixed step on every read.
struct Ticker(Cell<f64>);

impl Clock for Ticker {
    fn now_ms(&self) -> f64 {
        let t = self.0.get();
        self.0.set(t + 5.0);
        t
    }
}

fn scene(d0: f64, w: usize, h: usize, seed: u64) -> SyntheticScene {
    generate(&SceneSpec::new(SceneKind::Constant { d0 }, w, h, seed)).unwrap()
}

fn median(v: &[f32]) -> f32 {
    let mut s: Vec<f32> = v.iter().copied().filter(|x| x.is_finite()).collect();
    s.sort_by(f32::total_cmp);
    s[s.len() / 2]
}

#[test]
fn full_run_reports_three_ordered_stages() {
    let s = scene(24.0, 320, 192, 1);
    let m = Matcher::new(MatcherConfig::default().with_d_max(64)).unwrap();
    let clock = Ticker(Cell::new(0.0));
    let mut seen = Vec::new();
    let out = m
        .run_with(&s.left, &s.right, None, &clock, |r| seen.push(r.stage))
        .unwrap();
    assert_eq!(seen, vec![1, 2, 3]);
    assert_eq!(out.levels_built, vec![4, 3, 2, 1]);
    for w in out.reports.windows(2) {
        assert!(w[1].elapsed_ms > w[0].elapsed_ms);
        assert!(w[1].work_counter > w[0].work_counter);
    }
    for r in &out.reports {
        assert_eq!(r.scale_index, level_of_stage(r.stage));
        assert_eq!(stage_of_level(r.scale_index), Some(r.stage));
        assert_eq!((r.disparity.width(), r.disparity.height()), (320, 192));
    }
    assert_eq!(stage_of_level(4), None);
}

#[test]
fn zero_budget_stops_after_stage_one() {
    let s = scene(24.0, 320, 192, 2);
    let m = Matcher::new(MatcherConfig::default().with_d_max(64)).unwrap();
    let out = m
        .run_with(&s.left, &s.right, Some(0.0), &Ticker(Cell::new(0.0)), |_| {})
        .unwrap();
    assert_eq!(out.reports.len(), 1);
    assert_eq!(out.reports[0].stage, 1);
    assert_eq!(out.levels_built, vec![4, 3]);
    let full = m.run(&s.left, &s.right).unwrap();
    assert_eq!(out.reports[0].work_counter, full.reports[0].work_counter);
    assert_eq!(out.reports[0].disparity, full.reports[0].disparity);
}

#[test]
fn budget_between_stages() {
    // Ticks land at 0 (start), 5, 10, 15: stage 1 ends at 5 ms, stage 2 at 10 ms.
    let s = scene(24.0, 320, 192, 3);
    let m = Matcher::new(MatcherConfig::default().with_d_max(64)).unwrap();
    let out = m
        .run_with(&s.left, &s.right, Some(7.0), &Ticker(Cell::new(0.0)), |_| {})
        .unwrap();
    assert_eq!(out.reports.len(), 2);
}

#[test]
fn stage_one_is_a_fraction_of_stage_three_work() {
    let img = Image::from_fn(1920, 1088, |x, y| ((x * 31 + y * 17) % 101) as f32 / 100.0);
    let m = Matcher::new(MatcherConfig::default().with_d_max(256)).unwrap();
    let out = m.run(&img, &img).unwrap();
    let (w1, w3) = (out.reports[0].work_counter, out.reports[2].work_counter);
    assert!(4 * w1 <= w3, "{w1} vs {w3}");
}

#[test]
fn coarser_input_does_less_work_in_the_same_units() {
    let s = scene(64.0, 640, 384, 4);
    let full = Matcher::new(MatcherConfig::default().with_d_max(128)).unwrap();
    let half = Matcher::new(MatcherConfig::default().with_d_max(128).with_mode(InputMode::Half)).unwrap();
    let quarter =
        Matcher::new(MatcherConfig::default().with_d_max(128).with_mode(InputMode::Quarter)).unwrap();
    let f = full.run(&s.left, &s.right).unwrap();
    let h = half.run(&s.left, &s.right).unwrap();
    let q = quarter.run(&s.left, &s.right).unwrap();
    assert!(h.reports[2].work_counter < f.reports[2].work_counter);
    assert!(q.reports[2].work_counter < h.reports[2].work_counter);
    let gt = s.interior_gt(64);
    let keep = gt.valid_mask();
    for out in [&f, &h, &q] {
        let d = out.reports[2].disparity.masked(&keep);
        assert_eq!((d.width(), d.height()), (640, 384));
        let med = median(d.values());
        assert!((med - 64.0).abs() <= 8.0, "median {med}");
    }
}

#[test]
fn reports_are_deterministic() {
    let s = scene(40.0, 320, 192, 5);
    let m = Matcher::new(MatcherConfig::default().with_d_max(64)).unwrap();
    let a = m.run_with(&s.left, &s.right, None, &Ticker(Cell::new(0.0)), |_| {}).unwrap();
    let b = m.run_with(&s.left, &s.right, None, &Ticker(Cell::new(0.0)), |_| {}).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_inputs_fail_before_work() {
    let m = Matcher::new(MatcherConfig::default().with_d_max(64)).unwrap();
    let a = Image::filled(128, 64, 1, 0.5);
    let b = Image::filled(120, 64, 1, 0.5);
    assert!(m.run(&a, &b).is_err());
    let narrow = Image::filled(64, 64, 1, 0.5);
    assert!(m.run(&narrow, &narrow).is_err());
}

#[test]
fn level_predictions_cover_all_levels() {
    let s = scene(32.0, 320, 192, 6);
    let m = Matcher::new(MatcherConfig::default().with_d_max(64)).unwrap();
    let preds = m.level_predictions(&s.left, &s.right).unwrap();
    let ks: Vec<usize> = preds.iter().map(|p| p.scale_index).collect();
    assert_eq!(ks, vec![1, 2, 3, 4]);
    assert_eq!((preds[0].disparity.width(), preds[0].disparity.height()), (40, 24));
    let half = Matcher::new(MatcherConfig::default().with_d_max(64).with_mode(InputMode::Half)).unwrap();
    assert!(half.level_predictions(&s.left, &s.right).is_err());
}
