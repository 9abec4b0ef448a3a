use anystereo_core::eval::{
    compute_metrics, depth_error, disparity_to_depth, evaluate_protocol, nearest_rank, DepthRange,
    Metrics, QUANTILES,
};
use anystereo_core::pipeline::stopping_distance;
use anystereo_core::DisparityMap;
use proptest::prelude::*;

/// Straightforward per-pixel evaluation used as the reference.
fn oracle(pred: &DisparityMap, gt: &DisparityMap, taus: &[f64]) -> Option<Metrics> {
    let mut errs = Vec::new();
    let mut evaluated = 0usize;
    let mut bad = vec![0usize; taus.len()];
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            let Some(g) = gt.get(x, y) else { continue };
            evaluated += 1;
            match pred.get(x, y) {
                None => bad.iter_mut().for_each(|b| *b += 1),
                Some(p) => {
                    let e = (p as f64 - g as f64).abs();
                    for (b, t) in bad.iter_mut().zip(taus) {
                        if e > *t {
                            *b += 1;
                        }
                    }
                    errs.push(e);
                }
            }
        }
    }
    if errs.is_empty() {
        return None;
    }
    let n = errs.len() as f64;
    let mut sum = 0.0;
    let mut sq = 0.0;
    for e in &errs {
        sum += e;
        sq += e * e;
    }
    let mut sorted = errs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantiles = QUANTILES
        .iter()
        .map(|&q| {
            // Smallest rank r (1-based) with r/len >= q/100.
            let r = (1..=sorted.len())
                .find(|&r| 100 * r >= q as usize * sorted.len())
                .unwrap();
            (q, sorted[r - 1])
        })
        .collect();
    Some(Metrics {
        bad: taus
            .iter()
            .zip(&bad)
            .map(|(&t, &b)| (t, 100.0 * b as f64 / evaluated as f64))
            .collect(),
        avgerr: sum / n,
        rms: (sq / n).sqrt(),
        quantiles,
        n_valid: errs.len(),
        n_evaluated: evaluated,
    })
}

fn map_strategy(w: usize, h: usize) -> impl Strategy<Value = DisparityMap> {
    prop::collection::vec(prop::option::weighted(0.85, 0.0f32..200.0), w * h).prop_map(move |v| {
        let vals: Vec<f32> = v.iter().map(|o| o.unwrap_or(f32::INFINITY)).collect();
        DisparityMap::from_values(w, h, vals).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_per_pixel_oracle(pred in map_strategy(12, 9), gt in map_strategy(12, 9)) {
        let taus = [0.5, 1.0, 2.0, 4.0];
        match (compute_metrics(&pred, &gt, &taus), oracle(&pred, &gt, &taus)) {
            (Ok(m), Some(o)) => prop_assert_eq!(m, o),
            (Err(_), None) => {}
            (a, b) => prop_assert!(false, "disagree: {:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn identical_maps_score_zero(gt in map_strategy(8, 8)) {
        prop_assume!(gt.valid_count() > 0);
        let m = compute_metrics(&gt, &gt, &[0.0, 1.0]).unwrap();
        prop_assert_eq!(m.avgerr, 0.0);
        prop_assert_eq!(m.rms, 0.0);
        prop_assert!(m.bad.iter().all(|&(_, b)| b == 0.0));
    }

    #[test]
    fn bad_fraction_is_monotone_in_tau(pred in map_strategy(10, 10), gt in map_strategy(10, 10)) {
        if let Ok(m) = compute_metrics(&pred, &gt, &[0.5, 1.0, 2.0, 4.0, 8.0]) {
            for w in m.bad.windows(2) {
                prop_assert!(w[1].1 <= w[0].1);
            }
            prop_assert!(m.quantile(90).unwrap() <= m.quantile(95).unwrap());
            prop_assert!(m.quantile(95).unwrap() <= m.quantile(99).unwrap());
            prop_assert!(m.avgerr <= m.rms + 1e-12);
        }
    }

    #[test]
    fn nearest_rank_is_smallest_covering_rank(q in 1u32..=100, n in 1usize..500) {
        let i = nearest_rank(q, n);
        prop_assert!(i < n);
        prop_assert!(100 * (i + 1) >= q as usize * n);
        prop_assert!(i == 0 || 100 * i < q as usize * n);
    }
}

#[test]
fn hand_worked_example() {
    let pred = DisparityMap::from_values(4, 1, vec![1.0, 2.0, 3.0, f32::INFINITY]).unwrap();
    let gt = DisparityMap::from_values(4, 1, vec![1.0, 4.0, 3.5, 2.0]).unwrap();
    let m = compute_metrics(&pred, &gt, &[1.0, 2.0]).unwrap();
    assert_eq!(m.n_evaluated, 4);
    assert_eq!(m.n_valid, 3);
    assert_eq!(m.bad, vec![(1.0, 50.0), (2.0, 25.0)]);
    assert_eq!(m.avgerr, 2.5 / 3.0);
    assert_eq!(m.rms, (4.25f64 / 3.0).sqrt());
    assert_eq!(m.quantiles, vec![(90, 2.0), (95, 2.0), (99, 2.0)]);
}

#[test]
fn error_exactly_at_threshold_is_not_bad() {
    let pred = DisparityMap::constant(2, 1, 3.0);
    let gt = DisparityMap::constant(2, 1, 1.0);
    let m = compute_metrics(&pred, &gt, &[2.0]).unwrap();
    assert_eq!(m.bad_at(2.0), Some(0.0));
}

#[test]
fn depth_anchors() {
    let near = disparity_to_depth(768.0, 0.54, 3578.0).unwrap();
    let far = disparity_to_depth(9.66, 0.54, 3578.0).unwrap();
    assert!((2.50..=2.53).contains(&near), "{near}");
    assert!((199.0..=201.0).contains(&far), "{far}");
    assert!(disparity_to_depth(0.0, 0.54, 3578.0).is_err());
    // One pixel of error at 100 m costs roughly 5 m of depth.
    let e = depth_error(100.0, 1.0, 0.54, 3578.0).unwrap();
    assert!((e - 5.1757).abs() < 1e-3, "{e}");
}

#[test]
fn stopping_distances_and_bands() {
    assert_eq!(stopping_distance(25).unwrap(), 25.0);
    assert_eq!(stopping_distance(40).unwrap(), 60.0);
    assert_eq!(stopping_distance(55).unwrap(), 115.0);
    assert!(stopping_distance(30).is_err());
    assert_eq!(DepthRange::classify(24.99), Some(DepthRange::Short));
    assert_eq!(DepthRange::classify(25.0), Some(DepthRange::Middle));
    assert_eq!(DepthRange::classify(60.0), Some(DepthRange::Long));
    assert_eq!(DepthRange::classify(115.0), Some(DepthRange::Long));
    assert_eq!(DepthRange::classify(115.5), None);
}

#[test]
fn protocol_splits_by_depth() {
    // b·f = 1932.12: 193.2 px is 10 m, 48.3 px is 40 m, 19.32 px is 100 m.
    let gt = DisparityMap::from_values(3, 1, vec![193.212, 48.303, 19.3212]).unwrap();
    let r = evaluate_protocol(&gt, &gt, 0.54, 3578.0, &[1.0, 2.0, 4.0]).unwrap();
    for band in DepthRange::BANDS {
        assert_eq!(r.get(band).unwrap().n_evaluated, 1, "{band:?}");
    }
    assert_eq!(r.all.n_evaluated, 3);
}
