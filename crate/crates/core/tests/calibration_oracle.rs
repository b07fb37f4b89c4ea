//! Isotonic fitting against the min-max closed form, calibration on the
//! training set, and recovery of a planted position effect.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semrank_core::calibration::{calibrate, fit_isotonic, fit_position_conditional, observed_expected_ratio};

/// Isotonic value at each distinct score: `max_{j≤i} min_{k≥i}` of the
/// weighted mean over points `j..=k`, with equal scores merged first.
fn minmax_oracle(pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut pts: Vec<(f64, f64, f64)> = Vec::new(); // score, sum, weight
    for (s, y) in sorted {
        match pts.last_mut() {
            Some(p) if p.0 == s => {
                p.1 += y;
                p.2 += 1.0;
            }
            _ => pts.push((s, y, 1.0)),
        }
    }
    let n = pts.len();
    (0..n)
        .map(|i| {
            let v = (0..=i)
                .map(|j| {
                    (i..n)
                        .map(|k| {
                            let (s, w) = pts[j..=k].iter().fold((0.0, 0.0), |a, p| (a.0 + p.1, a.1 + p.2));
                            s / w
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            (pts[i].0, v)
        })
        .collect()
}

fn check_against_oracle(pairs: &[(f64, f64)]) {
    let head = fit_isotonic(pairs).unwrap();
    head.validate().unwrap();
    for (s, want) in minmax_oracle(pairs) {
        let got = calibrate(&head, s).unwrap();
        assert!((got - want).abs() < 1e-12, "{pairs:?} at {s}: {got} vs {want}");
    }
}

#[test]
fn pav_matches_oracle_on_every_small_binary_input() {
    let mut cases = 0;
    for n in 1..=8usize {
        for mask in 0u32..(1 << n) {
            let pairs: Vec<(f64, f64)> = (0..n).map(|i| (i as f64, ((mask >> i) & 1) as f64)).collect();
            check_against_oracle(&pairs);
            cases += 1;
        }
    }
    assert_eq!(cases, 510);
}

#[test]
fn hand_traced_fit() {
    let head = fit_isotonic::<f64>(&[(0.1, 1.0), (0.2, 0.0), (0.3, 1.0), (0.4, 1.0)]).unwrap();
    // Only strict violations pool, so the two trailing ones stay apart.
    assert_eq!(head.values, vec![0.5, 1.0, 1.0]);
    assert_eq!(head.counts, vec![2, 1, 1]);
    assert_eq!((head.lower.clone(), head.upper.clone()), (vec![0.1, 0.3, 0.4], vec![0.2, 0.3, 0.4]));
    // Between the blocks the map ramps linearly.
    assert!((calibrate(&head, 0.25).unwrap() - 0.75).abs() < 1e-12);
    assert_eq!(calibrate(&head, -5.0).unwrap(), 0.5);
    assert_eq!(calibrate(&head, 5.0).unwrap(), 1.0);
}

#[test]
fn planted_position_decay_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xdeca);
    let decay = |r: usize| 0.9f64.powi(r as i32 - 1);
    let mut rows = Vec::new();
    for rank in 1..=10usize {
        for _ in 0..40_000 {
            let s: f64 = rng.random();
            let y = if rng.random_bool(s * decay(rank)) { 1.0 } else { 0.0 };
            rows.push((rank, s, y));
        }
    }
    let cal = fit_position_conditional(&rows).unwrap();
    for rank in 1..=10 {
        for s in [0.25, 0.5, 0.75] {
            let got = cal.calibrate_at(rank, s).unwrap();
            let want = s * decay(rank);
            assert!((got - want).abs() <= 0.05, "rank {rank} score {s}: {got} vs {want}");
        }
    }
    assert_eq!(cal.absent_ranks(), (11..=25).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn pav_matches_oracle_with_ties(pairs in prop::collection::vec((0u8..6, 0.0f64..=1.0), 1..12)) {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().map(|(s, y)| (s as f64 * 0.5, y)).collect();
        check_against_oracle(&pairs);
    }

    #[test]
    fn training_set_is_calibrated(raw in prop::collection::vec((-3.0f64..3.0, any::<bool>()), 2..300)) {
        prop_assume!(raw.iter().any(|r| r.1));
        let pairs: Vec<(f64, f64)> = raw.iter().map(|&(s, y)| (s, if y { 1.0 } else { 0.0 })).collect();
        let head = fit_isotonic(&pairs).unwrap();
        let preds: Vec<f64> = pairs.iter().map(|p| calibrate(&head, p.0).unwrap()).collect();
        let outcomes: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let oe = observed_expected_ratio(&preds, &outcomes).unwrap();
        prop_assert!((oe - 1.0).abs() <= 1e-6, "O/E {}", oe);
    }

    #[test]
    fn calibration_is_monotone(pairs in prop::collection::vec((-3.0f64..3.0, 0.0f64..=1.0), 1..50), a in -4.0f64..4.0, b in -4.0f64..4.0) {
        let head = fit_isotonic(&pairs).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(calibrate(&head, lo).unwrap() <= calibrate(&head, hi).unwrap() + 1e-15);
    }
}
