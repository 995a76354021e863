//! Property tests for the cross-cutting invariants.

use proptest::prelude::*;

use yieldgan::dgan::{denormalize, diversity_score, normalize_samples};
use yieldgan::ingest::YieldPanel;
use yieldgan::metrics::{pearson_corr, rmse, roc_auc};
use yieldgan::sampling::{rolling_windows, SampleSet};
use yieldgan::toy::synthetic_weekday_panel;

proptest! {
    #[test]
    fn window_count_identity(len in 3usize..150, w in 1usize..30, h in 1usize..20) {
        let panel = synthetic_weekday_panel(len, &[], 0);
        match rolling_windows(&panel, w, h) {
            Ok(set) => {
                prop_assert_eq!(set.n_samples(), len - w - h + 1);
                // every window's content equals the source panel slice exactly
                let feats = panel.features();
                for i in 0..set.n_samples() {
                    prop_assert_eq!(set.input(i), &feats[i * 2..(i + w) * 2]);
                }
            }
            Err(_) => prop_assert!(len < w + h),
        }
    }

    #[test]
    fn normalize_round_trip(
        values in proptest::collection::vec(-50.0f64..50.0, 8..64),
        scale in 0.01f64..100.0,
    ) {
        let t = values.len() / 2;
        let data: Vec<f64> = values[..t * 2].iter().map(|v| v * scale).collect();
        let set = SampleSet::new(t, 2, data.clone(), vec![], vec![]).unwrap();
        let (norm, meta) = normalize_samples(&set).unwrap();
        prop_assert!(norm.sample(0).iter().all(|v| v.abs() <= 1.0 + 1e-12));
        let back = denormalize(norm.sample(0), 2, &meta.midpoint, &meta.halfrange).unwrap();
        for (a, b) in back.iter().zip(&data) {
            prop_assert!((a - b).abs() < 1e-9 * scale.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn rmse_symmetry_and_identity(
        a in proptest::collection::vec(-10.0f64..10.0, 1..40),
        b in proptest::collection::vec(-10.0f64..10.0, 1..40),
    ) {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let fwd = rmse(a, b).unwrap();
        let rev = rmse(b, a).unwrap();
        prop_assert_eq!(fwd.to_bits(), rev.to_bits());
        prop_assert!(fwd >= 0.0);
        prop_assert_eq!(rmse(a, a).unwrap(), 0.0);
        if fwd == 0.0 {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn auc_complement_without_ties(
        raw in proptest::collection::vec(0u32..1_000_000, 4..50),
        label_bits in proptest::collection::vec(any::<bool>(), 4..50),
    ) {
        let n = raw.len().min(label_bits.len());
        let mut scores: Vec<f64> = raw[..n].iter().map(|&v| v as f64 / 1e6).collect();
        scores.sort_by(|x, y| x.partial_cmp(y).unwrap());
        scores.dedup();
        let labels: Vec<u8> = label_bits[..scores.len()].iter().map(|&b| u8::from(b)).collect();
        prop_assume!(labels.contains(&1) && labels.contains(&0));
        let a = roc_auc(&scores, &labels).unwrap().auc;
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let b = roc_auc(&neg, &labels).unwrap().auc;
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_is_scale_invariant(
        pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40),
        scale in 0.001f64..1000.0,
        shift in -100.0f64..100.0,
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let scaled: Vec<f64> = a.iter().map(|v| v * scale + shift).collect();
        if let (Ok(r1), Ok(r2)) = (pearson_corr(&a, &b), pearson_corr(&scaled, &b)) {
            prop_assert!((r1 - r2).abs() < 1e-9);
        }
    }

    #[test]
    fn diversity_zero_iff_identical(
        sample in proptest::collection::vec(-5.0f64..5.0, 4..20),
        copies in 2usize..6,
    ) {
        let len = sample.len() / 2 * 2;
        let mut data = Vec::new();
        for _ in 0..copies {
            data.extend_from_slice(&sample[..len]);
        }
        let set = SampleSet::new(len / 2, 2, data, vec![], vec![]).unwrap();
        prop_assert_eq!(diversity_score(&set).unwrap(), 0.0);
    }

    #[test]
    fn panel_csv_round_trip(len in 1usize..120, seed in 0u64..50) {
        let panel = synthetic_weekday_panel(len, &[(len / 4, len / 2)], seed);
        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        let back = YieldPanel::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, panel);
    }
}
