mod common;

use std::collections::BTreeSet;

use contam_audit::cliff::{delta_cliff, paired_t_test_differences, CorrectnessMatrix};
use contam_audit::model::{read_dataset, write_dataset};
use contam_audit::reasoning::{jaccard, parse_trace, reasoning_similarity, Weights};
use contam_audit::semantic::{canonical_labels, dbscan};
use contam_audit::stats::{
    chi2_sf_df1, mcnemar, percentile, principal_components, principal_components_capped, student_t_sf,
};
use contam_audit::token::{min_k_score, ngram_overlap};
use contam_audit::{Dataset, DistanceMetric, Role, TextSample};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use common::{euclidean, min_k_oracle, naive_dbscan};

fn logprobs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0f64..=0.0, 1..300)
}

fn points(max_n: usize, max_d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_d).prop_flat_map(move |d| prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), 1..=max_n))
}

proptest! {
    #[test]
    fn min_k_matches_sort_oracle(lp in logprobs(), k in prop::sample::select(vec![1.0, 5.0, 12.5, 20.0, 50.0, 100.0])) {
        let got = min_k_score(&lp, k).unwrap();
        let (value, used) = min_k_oracle(&lp, k);
        prop_assert_eq!(got.k_used, used);
        prop_assert_eq!(got.value.to_bits(), value.to_bits());
    }

    #[test]
    fn min_k_is_bounded_by_extremes(lp in logprobs(), k in 1.0f64..=100.0) {
        let s = min_k_score(&lp, k).unwrap();
        let min = lp.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean = lp.iter().sum::<f64>() / lp.len() as f64;
        prop_assert!(s.value >= min - 1e-12 && s.value <= mean + 1e-9);
    }

    #[test]
    fn dbscan_matches_union_find_reference(pts in points(40, 4), eps in 0.05f64..1.5, min in 1usize..6) {
        let got = dbscan(&pts, eps, min, DistanceMetric::Euclidean).unwrap();
        prop_assert_eq!(got.labels, naive_dbscan(&pts, eps, min, euclidean));
    }

    #[test]
    fn dbscan_labels_are_canonical(pts in points(30, 3), eps in 0.05f64..1.0, min in 1usize..5) {
        let got = dbscan(&pts, eps, min, DistanceMetric::Euclidean).unwrap();
        prop_assert_eq!(canonical_labels(&got.labels), got.labels.clone());
        // min_samples = 1 makes every point a core point
        if min == 1 {
            prop_assert!(got.labels.iter().all(|l| *l >= 0));
        }
    }

    #[test]
    fn jaccard_properties(a in prop::collection::btree_set(0u8..20, 0..10), b in prop::collection::btree_set(0u8..20, 0..10)) {
        let j = jaccard(&a, &b);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j, jaccard(&b, &a));
        prop_assert_eq!(jaccard(&a, &a), 1.0);
        if a.is_disjoint(&b) && !(a.is_empty() && b.is_empty()) {
            prop_assert_eq!(j, 0.0);
        }
    }

    #[test]
    fn reasoning_similarity_bounds(a in "[a-z0-9 .\n]{1,120}", b in "[a-z0-9 .\n]{1,120}") {
        prop_assume!(!a.trim().is_empty() && !b.trim().is_empty());
        let (ta, tb) = (parse_trace(&a).unwrap(), parse_trace(&b).unwrap());
        let w = Weights::default();
        let ab = reasoning_similarity(&ta, &tb, w);
        let ba = reasoning_similarity(&tb, &ta, w);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab.combined));
        prop_assert!((ab.combined - ba.combined).abs() < 1e-12);
        prop_assert!((reasoning_similarity(&ta, &ta, w).combined - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ngram_overlap_bounds(a in "[a-c ]{0,60}", b in "[a-c ]{0,60}", n in 1usize..5) {
        if let Ok(o) = ngram_overlap(&a, &b, n) {
            prop_assert!((0.0..=1.0).contains(&o.ratio));
            prop_assert_eq!(o.matched, o.ratio > 0.0);
        }
        if let Ok(o) = ngram_overlap(&a, &a, n) {
            prop_assert_eq!(o.ratio, 1.0);
        }
    }

    #[test]
    fn percentile_is_monotone_and_bounded(xs in prop::collection::vec(-100.0f64..100.0, 1..50), p in 0.0f64..=100.0, q in 0.0f64..=100.0) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let (a, b) = (percentile(&xs, lo).unwrap(), percentile(&xs, hi).unwrap());
        prop_assert!(a <= b);
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= a && b <= max);
        prop_assert_eq!(percentile(&xs, 0.0).unwrap(), min);
        prop_assert_eq!(percentile(&xs, 100.0).unwrap(), max);
    }

    #[test]
    fn mcnemar_is_symmetric(b in 0u64..500, c in 0u64..500) {
        let (x, y) = (mcnemar(b, c), mcnemar(c, b));
        prop_assert_eq!(x.chi2, y.chi2);
        prop_assert_eq!(x.p, y.p);
        prop_assert!(x.p > 0.0 && x.p <= 1.0 && x.chi2 >= 0.0);
    }

    #[test]
    fn t_sf_agrees_with_statrs(t in -12.0f64..12.0, df in 1u64..200) {
        let reference = StudentsT::new(0.0, 1.0, df as f64).unwrap().sf(t);
        let got = student_t_sf(t, df).unwrap();
        prop_assert!((got - reference).abs() <= 1e-9 * reference.max(1e-300) + 1e-13, "{} vs {}", got, reference);
    }

    #[test]
    fn t_sf_is_monotone(t in -10.0f64..10.0, dt in 0.001f64..5.0, df in 1u64..60) {
        prop_assert!(student_t_sf(t + dt, df).unwrap() <= student_t_sf(t, df).unwrap());
    }

    #[test]
    fn chi2_sf_agrees_with_statrs(x in 0.0f64..60.0) {
        let reference = ChiSquared::new(1.0).unwrap().sf(x);
        let got = chi2_sf_df1(x).unwrap();
        prop_assert!((got - reference).abs() <= 1e-9 * reference.max(1e-300) + 1e-13, "{} vs {}", got, reference);
    }

    #[test]
    fn pca_projection_contracts(pts in (2usize..8).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), 3..20))) {
        let d = pts[0].len();
        let kmax = d.min(pts.len() - 1);
        let mut previous = f64::INFINITY;
        for k in 0..=kmax {
            let basis = principal_components_capped(&pts, k).unwrap();
            prop_assert_eq!(basis.len(), k);
            match principal_components(&pts, k) {
                Ok(strict) => prop_assert_eq!(&strict, &basis),
                Err(e) => {
                    let non_convergence = matches!(e, contam_audit::Error::NonConvergence { .. });
                    prop_assert!(non_convergence, "unexpected error {:?}", e);
                }
            }
            for (i, u) in basis.iter().enumerate() {
                for (j, v) in basis.iter().enumerate() {
                    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot - want).abs() < 1e-8);
                }
            }
            let mut err = 0.0;
            for p in &pts {
                let proj: Vec<f64> = basis.iter().map(|u| u.iter().zip(p).map(|(a, b)| a * b).sum()).collect();
                let kept: f64 = proj.iter().map(|x| x * x).sum();
                let total: f64 = p.iter().map(|x| x * x).sum();
                prop_assert!(kept <= total + 1e-9);
                err += total - kept;
            }
            // bases are nested under deflation, so more axes never lose energy
            prop_assert!(err <= previous + 1e-9);
            previous = err;
        }
    }

    #[test]
    fn paired_t_p_in_unit_interval(d in prop::collection::vec(-1.0f64..1.0, 2..40), two in any::<bool>()) {
        let t = paired_t_test_differences(&d, two).unwrap();
        prop_assert!((0.0..=1.0).contains(&t.p));
    }

    #[test]
    fn delta_matches_accuracy_difference(
        rows in prop::collection::vec((any::<bool>(), prop::collection::vec(any::<bool>(), 3)), 1..60)
    ) {
        let ids = (0..rows.len()).map(|i| format!("q{i}")).collect();
        let original = rows.iter().map(|r| r.0).collect();
        let variants = (0..3).map(|k| rows.iter().map(|r| r.1[k]).collect()).collect();
        let m = CorrectnessMatrix::new(ids, original, variants).unwrap();
        let d = delta_cliff(&m);
        let mean_var = d.acc_variants.iter().sum::<f64>() / 3.0;
        prop_assert!((d.delta - (d.acc_orig - mean_var)).abs() < 1e-12);
        let diffs = m.differences();
        prop_assert!((diffs.iter().sum::<f64>() / diffs.len() as f64 - d.delta).abs() < 1e-12);
    }

    #[test]
    fn dataset_round_trips(
        rows in prop::collection::vec(("[a-z ]{1,30}", prop::option::of(prop::collection::vec(-5.0f64..0.0, 1..8))), 1..12)
    ) {
        let samples: Vec<TextSample> = rows
            .iter()
            .enumerate()
            .map(|(i, (text, lp))| {
                let s = TextSample::new(format!("id-{i}"), text.clone()).with_embedding(vec![1.0, i as f64 + 0.5]);
                match lp {
                    Some(lp) => s.with_logprobs(lp.clone()),
                    None => s,
                }
            })
            .collect();
        let ds = Dataset::new(Role::Synthetic, samples).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(std::io::BufReader::new(std::fs::File::open(&path).unwrap()), Role::Synthetic).unwrap();
        prop_assert_eq!(back.samples(), ds.samples());
    }
}

#[test]
fn statrs_agrees_on_table_values() {
    for (t, df) in [(2.776, 4u64), (1.833, 9), (-1.5, 7), (0.7, 1), (3.2, 30)] {
        let reference = StudentsT::new(0.0, 1.0, df as f64).unwrap().sf(t);
        assert!((student_t_sf(t, df).unwrap() - reference).abs() < 1e-10);
    }
    let ids: BTreeSet<u8> = BTreeSet::new();
    assert_eq!(jaccard(&ids, &ids), 1.0);
}
