use ndarray::{concatenate, Array1, Array2, Axis};
use proptest::prelude::*;

use rankrecover::dataset::{split_with, SplitMode};
use rankrecover::estimators::{fit, objective};
use rankrecover::evaluate::{correlation, inversion_score};
use rankrecover::inspect::{f_test_quadratic, lowess, project_profile};
use rankrecover::pairs::{build_pairs, PairPolicy, PairSet};
use rankrecover::simulate::{linear_target, make_ground_truth, sigmoid_warp, smooth_volume};
use rankrecover::{Dataset, FitSpec, Loss};

/// Reference enumeration written straight from the policy definitions.
fn brute_force(y: &[f64], s: Option<&[i64]>, policy: &PairPolicy) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] <= y[j] {
                continue;
            }
            let gap = y[i] - y[j];
            let keep = match *policy {
                PairPolicy::AllUnit => true,
                PairPolicy::Threshold { threshold } => !(gap < threshold),
                PairPolicy::AdjacentSubject { adjacency_gap } => {
                    let s = s.unwrap();
                    s[i] == s[j] && gap > adjacency_gap
                }
            };
            if keep {
                out.push((i, j));
            }
        }
    }
    out.sort_unstable();
    out
}

fn sorted_pairs(ps: &PairSet) -> Vec<(usize, usize)> {
    let mut v = ps.pairs().to_vec();
    v.sort_unstable();
    v
}

fn policy_strategy() -> impl Strategy<Value = PairPolicy> {
    prop_oneof![
        Just(PairPolicy::AllUnit),
        (0.0f64..3.0).prop_map(|threshold| PairPolicy::Threshold { threshold }),
        (0u8..4).prop_map(|g| PairPolicy::Threshold {
            threshold: g as f64
        }),
        (0.0f64..2.5).prop_map(|adjacency_gap| PairPolicy::AdjacentSubject { adjacency_gap }),
        Just(PairPolicy::adjacent_subject()),
    ]
}

fn matrix(n: usize, p: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-2.0f64..2.0, n * p)
        .prop_map(move |v| Array2::from_shape_vec((n, p), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn build_pairs_matches_brute_force(
        levels in prop::collection::vec(0u8..6, 1..13),
        subjects in prop::collection::vec(0i64..3, 12),
        policy in policy_strategy(),
    ) {
        let y: Vec<f64> = levels.iter().map(|&l| l as f64 * 0.5).collect();
        let s = &subjects[..y.len()];
        let ps = build_pairs(&y, Some(s), &policy).unwrap();
        prop_assert_eq!(sorted_pairs(&ps), brute_force(&y, Some(s), &policy));
        prop_assert!(ps.iter().all(|((i, j), a)| y[i] > y[j] && a == 1.0));
    }

    #[test]
    fn zero_threshold_is_all_unit(levels in prop::collection::vec(0u8..6, 1..13)) {
        let y: Vec<f64> = levels.iter().map(|&l| l as f64).collect();
        let a = build_pairs(&y, None, &PairPolicy::AllUnit).unwrap();
        let b = build_pairs(&y, None, &PairPolicy::Threshold { threshold: 0.0 }).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn adjacent_subject_is_same_subject_subset(
        levels in prop::collection::vec(0u8..6, 1..13),
        subjects in prop::collection::vec(0i64..3, 12),
    ) {
        let y: Vec<f64> = levels.iter().map(|&l| l as f64).collect();
        let s = &subjects[..y.len()];
        let all = sorted_pairs(&build_pairs(&y, None, &PairPolicy::AllUnit).unwrap());
        let adj = build_pairs(&y, Some(s), &PairPolicy::adjacent_subject()).unwrap();
        for &(i, j) in adj.pairs() {
            prop_assert!(all.binary_search(&(i, j)).is_ok());
            prop_assert_eq!(s[i], s[j]);
        }
    }

    #[test]
    fn pairs_are_permutation_invariant(
        levels in prop::collection::vec(0u8..6, 2..13),
        shift in 1usize..12,
    ) {
        let n = levels.len();
        let y: Vec<f64> = levels.iter().map(|&l| l as f64).collect();
        let perm: Vec<usize> = (0..n).map(|k| (k + shift) % n).collect();
        let yp: Vec<f64> = perm.iter().map(|&k| y[k]).collect();
        let base = sorted_pairs(&build_pairs(&y, None, &PairPolicy::Threshold { threshold: 1.0 }).unwrap());
        let mut mapped: Vec<(usize, usize)> = build_pairs(&yp, None, &PairPolicy::Threshold { threshold: 1.0 })
            .unwrap()
            .pairs()
            .iter()
            .map(|&(i, j)| (perm[i], perm[j]))
            .collect();
        mapped.sort_unstable();
        prop_assert_eq!(base, mapped);
    }

    #[test]
    fn stratified_split_invariants(
        counts in prop::collection::vec(1usize..8, 1..6),
        seed in any::<u64>(),
    ) {
        let y: Vec<f64> = counts.iter().enumerate().flat_map(|(l, &c)| std::iter::repeat_n(l as f64, c)).collect();
        let n = y.len();
        prop_assume!(n >= 5);
        let ds = Dataset::new(Array2::zeros((n, 1)), Array1::from(y.clone())).unwrap();
        let split = split_with(&ds, (0.6, 0.2, 0.2), seed, SplitMode::Stratified).unwrap();
        prop_assert_eq!(&split, &split_with(&ds, (0.6, 0.2, 0.2), seed, SplitMode::Stratified).unwrap());
        let mut seen = vec![false; n];
        for part in split.parts() {
            prop_assert!(!part.is_empty());
            for &i in part {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|&b| b));
        // Per-level share of each part within one sample of its quota.
        for (l, &c) in counts.iter().enumerate() {
            for (part, f) in split.parts().iter().zip([0.6, 0.2, 0.2]) {
                let got = part.iter().filter(|&&i| y[i] == l as f64).count() as f64;
                prop_assert!((got - f * c as f64).abs() <= 1.0 + 1e-9, "level {} got {} of {}", l, got, c);
            }
        }
    }

    #[test]
    fn grouped_split_keeps_subjects_whole(
        subjects in prop::collection::vec(0i64..6, 5..40),
        seed in any::<u64>(),
    ) {
        let n = subjects.len();
        let distinct: std::collections::BTreeSet<_> = subjects.iter().collect();
        prop_assume!(distinct.len() >= 3);
        let y = Array1::from_shape_fn(n, |i| (i % 5) as f64);
        let ds = Dataset::with_groups(Array2::zeros((n, 1)), y, Some(subjects.clone()), None, None).unwrap();
        let split = split_with(&ds, (0.6, 0.2, 0.2), seed, SplitMode::Auto).unwrap();
        let mut part_of = std::collections::HashMap::new();
        let mut total = 0;
        for (k, part) in split.parts().iter().enumerate() {
            prop_assert!(!part.is_empty());
            total += part.len();
            for &i in *part {
                let prev = part_of.insert(subjects[i], k);
                prop_assert!(prev.is_none() || prev == Some(k));
            }
        }
        prop_assert_eq!(total, n);
    }

    #[test]
    fn correlation_scale_and_sign(
        w in prop::collection::vec(-3.0f64..3.0, 6),
        v in prop::collection::vec(-3.0f64..3.0, 6),
        a in 0.01f64..100.0,
        b in 0.01f64..100.0,
    ) {
        let (w, v) = (Array1::from(w), Array1::from(v));
        prop_assume!(w.dot(&w) > 1e-6 && v.dot(&v) > 1e-6);
        let r = correlation(&w, &v).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert!((correlation(&(&w * a), &(&v * b)).unwrap() - r).abs() < 1e-12);
        prop_assert!((correlation(&w, &(-&v)).unwrap() + r).abs() < 1e-12);
    }

    #[test]
    fn inversion_score_ignores_monotone_target_transforms(
        x in matrix(10, 3),
        w in prop::collection::vec(-1.0f64..1.0, 3),
        levels in prop::collection::vec(0u8..4, 10),
    ) {
        let y = Array1::from_iter(levels.iter().map(|&l| l as f64));
        prop_assume!(levels.iter().any(|&l| l != levels[0]));
        let w = Array1::from(w);
        let a = inversion_score(&x, &y, &w, &PairPolicy::AllUnit, None).unwrap();
        let b = inversion_score(&x, &y.mapv(|v| (v * 0.7).exp() - 3.0), &w, &PairPolicy::AllUnit, None).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn lowess_affine_equivariance(
        xs in prop::collection::vec(-5.0f64..5.0, 8..30),
        noise in prop::collection::vec(-1.0f64..1.0, 30),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let x = Array1::from(xs);
        prop_assume!(x.iter().any(|&v| (v - x[0]).abs() > 1e-3));
        let y = Array1::from_shape_fn(x.len(), |i| x[i].sin() + noise[i]);
        let base = lowess(x.view(), y.view(), 0.5, 1).unwrap();
        let moved = lowess(x.view(), y.mapv(|v| a * v + b).view(), 0.5, 1).unwrap();
        for (m, f) in moved.iter().zip(base.iter()) {
            prop_assert!((m - (a * f + b)).abs() <= 1e-8 * (1.0 + m.abs()));
        }
    }

    #[test]
    fn f_test_affine_invariance(
        noise in prop::collection::vec(-1.0f64..1.0, 20),
        a in prop_oneof![-5.0f64..-0.2, 0.2f64..5.0],
        b in -10.0f64..10.0,
        c in prop_oneof![-5.0f64..-0.2, 0.2f64..5.0],
        d in -10.0f64..10.0,
    ) {
        let x = Array1::linspace(0.0, 4.0, 20);
        let y = Array1::from_shape_fn(20, |i| x[i] + 0.3 * x[i] * x[i] + noise[i]);
        let base = f_test_quadratic(x.view(), y.view()).unwrap();
        let moved = f_test_quadratic(x.mapv(|v| a * v + b).view(), y.mapv(|v| c * v + d).view()).unwrap();
        prop_assert!((base.p_value - moved.p_value).abs() < 1e-9);
        prop_assert!((base.f_stat - moved.f_stat).abs() < 1e-7 * (1.0 + base.f_stat));
    }

    #[test]
    fn projection_ignores_zero_columns(x in matrix(12, 3), w in prop::collection::vec(-1.0f64..1.0, 3)) {
        let y = Array1::from_shape_fn(12, |i| (i % 4) as f64);
        let w = Array1::from(w);
        let scores = x.dot(&w);
        prop_assume!(scores.iter().any(|&s| (s - scores[0]).abs() > 1e-6));
        let base = project_profile(x.view(), y.view(), w.view(), 0.6, 2).unwrap();
        let wide = concatenate![Axis(1), x, Array2::zeros((12, 2))];
        let w2 = concatenate![Axis(0), w, Array1::from(vec![0.7, -0.2])];
        let other = project_profile(wide.view(), y.view(), w2.view(), 0.6, 2).unwrap();
        prop_assert_eq!(&base.scores, &other.scores);
        prop_assert!(base.scores.len() == base.smooth.len() && base.targets.len() == base.smooth.len());
    }

    #[test]
    fn sigmoid_warp_preserves_order(v in prop::collection::vec(-50.0f64..50.0, 1..30)) {
        let y = Array1::from(v);
        let s = sigmoid_warp(&y);
        for i in 0..y.len() {
            prop_assert!(s[i] >= 0.0 && s[i] <= 1.0);
            for j in 0..y.len() {
                if y[i] < y[j] {
                    prop_assert!(s[i] <= s[j]);
                }
            }
        }
    }

    #[test]
    fn smoothing_preserves_volume_mean(v in prop::collection::vec(-5.0f64..5.0, 60), sigma in 0.0f64..3.0) {
        let out = smooth_volume(&v, [3, 4, 5], sigma);
        let m0 = v.iter().sum::<f64>() / 60.0;
        let m1 = out.iter().sum::<f64>() / 60.0;
        prop_assert!((m0 - m1).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn objectives_are_convex_along_segments(
        x in matrix(8, 3),
        a in prop::collection::vec(-2.0f64..2.0, 3),
        b in prop::collection::vec(-2.0f64..2.0, 3),
        t in 0.0f64..1.0,
    ) {
        let y = Array1::from_shape_fn(8, |i| (i % 3) as f64);
        let ps = build_pairs(y.as_slice().unwrap(), None, &PairPolicy::AllUnit).unwrap();
        let (a, b) = (Array1::from(a), Array1::from(b));
        let mid = &a * (1.0 - t) + &b * t;
        for loss in [Loss::Mse, Loss::PairwiseHinge, Loss::PairwiseLogistic] {
            let f = |w: &Array1<f64>| objective(loss, &x, &y, Some(&ps), w, 0.2).unwrap();
            let chord = (1.0 - t) * f(&a) + t * f(&b);
            prop_assert!(f(&mid) <= chord + 1e-10 * (1.0 + chord.abs()));
        }
    }

    #[test]
    fn pairwise_fits_depend_on_ranks_only(x in matrix(10, 3), levels in prop::collection::vec(0u8..5, 10)) {
        prop_assume!(levels.iter().any(|&l| l != levels[0]));
        let y = Array1::from_iter(levels.iter().map(|&l| l as f64));
        let ps = build_pairs(y.as_slice().unwrap(), None, &PairPolicy::AllUnit).unwrap();
        let warped = y.mapv(|v| (v * 1.3).exp());
        for loss in [Loss::PairwiseHinge, Loss::PairwiseLogistic] {
            let spec = FitSpec::new(loss, 0.5);
            let a = fit(&x, &y, Some(&ps), &spec).unwrap();
            let b = fit(&x, &warped, Some(&ps), &spec).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn ridge_scale_equivariance(x in matrix(12, 3), yv in prop::collection::vec(-2.0f64..2.0, 12), c in 0.2f64..5.0) {
        let y = Array1::from(yv);
        let base = fit(&x, &y, None, &FitSpec::new(Loss::Mse, 0.4)).unwrap();
        let scaled = fit(&(&x * c), &y, None, &FitSpec::new(Loss::Mse, 0.4 * c * c)).unwrap();
        for (s, b) in scaled.weights.iter().zip(&base.weights) {
            prop_assert!((s * c - b).abs() <= 1e-8 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn larger_lambda_shrinks_weights(x in matrix(10, 3), levels in prop::collection::vec(0u8..4, 10)) {
        prop_assume!(levels.iter().any(|&l| l != levels[0]));
        let y = Array1::from_iter(levels.iter().map(|&l| l as f64));
        let ps = build_pairs(y.as_slice().unwrap(), None, &PairPolicy::AllUnit).unwrap();
        for loss in [Loss::Mse, Loss::PairwiseHinge, Loss::PairwiseLogistic] {
            // An objective within ε of optimal puts ŵ within sqrt(ε/λ) of the
            // minimizer (the objective is 2λ-strongly convex).
            let mut prev = (f64::INFINITY, -1.0, 0.0, 0.0);
            for lambda in [0.01, 0.1, 1.0, 10.0, 100.0] {
                let spec = FitSpec::new(loss, lambda);
                let r = fit(&x, &y, Some(&ps), &spec).unwrap();
                let w = r.weights_array();
                let norm = w.dot(&w).sqrt();
                let data = r.objective - lambda * w.dot(&w);
                let eps = spec.tol * (1.0 + r.objective.abs());
                let slack = (eps / lambda).sqrt();
                let (prev_norm, prev_data, prev_slack, prev_eps) = prev;
                prop_assert!(norm <= prev_norm + slack + prev_slack, "{}: norm {} after {}", loss, norm, prev_norm);
                prop_assert!(data >= prev_data - eps - prev_eps, "{}: loss {} after {}", loss, data, prev_data);
                prev = (norm, data, slack, eps);
            }
        }
    }

    #[test]
    fn noise_vectors_are_proportional_across_snr(x in matrix(15, 4), seed in any::<u64>(), s1 in 0.01f64..1.0, s2 in 0.01f64..1.0) {
        let truth = make_ground_truth([2, 2, 1], [1, 1, 1], &[1.0, -1.0], &[[0, 0, 0], [1, 1, 0]]).unwrap();
        let signal = x.dot(&truth.to_array());
        prop_assume!(signal.dot(&signal) > 1e-6);
        let a = linear_target(&x, &truth, s1, seed).unwrap();
        let b = linear_target(&x, &truth, s2, seed).unwrap();
        let ratio = s2 / s1;
        for (u, v) in a.noise.iter().zip(b.noise.iter()) {
            prop_assert!((v - ratio * u).abs() <= 1e-12 * (1.0 + v.abs()));
        }
        prop_assert!((a.noise.dot(&a.noise).sqrt() / signal.dot(&signal).sqrt() - s1).abs() < 1e-12);
    }
}
