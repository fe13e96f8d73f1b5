//! Acceptance suite. Runs every criterion in turn, prints one PASS/FAIL line
//! each, and exits nonzero when any fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use rankrecover::estimators::{fit, gradient, objective};
use rankrecover::evaluate::{
    correlation, inversion_score, run_experiment, ExperimentConfig, RecoveryCurve,
};
use rankrecover::inspect::{
    f_test_quadratic, lowess, project_profile, DEFAULT_FRAC, DEFAULT_ITERS,
};
use rankrecover::pairs::{build_pairs, PairPolicy, PairSet};
use rankrecover::rng::{stream_rng, Rng as ChaRng};
use rankrecover::simulate::{
    gen_param_design, gen_recovery_dataset, sigmoid, ParamDesignConfig, SimConfig, Warp,
};
use rankrecover::{Error, FitSpec, Loss};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn rng(seed: u64) -> ChaRng {
    stream_rng(seed, 99)
}

fn normal_matrix(r: &mut ChaRng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| r.sample(StandardNormal))
}

fn all_pairs(y: &Array1<f64>) -> PairSet {
    build_pairs(y.as_slice().unwrap(), None, &PairPolicy::AllUnit).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1

fn gradient_correctness() -> Outcome {
    let mut r = rng(1);
    let (n, p, h, lambda) = (15, 5, 1e-5, 0.3);
    let mut worst = 0.0f64;
    for loss in [Loss::Mse, Loss::PairwiseHinge, Loss::PairwiseLogistic] {
        let x = normal_matrix(&mut r, n, p);
        let y = Array1::from_shape_fn(n, |_| r.random_range(0..6) as f64);
        let ps = all_pairs(&y);
        let pairs = loss.is_pairwise().then_some(&ps);
        for _ in 0..20 {
            let w = Array1::from_shape_fn(p, |_| r.random_range(-1.0..1.0));
            let g = gradient(loss, &x, &y, pairs, &w, lambda).map_err(|e| e.to_string())?;
            for k in 0..p {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[k] += h;
                wm[k] -= h;
                let fp = objective(loss, &x, &y, pairs, &wp, lambda).unwrap();
                let fm = objective(loss, &x, &y, pairs, &wm, lambda).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                worst = worst.max((fd - g[k]).abs() / g[k].abs().max(1.0));
            }
        }
    }
    check(
        worst <= 1e-6,
        format!("max relative error {worst:.2e} (limit 1e-6)"),
    )
}

// ---------------------------------------------------------------- 2

/// Grid over [−5, 5]^p refined by repeated zooms around the incumbent.
fn grid_minimum(f: impl Fn(&Array1<f64>) -> f64, p: usize) -> f64 {
    let steps: usize = if p == 2 { 201 } else { 41 };
    let mut center = Array1::<f64>::zeros(p);
    let mut half = 5.0;
    let mut best = f64::INFINITY;
    for _ in 0..12 {
        let h = 2.0 * half / (steps - 1) as f64;
        let mut arg = center.clone();
        for flat in 0..steps.pow(p as u32) {
            let mut rest = flat;
            let point = Array1::from_shape_fn(p, |k| {
                let i = rest % steps;
                rest /= steps;
                center[k] - half + i as f64 * h
            });
            let v = f(&point);
            if v < best {
                best = v;
                arg = point;
            }
        }
        center = arg;
        half = 4.0 * h;
    }
    best
}

fn solver_oracles() -> Outcome {
    let mut r = rng(2);
    let mut worst_grid = 0.0f64;
    for p in [2usize, 3] {
        let n = 2 * p + 2;
        let x = normal_matrix(&mut r, n, p);
        let y = Array1::from_shape_fn(n, |i| (i % 4) as f64);
        let ps = all_pairs(&y);
        for loss in [Loss::Mse, Loss::PairwiseHinge, Loss::PairwiseLogistic] {
            let pairs = loss.is_pairwise().then_some(&ps);
            let lambda = 0.2;
            let res = fit(&x, &y, pairs, &FitSpec::new(loss, lambda)).map_err(|e| e.to_string())?;
            let oracle = grid_minimum(|w| objective(loss, &x, &y, pairs, w, lambda).unwrap(), p);
            worst_grid = worst_grid.max(res.objective - oracle);
        }
    }

    let (n, p, lambda) = (40, 6, 0.7);
    let x = normal_matrix(&mut r, n, p);
    let y = Array1::from_shape_fn(n, |_| r.sample::<f64, _>(StandardNormal));
    let res = fit(&x, &y, None, &FitSpec::new(Loss::Mse, lambda)).map_err(|e| e.to_string())?;
    let xm = DMatrix::from_row_slice(n, p, x.as_slice().unwrap());
    let a = xm.transpose() * &xm + DMatrix::identity(p, p) * lambda;
    let w = a
        .cholesky()
        .unwrap()
        .solve(&(xm.transpose() * DVector::from_column_slice(y.as_slice().unwrap())));
    let worst_ridge = (0..p)
        .map(|k| (res.weights[k] - w[k]).abs())
        .fold(0.0, f64::max);

    check(
        worst_grid <= 1e-6 && worst_ridge <= 1e-8,
        format!("objective above grid minimum by at most {worst_grid:.2e} (limit 1e-6); ridge deviation {worst_ridge:.2e} (limit 1e-8)"),
    )
}

// ---------------------------------------------------------------- 3, 4

fn curve<'a>(curves: &'a [RecoveryCurve], name: &str) -> &'a RecoveryCurve {
    curves
        .iter()
        .find(|c| c.estimator == name)
        .expect("estimator present")
}

fn last(c: &RecoveryCurve) -> (f64, f64) {
    let k = c.sample_sizes.len() - 1;
    (c.mean_rho[k], c.std_rho[k])
}

fn nondecreasing_within_2_std(c: &RecoveryCurve) -> bool {
    (1..c.mean_rho.len())
        .all(|k| c.mean_rho[k] >= c.mean_rho[k - 1] - 2.0 * c.std_rho[k].max(c.std_rho[k - 1]))
}

fn fig1_trend() -> Outcome {
    let cfg = ExperimentConfig::fig1([5, 5, 5]);
    let out = run_experiment(&cfg, 1).map_err(|e| e.to_string())?;
    let (mse, _) = last(curve(&out.curves, "mse"));
    let (hinge, _) = last(curve(&out.curves, "pairwise_hinge"));
    let (logistic, _) = last(curve(&out.curves, "pairwise_logistic"));
    let mut failed = Vec::new();
    if logistic < 0.95 {
        failed.push("logistic < 0.95");
    }
    if hinge < 0.95 {
        failed.push("hinge < 0.95");
    }
    if logistic - mse < 0.03 || hinge - mse < 0.03 {
        failed.push("margin over mse < 0.03");
    }
    if !nondecreasing_within_2_std(curve(&out.curves, "pairwise_hinge"))
        || !nondecreasing_within_2_std(curve(&out.curves, "pairwise_logistic"))
    {
        failed.push("pairwise curve decreases by more than 2 std");
    }
    let means = |name: &str| format!("{:.3?}", curve(&out.curves, name).mean_rho);
    let detail = format!(
        "n=800: logistic {logistic:.4}, hinge {hinge:.4}, mse {mse:.4}; curves logistic {} hinge {}{}",
        means("pairwise_logistic"),
        means("pairwise_hinge"),
        if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
    );
    check(failed.is_empty(), detail)
}

fn fig2_trend() -> Outcome {
    let cfg = ExperimentConfig::fig2();
    let out = run_experiment(&cfg, 1).map_err(|e| e.to_string())?;
    let (mse, mse_sd) = last(curve(&out.curves, "mse"));
    let (unw, _) = last(curve(&out.curves, "logistic_unweighted"));
    let (wt, wt_sd) = last(curve(&out.curves, "logistic_weighted"));
    check(
        wt > mse && mse > unw && wt_sd <= 1.5 * mse_sd,
        format!("n=800: weighted {wt:.4} (std {wt_sd:.4}), mse {mse:.4} (std {mse_sd:.4}), unweighted {unw:.4}"),
    )
}

// ---------------------------------------------------------------- 5

fn rank_only() -> Outcome {
    let mut sim = ExperimentConfig::fig1([5, 5, 5]).sim;
    sim.n_samples = 200;
    sim.seed = 5;
    let warped = gen_recovery_dataset(&sim).map_err(|e| e.to_string())?;
    sim.warp = Warp::Identity;
    let linear = gen_recovery_dataset(&sim).map_err(|e| e.to_string())?;
    let x = warped.dataset.features();
    let (y_sig, y_lin) = (warped.dataset.targets(), linear.dataset.targets());
    let y_cube = y_lin.mapv(|v| v * v * v + v);
    let ps = all_pairs(y_sig);

    for loss in [Loss::PairwiseHinge, Loss::PairwiseLogistic] {
        let spec = FitSpec::new(loss, 0.1);
        let base = fit(x, y_sig, Some(&ps), &spec).map_err(|e| e.to_string())?;
        for y in [y_lin, &y_cube] {
            if fit(x, y, Some(&ps), &spec).map_err(|e| e.to_string())? != base {
                return Err(format!("{loss} fit changed under a monotone warp"));
            }
        }
    }
    let truth = warped.truth.to_array();
    let centered = |y: &Array1<f64>| y - y.mean().unwrap();
    let spec = FitSpec::new(Loss::Mse, 1.0);
    let rho_sig = correlation(
        &truth,
        &fit(x, &centered(y_sig), None, &spec)
            .unwrap()
            .weights_array(),
    )
    .unwrap();
    let rho_lin = correlation(
        &truth,
        &fit(x, &centered(y_lin), None, &spec)
            .unwrap()
            .weights_array(),
    )
    .unwrap();
    let diff = (rho_sig - rho_lin).abs();
    check(
        diff > 1e-6,
        format!("pairwise fits bit-identical under two warps; mse rho {rho_lin:.4} (linear) vs {rho_sig:.4} (sigmoid), diff {diff:.2e}"),
    )
}

// ---------------------------------------------------------------- 6

fn brute_force_pairs(
    y: &[f64],
    subject: Option<&[i64]>,
    policy: &PairPolicy,
) -> Result<Vec<(usize, usize)>, ()> {
    if policy.needs_subjects() && subject.is_none() {
        return Err(());
    }
    let mut out = Vec::new();
    for i in 0..y.len() {
        for j in i + 1..y.len() {
            let gap = (y[i] - y[j]).abs();
            let keep = match *policy {
                PairPolicy::AllUnit => gap > 0.0,
                PairPolicy::Threshold { threshold } => gap > 0.0 && gap >= threshold,
                PairPolicy::AdjacentSubject { adjacency_gap } => {
                    let s = subject.ok_or(())?;
                    s[i] == s[j] && gap > 0.0 && gap > adjacency_gap
                }
            };
            if keep {
                out.push(if y[i] > y[j] { (i, j) } else { (j, i) });
            }
        }
    }
    Ok(out)
}

fn pair_policy() -> Outcome {
    let mut r = rng(6);
    let mut checked = 0;
    for _ in 0..200 {
        let n = r.random_range(1..=12);
        let y: Vec<f64> = (0..n).map(|_| r.random_range(0..5) as f64 * 0.5).collect();
        let subject: Option<Vec<i64>> = r
            .random_bool(0.7)
            .then(|| (0..n).map(|_| r.random_range(0..3)).collect());
        let t = r.random_range(0..5) as f64 * 0.5;
        let policy = match r.random_range(0..3) {
            0 => PairPolicy::AllUnit,
            1 => PairPolicy::Threshold { threshold: t },
            _ => PairPolicy::AdjacentSubject { adjacency_gap: t },
        };
        let got = build_pairs(&y, subject.as_deref(), &policy);
        match (brute_force_pairs(&y, subject.as_deref(), &policy), got) {
            (Ok(want), Ok(set)) => {
                if set.pairs() != want.as_slice() || set.weights().iter().any(|&w| w != 1.0) {
                    return Err(format!(
                        "mismatch for y={y:?} subject={subject:?} {policy:?}"
                    ));
                }
            }
            (Err(()), Err(Error::MissingSubjects)) => {}
            (want, got) => return Err(format!("{want:?} vs {got:?} for {policy:?}")),
        }
        checked += 1;
    }
    check(
        true,
        format!("{checked} random configurations match the enumeration"),
    )
}

// ---------------------------------------------------------------- 7

fn inversion() -> Outcome {
    let mut sim = SimConfig::paper([5, 5, 5]);
    sim.warp = Warp::Identity;
    sim.n_samples = 150;
    sim.seed = 7;
    let data = gen_recovery_dataset(&sim).map_err(|e| e.to_string())?;
    let (x, y) = (data.dataset.features(), data.dataset.targets());
    let truth = data.truth.to_array();
    let at_truth = inversion_score(x, y, &truth, &PairPolicy::AllUnit, None).unwrap();
    let mut r = rng(7);
    let draws = 100;
    let mean = (0..draws)
        .map(|_| {
            let w = Array1::from_shape_fn(truth.len(), |_| r.sample(StandardNormal));
            inversion_score(x, y, &w, &PairPolicy::AllUnit, None).unwrap()
        })
        .sum::<f64>()
        / draws as f64;
    check(
        at_truth == 0.0 && (mean - 0.5).abs() <= 0.05,
        format!("truth {at_truth}; random mean over {draws} draws {mean:.4}"),
    )
}

// ---------------------------------------------------------------- 8

fn lowess_checks() -> Outcome {
    let x = Array1::linspace(-3.0, 5.0, 60);
    let y = x.mapv(|v| 0.7 * v - 2.0);
    let fit_line =
        lowess(x.view(), y.view(), DEFAULT_FRAC, DEFAULT_ITERS).map_err(|e| e.to_string())?;
    let line_err = (&fit_line - &y).iter().fold(0.0f64, |m, d| m.max(d.abs()));

    let mut r = rng(8);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let x = Array1::linspace(-4.0, 4.0, 200);
    let clean = x.mapv(sigmoid);
    let noisy = clean.mapv(|v| v + noise.sample(&mut r));
    let smooth = lowess(x.view(), noisy.view(), 0.5, 3).map_err(|e| e.to_string())?;
    let sig_err = (&smooth - &clean)
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));
    check(
        line_err <= 1e-8 && sig_err <= 0.05,
        format!("line max error {line_err:.2e} (limit 1e-8); sigmoid max deviation {sig_err:.4} (limit 0.05)"),
    )
}

// ---------------------------------------------------------------- 9

fn f_test_calibration() -> Outcome {
    let x = Array1::linspace(0.0, 1.0, 30);
    let y = x.mapv(|v| 3.0 * v + 1.0);
    let exact = f_test_quadratic(x.view(), y.view()).map_err(|e| e.to_string())?;

    let mut r = rng(9);
    let trials = 1000;
    let mut rejected = 0;
    for _ in 0..trials {
        let x = Array1::from_shape_fn(50, |_| r.random_range(-2.0..2.0));
        let y = x.mapv(|v| 0.5 * v + 1.0 + r.sample::<f64, _>(StandardNormal));
        if f_test_quadratic(x.view(), y.view()).unwrap().p_value < 0.05 {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / trials as f64;

    let ds = gen_param_design(&ParamDesignConfig::default()).map_err(|e| e.to_string())?;
    let ps = build_pairs(
        ds.targets().as_slice().unwrap(),
        ds.subject(),
        &PairPolicy::adjacent_subject(),
    )
    .unwrap();
    let w = fit(
        ds.features(),
        ds.targets(),
        Some(&ps),
        &FitSpec::new(Loss::PairwiseLogistic, 1.0),
    )
    .map_err(|e| e.to_string())?
    .weights_array();
    let profile = project_profile(
        ds.features().view(),
        ds.targets().view(),
        w.view(),
        DEFAULT_FRAC,
        DEFAULT_ITERS,
    )
    .map_err(|e| e.to_string())?;
    let curved = f_test_quadratic(
        ArrayView1::from(&profile.scores),
        ArrayView1::from(&profile.targets),
    )
    .unwrap();

    check(
        exact.p_value >= 0.99 && (rate - 0.05).abs() <= 0.02 && curved.p_value < 0.03,
        format!(
            "linear p {:.4}; null rejection rate {rate:.3} over {trials} trials; saturating design p {:.2e}",
            exact.p_value, curved.p_value
        ),
    )
}

// ---------------------------------------------------------------- 10

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_rankrecover"))
        .args(args)
        .env_remove("RANKRECOVER_OUT")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> Result<(), String> {
    for name in names {
        let (x, y) = (fs::read(a.join(name)), fs::read(b.join(name)));
        match (x, y) {
            (Ok(x), Ok(y)) if x == y => {}
            _ => {
                return Err(format!(
                    "{name} differs between {} and {}",
                    a.display(),
                    b.display()
                ))
            }
        }
    }
    Ok(())
}

fn determinism() -> Outcome {
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let dir = |s: &str| tmp.path().join(s);
    let d = |s: &str| dir(s).to_str().unwrap().to_string();
    for run in ["sim1", "sim2"] {
        cli(&[
            "simulate",
            "--preset",
            "paper-5cube",
            "--seed",
            "7",
            "--out",
            &d(run),
        ])?;
    }
    same_files(&dir("sim1"), &dir("sim2"), &["dataset.csv", "dataset.json"])?;
    for (run, jobs) in [("b1", "1"), ("b2", "1"), ("b4", "4")] {
        cli(&[
            "benchmark",
            "--preset",
            "fig2",
            "--seed",
            "3",
            "--reps",
            "2",
            "--sizes",
            "50,100",
            "--jobs",
            jobs,
            "--out",
            &d(run),
        ])?;
    }
    same_files(&dir("b1"), &dir("b2"), &["curves.csv", "curves.json"])?;
    same_files(&dir("b1"), &dir("b4"), &["curves.csv", "curves.json"])?;
    Ok("simulate and benchmark outputs byte-identical across runs and across --jobs 1/4".into())
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (
            "gradient correctness",
            gradient_correctness,
            Duration::from_secs(10),
        ),
        (
            "solver oracle equivalence",
            solver_oracles,
            Duration::from_secs(30),
        ),
        ("fig-1 trend", fig1_trend, Duration::from_secs(600)),
        ("fig-2 trend", fig2_trend, Duration::from_secs(600)),
        ("rank-only dependence", rank_only, Duration::MAX),
        ("pair-policy correctness", pair_policy, Duration::MAX),
        ("inversion score", inversion, Duration::MAX),
        ("lowess", lowess_checks, Duration::MAX),
        (
            "f-test calibration",
            f_test_calibration,
            Duration::from_secs(300),
        ),
        ("determinism", determinism, Duration::MAX),
    ];
    let mut failures = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (mut passed, mut detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        if elapsed > limit {
            passed = false;
            detail.push_str(&format!("; over the {}s time limit", limit.as_secs()));
        }
        if !passed {
            failures += 1;
        }
        println!(
            "{} {name} ({:.1}s): {detail}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
