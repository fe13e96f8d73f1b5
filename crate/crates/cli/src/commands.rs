use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use rankrecover::dataset::{
    load_dataset, load_sidecar, save_dataset_with_sidecar, DataFormat, Sidecar,
};
use rankrecover::estimators::fit as fit_model;
use rankrecover::evaluate::{
    correlation, cross_validate, curves_to_csv, default_lambda_grid, run_experiment, CvResult,
    Metric,
};
use rankrecover::inspect::{f_test_quadratic, project_profile};
use rankrecover::pairs::{build_pairs, PairPolicy};
use rankrecover::simulate::{gen_param_design, gen_recovery_dataset};
use rankrecover::{FitResult, FitSpec, Loss};

use crate::presets::SimulateConfig;
use crate::{BenchmarkArgs, Failure, FitArgs, InspectArgs, PairsArg, SimulateArgs};

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::validation(format!("bad config {}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<&Path, Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::io(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn print_summary(value: serde_json::Value) {
    println!("{value}");
}

// ---------------------------------------------------------------- simulate

pub fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let mut cfg = match (&a.config, a.preset) {
        (Some(path), _) => read_config::<SimulateConfig>(path)?,
        (None, Some(preset)) => preset.simulate(),
        (None, None) => return Err(Failure::validation("simulate needs --config or --preset")),
    };
    let base_seed = match &mut cfg {
        SimulateConfig::Recovery(sim) => {
            if let Some(seed) = a.seed {
                sim.seed = seed;
            }
            if let Some(n) = a.samples {
                sim.n_samples = n;
            }
            sim.seed
        }
        SimulateConfig::ParamDesign(pd) => {
            if a.samples.is_some() {
                return Err(Failure::validation(
                    "--samples applies to the recovery generator only",
                ));
            }
            if let Some(seed) = a.seed {
                pd.seed = seed;
            }
            pd.seed
        }
    };

    log::info!("generating dataset (seed {base_seed})");
    let (ds, truth, noise_width) = match &cfg {
        SimulateConfig::Recovery(sim) => {
            let data = gen_recovery_dataset(sim)?;
            (data.dataset, data.truth, Some(data.noise_width))
        }
        SimulateConfig::ParamDesign(pd) => (gen_param_design(pd)?, pd.region_truth()?, None),
    };

    let dir = a.out.dir();
    let path = out_dir(&dir)?.join("dataset.csv");
    let sidecar = Sidecar {
        feature_shape: None,
        generator: Some(json!({ "command": "simulate", "base_seed": base_seed, "config": cfg })),
        ground_truth: Some(truth),
        noise_width,
    };
    save_dataset_with_sidecar(&ds, &path, &sidecar)?;
    log::info!("wrote {}", path.display());

    let t = ds.targets();
    print_summary(json!({
        "command": "simulate",
        "base_seed": base_seed,
        "n": ds.n_samples(),
        "p": ds.n_features(),
        "target_min": t.iter().copied().fold(f64::INFINITY, f64::min),
        "target_max": t.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "dataset": path,
    }));
    Ok(())
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PairsConfig {
    AllUnit,
    Threshold { threshold: f64 },
    NoiseThreshold,
    AdjacentSubject { adjacency_gap: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    #[serde(default = "default_loss")]
    loss: Loss,
    /// `None` selects λ by cross-validation.
    #[serde(default)]
    lambda: Option<f64>,
    #[serde(default = "default_lambda_grid")]
    lambda_grid: Vec<f64>,
    #[serde(default = "default_folds")]
    folds: usize,
    #[serde(default = "default_pairs")]
    pairs: PairsConfig,
    #[serde(default = "default_max_iter")]
    max_iter: usize,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default)]
    seed: u64,
}

fn default_loss() -> Loss {
    Loss::PairwiseLogistic
}
fn default_folds() -> usize {
    5
}
fn default_pairs() -> PairsConfig {
    PairsConfig::AllUnit
}
fn default_max_iter() -> usize {
    FitSpec::new(Loss::Mse, 1.0).max_iter
}
fn default_tol() -> f64 {
    FitSpec::new(Loss::Mse, 1.0).tol
}

impl Default for FitConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Serialize)]
struct FitRecord<'a> {
    command: &'static str,
    base_seed: u64,
    config: serde_json::Value,
    lambda: f64,
    cv: Option<&'a CvResult>,
    n_pairs: Option<usize>,
    /// Mean subtracted from the targets before a squared-error fit.
    target_mean: Option<f64>,
    result: &'a FitResult,
    rho: Option<f64>,
}

fn resolve_pairs(a: &FitArgs, current: PairsConfig) -> Result<PairsConfig, Failure> {
    let gap = a.gap.unwrap_or(1.0);
    let chosen = match (a.pairs, a.threshold) {
        (None, None) => {
            if a.gap.is_some() {
                return Err(Failure::validation("--gap needs --pairs adjacent-subject"));
            }
            current
        }
        (None, Some(threshold)) | (Some(PairsArg::Threshold), Some(threshold)) => {
            PairsConfig::Threshold { threshold }
        }
        (Some(PairsArg::Threshold), None) => {
            return Err(Failure::validation("--pairs threshold needs --threshold"))
        }
        (Some(_), Some(_)) => {
            return Err(Failure::validation("--threshold needs --pairs threshold"))
        }
        (Some(PairsArg::AllUnit), None) => PairsConfig::AllUnit,
        (Some(PairsArg::NoiseThreshold), None) => PairsConfig::NoiseThreshold,
        (Some(PairsArg::AdjacentSubject), None) => {
            PairsConfig::AdjacentSubject { adjacency_gap: gap }
        }
    };
    if a.gap.is_some() && !matches!(chosen, PairsConfig::AdjacentSubject { .. }) {
        return Err(Failure::validation("--gap needs --pairs adjacent-subject"));
    }
    Ok(chosen)
}

pub fn fit(a: &FitArgs) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(path) => read_config::<FitConfig>(path)?,
        None => FitConfig::default(),
    };
    if let Some(loss) = a.loss {
        cfg.loss = loss;
    }
    if let Some(lambda) = a.lambda {
        cfg.lambda = Some(lambda);
    }
    if let Some(grid) = &a.lambda_grid {
        cfg.lambda_grid = grid.clone();
    }
    if let Some(folds) = a.folds {
        cfg.folds = folds;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.pairs = resolve_pairs(a, cfg.pairs)?;

    let mut template = FitSpec::new(cfg.loss, cfg.lambda.unwrap_or(1.0));
    template.max_iter = cfg.max_iter;
    template.tol = cfg.tol;
    template.seed = cfg.seed;
    template.validate()?;

    let ds = load_dataset(&a.data, DataFormat::Csv)?;
    let sidecar = load_sidecar(&a.data)?;
    let policy = match cfg.pairs {
        PairsConfig::AllUnit => PairPolicy::AllUnit,
        PairsConfig::Threshold { threshold } => PairPolicy::Threshold { threshold },
        PairsConfig::AdjacentSubject { adjacency_gap } => {
            PairPolicy::AdjacentSubject { adjacency_gap }
        }
        PairsConfig::NoiseThreshold => {
            let width = sidecar
                .as_ref()
                .and_then(|s| s.noise_width)
                .ok_or(Failure {
                    code: 4,
                    message: "noise-threshold pairs need a sidecar with noise_width".into(),
                })?;
            PairPolicy::Threshold { threshold: width }
        }
    };
    policy.validate()?;

    let (ds, target_mean) = if cfg.loss.is_pairwise() {
        (ds, None)
    } else {
        let mean = ds.targets().mean().unwrap_or(0.0);
        (ds.with_targets(ds.targets() - mean)?, Some(mean))
    };

    let cv = match cfg.lambda {
        Some(_) => None,
        None => {
            log::info!(
                "cross-validating λ over {} values, {} folds",
                cfg.lambda_grid.len(),
                cfg.folds
            );
            let metric = Metric::default_for(cfg.loss);
            Some(cross_validate(
                &ds,
                &policy,
                &template,
                &cfg.lambda_grid,
                cfg.folds,
                metric,
                None,
            )?)
        }
    };
    let lambda = cv.as_ref().map_or(template.lambda, |cv| cv.best_lambda);
    let spec = template.with_lambda(lambda);

    let pairs = if cfg.loss.is_pairwise() {
        Some(build_pairs(
            ds.targets().as_slice().expect("contiguous"),
            ds.subject(),
            &policy,
        )?)
    } else {
        None
    };
    let result = fit_model(ds.features(), ds.targets(), pairs.as_ref(), &spec)?;
    if !result.converged {
        log::warn!(
            "solver stopped after {} iterations without converging",
            result.n_iter
        );
    }
    let rho = match sidecar.as_ref().and_then(|s| s.ground_truth.as_ref()) {
        Some(truth) => Some(correlation(&truth.to_array(), &result.weights_array())?),
        None => None,
    };

    let dir = a.out.dir();
    let path = out_dir(&dir)?.join("fit.json");
    let record = FitRecord {
        command: "fit",
        base_seed: cfg.seed,
        config: json!({ "data": a.data, "fit": cfg }),
        lambda,
        cv: cv.as_ref(),
        n_pairs: pairs.as_ref().map(|p| p.len()),
        target_mean,
        result: &result,
        rho,
    };
    write_json(&path, &record)?;
    print_summary(json!({
        "command": "fit",
        "base_seed": cfg.seed,
        "loss": cfg.loss,
        "lambda": lambda,
        "objective": result.objective,
        "n_iter": result.n_iter,
        "converged": result.converged,
        "rho": rho,
        "output": path,
    }));
    Ok(())
}

// ---------------------------------------------------------------- benchmark

pub fn benchmark(a: &BenchmarkArgs) -> Result<(), Failure> {
    let mut cfg = match (&a.config, a.preset) {
        (Some(path), _) => read_config(path)?,
        (None, Some(preset)) => preset.benchmark()?,
        (None, None) => return Err(Failure::validation("benchmark needs --config or --preset")),
    };
    if let Some(seed) = a.seed {
        cfg.base_seed = seed;
    }
    if let Some(reps) = a.reps {
        cfg.n_reps = reps;
    }
    if let Some(sizes) = &a.sizes {
        cfg.sample_sizes = sizes.clone();
    }
    if a.jobs == 0 {
        return Err(Failure::validation("--jobs must be at least 1"));
    }
    cfg.validate()?;

    log::info!(
        "running {} repetitions x {} estimators x {} sizes on {} worker(s)",
        cfg.n_reps,
        cfg.estimators.len(),
        cfg.sample_sizes.len(),
        a.jobs
    );
    let output = run_experiment(&cfg, a.jobs)?;

    let dir = a.out.dir();
    let dir = out_dir(&dir)?;
    let csv_path = dir.join("curves.csv");
    let json_path = dir.join("curves.json");
    write_text(&csv_path, &curves_to_csv(&output.curves))?;
    write_json(
        &json_path,
        &json!({
            "command": "benchmark",
            "base_seed": cfg.base_seed,
            "config": cfg,
            "curves": output.curves,
            "cells": output.cells,
        }),
    )?;

    let last: Vec<_> = output
        .curves
        .iter()
        .map(|c| {
            let k = c.sample_sizes.len() - 1;
            json!({ "estimator": c.estimator, "n": c.sample_sizes[k], "mean_rho": c.mean_rho[k], "std_rho": c.std_rho[k] })
        })
        .collect();
    print_summary(json!({
        "command": "benchmark",
        "base_seed": cfg.base_seed,
        "largest_n": last,
        "curves_csv": csv_path,
        "curves_json": json_path,
    }));
    Ok(())
}

// ---------------------------------------------------------------- inspect

pub fn inspect(a: &InspectArgs) -> Result<(), Failure> {
    let ds = load_dataset(&a.data, DataFormat::Csv)?;
    let (weights, inherited_seed) = if a.truth {
        let truth = load_sidecar(&a.data)?
            .and_then(|s| s.ground_truth)
            .ok_or(Failure {
                code: 4,
                message: format!("{} has no sidecar ground truth", a.data.display()),
            })?;
        (truth.to_array(), None)
    } else {
        let path: &PathBuf = a.fit.as_ref().expect("clap requires --fit or --truth");
        let value: serde_json::Value = read_config(path)?;
        let seed = value.get("base_seed").and_then(|s| s.as_u64());
        let result: FitResult =
            serde_json::from_value(value.get("result").cloned().unwrap_or(value)).map_err(|e| {
                Failure::validation(format!("bad fit result {}: {e}", path.display()))
            })?;
        (result.weights_array(), seed)
    };
    let base_seed = a.seed.or(inherited_seed).unwrap_or(0);

    let profile = project_profile(
        ds.features().view(),
        ds.targets().view(),
        weights.view(),
        a.frac,
        a.iters,
    )?;
    let report = f_test_quadratic(
        ndarray::ArrayView1::from(&profile.scores),
        ndarray::ArrayView1::from(&profile.targets),
    )?;

    let dir = a.out.dir();
    let dir = out_dir(&dir)?;
    let csv_path = dir.join("profile.csv");
    let json_path = dir.join("inspect.json");
    profile.write_csv(&csv_path)?;
    log::info!("wrote {}", csv_path.display());
    write_json(
        &json_path,
        &json!({
            "command": "inspect",
            "base_seed": base_seed,
            "config": { "data": a.data, "fit": a.fit, "truth": a.truth, "frac": a.frac, "iters": a.iters },
            "n": profile.scores.len(),
            "f_test": report,
        }),
    )?;
    print_summary(json!({
        "command": "inspect",
        "base_seed": base_seed,
        "f_stat": report.f_stat,
        "p_value": report.p_value,
        "degenerate": report.degenerate,
        "profile_csv": csv_path,
        "report_json": json_path,
    }));
    Ok(())
}
