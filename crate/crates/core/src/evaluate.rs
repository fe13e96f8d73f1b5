//! Recovery and ranking metrics, λ cross-validation, and the recovery-curve
//! experiments.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroundTruth};
use crate::error::{Error, Result};
use crate::estimators::{fit_from, FitSpec, Loss};
use crate::pairs::{build_pairs, PairPolicy};
use crate::rng::{derive_seed, stream, stream_rng};
use crate::simulate::{gen_recovery_dataset, SimConfig, Warp};

/// Cosine of the angle between `w` and `w_hat`.
pub fn correlation(w: &Array1<f64>, w_hat: &Array1<f64>) -> Result<f64> {
    if w.len() != w_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} weights",
            w.len(),
            w_hat.len()
        )));
    }
    let (nw, nh) = (w.dot(w).sqrt(), w_hat.dot(w_hat).sqrt());
    if nw == 0.0 || nh == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((w.dot(w_hat) / (nw * nh)).clamp(-1.0, 1.0))
}

/// Fraction of policy pairs whose predicted order disagrees with the label
/// order. A tied prediction counts as an inversion.
pub fn inversion_score(
    x_val: &Array2<f64>,
    y_val: &Array1<f64>,
    w_hat: &Array1<f64>,
    policy: &PairPolicy,
    subject: Option<&[i64]>,
) -> Result<f64> {
    if x_val.nrows() != y_val.len() || x_val.ncols() != w_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "X is {}x{}, {} targets, {} weights",
            x_val.nrows(),
            x_val.ncols(),
            y_val.len(),
            w_hat.len()
        )));
    }
    let targets = y_val.to_vec();
    let pairs = build_pairs(&targets, subject, policy)?;
    if pairs.is_empty() {
        return Err(Error::EmptyPairSet);
    }
    let scores = x_val.dot(w_hat);
    // Pairs are oriented with y_i > y_j, so the prediction agrees iff s_i > s_j.
    let (mut bad, mut total) = (0.0, 0.0);
    for ((i, j), a) in pairs.iter() {
        total += a;
        if !(scores[i] - scores[j] > 0.0) {
            bad += a;
        }
    }
    Ok(bad / total)
}

/// Selection criterion for cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Correlation with the known ground truth (reporting only).
    RhoVsTruth,
    /// Held-out inversion score under the fold's pair policy.
    Inversion,
    /// Held-out mean squared prediction error.
    Mse,
}

impl Metric {
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::RhoVsTruth)
    }

    /// Default selection metric for a loss.
    pub fn default_for(loss: Loss) -> Self {
        if loss.is_pairwise() {
            Metric::Inversion
        } else {
            Metric::Mse
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_grid: Vec<f64>,
    pub score_per_lambda: Vec<f64>,
    pub best_lambda: f64,
    pub metric: Metric,
}

/// `count` values log-spaced from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Default grid: 9 points from 1e−4 to 1e4.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-4, 1e4, 9)
}

/// Assigns rows to `k` folds: whole subjects round-robin when subject labels
/// exist, otherwise shuffled rows round-robin.
pub fn fold_assignment(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = ds.n_samples();
    let mut rng = stream_rng(seed, stream::FOLDS);
    let mut fold = vec![0usize; n];
    match ds.subject() {
        Some(labels) => {
            let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
            for (i, s) in labels.iter().enumerate() {
                groups.entry(*s).or_default().push(i);
            }
            if groups.len() < k {
                return Err(Error::InvalidConfig(format!(
                    "{} subjects cannot fill {k} folds",
                    groups.len()
                )));
            }
            let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
            groups.shuffle(&mut rng);
            for (g, rows) in groups.iter().enumerate() {
                for &i in rows {
                    fold[i] = g % k;
                }
            }
        }
        None => {
            if n < k {
                return Err(Error::InvalidConfig(format!(
                    "{n} samples cannot fill {k} folds"
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for (pos, &i) in order.iter().enumerate() {
                fold[i] = pos % k;
            }
        }
    }
    Ok(fold)
}

/// K-fold cross-validation of λ. Folds come from `spec_template.seed`;
/// the fits for one fold walk the grid from the largest λ down, each warm
/// started from the previous solution. Ties go to the larger λ.
pub fn cross_validate(
    ds: &Dataset,
    policy: &PairPolicy,
    spec_template: &FitSpec,
    lambda_grid: &[f64],
    k: usize,
    metric: Metric,
    truth: Option<&GroundTruth>,
) -> Result<CvResult> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    if lambda_grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::InvalidConfig(
            "lambda grid values must be positive".into(),
        ));
    }
    if k < 2 {
        return Err(Error::InvalidConfig("need at least 2 folds".into()));
    }
    let truth = match metric {
        Metric::RhoVsTruth => Some(
            truth
                .ok_or_else(|| Error::InvalidConfig("rho_vs_truth needs a ground truth".into()))?
                .to_array(),
        ),
        _ => None,
    };

    let mut unique: Vec<f64> = lambda_grid.to_vec();
    unique.sort_by(|a, b| b.total_cmp(a));
    unique.dedup();

    let folds = fold_assignment(ds, k, spec_template.seed)?;
    let mut sums = vec![0.0; unique.len()];
    for f in 0..k {
        let train: Vec<usize> = (0..ds.n_samples()).filter(|&i| folds[i] != f).collect();
        let valid: Vec<usize> = (0..ds.n_samples()).filter(|&i| folds[i] == f).collect();
        let tr = ds.subset(&train);
        let va = ds.subset(&valid);
        let pairs = if spec_template.loss.is_pairwise() {
            let ps = build_pairs(
                tr.targets().as_slice().expect("contiguous"),
                tr.subject(),
                policy,
            )?;
            if ps.is_empty() {
                return Err(Error::EmptyFold { fold: f });
            }
            Some(ps)
        } else {
            None
        };
        let mut warm: Option<Array1<f64>> = None;
        for (slot, &lambda) in unique.iter().enumerate() {
            let spec = spec_template.with_lambda(lambda);
            let res = fit_from(
                tr.features(),
                tr.targets(),
                pairs.as_ref(),
                &spec,
                warm.as_ref(),
            )?;
            let w = res.weights_array();
            let score = match metric {
                Metric::RhoVsTruth => {
                    correlation(truth.as_ref().expect("checked"), &w).unwrap_or(0.0)
                }
                Metric::Inversion => {
                    match inversion_score(va.features(), va.targets(), &w, policy, va.subject()) {
                        Err(Error::EmptyPairSet) => return Err(Error::EmptyFold { fold: f }),
                        other => other?,
                    }
                }
                Metric::Mse => {
                    let r = &va.features().dot(&w) - va.targets();
                    r.dot(&r) / r.len() as f64
                }
            };
            sums[slot] += score;
            warm = Some(w);
        }
    }
    let mean: Vec<f64> = sums.iter().map(|s| s / k as f64).collect();

    // `unique` is descending, so the first optimum is the largest λ.
    let mut best = 0;
    for i in 1..unique.len() {
        let better = if metric.higher_is_better() {
            mean[i] > mean[best]
        } else {
            mean[i] < mean[best]
        };
        if better {
            best = i;
        }
    }
    let score_per_lambda = lambda_grid
        .iter()
        .map(|l| mean[unique.iter().position(|u| u == l).expect("present")])
        .collect();
    Ok(CvResult {
        lambda_grid: lambda_grid.to_vec(),
        score_per_lambda,
        best_lambda: unique[best],
        metric,
    })
}

/// How an estimator in an experiment builds its pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairChoice {
    AllUnit,
    Threshold {
        threshold: f64,
    },
    /// Threshold equal to the calibrated noise width of the generated data.
    NoiseThreshold,
}

impl PairChoice {
    pub fn resolve(self, noise_width: f64) -> PairPolicy {
        match self {
            PairChoice::AllUnit => PairPolicy::AllUnit,
            PairChoice::Threshold { threshold } => PairPolicy::Threshold { threshold },
            PairChoice::NoiseThreshold => PairPolicy::Threshold {
                threshold: noise_width,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub name: String,
    pub fit: FitSpec,
    #[serde(default = "default_pair_choice")]
    pub pairs: PairChoice,
}

fn default_pair_choice() -> PairChoice {
    PairChoice::AllUnit
}

impl EstimatorSpec {
    pub fn new(name: &str, loss: Loss, pairs: PairChoice) -> Self {
        EstimatorSpec {
            name: name.to_string(),
            fit: FitSpec::new(loss, 1.0),
            pairs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub estimators: Vec<EstimatorSpec>,
    pub sample_sizes: Vec<usize>,
    pub n_reps: usize,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub base_seed: u64,
}

impl ExperimentConfig {
    /// Noiseless sigmoid-warped recovery comparison of the three losses.
    pub fn fig1(grid: [usize; 3]) -> Self {
        let mut sim = SimConfig::paper(grid);
        sim.snr = 0.0;
        sim.warp = Warp::Sigmoid;
        ExperimentConfig {
            sim,
            estimators: vec![
                EstimatorSpec::new("mse", Loss::Mse, PairChoice::AllUnit),
                EstimatorSpec::new("pairwise_hinge", Loss::PairwiseHinge, PairChoice::AllUnit),
                EstimatorSpec::new(
                    "pairwise_logistic",
                    Loss::PairwiseLogistic,
                    PairChoice::AllUnit,
                ),
            ],
            sample_sizes: vec![50, 100, 200, 400, 800],
            n_reps: 10,
            lambda_grid: default_lambda_grid(),
            folds: 5,
            base_seed: 0,
        }
    }

    /// Linear target with 5% noise: ridge against unweighted and
    /// noise-thresholded pairwise logistic.
    pub fn fig2() -> Self {
        let mut sim = SimConfig::paper([5, 5, 5]);
        sim.snr = 0.05;
        sim.warp = Warp::Identity;
        ExperimentConfig {
            sim,
            estimators: vec![
                EstimatorSpec::new("mse", Loss::Mse, PairChoice::AllUnit),
                EstimatorSpec::new(
                    "logistic_unweighted",
                    Loss::PairwiseLogistic,
                    PairChoice::AllUnit,
                ),
                EstimatorSpec::new(
                    "logistic_weighted",
                    Loss::PairwiseLogistic,
                    PairChoice::NoiseThreshold,
                ),
            ],
            sample_sizes: vec![50, 100, 200, 400, 800],
            n_reps: 10,
            lambda_grid: default_lambda_grid(),
            folds: 5,
            base_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.n_reps == 0 {
            return Err(Error::InvalidConfig("n_reps must be >= 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "sample_sizes must be nonempty and increasing".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators".into()));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidConfig("empty lambda grid".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("need at least 2 folds".into()));
        }
        for e in &self.estimators {
            e.fit.with_lambda(self.lambda_grid[0]).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCurve {
    pub estimator: String,
    pub sample_sizes: Vec<usize>,
    pub mean_rho: Vec<f64>,
    pub std_rho: Vec<f64>,
    pub n_repetitions: usize,
}

/// One (repetition, estimator, sample size) cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub repetition: usize,
    pub estimator: String,
    pub n: usize,
    pub best_lambda: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub curves: Vec<RecoveryCurve>,
    pub cells: Vec<CellResult>,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every (repetition, estimator, sample size) cell: the first `n` rows
/// of the repetition's dataset are used, λ is cross-validated with the
/// estimator's default metric, and the refit is scored by its correlation with
/// the ground truth. Squared-error fits see targets centered on the subset
/// mean. `jobs` > 1 runs cells on a thread pool; results do not depend on it.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let max_n = *cfg.sample_sizes.last().expect("nonempty");
    let rep_seeds: Vec<u64> = (0..cfg.n_reps)
        .map(|r| derive_seed(cfg.base_seed, r as u64))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let data = pool.install(|| {
        rep_seeds
            .par_iter()
            .map(|&seed| {
                let mut sim = cfg.sim.clone();
                sim.seed = seed;
                sim.n_samples = max_n;
                gen_recovery_dataset(&sim)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut items = Vec::new();
    for r in 0..cfg.n_reps {
        for e in 0..cfg.estimators.len() {
            for s in 0..cfg.sample_sizes.len() {
                items.push((r, e, s));
            }
        }
    }
    let run_cell = |&(r, e, s): &(usize, usize, usize)| -> Result<CellResult> {
        let est = &cfg.estimators[e];
        let n = cfg.sample_sizes[s];
        let rd = &data[r];
        let mut subset = rd.dataset.head(n);
        if !est.fit.loss.is_pairwise() {
            let mean = subset.targets().mean().unwrap_or(0.0);
            subset = subset.with_targets(subset.targets() - mean)?;
        }
        let policy = est.pairs.resolve(rd.noise_width);
        let mut template = est.fit.clone();
        template.seed = derive_seed(rep_seeds[r], n as u64);
        let metric = Metric::default_for(template.loss);
        let cv = cross_validate(
            &subset,
            &policy,
            &template,
            &cfg.lambda_grid,
            cfg.folds,
            metric,
            None,
        )?;
        let spec = template.with_lambda(cv.best_lambda);
        let pairs = if spec.loss.is_pairwise() {
            Some(build_pairs(
                subset.targets().as_slice().expect("contiguous"),
                subset.subject(),
                &policy,
            )?)
        } else {
            None
        };
        let res =
            crate::estimators::fit(subset.features(), subset.targets(), pairs.as_ref(), &spec)?;
        let rho = correlation(&rd.truth.to_array(), &res.weights_array()).unwrap_or(0.0);
        Ok(CellResult {
            repetition: r,
            estimator: est.name.clone(),
            n,
            best_lambda: cv.best_lambda,
            rho,
        })
    };
    let cells: Vec<CellResult> =
        pool.install(|| items.par_iter().map(run_cell).collect::<Result<Vec<_>>>())?;

    let curves = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(e, est)| {
            let (mut mean_rho, mut std_rho) = (Vec::new(), Vec::new());
            for s in 0..cfg.sample_sizes.len() {
                let values: Vec<f64> = (0..cfg.n_reps)
                    .map(|r| {
                        let idx = (r * cfg.estimators.len() + e) * cfg.sample_sizes.len() + s;
                        cells[idx].rho
                    })
                    .collect();
                let (m, sd) = mean_std(&values);
                mean_rho.push(m);
                std_rho.push(sd);
            }
            RecoveryCurve {
                estimator: est.name.clone(),
                sample_sizes: cfg.sample_sizes.clone(),
                mean_rho,
                std_rho,
                n_repetitions: cfg.n_reps,
            }
        })
        .collect();
    Ok(ExperimentOutput { curves, cells })
}

/// Recovery curves for the configured estimators.
pub fn recovery_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<RecoveryCurve>> {
    Ok(run_experiment(cfg, jobs)?.curves)
}

/// Noisy linear-target experiment: squared error, unweighted pairwise
/// logistic, and pairwise logistic with pairs closer than the calibrated
/// noise width removed. The simulation's warp is forced to identity.
pub fn noise_robustness_experiment(
    sim: &SimConfig,
    sample_sizes: &[usize],
    n_reps: usize,
    lambda_grid: &[f64],
    folds: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<Vec<RecoveryCurve>> {
    let mut cfg = ExperimentConfig::fig2();
    cfg.sim = sim.clone();
    cfg.sim.warp = Warp::Identity;
    cfg.sample_sizes = sample_sizes.to_vec();
    cfg.n_reps = n_reps;
    cfg.lambda_grid = lambda_grid.to_vec();
    cfg.folds = folds;
    cfg.base_seed = base_seed;
    recovery_experiment(&cfg, jobs)
}

/// `estimator,n,mean_rho,std_rho` rows in estimator order.
pub fn curves_to_csv(curves: &[RecoveryCurve]) -> String {
    let mut out = String::from("estimator,n,mean_rho,std_rho\n");
    for c in curves {
        for (i, n) in c.sample_sizes.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{:?},{:?}\n",
                c.estimator, n, c.mean_rho[i], c.std_rho[i]
            ));
        }
    }
    out
}
