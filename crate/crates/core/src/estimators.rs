//! Penalized linear estimators: squared error and two pairwise ranking losses.
//!
//! All three minimize `L(w) + λ‖w‖²` without an intercept. The pairwise
//! losses act on score differences `m = wᵀ(x_i − x_j)` of pairs oriented so
//! that `y_i > y_j`:
//!
//! - hinge: `a · max(0, 1 − m)`
//! - logistic: `a · log(1 + exp(−m))`
//!
//! Pairwise fits read only the design matrix and the pair set, never the
//! target values themselves.
//!
//! The solver is a damped Newton method with Armijo backtracking. The Hessian
//! of a pairwise loss is `Xᵀ L X` where `L` is the weighted Laplacian of the
//! pair graph, so one iteration costs O(pairs + n²p). The hinge loss is
//! minimized through a sequence of Huber-smoothed surrogates with shrinking
//! smoothing width, stopped once the smoothing bias is within tolerance.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::pairs::PairSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mse,
    PairwiseHinge,
    PairwiseLogistic,
}

impl Loss {
    pub fn is_pairwise(self) -> bool {
        !matches!(self, Loss::Mse)
    }

    pub fn name(self) -> &'static str {
        match self {
            Loss::Mse => "mse",
            Loss::PairwiseHinge => "pairwise_hinge",
            Loss::PairwiseLogistic => "pairwise_logistic",
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "mse" => Ok(Loss::Mse),
            "pairwise_hinge" | "hinge" => Ok(Loss::PairwiseHinge),
            "pairwise_logistic" | "logistic" => Ok(Loss::PairwiseLogistic),
            other => Err(Error::InvalidFitSpec(format!("unknown loss '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub loss: Loss,
    pub lambda: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Recorded for provenance; the solver always starts from w = 0.
    #[serde(default)]
    pub seed: u64,
}

fn default_max_iter() -> usize {
    200
}

fn default_tol() -> f64 {
    1e-6
}

impl FitSpec {
    pub fn new(loss: Loss, lambda: f64) -> Self {
        FitSpec {
            loss,
            lambda,
            max_iter: default_max_iter(),
            tol: default_tol(),
            seed: 0,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        FitSpec {
            lambda,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidFitSpec(format!(
                "lambda {} must be >= 0",
                self.lambda
            )));
        }
        if self.loss.is_pairwise() && self.lambda == 0.0 {
            return Err(Error::InvalidFitSpec(
                "pairwise losses require lambda > 0".into(),
            ));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidFitSpec(format!(
                "tol {} must be > 0",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidFitSpec("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub n_iter: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn weights_array(&self) -> Array1<f64> {
        Array1::from(self.weights.clone())
    }
}

/// `Xw`.
pub fn decision_values(x: &Array2<f64>, w: &Array1<f64>) -> Result<Array1<f64>> {
    if x.ncols() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature columns vs {} weights",
            x.ncols(),
            w.len()
        )));
    }
    Ok(x.dot(w))
}

/// Value of the penalized objective at `w`.
pub fn objective(
    loss: Loss,
    x: &Array2<f64>,
    y: &Array1<f64>,
    pairs: Option<&PairSet>,
    w: &Array1<f64>,
    lambda: f64,
) -> Result<f64> {
    let problem = Problem::new(loss, x.view(), y.view(), pairs, lambda)?;
    problem.check_weights(w)?;
    Ok(problem.evaluate(w, exact_kind(loss), false, false).value)
}

/// Gradient of the penalized objective at `w`; for the hinge loss the
/// subgradient that takes 0 at the kink.
pub fn gradient(
    loss: Loss,
    x: &Array2<f64>,
    y: &Array1<f64>,
    pairs: Option<&PairSet>,
    w: &Array1<f64>,
    lambda: f64,
) -> Result<Array1<f64>> {
    let problem = Problem::new(loss, x.view(), y.view(), pairs, lambda)?;
    problem.check_weights(w)?;
    Ok(problem
        .evaluate(w, exact_kind(loss), true, false)
        .gradient
        .expect("requested"))
}

/// Minimizes the penalized objective starting from w = 0.
pub fn fit(
    x: &Array2<f64>,
    y: &Array1<f64>,
    pairs: Option<&PairSet>,
    spec: &FitSpec,
) -> Result<FitResult> {
    fit_from(x, y, pairs, spec, None)
}

/// As [`fit`], optionally warm-started from `init`.
pub fn fit_from(
    x: &Array2<f64>,
    y: &Array1<f64>,
    pairs: Option<&PairSet>,
    spec: &FitSpec,
    init: Option<&Array1<f64>>,
) -> Result<FitResult> {
    spec.validate()?;
    if spec.loss.is_pairwise() && pairs.is_none_or(|p| p.is_empty()) {
        return Err(Error::EmptyPairSet);
    }
    let problem = Problem::new(spec.loss, x.view(), y.view(), pairs, spec.lambda)?;
    let w0 = match init {
        Some(w) => {
            problem.check_weights(w)?;
            w.clone()
        }
        None => Array1::zeros(x.ncols()),
    };
    let (w, n_iter, converged) = match spec.loss {
        Loss::Mse => newton(&problem, Kind::Squared, w0, spec.tol, spec.max_iter, None),
        Loss::PairwiseLogistic => {
            newton(&problem, Kind::Logistic, w0, spec.tol, spec.max_iter, None)
        }
        Loss::PairwiseHinge => minimize_hinge(&problem, w0, spec.tol, spec.max_iter),
    };
    let objective = problem
        .evaluate(&w, exact_kind(spec.loss), false, false)
        .value;
    Ok(FitResult {
        weights: w.to_vec(),
        objective,
        n_iter,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Squared,
    Logistic,
    Hinge,
    /// Huber-smoothed hinge with smoothing width μ.
    SmoothHinge(f64),
}

fn exact_kind(loss: Loss) -> Kind {
    match loss {
        Loss::Mse => Kind::Squared,
        Loss::PairwiseLogistic => Kind::Logistic,
        Loss::PairwiseHinge => Kind::Hinge,
    }
}

/// Pairwise data restricted to the rows that appear in some pair.
struct PairData {
    x: Array2<f64>,
    pairs: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

enum Data<'a> {
    Squared {
        x: ArrayView2<'a, f64>,
        y: ArrayView1<'a, f64>,
    },
    Pairs(PairData),
}

struct Problem<'a> {
    data: Data<'a>,
    lambda: f64,
    p: usize,
}

struct Evaluation {
    value: f64,
    gradient: Option<Array1<f64>>,
    hessian: Option<Array2<f64>>,
}

impl<'a> Problem<'a> {
    fn new(
        loss: Loss,
        x: ArrayView2<'a, f64>,
        y: ArrayView1<'a, f64>,
        pairs: Option<&PairSet>,
        lambda: f64,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows vs {} targets",
                x.nrows(),
                y.len()
            )));
        }
        let data = if loss.is_pairwise() {
            let pairs = pairs.ok_or(Error::EmptyPairSet)?;
            if pairs.min_samples() > x.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "pair set references row {} but X has {} rows",
                    pairs.min_samples() - 1,
                    x.nrows()
                )));
            }
            // Compact to the rows used by the pairs, in increasing row order.
            let mut slot = vec![usize::MAX; x.nrows()];
            for &(i, j) in pairs.pairs() {
                slot[i] = 0;
                slot[j] = 0;
            }
            let mut rows = Vec::new();
            for (r, s) in slot.iter_mut().enumerate() {
                if *s == 0 {
                    *s = rows.len();
                    rows.push(r);
                }
            }
            Data::Pairs(PairData {
                x: x.select(Axis(0), &rows),
                pairs: pairs
                    .pairs()
                    .iter()
                    .map(|&(i, j)| (slot[i], slot[j]))
                    .collect(),
                weights: pairs.weights().to_vec(),
            })
        } else {
            Data::Squared { x, y }
        };
        Ok(Problem {
            data,
            lambda,
            p: x.ncols(),
        })
    }

    fn check_weights(&self, w: &Array1<f64>) -> Result<()> {
        if w.len() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} features",
                w.len(),
                self.p
            )));
        }
        Ok(())
    }

    fn evaluate(
        &self,
        w: &Array1<f64>,
        kind: Kind,
        want_grad: bool,
        want_hess: bool,
    ) -> Evaluation {
        let penalty = self.lambda * w.dot(w);
        let mut eval = match &self.data {
            Data::Squared { x, y } => {
                let resid = &x.dot(w) - y;
                let value = resid.dot(&resid);
                let gradient = want_grad.then(|| x.t().dot(&resid) * 2.0);
                let hessian = want_hess.then(|| x.t().dot(x) * 2.0);
                Evaluation {
                    value,
                    gradient,
                    hessian,
                }
            }
            Data::Pairs(pd) => pairwise_terms(pd, w, kind, want_grad, want_hess),
        };
        eval.value += penalty;
        if let Some(g) = eval.gradient.as_mut() {
            g.scaled_add(2.0 * self.lambda, w);
        }
        if let Some(h) = eval.hessian.as_mut() {
            for i in 0..self.p {
                h[[i, i]] += 2.0 * self.lambda;
            }
        }
        eval
    }

    fn line(&self, w: &Array1<f64>, step: &Array1<f64>, kind: Kind) -> Line {
        let penalty = [
            self.lambda * w.dot(w),
            2.0 * self.lambda * w.dot(step),
            self.lambda * step.dot(step),
        ];
        match &self.data {
            Data::Squared { x, y } => {
                let resid = &x.dot(w) - y;
                let xs = x.dot(step);
                Line::Quadratic([
                    resid.dot(&resid) + penalty[0],
                    2.0 * resid.dot(&xs) + penalty[1],
                    xs.dot(&xs) + penalty[2],
                ])
            }
            Data::Pairs(pd) => {
                let scores = pd.x.dot(w);
                let ds = pd.x.dot(step);
                let (margin, slope) = pd
                    .pairs
                    .iter()
                    .map(|&(i, j)| (scores[i] - scores[j], ds[i] - ds[j]))
                    .unzip();
                Line::Pairs {
                    kind,
                    margin,
                    slope,
                    weights: pd.weights.clone(),
                    penalty,
                }
            }
        }
    }

    fn total_pair_weight(&self) -> f64 {
        match &self.data {
            Data::Squared { .. } => 0.0,
            Data::Pairs(pd) => pd.weights.iter().sum(),
        }
    }
}

/// `(log(1 + exp(−m)), 1 / (1 + exp(m)))` with a single exponential.
#[inline]
fn logistic_terms(margin: f64) -> (f64, f64) {
    if margin >= 0.0 {
        let e = (-margin).exp();
        (e.ln_1p(), e / (1.0 + e))
    } else {
        let e = margin.exp();
        (e.ln_1p() - margin, 1.0 / (1.0 + e))
    }
}

/// Loss of one pair at `margin`, with its first and second derivatives.
#[inline]
fn pair_loss(kind: Kind, margin: f64) -> (f64, f64, f64) {
    match kind {
        Kind::Logistic => {
            let (l, s) = logistic_terms(margin);
            (l, -s, s * (1.0 - s))
        }
        Kind::Hinge => {
            let z = 1.0 - margin;
            if z > 0.0 {
                (z, -1.0, 0.0)
            } else {
                (0.0, 0.0, 0.0)
            }
        }
        Kind::SmoothHinge(mu) => {
            let z = 1.0 - margin;
            if z <= 0.0 {
                (0.0, 0.0, 0.0)
            } else if z < mu {
                (z * z / (2.0 * mu), -z / mu, 1.0 / mu)
            } else {
                (z - mu / 2.0, -1.0, 0.0)
            }
        }
        Kind::Squared => unreachable!("squared loss has no pairs"),
    }
}

/// The objective restricted to the ray `w + t · step`.
enum Line {
    /// `c0 + c1 t + c2 t²`.
    Quadratic([f64; 3]),
    Pairs {
        kind: Kind,
        margin: Vec<f64>,
        slope: Vec<f64>,
        weights: Vec<f64>,
        penalty: [f64; 3],
    },
}

impl Line {
    fn value(&self, t: f64) -> f64 {
        match self {
            Line::Quadratic([c0, c1, c2]) => c0 + t * (c1 + t * c2),
            Line::Pairs {
                kind,
                margin,
                slope,
                weights,
                penalty: [c0, c1, c2],
            } => {
                let loss: f64 = margin
                    .iter()
                    .zip(slope)
                    .zip(weights)
                    .map(|((&m, &dm), &a)| a * pair_loss(*kind, m + t * dm).0)
                    .sum();
                loss + c0 + t * (c1 + t * c2)
            }
        }
    }
}

fn pairwise_terms(
    pd: &PairData,
    w: &Array1<f64>,
    kind: Kind,
    want_grad: bool,
    want_hess: bool,
) -> Evaluation {
    let n = pd.x.nrows();
    let scores = pd.x.dot(w);
    let mut value = 0.0;
    let mut coef = if want_grad { vec![0.0; n] } else { Vec::new() };
    let mut curvature: Vec<(usize, usize, f64)> = Vec::new();

    for (&(i, j), &a) in pd.pairs.iter().zip(&pd.weights) {
        let (l, d1, d2) = pair_loss(kind, scores[i] - scores[j]);
        value += a * l;
        if want_grad && d1 != 0.0 {
            coef[i] += a * d1;
            coef[j] -= a * d1;
        }
        if want_hess && d2 != 0.0 {
            curvature.push((i, j, a * d2));
        }
    }
    let gradient = want_grad.then(|| pd.x.t().dot(&Array1::from(coef)));
    let hessian = want_hess.then(|| laplacian_quadratic_form(&pd.x, &curvature));
    Evaluation {
        value,
        gradient,
        hessian,
    }
}

/// `Xᵀ L X` for the Laplacian `L` of the weighted edges `(i, j, h)`.
///
/// Dense `L` costs O(n²p); accumulating `L X` edge by edge costs O(edges · p),
/// so the sparse route is taken when few edges carry curvature.
fn laplacian_quadratic_form(x: &Array2<f64>, edges: &[(usize, usize, f64)]) -> Array2<f64> {
    let (n, p) = x.dim();
    let lx = if 3 * edges.len() < n * n {
        let mut lx = Array2::<f64>::zeros((n, p));
        let mut diff = Array1::<f64>::zeros(p);
        for &(i, j, h) in edges {
            diff.assign(&x.row(i));
            diff -= &x.row(j);
            lx.row_mut(i).scaled_add(h, &diff);
            lx.row_mut(j).scaled_add(-h, &diff);
        }
        lx
    } else {
        let mut lap = Array2::<f64>::zeros((n, n));
        for &(i, j, h) in edges {
            lap[[i, i]] += h;
            lap[[j, j]] += h;
            lap[[i, j]] -= h;
            lap[[j, i]] -= h;
        }
        lap.dot(x)
    };
    x.t().dot(&lx)
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Outcome of one Newton run.
struct NewtonRun {
    w: Array1<f64>,
    iters: usize,
    converged: bool,
}

/// Plateau test: `window` consecutive steps each decreasing `f` by less than
/// `rel_tol · (1 + |f|)`.
#[derive(Clone, Copy)]
struct Stall {
    window: usize,
    rel_tol: f64,
}

/// Damped Newton on a smooth objective. Stops when
/// `‖∇f‖ ≤ tol · (1 + ‖∇f(0)‖)`, on a plateau (if `stall` is given), or
/// after `max_iter` iterations.
fn newton_run(
    problem: &Problem<'_>,
    kind: Kind,
    mut w: Array1<f64>,
    tol: f64,
    max_iter: usize,
    stall: Option<Stall>,
) -> NewtonRun {
    let zero = Array1::zeros(problem.p);
    let g0 = problem
        .evaluate(&zero, kind, true, false)
        .gradient
        .expect("requested");
    let threshold = tol * (1.0 + norm(&g0));

    let mut stalled = 0usize;
    let mut iters = 0usize;
    loop {
        let eval = problem.evaluate(&w, kind, true, true);
        let g = eval.gradient.expect("requested");
        if norm(&g) <= threshold {
            return NewtonRun {
                w,
                iters,
                converged: true,
            };
        }
        if iters >= max_iter {
            return NewtonRun {
                w,
                iters,
                converged: false,
            };
        }
        iters += 1;

        let h = eval.hessian.expect("requested");
        let mut step = match solve_spd(&h, &g) {
            Some(s) => -s,
            None => -g.clone(),
        };
        let mut slope = g.dot(&step);
        if !(slope < 0.0) {
            step = -g.clone();
            slope = -g.dot(&g);
        }

        // Armijo backtracking; each retry minimizes the quadratic through
        // f(0), f'(0) and f(t), kept within [0.1 t, 0.5 t].
        let f0 = eval.value;
        let line = problem.line(&w, &step, kind);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let f = line.value(t);
            if f <= f0 + 1e-4 * t * slope {
                accepted = Some((&w + &(&step * t), f));
                break;
            }
            let curv = f - f0 - slope * t;
            let t_quad = if curv > 0.0 {
                -slope * t * t / (2.0 * curv)
            } else {
                0.5 * t
            };
            t = t_quad.clamp(0.1 * t, 0.5 * t);
        }
        let Some((next, f1)) = accepted else {
            // No representable decrease along the Newton direction.
            let converged = stall.is_some();
            return NewtonRun {
                w,
                iters,
                converged,
            };
        };
        w = next;
        if let Some(stall) = stall {
            if f0 - f1 < stall.rel_tol * (1.0 + f1.abs()) {
                stalled += 1;
                if stalled >= stall.window {
                    return NewtonRun {
                        w,
                        iters,
                        converged: true,
                    };
                }
            } else {
                stalled = 0;
            }
        }
    }
}

fn newton(
    problem: &Problem<'_>,
    kind: Kind,
    w0: Array1<f64>,
    tol: f64,
    max_iter: usize,
    stall: Option<Stall>,
) -> (Array1<f64>, usize, bool) {
    let run = newton_run(problem, kind, w0, tol, max_iter, stall);
    (run.w, run.iters, run.converged)
}

/// Consecutive small-decrease steps that certify convergence of the hinge fit.
const HINGE_STALL_WINDOW: usize = 10;

/// Minimizes the hinge objective through Huber surrogates of shrinking width
/// `μ`, each warm-started from the last. A surrogate sits within `μ/2` of the
/// hinge per unit pair weight, which bounds when to stop shrinking.
fn minimize_hinge(
    problem: &Problem<'_>,
    mut w: Array1<f64>,
    tol: f64,
    max_iter: usize,
) -> (Array1<f64>, usize, bool) {
    let total_weight = problem.total_pair_weight();
    let stall = Stall {
        window: HINGE_STALL_WINDOW,
        rel_tol: tol,
    };
    let mut mu = 1.0;
    let mut used = 0usize;
    loop {
        let run = newton_run(
            problem,
            Kind::SmoothHinge(mu),
            w,
            tol,
            max_iter - used,
            Some(stall),
        );
        used += run.iters;
        w = run.w;
        if !run.converged {
            return (w, used, false);
        }
        let hinge = problem.evaluate(&w, Kind::Hinge, false, false).value;
        if total_weight * mu / 2.0 <= tol * (1.0 + hinge.abs()) || mu < 1e-14 {
            return (w, used, true);
        }
        if used >= max_iter {
            return (w, used, false);
        }
        mu *= 0.1;
    }
}
