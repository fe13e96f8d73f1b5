//! Shape of the learned link between score and target.
//!
//! Data is projected onto a fitted weight vector, the `(score, target)`
//! scatter is smoothed with LOWESS, and a nested F-test asks whether a
//! quadratic fits the scatter better than a line.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_FRAC: f64 = 2.0 / 3.0;
pub const DEFAULT_ITERS: usize = 3;

/// Locally weighted linear regression evaluated at every `x[k]`.
///
/// Each local fit uses the `⌈frac·n⌉` nearest neighbours with tricube
/// weights. Every iteration after the first multiplies those by bisquare
/// weights on the previous residuals. Points tied with the bandwidth
/// boundary get zero weight, except that a zero bandwidth (more than
/// `⌈frac·n⌉` copies of `x[k]`) gives every copy weight one.
pub fn lowess(
    x: ArrayView1<f64>,
    y: ArrayView1<f64>,
    frac: f64,
    iters: usize,
) -> Result<Array1<f64>> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} x values but {} y values",
            y.len()
        )));
    }
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "lowess needs at least 3 points, got {n}"
        )));
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "lowess frac must be in (0, 1], got {frac}"
        )));
    }
    if iters == 0 {
        return Err(Error::InvalidConfig("lowess iters must be >= 1".into()));
    }
    for (column, v) in [("x", &x), ("y", &y)] {
        if let Some(row) = v.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFiniteValue {
                row,
                column: column.into(),
            });
        }
    }
    if x.iter().all(|&t| t == x[0]) {
        return Err(Error::ZeroBandwidth);
    }

    let r = ((frac * n as f64).ceil() as usize).clamp(2, n);
    let mut robust = vec![1.0; n];
    let mut fitted = Array1::zeros(n);
    let mut dist = vec![0.0; n];
    let mut base = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for iter in 0..iters {
        for k in 0..n {
            for (d, &xj) in dist.iter_mut().zip(x.iter()) {
                *d = (xj - x[k]).abs();
            }
            let mut sorted = dist.clone();
            let (_, &mut h, _) = sorted.select_nth_unstable_by(r - 1, f64::total_cmp);
            for j in 0..n {
                base[j] = if h > 0.0 {
                    tricube(dist[j] / h)
                } else if dist[j] == 0.0 {
                    1.0
                } else {
                    0.0
                };
                weights[j] = base[j] * robust[j];
            }
            // If robustness rejected every neighbour, refit without it.
            fitted[k] = match local_linear(x, y, &weights, x[k]) {
                Some(v) => v,
                None => local_linear(x, y, &base, x[k]).expect("the r nearest points have weight"),
            };
        }
        if iter + 1 == iters {
            break;
        }
        let resid: Vec<f64> = y
            .iter()
            .zip(fitted.iter())
            .map(|(a, b)| (a - b).abs())
            .collect();
        let s = median(&resid);
        if s == 0.0 {
            break;
        }
        for (w, e) in robust.iter_mut().zip(&resid) {
            *w = bisquare(e / (6.0 * s));
        }
    }
    Ok(fitted)
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

fn bisquare(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u;
        t * t
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Weighted least-squares line evaluated at `x0`; falls back to the weighted
/// mean when the weighted spread of `x` vanishes. `None` when all weights
/// are zero.
fn local_linear(x: ArrayView1<f64>, y: ArrayView1<f64>, w: &[f64], x0: f64) -> Option<f64> {
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return None;
    }
    let mx = w.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = w.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for ((&wj, &xj), &yj) in w.iter().zip(x.iter()).zip(y.iter()) {
        let dx = xj - mx;
        sxx += wj * dx * dx;
        sxy += wj * dx * (yj - my);
    }
    let spread = w
        .iter()
        .zip(x.iter())
        .map(|(a, b)| a * (b - x0).abs())
        .sum::<f64>()
        / sw;
    if sxx <= (1e-10 * spread).powi(2) * sw {
        Some(my)
    } else {
        Some(my + sxy / sxx * (x0 - mx))
    }
}

/// Scores `Xŵ` in ascending order with co-sorted targets and their LOWESS fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionProfile {
    pub scores: Vec<f64>,
    pub targets: Vec<f64>,
    pub smooth: Vec<f64>,
}

impl ProjectionProfile {
    /// Writes `score,target,smooth` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "score,target,smooth").map_err(io)?;
        for ((s, t), m) in self.scores.iter().zip(&self.targets).zip(&self.smooth) {
            writeln!(w, "{s:?},{t:?},{m:?}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

pub fn project_profile(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w_hat: ArrayView1<f64>,
    frac: f64,
    iters: usize,
) -> Result<ProjectionProfile> {
    if x.ncols() != w_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} features but {} weights",
            x.ncols(),
            w_hat.len()
        )));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows vs {} targets",
            x.nrows(),
            y.len()
        )));
    }
    let raw = x.dot(&w_hat);
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    let scores: Vec<f64> = order.iter().map(|&i| raw[i]).collect();
    let targets: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let smooth = lowess(
        ArrayView1::from(&scores),
        ArrayView1::from(&targets),
        frac,
        iters,
    )?
    .to_vec();
    Ok(ProjectionProfile {
        scores,
        targets,
        smooth,
    })
}

/// Linear vs quadratic least-squares fit, both with an intercept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FTestReport {
    pub rss_linear: f64,
    pub rss_quadratic: f64,
    /// Infinite (serialized as `null`) when the quadratic fit is exact.
    pub f_stat: f64,
    pub p_value: f64,
    /// (numerator, denominator) degrees of freedom.
    pub df: (usize, usize),
    /// Set when the quadratic residual vanishes but the linear one does not.
    pub degenerate: bool,
}

/// Residual sums below this fraction of the total sum of squares are zero.
const RSS_FLOOR: f64 = 1e-20;

pub fn f_test_quadratic(x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<FTestReport> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} x values but {} y values",
            y.len()
        )));
    }
    for (column, v) in [("x", &x), ("y", &y)] {
        if let Some(row) = v.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFiniteValue {
                row,
                column: column.into(),
            });
        }
    }
    let mut distinct = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "F-test needs at least 4 distinct x values, got {}",
            distinct.len()
        )));
    }

    // Standardized x keeps the quadratic column well conditioned.
    let mean = x.mean().expect("nonempty");
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let z: Array1<f64> = x.mapv(|v| (v - mean) / sd);
    let columns = [Array1::ones(n), z.clone(), &z * &z];

    // Gram-Schmidt, orthogonalizing twice for stability.
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(3);
    for c in columns {
        let mut q = c;
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&q);
                q.scaled_add(-proj, b);
            }
        }
        let norm = q.dot(&q).sqrt();
        if !(norm > 1e-10 * (n as f64).sqrt()) {
            return Err(Error::RankDeficient(
                "polynomial design columns are collinear".into(),
            ));
        }
        basis.push(q / norm);
    }
    let residual = |k: usize| {
        let mut r = y.to_owned();
        for b in &basis[..k] {
            let proj = b.dot(&r);
            r.scaled_add(-proj, b);
        }
        r.dot(&r)
    };
    let tss = residual(1);
    let rss_linear = residual(2);
    let rss_quadratic = residual(3).min(rss_linear);
    let d2 = n - 3;
    let floor = RSS_FLOOR * tss;

    let (f_stat, p_value, degenerate) = if rss_linear <= floor {
        (0.0, 1.0, false)
    } else if rss_quadratic <= floor {
        (f64::INFINITY, 0.0, true)
    } else {
        let f = (rss_linear - rss_quadratic) / (rss_quadratic / d2 as f64);
        (f, f_upper_tail(f, 1.0, d2 as f64), false)
    };
    Ok(FTestReport {
        rss_linear,
        rss_quadratic,
        f_stat,
        p_value,
        df: (1, d2),
        degenerate,
    })
}

/// `P(F > f)` for an F distribution with `(d1, d2)` degrees of freedom.
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    regularized_beta(d2 / (d2 + d1 * f), d2 / 2.0, d1 / 2.0)
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_cf(x, a, b) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b).clamp(0.0, 1.0)
    }
}

/// Continued fraction for the incomplete beta, modified Lentz method.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// `ln Γ(x)` for `x > 0`, Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
