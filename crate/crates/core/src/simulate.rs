//! Synthetic data: smoothed-noise volumes with block-shaped ground truth,
//! and a parametric-design generator with ordered levels.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroundTruth};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

pub type Grid = [usize; 3];

/// Monotone link applied to the linear target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warp {
    Identity,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub grid: Grid,
    pub smooth_sigma: f64,
    pub roi_size: Grid,
    pub roi_values: Vec<f64>,
    /// Block origins; `None` places the blocks at the default separated corners.
    #[serde(default)]
    pub roi_origins: Option<Vec<Grid>>,
    pub n_samples: usize,
    /// Noise-to-signal norm ratio; 0 gives noiseless targets.
    pub snr: f64,
    pub warp: Warp,
    pub seed: u64,
}

impl SimConfig {
    /// Four 2×2×2 blocks valued {1, 1, −1, −1} in noise smoothed with σ = 2.
    pub fn paper(grid: Grid) -> Self {
        SimConfig {
            grid,
            smooth_sigma: 2.0,
            roi_size: [2, 2, 2],
            roi_values: vec![1.0, 1.0, -1.0, -1.0],
            roi_origins: None,
            n_samples: 800,
            snr: 0.0,
            warp: Warp::Sigmoid,
            seed: 0,
        }
    }

    pub fn n_features(&self) -> usize {
        self.grid.iter().product()
    }

    pub fn origins(&self) -> Vec<Grid> {
        self.roi_origins
            .clone()
            .unwrap_or_else(|| default_roi_origins(self.grid, self.roi_size, self.roi_values.len()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "grid {:?} has a zero dimension",
                self.grid
            )));
        }
        if self.roi_size.contains(&0) {
            return Err(Error::InvalidConfig("roi_size has a zero dimension".into()));
        }
        if self.roi_size.iter().zip(&self.grid).any(|(r, g)| r > g) {
            return Err(Error::InvalidConfig(format!(
                "roi_size {:?} exceeds grid {:?}",
                self.roi_size, self.grid
            )));
        }
        if !(self.smooth_sigma.is_finite() && self.smooth_sigma >= 0.0) {
            return Err(Error::InvalidConfig(
                "smooth_sigma must be finite and >= 0".into(),
            ));
        }
        if !(self.snr.is_finite() && (0.0..=1.0).contains(&self.snr)) {
            return Err(Error::InvalidConfig(format!(
                "snr {} outside [0, 1]",
                self.snr
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be positive".into()));
        }
        if self.roi_values.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one roi value is required".into(),
            ));
        }
        if let Some(origins) = &self.roi_origins {
            if origins.len() != self.roi_values.len() {
                return Err(Error::InvalidConfig(format!(
                    "{} roi origins for {} roi values",
                    origins.len(),
                    self.roi_values.len()
                )));
            }
        } else if self.roi_values.len() > 4 {
            return Err(Error::InvalidConfig(
                "more than four rois need explicit roi_origins".into(),
            ));
        }
        check_rois(self.grid, self.roi_size, &self.origins())
    }
}

/// Up to four maximally separated block origins:
/// (0,0,0), (0,y−r,z−r), (x−r,0,z−r), (x−r,y−r,0).
pub fn default_roi_origins(grid: Grid, roi_size: Grid, count: usize) -> Vec<Grid> {
    let far = [0, 1, 2].map(|k| grid[k].saturating_sub(roi_size[k]));
    let all = [
        [0, 0, 0],
        [0, far[1], far[2]],
        [far[0], 0, far[2]],
        [far[0], far[1], 0],
    ];
    all.into_iter().take(count).collect()
}

fn check_rois(grid: Grid, roi_size: Grid, origins: &[Grid]) -> Result<()> {
    for (index, o) in origins.iter().enumerate() {
        if (0..3).any(|k| o[k] + roi_size[k] > grid[k]) {
            return Err(Error::RoiOutOfBounds { index });
        }
    }
    for a in 0..origins.len() {
        for b in a + 1..origins.len() {
            let overlap = (0..3).all(|k| {
                let (lo_a, lo_b) = (origins[a][k], origins[b][k]);
                lo_a < lo_b + roi_size[k] && lo_b < lo_a + roi_size[k]
            });
            if overlap {
                return Err(Error::RoiOverlap {
                    first: a,
                    second: b,
                });
            }
        }
    }
    Ok(())
}

#[inline]
fn flat_index(grid: Grid, x: usize, y: usize, z: usize) -> usize {
    (x * grid[1] + y) * grid[2] + z
}

/// Flat indices of the block of size `roi_size` starting at `origin`.
pub fn roi_voxels(grid: Grid, roi_size: Grid, origin: Grid) -> Vec<usize> {
    let mut v = Vec::with_capacity(roi_size.iter().product());
    for x in origin[0]..origin[0] + roi_size[0] {
        for y in origin[1]..origin[1] + roi_size[1] {
            for z in origin[2]..origin[2] + roi_size[2] {
                v.push(flat_index(grid, x, y, z));
            }
        }
    }
    v
}

/// Normalized Gaussian taps on −r..=r with r = round(4σ).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).round() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`) of an
/// arbitrary offset back into 0..n.
#[inline]
fn reflect(j: i64, n: usize) -> usize {
    let period = 2 * n as i64;
    let m = j.rem_euclid(period);
    if m < n as i64 {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Dense n × n operator for one axis of the reflected convolution.
fn axis_operator(kernel: &[f64], n: usize) -> Vec<f64> {
    let radius = (kernel.len() / 2) as i64;
    let mut op = vec![0.0; n * n];
    for i in 0..n {
        for (t, &k) in kernel.iter().enumerate() {
            let src = reflect(i as i64 + t as i64 - radius, n);
            op[i * n + src] += k;
        }
    }
    op
}

/// Separable Gaussian smoothing of one flattened volume.
pub fn smooth_volume(volume: &[f64], grid: Grid, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return volume.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let ops = grid.map(|n| axis_operator(&kernel, n));
    let mut cur = volume.to_vec();
    let mut next = vec![0.0; cur.len()];
    for axis in 0..3 {
        let n = grid[axis];
        let op = &ops[axis];
        for x in 0..grid[0] {
            for y in 0..grid[1] {
                for z in 0..grid[2] {
                    let pos = [x, y, z];
                    let i = pos[axis];
                    let mut acc = 0.0;
                    for k in 0..n {
                        let w = op[i * n + k];
                        if w != 0.0 {
                            let mut src = pos;
                            src[axis] = k;
                            acc += w * cur[flat_index(grid, src[0], src[1], src[2])];
                        }
                    }
                    next[flat_index(grid, x, y, z)] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// `n` volumes of standard Gaussian white noise, each smoothed with a
/// Gaussian of standard deviation `sigma` voxels. Rows are drawn in order
/// from one stream, so the first `m` rows do not depend on `n`.
pub fn gen_smooth_noise_volumes(
    n: usize,
    grid: Grid,
    sigma: f64,
    seed: u64,
) -> Result<Array2<f64>> {
    if grid.contains(&0) {
        return Err(Error::InvalidConfig(
            "grid dimensions must be positive".into(),
        ));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidConfig("sigma must be finite and >= 0".into()));
    }
    let p: usize = grid.iter().product();
    let mut rng = stream_rng(seed, stream::VOLUMES);
    let mut out = Array2::zeros((n, p));
    let mut raw = vec![0.0; p];
    for mut row in out.rows_mut() {
        for v in raw.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let smoothed = smooth_volume(&raw, grid, sigma);
        row.assign(&ArrayView1::from(&smoothed));
    }
    Ok(out)
}

/// Weight vector that is zero outside the blocks and `roi_values[k]` inside block `k`.
pub fn make_ground_truth(
    grid: Grid,
    roi_size: Grid,
    roi_values: &[f64],
    roi_origins: &[Grid],
) -> Result<GroundTruth> {
    if roi_values.len() != roi_origins.len() {
        return Err(Error::InvalidConfig(format!(
            "{} roi values for {} origins",
            roi_values.len(),
            roi_origins.len()
        )));
    }
    check_rois(grid, roi_size, roi_origins)?;
    let mut weights = vec![0.0; grid.iter().product()];
    for (origin, &value) in roi_origins.iter().zip(roi_values) {
        for j in roi_voxels(grid, roi_size, *origin) {
            weights[j] = value;
        }
    }
    GroundTruth::from_weights(weights)
}

/// Linear target with calibrated uniform noise.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTarget {
    pub values: Array1<f64>,
    pub noise: Array1<f64>,
    /// Width σ of the uniform interval [−σ/2, σ/2] after calibration.
    pub noise_width: f64,
}

/// y = Xw + ε with ε uniform on [−σ/2, σ/2] and σ set so that
/// ‖ε‖ / ‖Xw‖ equals `snr` for this draw.
pub fn linear_target(
    x: &Array2<f64>,
    truth: &GroundTruth,
    snr: f64,
    seed: u64,
) -> Result<LinearTarget> {
    if x.ncols() != truth.weights().len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature columns vs {} weights",
            x.ncols(),
            truth.weights().len()
        )));
    }
    if !(snr.is_finite() && snr >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "snr {snr} must be finite and >= 0"
        )));
    }
    let signal = x.dot(&truth.to_array());
    let signal_norm = signal.dot(&signal).sqrt();
    if signal_norm == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let mut rng = stream_rng(seed, stream::NOISE);
    let unit: Array1<f64> = (0..signal.len())
        .map(|_| rng.random::<f64>() - 0.5)
        .collect();
    let unit_norm = unit.dot(&unit).sqrt();
    let noise_width = if snr == 0.0 || unit_norm == 0.0 {
        0.0
    } else {
        snr * signal_norm / unit_norm
    };
    let noise = unit * noise_width;
    Ok(LinearTarget {
        values: &signal + &noise,
        noise,
        noise_width,
    })
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_warp(y: &Array1<f64>) -> Array1<f64> {
    y.mapv(sigmoid)
}

/// A generated recovery problem.
#[derive(Debug, Clone)]
pub struct RecoveryData {
    pub dataset: Dataset,
    pub truth: GroundTruth,
    pub noise_width: f64,
}

pub fn gen_recovery_dataset(cfg: &SimConfig) -> Result<RecoveryData> {
    cfg.validate()?;
    let truth = make_ground_truth(cfg.grid, cfg.roi_size, &cfg.roi_values, &cfg.origins())?;
    let x = gen_smooth_noise_volumes(cfg.n_samples, cfg.grid, cfg.smooth_sigma, cfg.seed)?;
    let target = linear_target(&x, &truth, cfg.snr, cfg.seed)?;
    let y = match cfg.warp {
        Warp::Identity => target.values,
        Warp::Sigmoid => sigmoid_warp(&target.values),
    };
    let dataset = Dataset::with_groups(x, y, None, None, Some(cfg.grid))?;
    Ok(RecoveryData {
        dataset,
        truth,
        noise_width: target.noise_width,
    })
}

/// Shape of a region's mean response as a function of the level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseShape {
    Linear,
    Sigmoid,
    SaturatingLog,
}

impl ResponseShape {
    /// Response at `level` in 1..=levels, rising from 0 at level 1 to 1 at the top level.
    pub fn response(self, level: usize, levels: usize) -> f64 {
        let t = (level - 1) as f64 / (levels - 1) as f64;
        match self {
            ResponseShape::Linear => t,
            ResponseShape::Sigmoid => {
                let (lo, hi) = (sigmoid(-4.0), sigmoid(4.0));
                (sigmoid(8.0 * (t - 0.5)) - lo) / (hi - lo)
            }
            ResponseShape::SaturatingLog => (level as f64).ln() / (levels as f64).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDesignConfig {
    pub n_subjects: usize,
    pub levels: usize,
    pub samples_per_level_per_subject: usize,
    /// One shape per region; regions are 2×2×2 blocks at the default origins of a 5×5×5 grid.
    pub region_response: Vec<ResponseShape>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for ParamDesignConfig {
    fn default() -> Self {
        ParamDesignConfig {
            n_subjects: 10,
            levels: 5,
            samples_per_level_per_subject: 4,
            region_response: vec![ResponseShape::SaturatingLog; 4],
            noise_sigma: 0.5,
            seed: 0,
        }
    }
}

pub const PARAM_DESIGN_GRID: Grid = [5, 5, 5];
pub const PARAM_DESIGN_ROI: Grid = [2, 2, 2];

impl ParamDesignConfig {
    pub fn n_samples(&self) -> usize {
        self.n_subjects * self.levels * self.samples_per_level_per_subject
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidConfig("levels must be >= 2".into()));
        }
        if self.n_subjects == 0 || self.samples_per_level_per_subject == 0 {
            return Err(Error::InvalidConfig("counts must be positive".into()));
        }
        if self.region_response.is_empty() || self.region_response.len() > 4 {
            return Err(Error::InvalidConfig(
                "between one and four region responses".into(),
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig(
                "noise_sigma must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Indicator pattern of the responding regions (all values 1).
    pub fn region_truth(&self) -> Result<GroundTruth> {
        let k = self.region_response.len();
        make_ground_truth(
            PARAM_DESIGN_GRID,
            PARAM_DESIGN_ROI,
            &vec![1.0; k],
            &default_roi_origins(PARAM_DESIGN_GRID, PARAM_DESIGN_ROI, k),
        )
    }
}

/// Samples ordered by subject, then level, then repetition. Targets are the
/// integer levels 1..=levels.
pub fn gen_param_design(cfg: &ParamDesignConfig) -> Result<Dataset> {
    cfg.validate()?;
    let grid = PARAM_DESIGN_GRID;
    let p: usize = grid.iter().product();
    let origins = default_roi_origins(grid, PARAM_DESIGN_ROI, cfg.region_response.len());
    let region_voxels: Vec<Vec<usize>> = origins
        .iter()
        .map(|&o| roi_voxels(grid, PARAM_DESIGN_ROI, o))
        .collect();

    let n = cfg.n_samples();
    let noise =
        Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = stream_rng(cfg.seed, stream::PARAM_DESIGN);
    let mut features = Array2::zeros((n, p));
    let mut targets = Vec::with_capacity(n);
    let mut subject = Vec::with_capacity(n);
    let mut row = 0;
    for s in 0..cfg.n_subjects {
        for level in 1..=cfg.levels {
            for _ in 0..cfg.samples_per_level_per_subject {
                let mut r = features.row_mut(row);
                if cfg.noise_sigma > 0.0 {
                    for v in r.iter_mut() {
                        *v = noise.sample(&mut rng);
                    }
                }
                for (shape, voxels) in cfg.region_response.iter().zip(&region_voxels) {
                    let mean = shape.response(level, cfg.levels);
                    for &j in voxels {
                        r[j] += mean;
                    }
                }
                targets.push(level as f64);
                subject.push(s as i64);
                row += 1;
            }
        }
    }
    Dataset::with_groups(
        features,
        Array1::from(targets),
        Some(subject),
        None,
        Some(grid),
    )
}
