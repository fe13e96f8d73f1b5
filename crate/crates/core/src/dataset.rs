//! Samples, targets and group labels, with CSV + JSON sidecar storage.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

/// An n × p design matrix with one target per row and optional group labels.
///
/// Immutable once constructed; every constructor checks the shape and
/// finiteness invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    targets: Array1<f64>,
    subject: Option<Vec<i64>>,
    session: Option<Vec<i64>>,
    feature_shape: Option<[usize; 3]>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, targets: Array1<f64>) -> Result<Self> {
        Self::with_groups(features, targets, None, None, None)
    }

    pub fn with_groups(
        features: Array2<f64>,
        targets: Array1<f64>,
        subject: Option<Vec<i64>>,
        session: Option<Vec<i64>>,
        feature_shape: Option<[usize; 3]>,
    ) -> Result<Self> {
        let n = features.nrows();
        if targets.len() != n {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} targets",
                n,
                targets.len()
            )));
        }
        for (name, labels) in [("subject", &subject), ("session", &session)] {
            if let Some(labels) = labels {
                if labels.len() != n {
                    return Err(Error::InvalidDataset(format!(
                        "{} feature rows but {} {} labels",
                        n,
                        labels.len(),
                        name
                    )));
                }
            }
        }
        if let Some(shape) = feature_shape {
            if shape.contains(&0) || shape.iter().product::<usize>() != features.ncols() {
                return Err(Error::InvalidDataset(format!(
                    "feature shape {:?} does not match {} features",
                    shape,
                    features.ncols()
                )));
            }
        }
        if let Some((row, _)) = targets.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row,
                column: "target".into(),
            });
        }
        for (row, values) in features.axis_iter(Axis(0)).enumerate() {
            if let Some(col) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue {
                    row,
                    column: format!("f{col}"),
                });
            }
        }
        Ok(Dataset {
            features,
            targets,
            subject,
            session,
            feature_shape,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn targets(&self) -> &Array1<f64> {
        &self.targets
    }

    pub fn subject(&self) -> Option<&[i64]> {
        self.subject.as_deref()
    }

    pub fn session(&self) -> Option<&[i64]> {
        self.session.as_deref()
    }

    pub fn feature_shape(&self) -> Option<[usize; 3]> {
        self.feature_shape
    }

    /// Returns a copy with the targets replaced (same length required).
    pub fn with_targets(&self, targets: Array1<f64>) -> Result<Self> {
        Self::with_groups(
            self.features.clone(),
            targets,
            self.subject.clone(),
            self.session.clone(),
            self.feature_shape,
        )
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let pick = |v: &Option<Vec<i64>>| v.as_ref().map(|v| idx.iter().map(|&i| v[i]).collect());
        Dataset {
            features: self.features.select(Axis(0), idx),
            targets: self.targets.select(Axis(0), idx),
            subject: pick(&self.subject),
            session: pick(&self.session),
            feature_shape: self.feature_shape,
        }
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.n_samples())).collect();
        self.subset(&idx)
    }
}

/// Weight vector with known support, used as the recovery reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    weights: Vec<f64>,
    support: Vec<usize>,
}

impl GroundTruth {
    /// Builds a ground truth from weights; the support is every nonzero index.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let support: Vec<usize> = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, _)| i)
            .collect();
        if support.is_empty() {
            return Err(Error::DegenerateGroundTruth);
        }
        Ok(GroundTruth { weights, support })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn to_array(&self) -> Array1<f64> {
        Array1::from(self.weights.clone())
    }
}

/// JSON metadata stored next to a dataset CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_shape: Option<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    /// Width of the uniform noise interval used to build the targets, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_width: Option<f64>,
}

/// Sidecar location for a dataset CSV: same path with a `.json` extension.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
}

enum Column {
    Feature,
    Target,
    Subject,
    Session,
}

/// Reads a dataset CSV and, when present, its sidecar's feature shape.
pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    match format {
        DataFormat::Csv => {}
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let mut columns = Vec::with_capacity(header.len());
    for name in &header {
        let col = match name.as_str() {
            "target" => Column::Target,
            "subject" => Column::Subject,
            "session" => Column::Session,
            s if s.len() > 1
                && s.starts_with('f')
                && s[1..].bytes().all(|b| b.is_ascii_digit()) =>
            {
                Column::Feature
            }
            other => return Err(Error::UnexpectedColumn(other.to_string())),
        };
        columns.push(col);
    }
    if !columns.iter().any(|c| matches!(c, Column::Target)) {
        return Err(Error::MissingTargetColumn);
    }
    let p = columns
        .iter()
        .filter(|c| matches!(c, Column::Feature))
        .count();
    let has_subject = columns.iter().any(|c| matches!(c, Column::Subject));
    let has_session = columns.iter().any(|c| matches!(c, Column::Session));

    let mut feats = Vec::new();
    let mut targets = Vec::new();
    let mut subject = Vec::new();
    let mut session = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for ((cell, col), name) in record.iter().zip(&columns).zip(&header) {
            let cell = cell.trim();
            let bad = || Error::NonNumericCell {
                row,
                column: name.clone(),
                value: cell.to_string(),
            };
            match col {
                Column::Feature | Column::Target => {
                    let v: f64 = cell.parse().map_err(|_| bad())?;
                    if !v.is_finite() {
                        return Err(Error::NonFiniteValue {
                            row,
                            column: name.clone(),
                        });
                    }
                    if matches!(col, Column::Target) {
                        targets.push(v);
                    } else {
                        feats.push(v);
                    }
                }
                Column::Subject => subject.push(cell.parse::<i64>().map_err(|_| bad())?),
                Column::Session => session.push(cell.parse::<i64>().map_err(|_| bad())?),
            }
        }
    }
    let n = targets.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let features =
        Array2::from_shape_vec((n, p), feats).map_err(|e| Error::InvalidDataset(e.to_string()))?;

    let sidecar = load_sidecar(path)?;
    Dataset::with_groups(
        features,
        Array1::from(targets),
        has_subject.then_some(subject),
        has_session.then_some(session),
        sidecar.and_then(|s| s.feature_shape),
    )
}

/// Reads the sidecar for `csv_path`; `Ok(None)` when it does not exist.
pub fn load_sidecar(csv_path: &Path) -> Result<Option<Sidecar>> {
    let path = sidecar_path(csv_path);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

/// Writes the dataset CSV, plus a sidecar when the dataset has a feature shape.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let sidecar = ds.feature_shape.map(|shape| Sidecar {
        feature_shape: Some(shape),
        ..Sidecar::default()
    });
    write_dataset(ds, path, sidecar.as_ref())
}

/// Writes the dataset CSV and the given sidecar (its feature shape is taken
/// from the dataset).
pub fn save_dataset_with_sidecar(ds: &Dataset, path: &Path, sidecar: &Sidecar) -> Result<()> {
    let mut sidecar = sidecar.clone();
    sidecar.feature_shape = ds.feature_shape;
    write_dataset(ds, path, Some(&sidecar))
}

fn write_dataset(ds: &Dataset, path: &Path, sidecar: Option<&Sidecar>) -> Result<()> {
    if ds.n_samples() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut out = String::new();
    let mut header: Vec<String> = (0..ds.n_features()).map(|j| format!("f{j}")).collect();
    header.push("target".into());
    if ds.subject.is_some() {
        header.push("subject".into());
    }
    if ds.session.is_some() {
        header.push("session".into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..ds.n_samples() {
        let mut cells: Vec<String> = ds
            .features
            .row(i)
            .iter()
            .map(|v| format!("{v:?}"))
            .collect();
        cells.push(format!("{:?}", ds.targets[i]));
        if let Some(s) = &ds.subject {
            cells.push(s[i].to_string());
        }
        if let Some(s) = &ds.session {
            cells.push(s[i].to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    if let Some(sidecar) = sidecar {
        let sc_path = sidecar_path(path);
        let json = serde_json::to_string_pretty(sidecar)?;
        fs::write(&sc_path, json + "\n").map_err(|e| Error::io(&sc_path, e))?;
    }
    Ok(())
}

/// Train / parameter-selection / validation index lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_idx: Vec<usize>,
    pub select_idx: Vec<usize>,
    pub valid_idx: Vec<usize>,
}

impl Split {
    pub fn parts(&self) -> [&[usize]; 3] {
        [&self.train_idx, &self.select_idx, &self.valid_idx]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Grouped by subject when subject labels exist, stratified otherwise.
    Auto,
    /// Stratified by target level, ignoring subjects.
    Stratified,
    /// Whole subjects assigned to parts.
    Grouped,
}

/// Three-way split with the default mode ([`SplitMode::Auto`]).
pub fn stratified_split(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    split_with(ds, fractions, seed, SplitMode::Auto)
}

pub fn split_with(
    ds: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
    mode: SplitMode,
) -> Result<Split> {
    let n = ds.n_samples();
    let fr = [fractions.0, fractions.1, fractions.2];
    if fr.iter().any(|f| !(f.is_finite() && *f > 0.0))
        || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidSplit(format!(
            "fractions {fr:?} must be positive and sum to 1"
        )));
    }
    if n < 5 {
        return Err(Error::InvalidSplit(format!(
            "need at least 5 samples, got {n}"
        )));
    }
    let grouped = match mode {
        SplitMode::Auto => ds.subject.is_some(),
        SplitMode::Stratified => false,
        SplitMode::Grouped => {
            if ds.subject.is_none() {
                return Err(Error::MissingSubjects);
            }
            true
        }
    };
    let mut rng = stream_rng(seed, stream::SPLIT);
    let mut parts: [Vec<usize>; 3] = Default::default();

    if grouped {
        let labels = ds.subject.as_ref().expect("checked above");
        let mut by_subject: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, s) in labels.iter().enumerate() {
            by_subject.entry(*s).or_default().push(i);
        }
        if by_subject.len() < 3 {
            return Err(Error::InfeasibleSplit(format!(
                "{} subjects cannot fill 3 parts",
                by_subject.len()
            )));
        }
        let mut groups: Vec<Vec<usize>> = by_subject.into_values().collect();
        groups.shuffle(&mut rng);
        // Weighted round-robin: each subject goes to the part furthest below
        // its share, with empty parts served first.
        let mut assigned = 0usize;
        for group in groups {
            let k = (0..3)
                .max_by(|&a, &b| {
                    let key = |k: usize| {
                        let empty = parts[k].is_empty();
                        let deficit =
                            fr[k] * (assigned + group.len()) as f64 - parts[k].len() as f64;
                        (empty, deficit)
                    };
                    let (ea, da) = key(a);
                    let (eb, db) = key(b);
                    ea.cmp(&eb).then(da.total_cmp(&db)).then(b.cmp(&a))
                })
                .expect("three parts");
            assigned += group.len();
            parts[k].extend(group);
        }
    } else {
        let mut levels: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, y) in ds.targets.iter().enumerate() {
            let key = if *y == 0.0 {
                0.0f64.to_bits()
            } else {
                y.to_bits()
            };
            levels.entry(key).or_default().push(i);
        }
        let mut levels: Vec<Vec<usize>> = levels.into_values().collect();
        for lvl in levels.iter_mut() {
            lvl.shuffle(&mut rng);
        }
        levels.shuffle(&mut rng);

        let totals = largest_remainder(n, &fr);
        let floors: Vec<[usize; 3]> = levels
            .iter()
            .map(|lvl| {
                let c = lvl.len() as f64;
                [0, 1, 2].map(|k| (c * fr[k] + 1e-9).floor() as usize)
            })
            .collect();
        let mut need = [0i64; 3];
        for k in 0..3 {
            need[k] = totals[k] as i64 - floors.iter().map(|f| f[k] as i64).sum::<i64>();
        }
        for (lvl, fl) in levels.iter().zip(&floors) {
            let mut counts = *fl;
            let extra = lvl.len() - fl.iter().sum::<usize>();
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| need[b].cmp(&need[a]).then(a.cmp(&b)));
            for &k in order.iter().take(extra) {
                counts[k] += 1;
                need[k] -= 1;
            }
            let mut it = lvl.iter().copied();
            for k in 0..3 {
                parts[k].extend(it.by_ref().take(counts[k]));
            }
        }
    }

    for part in parts.iter_mut() {
        part.sort_unstable();
    }
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InfeasibleSplit("a part would be empty".into()));
    }
    let [train_idx, select_idx, valid_idx] = parts;
    Ok(Split {
        train_idx,
        select_idx,
        valid_idx,
    })
}

/// Integer sizes summing to `n`, proportional to `fractions`.
fn largest_remainder(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let ideal = fractions.map(|f| f * n as f64);
    let mut sizes = ideal.map(|v| (v + 1e-9).floor() as usize);
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - sizes[a] as f64;
        let rb = ideal[b] - sizes[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[k] += 1;
        left -= 1;
    }
    sizes
}
