//! Oriented, weighted sample pairs.
//!
//! Every stored pair `(i, j)` satisfies `y[i] > y[j]`, so a scoring function
//! ranks the pair correctly when `score(i) > score(j)`. Pairs whose weight
//! would be zero are never stored.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How pair weights are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairPolicy {
    /// Every pair with distinct targets, weight 1.
    AllUnit,
    /// Weight 0 when |y_i − y_j| < threshold, 1 otherwise.
    Threshold { threshold: f64 },
    /// Weight 1 only for same-subject pairs with |y_i − y_j| > gap.
    AdjacentSubject {
        #[serde(default = "default_gap")]
        adjacency_gap: f64,
    },
}

fn default_gap() -> f64 {
    1.0
}

impl PairPolicy {
    pub fn adjacent_subject() -> Self {
        PairPolicy::AdjacentSubject { adjacency_gap: 1.0 }
    }

    pub fn needs_subjects(&self) -> bool {
        matches!(self, PairPolicy::AdjacentSubject { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PairPolicy::AllUnit => Ok(()),
            PairPolicy::Threshold { threshold } if threshold.is_finite() && threshold >= 0.0 => {
                Ok(())
            }
            PairPolicy::AdjacentSubject { adjacency_gap }
                if adjacency_gap.is_finite() && adjacency_gap >= 0.0 =>
            {
                Ok(())
            }
            other => Err(Error::InvalidPolicy(format!("{other:?}"))),
        }
    }

    /// Whether a pair with target gap `gap > 0` is kept, ignoring subjects.
    fn keeps_gap(&self, gap: f64) -> bool {
        match *self {
            PairPolicy::AllUnit => true,
            PairPolicy::Threshold { threshold } => gap >= threshold,
            PairPolicy::AdjacentSubject { adjacency_gap } => gap > adjacency_gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairSet {
    pairs: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

impl PairSet {
    /// Builds a pair set from explicit pairs, checking orientation against
    /// `targets` and dropping zero weights.
    pub fn from_parts(
        pairs: Vec<(usize, usize)>,
        weights: Vec<f64>,
        targets: &[f64],
    ) -> Result<Self> {
        if pairs.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} pairs but {} weights",
                pairs.len(),
                weights.len()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(pairs.len());
        let mut out = PairSet::default();
        for (&(i, j), &w) in pairs.iter().zip(&weights) {
            if i >= targets.len() || j >= targets.len() {
                return Err(Error::DimensionMismatch(format!(
                    "pair ({i}, {j}) out of range"
                )));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidPolicy(format!(
                    "pair weight {w} must be finite and >= 0"
                )));
            }
            if targets[i] <= targets[j] {
                return Err(Error::InvalidPolicy(format!(
                    "pair ({i}, {j}) is not oriented with y_i > y_j"
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidPolicy(format!("duplicate pair ({i}, {j})")));
            }
            if w > 0.0 {
                out.pairs.push((i, j));
                out.weights.push(w);
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.pairs.iter().copied().zip(self.weights.iter().copied())
    }

    /// Largest sample index referenced, plus one.
    pub fn min_samples(&self) -> usize {
        self.pairs
            .iter()
            .map(|&(i, j)| i.max(j) + 1)
            .max()
            .unwrap_or(0)
    }

    /// Writes `i,j,weight,y_i,y_j` rows for auditing.
    pub fn write_csv(&self, targets: &[f64], path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "i,j,weight,y_i,y_j").map_err(io)?;
        for ((i, j), a) in self.iter() {
            writeln!(w, "{i},{j},{a:?},{:?},{:?}", targets[i], targets[j]).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Enumerates all unordered pairs with distinct targets that `policy` keeps.
pub fn build_pairs(
    targets: &[f64],
    subject: Option<&[i64]>,
    policy: &PairPolicy,
) -> Result<PairSet> {
    policy.validate()?;
    if let Some((i, _)) = targets.iter().enumerate().find(|(_, y)| !y.is_finite()) {
        return Err(Error::NonFiniteValue {
            row: i,
            column: "target".into(),
        });
    }
    let same_subject_only = policy.needs_subjects();
    let subject = match subject {
        Some(s) if s.len() != targets.len() => {
            return Err(Error::DimensionMismatch(format!(
                "{} targets but {} subject labels",
                targets.len(),
                s.len()
            )))
        }
        None if same_subject_only => return Err(Error::MissingSubjects),
        s => s,
    };

    let n = targets.len();
    let mut set = PairSet::default();
    for a in 0..n {
        for b in a + 1..n {
            let (ya, yb) = (targets[a], targets[b]);
            if ya == yb {
                continue;
            }
            if same_subject_only {
                let s = subject.expect("checked above");
                if s[a] != s[b] {
                    continue;
                }
            }
            if !policy.keeps_gap((ya - yb).abs()) {
                continue;
            }
            set.pairs.push(if ya > yb { (a, b) } else { (b, a) });
            set.weights.push(1.0);
        }
    }
    Ok(set)
}

/// Number of pairs [`build_pairs`] yields on a balanced single-subject design
/// with integer levels 1..=n_levels, each repeated `per_level` times.
pub fn pair_count(n_levels: usize, per_level: usize, policy: &PairPolicy) -> usize {
    (1..n_levels)
        .filter(|&gap| policy.keeps_gap(gap as f64))
        .map(|gap| (n_levels - gap) * per_level * per_level)
        .sum()
}
