use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MatkError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    /// Classification when every target is `-1` or `+1`, regression otherwise.
    pub fn infer(targets: &[f64]) -> Task {
        if !targets.is_empty() && targets.iter().all(|&y| y == 1.0 || y == -1.0) {
            Task::Classification
        } else {
            Task::Regression
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Classification => f.write_str("classification"),
            Task::Regression => f.write_str("regression"),
        }
    }
}

impl FromStr for Task {
    type Err = MatkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" | "class" => Ok(Task::Classification),
            "regression" | "reg" => Ok(Task::Regression),
            other => Err(MatkError::param(format!("unknown task '{other}'"))),
        }
    }
}

/// An immutable `n x d` feature matrix (row-major) with one target per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    task: Task,
    n: usize,
    d: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        task: Task,
        features: Vec<f64>,
        d: usize,
        targets: Vec<f64>,
    ) -> Result<Self> {
        let n = targets.len();
        if n == 0 || d == 0 {
            return Err(MatkError::param(format!(
                "dataset must have at least one sample and one feature (n = {n}, d = {d})"
            )));
        }
        if features.len() != n * d {
            return Err(MatkError::Shape {
                expected: n * d,
                got: features.len(),
            });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(MatkError::domain(format!(
                "non-finite feature in row {}",
                i / d
            )));
        }
        if let Some(i) = targets.iter().position(|v| !v.is_finite()) {
            return Err(MatkError::domain(format!("non-finite target in row {i}")));
        }
        if task == Task::Classification {
            if let Some(i) = targets.iter().position(|&y| y != 1.0 && y != -1.0) {
                return Err(MatkError::Label(format!(
                    "row {i} has label {}; classification needs -1 or +1",
                    targets[i]
                )));
            }
        }
        Ok(Dataset {
            name: name.into(),
            task,
            n,
            d,
            features,
            targets,
        })
    }

    /// Builds a dataset from row vectors.
    pub fn from_rows(
        name: impl Into<String>,
        task: Task,
        rows: &[Vec<f64>],
        targets: Vec<f64>,
    ) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(MatkError::param(format!(
                    "row {i} has {} features, expected {d}",
                    row.len()
                )));
            }
            features.extend_from_slice(row);
        }
        if rows.len() != targets.len() {
            return Err(MatkError::Shape {
                expected: rows.len(),
                got: targets.len(),
            });
        }
        Dataset::new(name, task, features, d, targets)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.d)
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    #[inline]
    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Dataset {
            name: self.name.clone(),
            task: self.task,
            n: indices.len(),
            d: self.d,
            features,
            targets,
        }
    }

    /// Appends one sample; used to place outliers into generated sets.
    pub(crate) fn push(&mut self, row: &[f64], target: f64) {
        debug_assert_eq!(row.len(), self.d);
        self.features.extend_from_slice(row);
        self.targets.push(target);
        self.n += 1;
    }

    pub fn with_targets(&self, targets: Vec<f64>, task: Task) -> Result<Dataset> {
        Dataset::new(self.name.clone(), task, self.features.clone(), self.d, targets)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.targets.iter().filter(|&&y| y > 0.0).count();
        (pos, self.n - pos)
    }
}

/// Affine map taking the targets onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub min: f64,
    pub max: f64,
}

impl TargetScale {
    pub fn forward(&self, y: f64) -> f64 {
        (y - self.min) / (self.max - self.min)
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.min + z * (self.max - self.min)
    }
}

/// Maps regression targets affinely onto `[0, 1]`.
pub fn normalize_targets(data: &Dataset) -> Result<(Dataset, TargetScale)> {
    if data.task() != Task::Regression {
        return Err(MatkError::param("target normalization applies to regression data"));
    }
    let (min, max) = data
        .targets()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
            (lo.min(y), hi.max(y))
        });
    if !(max > min) {
        return Err(MatkError::DegenerateRange(min));
    }
    let scale = TargetScale { min, max };
    let targets = data.targets().iter().map(|&y| scale.forward(y)).collect();
    Ok((data.with_targets(targets, Task::Regression)?, scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg(targets: Vec<f64>) -> Dataset {
        let n = targets.len();
        Dataset::new("t", Task::Regression, vec![1.0; n], 1, targets).unwrap()
    }

    #[test]
    fn rejects_bad_labels_and_shapes() {
        assert!(matches!(
            Dataset::new("x", Task::Classification, vec![0.0, 1.0], 1, vec![1.0, 0.0]),
            Err(MatkError::Label(_))
        ));
        assert!(Dataset::new("x", Task::Regression, vec![0.0; 3], 2, vec![1.0, 2.0]).is_err());
        assert!(Dataset::new("x", Task::Regression, vec![], 1, vec![]).is_err());
        assert!(Dataset::new("x", Task::Regression, vec![f64::NAN], 1, vec![1.0]).is_err());
    }

    #[test]
    fn normalization_examples() {
        let (d, s) = normalize_targets(&reg(vec![2.0, 4.0, 6.0])).unwrap();
        assert_eq!(d.targets(), &[0.0, 0.5, 1.0]);
        assert_eq!((s.min, s.max), (2.0, 6.0));
        let (d, _) = normalize_targets(&reg(vec![0.0, 1.0])).unwrap();
        assert_eq!(d.targets(), &[0.0, 1.0]);
        assert!(matches!(
            normalize_targets(&reg(vec![3.0, 3.0])),
            Err(MatkError::DegenerateRange(_))
        ));
    }

    #[test]
    fn normalization_round_trip() {
        let ys = vec![-1.3, 0.25, 7.75, 3.1, -0.001];
        let (d, s) = normalize_targets(&reg(ys.clone())).unwrap();
        for (z, y) in d.targets().iter().zip(&ys) {
            assert!((s.inverse(*z) - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn infer_task() {
        assert_eq!(Task::infer(&[1.0, -1.0, 1.0]), Task::Classification);
        assert_eq!(Task::infer(&[1.0, 0.0]), Task::Regression);
    }
}
