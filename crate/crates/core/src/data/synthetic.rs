//! Synthetic data: six two-dimensional Gaussian classification cases and the
//! noisy sinc regression set.
//!
//! The Gaussian cases are driven by a versioned JSON table
//! (`configs/gaussian_cases.json`, also returned by [`gaussian_case_table`]).
//! A case either lists its own class mixtures or names a `base_case` and adds a
//! single outlier; `generate_gaussian_case(c, n, seed)` for an outlier case is
//! exactly the base case drawn with `n - 1` samples and the same seed, followed
//! by the outlier row.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Task};
use crate::error::{MatkError, Result};

const CASE_TABLE_JSON: &str = include_str!("../../configs/gaussian_cases.json");

/// Rejection attempts per requested sample before giving up.
const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    /// Share of its class drawn from this component.
    pub weight: f64,
    pub mean: [f64; 2],
    /// Standard deviations along the component's principal axes.
    pub std: [f64; 2],
    /// Rotation of the principal axes, in degrees.
    pub angle_deg: f64,
}

/// Samples are redrawn until `y * <normal, x> / |normal| >= half_gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separator {
    pub normal: [f64; 2],
    pub half_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub label: f64,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianCase {
    pub id: u8,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_case: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub positive: Vec<GaussianComponent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negative: Vec<GaussianComponent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separator: Option<Separator>,
    pub outlier: Option<Outlier>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianCaseTable {
    pub format_version: u32,
    pub cases: Vec<GaussianCase>,
}

impl GaussianCaseTable {
    pub fn case(&self, id: u8) -> Result<&GaussianCase> {
        self.cases
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| MatkError::param(format!("unknown synthetic case {id}; expected 1..=6")))
    }
}

/// The built-in configuration table.
pub fn gaussian_case_table() -> &'static GaussianCaseTable {
    static TABLE: OnceLock<GaussianCaseTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        serde_json::from_str(CASE_TABLE_JSON).expect("built-in gaussian case table is valid JSON")
    })
}

/// The built-in table as its JSON source text.
pub fn gaussian_case_table_json() -> &'static str {
    CASE_TABLE_JSON
}

pub fn generate_gaussian_case(case_id: u8, n_total: usize, seed: u64) -> Result<Dataset> {
    generate_from_table(gaussian_case_table(), case_id, n_total, seed)
}

pub fn generate_from_table(
    table: &GaussianCaseTable,
    case_id: u8,
    n_total: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_total < 10 {
        return Err(MatkError::param(format!(
            "synthetic cases need at least 10 samples, got {n_total}"
        )));
    }
    let case = table.case(case_id)?;
    let name = format!("gaussian-case-{case_id}");
    match case.base_case {
        Some(base) => {
            let outlier = case.outlier.as_ref().ok_or_else(|| {
                MatkError::param(format!("case {case_id} names a base case but no outlier"))
            })?;
            let base_case = table.case(base)?;
            let mut data = draw_mixture(base_case, n_total - 1, seed)?.with_name(name);
            data.push(&outlier.position, outlier.label);
            Ok(data)
        }
        None => Ok(draw_mixture(case, n_total, seed)?.with_name(name)),
    }
}

/// Splits `total` across weights, flooring each share and giving the rest to the first entry.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let mut counts: Vec<usize> = weights
        .iter()
        .map(|w| (total as f64 * w / sum).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    if let Some(first) = counts.first_mut() {
        *first += total - assigned;
    }
    counts
}

fn draw_mixture(case: &GaussianCase, n: usize, seed: u64) -> Result<Dataset> {
    let frac = case
        .positive_fraction
        .ok_or_else(|| MatkError::param(format!("case {} lacks positive_fraction", case.id)))?;
    if case.positive.is_empty() || case.negative.is_empty() {
        return Err(MatkError::param(format!("case {} lacks class components", case.id)));
    }
    let n_pos = ((n as f64) * frac).round() as usize;
    let n_neg = n - n_pos;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(2 * n);
    let mut targets = Vec::with_capacity(n);

    for (label, count, comps) in [(1.0, n_pos, &case.positive), (-1.0, n_neg, &case.negative)] {
        let weights: Vec<f64> = comps.iter().map(|c| c.weight).collect();
        for (comp, m) in comps.iter().zip(apportion(count, &weights)) {
            for _ in 0..m {
                let x = draw_accepted(&mut rng, comp, label, case.separator.as_ref())?;
                features.extend_from_slice(&x);
                targets.push(label);
            }
        }
    }
    Dataset::new(format!("gaussian-case-{}", case.id), Task::Classification, features, 2, targets)
}

fn draw_accepted(
    rng: &mut ChaCha8Rng,
    comp: &GaussianComponent,
    label: f64,
    separator: Option<&Separator>,
) -> Result<[f64; 2]> {
    let (sin, cos) = comp.angle_deg.to_radians().sin_cos();
    for _ in 0..MAX_REJECTIONS {
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        let (a, b) = (comp.std[0] * z0, comp.std[1] * z1);
        let x = [comp.mean[0] + cos * a - sin * b, comp.mean[1] + sin * a + cos * b];
        match separator {
            Some(sep) => {
                let norm = sep.normal[0].hypot(sep.normal[1]);
                let margin = label * (sep.normal[0] * x[0] + sep.normal[1] * x[1]) / norm;
                if margin >= sep.half_gap {
                    return Ok(x);
                }
            }
            None => return Ok(x),
        }
    }
    Err(MatkError::param(format!(
        "component at {:?} rarely lands on its side of the separator",
        comp.mean
    )))
}

/// Number of RBF features in the sinc set.
pub const SINC_FEATURES: usize = 10;
/// Standard deviation of the additive target noise.
pub const SINC_NOISE_STD: f64 = 0.2;

/// RBF centers: midpoints of ten equal-width cells tiling `[-10, 10]`.
pub fn sinc_centers() -> [f64; SINC_FEATURES] {
    std::array::from_fn(|i| -9.0 + 2.0 * i as f64)
}

/// `sin(x) / x`, with the removable singularity filled in as 1.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// `[exp(-(x - c_1)^2), ..., exp(-(x - c_10)^2)]`.
pub fn sinc_features(x: f64) -> [f64; SINC_FEATURES] {
    let centers = sinc_centers();
    std::array::from_fn(|i| (-(x - centers[i]).powi(2)).exp())
}

/// Noisy sinc regression with inputs uniform on `[-10, 10]`, mapped through the RBF features.
pub fn generate_sinc(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(MatkError::param("sinc set needs at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, SINC_NOISE_STD).expect("valid noise scale");
    let mut features = Vec::with_capacity(n * SINC_FEATURES);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-10.0..=10.0);
        features.extend_from_slice(&sinc_features(x));
        targets.push(sinc(x) + noise.sample(&mut rng));
    }
    Dataset::new("sinc", Task::Regression, features, SINC_FEATURES, targets)
}
