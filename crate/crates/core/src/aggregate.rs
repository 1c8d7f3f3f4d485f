//! Aggregate losses over the vector of individual losses.
//!
//! The average top-k (AT_k) loss is the mean of the `k` largest entries. It
//! interpolates between the maximum (`k = 1`) and the average (`k = n`) and,
//! unlike the plain k-th largest entry, is convex in the loss vector because
//!
//! ```text
//! sum of k largest x_i = min_{lambda >= 0} { k * lambda + sum_i [x_i - lambda]_+ }
//! ```
//!
//! with `lambda = x_[k]` attaining the minimum.

use serde::{Deserialize, Serialize};

use crate::error::{MatkError, Result};

/// Which functional of the loss vector defines the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "k", rename_all = "lowercase")]
pub enum AggregateSpec {
    Average,
    Maximum,
    /// The k-th largest loss alone.
    TopK(usize),
    /// Mean of the k largest losses.
    Atk(usize),
    /// Mean of the k smallest losses.
    Abk(usize),
}

impl AggregateSpec {
    pub fn k(&self) -> Option<usize> {
        match *self {
            AggregateSpec::Average | AggregateSpec::Maximum => None,
            AggregateSpec::TopK(k) | AggregateSpec::Atk(k) | AggregateSpec::Abk(k) => Some(k),
        }
    }

    /// The AT_k parameter equivalent to this aggregate for `n` samples, when one exists.
    pub fn atk_equivalent(&self, n: usize) -> Option<usize> {
        match *self {
            AggregateSpec::Average => Some(n),
            AggregateSpec::Maximum => Some(1),
            AggregateSpec::Atk(k) => Some(k),
            _ => None,
        }
    }
}

fn validate(losses: &[f64], k: usize) -> Result<()> {
    if k == 0 || k > losses.len() {
        return Err(MatkError::param(format!(
            "k = {k} outside [1, {}]",
            losses.len()
        )));
    }
    validate_entries(losses)
}

fn validate_entries(losses: &[f64]) -> Result<()> {
    if losses.is_empty() {
        return Err(MatkError::param("empty loss vector"));
    }
    match losses.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
        Some(i) => Err(MatkError::domain(format!(
            "loss entry {i} = {} is not a finite nonnegative number",
            losses[i]
        ))),
        None => Ok(()),
    }
}

fn sorted_descending(losses: &[f64]) -> Vec<f64> {
    let mut sorted = losses.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    sorted
}

/// Sum of the `k` largest entries.
pub fn top_k_sum_sorted(losses: &[f64], k: usize) -> Result<f64> {
    validate(losses, k)?;
    Ok(sorted_descending(losses)[..k].iter().sum())
}

/// The k-th largest entry, `x_[k]`.
pub fn kth_largest(losses: &[f64], k: usize) -> Result<f64> {
    validate(losses, k)?;
    Ok(sorted_descending(losses)[k - 1])
}

/// Top-k sum through its variational form; returns the value and the minimizing threshold.
pub fn top_k_sum_variational(losses: &[f64], k: usize) -> Result<(f64, f64)> {
    let lambda = kth_largest(losses, k)?;
    Ok((variational_objective(losses, k, lambda), lambda))
}

/// `k * lambda + sum_i [x_i - lambda]_+`, an upper bound on the top-k sum for every `lambda`.
pub fn variational_objective(losses: &[f64], k: usize, lambda: f64) -> f64 {
    k as f64 * lambda + losses.iter().map(|&x| (x - lambda).max(0.0)).sum::<f64>()
}

pub fn aggregate_value(losses: &[f64], spec: AggregateSpec) -> Result<f64> {
    match spec {
        AggregateSpec::Average => {
            validate_entries(losses)?;
            Ok(losses.iter().sum::<f64>() / losses.len() as f64)
        }
        AggregateSpec::Maximum => {
            validate_entries(losses)?;
            Ok(losses.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        }
        AggregateSpec::TopK(k) => kth_largest(losses, k),
        AggregateSpec::Atk(k) => Ok(top_k_sum_sorted(losses, k)? / k as f64),
        AggregateSpec::Abk(k) => {
            validate(losses, k)?;
            let sorted = sorted_descending(losses);
            Ok(sorted[losses.len() - k..].iter().sum::<f64>() / k as f64)
        }
    }
}

/// `[a - b - ell]_+`, which equals `[[a - ell]_+ - b]_+` whenever `a, b >= 0`.
pub fn hinge_compose(a: f64, b: f64, ell: f64) -> Result<f64> {
    if !(a >= 0.0) || !(b >= 0.0) {
        return Err(MatkError::domain(format!(
            "hinge composition needs a >= 0 and b >= 0, got a = {a}, b = {b}"
        )));
    }
    Ok((a - b - ell).max(0.0))
}

/// The nested form `[[a - ell]_+ - b]_+`.
pub fn hinge_nested(a: f64, b: f64, ell: f64) -> f64 {
    ((a - ell).max(0.0) - b).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Maximum subset sum over all size-k subsets.
    fn enumerate_top_k(x: &[f64], k: usize) -> f64 {
        let n = x.len();
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize == k {
                let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| x[i]).sum();
                best = best.max(s);
            }
        }
        best
    }

    #[test]
    fn sorted_examples() {
        assert_eq!(top_k_sum_sorted(&[3.0, 1.0, 2.0], 2).unwrap(), 5.0);
        assert_eq!(top_k_sum_sorted(&[4.0, 4.0, 4.0], 2).unwrap(), 8.0);
        let x = [0.7, 0.1, 0.9, 0.3];
        let oracle = enumerate_top_k(&x, 3);
        assert!((oracle - 1.9).abs() < 1e-12);
        assert!((top_k_sum_sorted(&x, 3).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn variational_examples() {
        // scan lambda over {0} and the entries
        let x = [3.0, 1.0, 2.0];
        let scan = [0.0, 3.0, 1.0, 2.0]
            .iter()
            .map(|&l| variational_objective(&x, 2, l))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(scan, 5.0);
        assert_eq!(top_k_sum_variational(&x, 2).unwrap(), (5.0, 2.0));
        assert_eq!(top_k_sum_variational(&[5.0], 1).unwrap(), (5.0, 5.0));
        assert_eq!(top_k_sum_variational(&[0.0, 0.0, 0.0], 2).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn aggregate_examples() {
        let l = [4.0, 2.0, 0.0, 1.0];
        assert_eq!(aggregate_value(&l, AggregateSpec::Atk(2)).unwrap(), 3.0);
        assert_eq!(aggregate_value(&l, AggregateSpec::TopK(3)).unwrap(), 1.0);
        assert_eq!(aggregate_value(&l, AggregateSpec::Abk(2)).unwrap(), 0.5);
        assert_eq!(aggregate_value(&l, AggregateSpec::Atk(4)).unwrap(), 1.75);
        assert_eq!(aggregate_value(&l, AggregateSpec::Average).unwrap(), 1.75);
        assert_eq!(aggregate_value(&l, AggregateSpec::Maximum).unwrap(), 4.0);
    }

    #[test]
    fn parameter_and_domain_errors() {
        assert!(matches!(top_k_sum_sorted(&[1.0], 0), Err(MatkError::Parameter(_))));
        assert!(matches!(top_k_sum_sorted(&[1.0], 2), Err(MatkError::Parameter(_))));
        assert!(matches!(top_k_sum_sorted(&[1.0, -0.5], 1), Err(MatkError::Domain(_))));
        assert!(matches!(top_k_sum_variational(&[f64::NAN], 1), Err(MatkError::Domain(_))));
        assert!(aggregate_value(&[], AggregateSpec::Average).is_err());
    }

    #[test]
    fn hinge_compose_examples() {
        assert_eq!(hinge_compose(2.0, 0.5, 1.0).unwrap(), 0.5);
        assert_eq!(hinge_nested(2.0, 0.5, 1.0), 0.5);
        assert_eq!(hinge_compose(1.0, 3.0, 0.0).unwrap(), 0.0);
        assert_eq!(hinge_compose(0.0, 0.0, -2.0).unwrap(), 2.0);
        assert!(hinge_compose(-1.0, 0.0, 0.0).is_err());
        assert!(hinge_compose(0.0, -1.0, 0.0).is_err());
    }

    fn loss_vector() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0..10.0f64, 1..=12)
    }

    proptest! {
        #[test]
        fn matches_subset_enumeration(x in loss_vector(), kk in 0usize..12) {
            let k = kk % x.len() + 1;
            prop_assert!((top_k_sum_sorted(&x, k).unwrap() - enumerate_top_k(&x, k)).abs() < 1e-9);
        }

        #[test]
        fn variational_threshold_is_minimal(x in loss_vector(), kk in 0usize..12, probe in 0.0..10.0f64) {
            let k = kk % x.len() + 1;
            let (v, _) = top_k_sum_variational(&x, k).unwrap();
            prop_assert!(variational_objective(&x, k, probe) >= v - 1e-9);
        }

        #[test]
        fn atk_upper_bounds_topk(x in loss_vector(), kk in 0usize..12) {
            let k = kk % x.len() + 1;
            let atk = aggregate_value(&x, AggregateSpec::Atk(k)).unwrap();
            let topk = aggregate_value(&x, AggregateSpec::TopK(k)).unwrap();
            prop_assert!(atk >= topk - 1e-12);
            if k == 1 {
                prop_assert_eq!(atk, topk);
            }
        }

        #[test]
        fn atk_is_monotone(x in loss_vector(), kk in 0usize..12, idx in 0usize..12, bump in 0.0..5.0f64) {
            let k = kk % x.len() + 1;
            let before = aggregate_value(&x, AggregateSpec::Atk(k)).unwrap();
            let mut y = x.clone();
            let i = idx % y.len();
            y[i] += bump;
            prop_assert!(aggregate_value(&y, AggregateSpec::Atk(k)).unwrap() >= before);
        }

        #[test]
        fn atk_is_convex(pair in (1usize..=12).prop_flat_map(|n| (
            prop::collection::vec(0.0..10.0f64, n),
            prop::collection::vec(0.0..10.0f64, n),
            1..=n,
            0.0..=1.0f64,
        ))) {
            let (a, b, k, theta) = pair;
            let mix: Vec<f64> = a.iter().zip(&b).map(|(p, q)| theta * p + (1.0 - theta) * q).collect();
            let lhs = aggregate_value(&mix, AggregateSpec::Atk(k)).unwrap();
            let rhs = theta * aggregate_value(&a, AggregateSpec::Atk(k)).unwrap()
                + (1.0 - theta) * aggregate_value(&b, AggregateSpec::Atk(k)).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn abk_is_lower_than_atk(x in loss_vector(), kk in 0usize..12) {
            let k = kk % x.len() + 1;
            let abk = aggregate_value(&x, AggregateSpec::Abk(k)).unwrap();
            let atk = aggregate_value(&x, AggregateSpec::Atk(k)).unwrap();
            prop_assert!(abk <= atk + 1e-12);
        }
    }
}
