//! MAT_k training: joint stochastic subgradient descent over the weights `w`
//! and the threshold `lambda` of
//!
//! ```text
//! F(w, lambda) = (1/n) sum_i [loss_i(w) - lambda]_+ + (k/n) lambda + |w|^2 / (2C)
//! ```
//!
//! Minimizing over `lambda` alone recovers `(k/n) * AT_k + |w|^2 / (2C)`, so the
//! joint problem is convex whenever the individual loss is.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{check_len, MatkError, Result};
use crate::losses::{dot, IndividualLoss};

/// Linear model `f(x) = w.x` together with the hinge shift `lambda` and the
/// regularization factor `C` (`C = inf` disables the penalty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub c: f64,
}

impl ModelState {
    pub fn zeros(dim: usize, c: f64) -> Self {
        ModelState {
            weights: vec![0.0; dim],
            lambda: 0.0,
            c,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x)
    }

    pub fn predict_all(&self, data: &Dataset) -> Vec<f64> {
        data.rows().map(|x| self.predict(x)).collect()
    }

    fn regularizer(&self) -> f64 {
        if self.c.is_infinite() {
            0.0
        } else {
            dot(&self.weights, &self.weights) / (2.0 * self.c)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub iterations: usize,
    /// Step size scale; step `t` (1-based) uses `eta0 / sqrt(t)`.
    pub eta0: f64,
    pub seed: u64,
    /// Full-batch objective logging stride; `0` records nothing.
    pub record_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 1,
            iterations: 20_000,
            eta0: 0.1,
            seed: 0,
            record_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub state: ModelState,
    pub trace: Vec<TracePoint>,
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(MatkError::param(format!("k = {k} outside [1, {n}]")));
    }
    Ok(())
}

/// Margin losses only make sense on ±1 labels.
pub fn check_loss_task(loss: IndividualLoss, task: Task) -> Result<()> {
    if loss.is_margin() && task != Task::Classification {
        return Err(MatkError::param(format!(
            "{loss} loss needs a classification dataset"
        )));
    }
    Ok(())
}

/// Individual losses of a linear model on every sample.
pub fn individual_losses(weights: &[f64], data: &Dataset, loss: IndividualLoss) -> Result<Vec<f64>> {
    check_len(data.dim(), weights.len())?;
    data.rows()
        .zip(data.targets())
        .map(|(x, &y)| loss.value(dot(weights, x), y))
        .collect()
}

pub fn objective_value(
    state: &ModelState,
    data: &Dataset,
    loss: IndividualLoss,
    k: usize,
) -> Result<f64> {
    check_k(k, data.len())?;
    let losses = individual_losses(&state.weights, data, loss)?;
    let n = data.len() as f64;
    let shifted: f64 = losses.iter().map(|&l| (l - state.lambda).max(0.0)).sum();
    Ok(shifted / n + k as f64 / n * state.lambda + state.regularizer())
}

/// One subgradient update on a single sample.
///
/// ```text
/// active  = loss_i(w) > lambda
/// w'      = w - eta * (active * d loss_i / dw + w / C)
/// lambda' = [lambda - eta * (k/n - active)]_+
/// ```
pub fn sgd_step(
    state: &ModelState,
    features: &[f64],
    target: f64,
    loss: IndividualLoss,
    k: usize,
    n: usize,
    eta: f64,
) -> Result<ModelState> {
    check_len(state.weights.len(), features.len())?;
    loss.check_target(target)?;
    check_k(k, n)?;
    if !(eta >= 0.0) {
        return Err(MatkError::param(format!("step size {eta} must be nonnegative")));
    }
    let mut next = state.clone();
    step_in_place(&mut next, features, target, loss, k as f64 / n as f64, eta);
    Ok(next)
}

#[inline]
fn step_in_place(
    state: &mut ModelState,
    x: &[f64],
    y: f64,
    loss: IndividualLoss,
    k_over_n: f64,
    eta: f64,
) {
    let prediction = dot(&state.weights, x);
    let value = loss.scalar_value(loss.argument(prediction, y));
    let active = value > state.lambda;
    let scale = if active {
        loss.linear_subgradient_scale(prediction, y)
    } else {
        0.0
    };
    let decay = if state.c.is_infinite() { 0.0 } else { 1.0 / state.c };
    for (w, &xj) in state.weights.iter_mut().zip(x) {
        *w -= eta * (scale * xj + *w * decay);
    }
    let indicator = if active { 1.0 } else { 0.0 };
    state.lambda = (state.lambda - eta * (k_over_n - indicator)).max(0.0);
}

/// Step size for iteration `t >= 1`.
///
/// `eta0 / sqrt(t)`, capped at `C` so the weight-decay factor `1 - eta/C`
/// never turns negative.
pub fn step_size(eta0: f64, t: usize, c: f64) -> f64 {
    (eta0 / (t as f64).sqrt()).min(c)
}

/// Runs `config.iterations` single-sample updates from `w = 0, lambda = 0`,
/// drawing samples uniformly with replacement.
pub fn train(
    data: &Dataset,
    loss: IndividualLoss,
    config: &TrainConfig,
    c: f64,
) -> Result<TrainOutput> {
    let n = data.len();
    if n == 0 {
        return Err(MatkError::param("cannot train on an empty dataset"));
    }
    check_k(config.k, n)?;
    check_loss_task(loss, data.task())?;
    if config.iterations == 0 {
        return Err(MatkError::param("iterations must be at least 1"));
    }
    if !(config.eta0 > 0.0) {
        return Err(MatkError::param(format!("eta0 = {} must be positive", config.eta0)));
    }
    if !(c > 0.0) {
        return Err(MatkError::param(format!("C = {c} must be positive")));
    }

    let mut state = ModelState::zeros(data.dim(), c);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k_over_n = config.k as f64 / n as f64;
    let mut trace = Vec::new();
    if config.record_every > 0 {
        trace.push(TracePoint {
            iteration: 0,
            objective: objective_value(&state, data, loss, config.k)?,
        });
    }
    for t in 1..=config.iterations {
        let i = rng.random_range(0..n);
        let eta = step_size(config.eta0, t, c);
        step_in_place(&mut state, data.row(i), data.target(i), loss, k_over_n, eta);
        if config.record_every > 0 && t % config.record_every == 0 {
            trace.push(TracePoint {
                iteration: t,
                objective: objective_value(&state, data, loss, config.k)?,
            });
        }
    }
    debug_assert!(state.weights.iter().all(|w| w.is_finite()));
    Ok(TrainOutput { state, trace })
}

/// `iteration,objective` rows with a header.
pub fn trace_to_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("iteration,objective\n");
    for p in trace {
        out.push_str(&format!("{},{}\n", p.iteration, p.objective));
    }
    out
}

/// Smallest `k` with `k > n * risk`, clamped to `[1, n]`.
///
/// Advisory: choosing `k/n` above the optimal surrogate risk is what makes the
/// AT_k loss classification calibrated.
pub fn calibration_min_k(estimated_optimal_risk: f64, n: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&estimated_optimal_risk) {
        return Err(MatkError::domain(format!(
            "risk {estimated_optimal_risk} outside [0, 1]"
        )));
    }
    if n == 0 {
        return Err(MatkError::param("n must be positive"));
    }
    let k = (n as f64 * estimated_optimal_risk).floor() as usize + 1;
    Ok(k.clamp(1, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{aggregate_value, AggregateSpec};
    use proptest::prelude::*;

    fn labeled(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 + 1.0, -(i as f64)]).collect();
        let ys = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        Dataset::from_rows("lab", Task::Classification, &rows, ys).unwrap()
    }

    #[test]
    fn objective_at_zero_weights() {
        let data = labeled(10);
        let s = ModelState { weights: vec![0.0, 0.0], lambda: 1.0, c: 1.0 };
        assert!((objective_value(&s, &data, IndividualLoss::Hinge, 5).unwrap() - 0.5).abs() < 1e-15);
        let data = labeled(4);
        let s = ModelState { weights: vec![0.0, 0.0], lambda: 0.0, c: 1.0 };
        assert_eq!(objective_value(&s, &data, IndividualLoss::Hinge, 2).unwrap(), 1.0);
    }

    #[test]
    fn objective_matches_direct_recomputation() {
        let data = labeled(7);
        let s = ModelState { weights: vec![0.3, -0.7], lambda: 0.4, c: 2.5 };
        let mut direct = 0.0;
        for i in 0..7 {
            let f = 0.3 * data.row(i)[0] - 0.7 * data.row(i)[1];
            let l = IndividualLoss::Logistic.value(f, data.target(i)).unwrap();
            direct += (l - 0.4f64).max(0.0) / 7.0;
        }
        direct += 3.0 / 7.0 * 0.4 + (0.09 + 0.49) / 5.0;
        let got = objective_value(&s, &data, IndividualLoss::Logistic, 3).unwrap();
        assert!((got - direct).abs() <= 1e-12);
    }

    #[test]
    fn lambda_updates() {
        let inf = f64::INFINITY;
        // hinge loss 0.2 at margin 0.8: inactive for lambda = 0.5
        let s = ModelState { weights: vec![0.8], lambda: 0.5, c: inf };
        let n = sgd_step(&s, &[1.0], 1.0, IndividualLoss::Hinge, 1, 2, 0.1).unwrap();
        assert_eq!(n.weights, vec![0.8]);
        assert!((n.lambda - 0.45).abs() < 1e-15);
        // hinge loss 2 at margin -1: active
        let s = ModelState { weights: vec![-1.0], lambda: 0.5, c: inf };
        let n = sgd_step(&s, &[1.0], 1.0, IndividualLoss::Hinge, 1, 2, 0.1).unwrap();
        assert!((n.lambda - 0.55).abs() < 1e-15);
        assert!((n.weights[0] - (-0.9)).abs() < 1e-15);
        // projection onto lambda >= 0
        let s = ModelState { weights: vec![2.0], lambda: 0.01, c: inf };
        let n = sgd_step(&s, &[1.0], 1.0, IndividualLoss::Hinge, 9, 10, 0.1).unwrap();
        assert_eq!(n.lambda, 0.0);
    }

    #[test]
    fn tie_is_inactive() {
        let s = ModelState { weights: vec![0.0], lambda: 1.0, c: f64::INFINITY };
        let n = sgd_step(&s, &[1.0], 1.0, IndividualLoss::Hinge, 1, 1, 0.5).unwrap();
        assert_eq!(n.weights, vec![0.0]);
    }

    #[test]
    fn zero_step_is_identity() {
        let s = ModelState { weights: vec![0.2, -0.4], lambda: 0.3, c: 0.5 };
        let n = sgd_step(&s, &[1.0, 2.0], -1.0, IndividualLoss::Logistic, 2, 5, 0.0).unwrap();
        assert_eq!(n, s);
    }

    #[test]
    fn separable_pair_is_learned() {
        let data = Dataset::from_rows(
            "pair",
            Task::Classification,
            &[vec![1.0, 0.5], vec![-1.0, -0.5]],
            vec![1.0, -1.0],
        )
        .unwrap();
        let cfg = TrainConfig { k: 2, iterations: 2000, ..TrainConfig::default() };
        let out = train(&data, IndividualLoss::Hinge, &cfg, 10.0).unwrap();
        for (x, &y) in data.rows().zip(data.targets()) {
            assert!(y * out.state.predict(x) > 0.0);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let data = labeled(30);
        let cfg = TrainConfig { k: 7, iterations: 3000, seed: 42, ..TrainConfig::default() };
        let a = train(&data, IndividualLoss::Logistic, &cfg, 1.0).unwrap().state;
        let b = train(&data, IndividualLoss::Logistic, &cfg, 1.0).unwrap().state;
        assert_eq!(a.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>(),
                   b.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn small_c_stays_finite() {
        let data = labeled(20);
        let cfg = TrainConfig { k: 5, iterations: 500, ..TrainConfig::default() };
        let out = train(&data, IndividualLoss::Hinge, &cfg, 1e-5).unwrap();
        assert!(out.state.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn rejects_bad_configuration() {
        let data = labeled(4);
        let cfg = TrainConfig { k: 5, ..TrainConfig::default() };
        assert!(train(&data, IndividualLoss::Hinge, &cfg, 1.0).is_err());
        let cfg = TrainConfig { k: 2, eta0: 0.0, ..TrainConfig::default() };
        assert!(train(&data, IndividualLoss::Hinge, &cfg, 1.0).is_err());
        let reg = Dataset::new("r", Task::Regression, vec![1.0, 2.0], 1, vec![0.3, 0.1]).unwrap();
        let cfg = TrainConfig { k: 1, ..TrainConfig::default() };
        assert!(train(&reg, IndividualLoss::Hinge, &cfg, 1.0).is_err());
        assert!(train(&reg, IndividualLoss::Squared, &cfg, 1.0).is_ok());
    }

    #[test]
    fn trace_csv_layout() {
        let csv = trace_to_csv(&[TracePoint { iteration: 0, objective: 1.5 }]);
        assert_eq!(csv, "iteration,objective\n0,1.5\n");
    }

    #[test]
    fn calibration_bound() {
        assert_eq!(calibration_min_k(0.0, 100).unwrap(), 1);
        assert_eq!(calibration_min_k(0.2, 100).unwrap(), 21);
        assert_eq!(calibration_min_k(1.0, 50).unwrap(), 50);
        assert!(calibration_min_k(1.5, 50).is_err());
        assert!(calibration_min_k(-0.1, 50).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn lambda_stays_nonnegative(
            lambda in 0.0..3.0f64, w in -3.0..3.0f64, x in -3.0..3.0f64,
            eta in 0.0..2.0f64, k in 1usize..=10, pos in any::<bool>(),
        ) {
            let s = ModelState { weights: vec![w], lambda, c: 1.0 };
            let y = if pos { 1.0 } else { -1.0 };
            let n = sgd_step(&s, &[x], y, IndividualLoss::Hinge, k, 10, eta).unwrap();
            prop_assert!(n.lambda >= 0.0);
        }

        /// Jointly convex in (w, lambda): the midpoint never exceeds the chord.
        #[test]
        fn objective_is_jointly_convex(
            a in proptest::array::uniform3(-3.0..3.0f64), b in proptest::array::uniform3(-3.0..3.0f64),
            k in 1usize..=12, logistic in any::<bool>(),
        ) {
            let data = labeled(12);
            let loss = if logistic { IndividualLoss::Logistic } else { IndividualLoss::Hinge };
            let state = |p: [f64; 3]| ModelState { weights: vec![p[0], p[1]], lambda: p[2].abs(), c: 2.0 };
            let (sa, sb) = (state(a), state(b));
            let mid = ModelState {
                weights: vec![0.5 * (sa.weights[0] + sb.weights[0]), 0.5 * (sa.weights[1] + sb.weights[1])],
                lambda: 0.5 * (sa.lambda + sb.lambda),
                c: 2.0,
            };
            let fa = objective_value(&sa, &data, loss, k).unwrap();
            let fb = objective_value(&sb, &data, loss, k).unwrap();
            let fm = objective_value(&mid, &data, loss, k).unwrap();
            prop_assert!(fm <= 0.5 * (fa + fb) + 1e-10);
        }

        /// Minimizing the objective over lambda alone gives (k/n) AT_k + regularizer.
        #[test]
        fn lambda_minimum_is_scaled_atk(w0 in -2.0..2.0f64, w1 in -2.0..2.0f64, k in 1usize..=12) {
            let data = labeled(12);
            let losses = individual_losses(&[w0, w1], &data, IndividualLoss::Hinge).unwrap();
            let atk = aggregate_value(&losses, AggregateSpec::Atk(k)).unwrap();
            let lambda = crate::aggregate::kth_largest(&losses, k).unwrap();
            let s = ModelState { weights: vec![w0, w1], lambda, c: f64::INFINITY };
            let f = objective_value(&s, &data, IndividualLoss::Hinge, k).unwrap();
            prop_assert!((f - k as f64 / 12.0 * atk).abs() < 1e-10);
        }
    }
}
