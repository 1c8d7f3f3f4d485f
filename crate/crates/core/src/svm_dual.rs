//! AT_k-SVM through its dual quadratic program
//!
//! ```text
//! min_a  1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j) - sum_i a_i
//! s.t.   0 <= a_i <= C/n,   sum_i a_i <= C k / n
//! ```
//!
//! solved by projected gradient with Barzilai-Borwein trial steps and
//! backtracking. The decision function is `f(x) = sum_j a_j y_j K(x_j, x)`
//! (no bias), and `rho = 1 - lambda` is the `k`-th smallest training margin,
//! clamped to `[0, 1]`.
//!
//! With [`primal_objective`] the rho-form primal, weak duality reads
//! `primal_objective + k/n >= -dual_objective / C`, with equality at the optimum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{check_len, MatkError, Result};
use crate::losses::dot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    /// `exp(-gamma |x - x'|^2)`.
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Rbf { gamma } => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * sq).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { gamma } if !(gamma > 0.0) => {
                Err(MatkError::param(format!("rbf gamma = {gamma} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Dense symmetric Gram matrix, row-major.
pub fn kernel_matrix(data: &Dataset, kernel: KernelSpec) -> Vec<f64> {
    let n = data.len();
    let mut gram = vec![0.0; n * n];
    gram.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let xi = data.row(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = kernel.eval(xi, data.row(j));
        }
    });
    gram
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub support_indices: Vec<usize>,
    pub rho: f64,
    /// Value of the QP objective `1/2 a'Qa - sum a`.
    pub dual_objective: f64,
    pub iterations: usize,
    /// `|a - P(a - s grad)|_inf` at the reference step `s = 1 / L`.
    pub stationarity: f64,
    /// Upper bound of each multiplier, `C/n`.
    pub box_hi: f64,
    /// Bound on the multiplier sum, `C k / n`.
    pub cap: f64,
}

impl DualSolution {
    /// Dual objective expressed on the primal scale, `-dual_objective / C`.
    pub fn lower_bound(&self, c: f64) -> f64 {
        -self.dual_objective / c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualConfig {
    pub c: f64,
    pub k: usize,
    pub tol: f64,
    /// `None` selects `50 n`.
    pub max_iters: Option<usize>,
}

impl DualConfig {
    pub fn new(c: f64, k: usize) -> Self {
        DualConfig {
            c,
            k,
            tol: 1e-6,
            max_iters: None,
        }
    }
}

/// Euclidean projection onto `{a : 0 <= a_i <= box_hi, sum a_i <= cap}`.
///
/// Clip to the box; if the cap is violated, bisect on a shift `tau` so that
/// `sum clip(v - tau, 0, box_hi) = cap`.
pub fn projection_polytope(v: &[f64], box_hi: f64, cap: f64) -> Result<Vec<f64>> {
    if !(box_hi > 0.0) || !(cap > 0.0) {
        return Err(MatkError::param(format!(
            "projection needs box_hi > 0 and cap > 0, got {box_hi} and {cap}"
        )));
    }
    let mut out = vec![0.0; v.len()];
    project_into(v, box_hi, cap, &mut out);
    Ok(out)
}

fn project_into(v: &[f64], box_hi: f64, cap: f64, out: &mut [f64]) {
    let clipped_sum = |tau: f64, out: &mut [f64]| -> f64 {
        let mut s = 0.0;
        for (o, &x) in out.iter_mut().zip(v) {
            *o = (x - tau).clamp(0.0, box_hi);
            s += *o;
        }
        s
    };
    if clipped_sum(0.0, out) <= cap {
        return;
    }
    // sum is nonincreasing in tau and reaches 0 at tau = max(v)
    let mut lo = 0.0;
    let mut hi = v.iter().copied().fold(0.0, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s = clipped_sum(mid, out);
        if s <= cap && cap - s <= 1e-12 * cap.max(1.0) {
            hi = mid;
            break;
        }
        if s > cap {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    // the upper end of the bracket is always feasible
    clipped_sum(hi, out);
}

fn signed_gram(data: &Dataset, kernel: KernelSpec) -> Vec<f64> {
    let n = data.len();
    let mut q = kernel_matrix(data, kernel);
    let y = data.targets();
    q.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= y[i] * y[j];
        }
    });
    q
}

fn mat_vec(q: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&q[i * n..(i + 1) * n], v);
    }
}

fn stationarity(alpha: &[f64], grad: &[f64], step: f64, box_hi: f64, cap: f64, scratch: &mut [f64]) -> f64 {
    let trial: Vec<f64> = alpha.iter().zip(grad).map(|(a, g)| a - step * g).collect();
    project_into(&trial, box_hi, cap, scratch);
    alpha
        .iter()
        .zip(scratch.iter())
        .map(|(a, p)| (a - p).abs())
        .fold(0.0, f64::max)
}

/// Solves the AT_k-SVM dual.
pub fn dual_solve(data: &Dataset, kernel: KernelSpec, config: &DualConfig) -> Result<DualSolution> {
    dual_solve_traced(data, kernel, config).map(|(sol, _)| sol)
}

/// As [`dual_solve`], also returning the QP objective after every accepted step
/// (starting with the value 0 at `a = 0`).
pub fn dual_solve_traced(
    data: &Dataset,
    kernel: KernelSpec,
    config: &DualConfig,
) -> Result<(DualSolution, Vec<f64>)> {
    let n = data.len();
    if data.task() != Task::Classification {
        return Err(MatkError::Label("the dual SVM needs labels in {-1, +1}".into()));
    }
    if n < 2 {
        return Err(MatkError::param(format!("need at least 2 samples, got {n}")));
    }
    if config.k == 0 || config.k > n {
        return Err(MatkError::param(format!("k = {} outside [1, {n}]", config.k)));
    }
    if !(config.c > 0.0) || !(config.tol > 0.0) {
        return Err(MatkError::param("C and tol must be positive"));
    }
    kernel.validate()?;
    let q = signed_gram(data, kernel);
    solve_qp(&q, n, config)
}

fn solve_qp(q: &[f64], n: usize, config: &DualConfig) -> Result<(DualSolution, Vec<f64>)> {
    let box_hi = config.c / n as f64;
    let cap = config.c * config.k as f64 / n as f64;
    let max_iters = config.max_iters.unwrap_or(50 * n);

    // Gershgorin bound on the largest eigenvalue of Q
    let lipschitz = (0..n)
        .map(|i| q[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let ref_step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n]; // Q a - 1
    let mut objective = 0.0;
    let mut step = ref_step;
    let mut trial = vec![0.0; n];
    let mut candidate = vec![0.0; n];
    let mut direction = vec![0.0; n];
    let mut q_dir = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut residual = stationarity(&alpha, &grad, ref_step, box_hi, cap, &mut scratch);
    let mut iterations = 0;
    let mut history = vec![objective];

    while residual > config.tol && iterations < max_iters {
        iterations += 1;
        loop {
            for i in 0..n {
                trial[i] = alpha[i] - step * grad[i];
            }
            project_into(&trial, box_hi, cap, &mut candidate);
            for i in 0..n {
                direction[i] = candidate[i] - alpha[i];
            }
            mat_vec(q, &direction, &mut q_dir);
            let d_norm2 = dot(&direction, &direction);
            let curvature = dot(&direction, &q_dir);
            // sufficient decrease: quadratic model with 1/step dominates the true curvature
            if curvature <= d_norm2 / step * (1.0 + 1e-12) || step <= ref_step * 1e-6 {
                objective += dot(&grad, &direction) + 0.5 * curvature;
                alpha.copy_from_slice(&candidate);
                for i in 0..n {
                    grad[i] += q_dir[i];
                }
                step = if curvature > 0.0 { d_norm2 / curvature } else { 1e3 * ref_step.max(step) };
                break;
            }
            step *= 0.5;
        }
        history.push(objective);
        residual = stationarity(&alpha, &grad, ref_step, box_hi, cap, &mut scratch);
    }

    let solution = finish_solution(q, n, alpha, &grad, iterations, residual, box_hi, cap, config);
    if residual > config.tol {
        return Err(MatkError::Convergence {
            iterations,
            residual,
            last: Box::new(solution),
        });
    }
    Ok((solution, history))
}

#[allow(clippy::too_many_arguments)]
fn finish_solution(
    q: &[f64],
    n: usize,
    alpha: Vec<f64>,
    grad: &[f64],
    iterations: usize,
    stationarity: f64,
    box_hi: f64,
    cap: f64,
    config: &DualConfig,
) -> DualSolution {
    let tol = config.tol;
    // y_i f(x_i) = (Q a)_i = grad_i + 1
    let margins: Vec<f64> = grad.iter().map(|g| g + 1.0).collect();
    let mut qa = vec![0.0; n];
    mat_vec(q, &alpha, &mut qa);
    let dual_objective = 0.5 * dot(&alpha, &qa) - alpha.iter().sum::<f64>();
    let support_indices: Vec<usize> = (0..n).filter(|&i| alpha[i] > tol).collect();
    let rho = recover_rho(&margins, config.k);
    DualSolution {
        alpha,
        support_indices,
        rho,
        dual_objective,
        iterations,
        stationarity,
        box_hi,
        cap,
    }
}

/// Threshold minimizing the primal for the current `f`: the `k`-th smallest
/// margin `y_i f(x_i)`, clamped to `[0, 1]`.
///
/// The cap at 1 keeps `lambda = 1 - rho` nonnegative. At an optimal `f` the
/// optimal thresholds form an interval that meets `[0, 1]`, so the lower clamp
/// only absorbs solver error.
fn recover_rho(margins: &[f64], k: usize) -> f64 {
    let mut sorted = margins.to_vec();
    let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
    kth.clamp(0.0, 1.0)
}

/// `sum_j a_j y_j K(x_j, query)`.
pub fn decision_function(
    sol: &DualSolution,
    data: &Dataset,
    kernel: KernelSpec,
    query: &[f64],
) -> Result<f64> {
    check_len(data.dim(), query.len())?;
    check_len(data.len(), sol.alpha.len())?;
    Ok(sol
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a != 0.0)
        .map(|(j, &a)| a * data.target(j) * kernel.eval(data.row(j), query))
        .sum())
}

fn training_margins(sol: &DualSolution, data: &Dataset, kernel: KernelSpec) -> Vec<f64> {
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            data.target(i)
                * decision_function(sol, data, kernel, data.row(i)).expect("shapes checked by caller")
        })
        .collect()
}

/// Weight vector of a linear-kernel solution, `w = sum_j a_j y_j x_j`.
pub fn linear_weights(sol: &DualSolution, data: &Dataset) -> Vec<f64> {
    let mut w = vec![0.0; data.dim()];
    for (j, &a) in sol.alpha.iter().enumerate() {
        let s = a * data.target(j);
        for (wi, xi) in w.iter_mut().zip(data.row(j)) {
            *wi += s * xi;
        }
    }
    w
}

/// The rho-form primal objective at the recovered `(f, rho)`:
/// `(1/n) sum [rho - y_i f(x_i)]_+ - (k/n) rho + |f|_K^2 / (2C)`.
pub fn primal_objective(
    sol: &DualSolution,
    data: &Dataset,
    kernel: KernelSpec,
    c: f64,
    k: usize,
) -> Result<f64> {
    check_len(data.len(), sol.alpha.len())?;
    let n = data.len() as f64;
    let margins = training_margins(sol, data, kernel);
    // |f|_K^2 = sum_i a_i y_i f(x_i)
    let norm2: f64 = sol.alpha.iter().zip(&margins).map(|(a, m)| a * m).sum();
    let hinge: f64 = margins.iter().map(|m| (sol.rho - m).max(0.0)).sum();
    Ok(hinge / n - k as f64 / n * sol.rho + norm2 / (2.0 * c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuReport {
    pub support_fraction: f64,
    pub margin_error_fraction: f64,
}

/// Fractions of support vectors (`a_i > tol`) and margin errors (`y_i f(x_i) < rho - tol`).
pub fn nu_property_check(
    sol: &DualSolution,
    data: &Dataset,
    kernel: KernelSpec,
    tol: f64,
) -> Result<NuReport> {
    check_len(data.len(), sol.alpha.len())?;
    let n = data.len() as f64;
    let margins = training_margins(sol, data, kernel);
    let support = sol.alpha.iter().filter(|&&a| a > tol).count() as f64;
    let errors = margins.iter().filter(|&&m| m < sol.rho - tol).count() as f64;
    Ok(NuReport {
        support_fraction: support / n,
        margin_error_fraction: errors / n,
    })
}

/// Versioned model export for a solved AT_k-SVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub format_version: u32,
    pub kernel: KernelSpec,
    pub c: f64,
    pub k: usize,
    pub rho: f64,
    /// Nonzero multipliers, aligned with `labels` and `support_vectors`.
    pub alpha: Vec<f64>,
    pub labels: Vec<f64>,
    pub support_vectors: Vec<Vec<f64>>,
}

impl SvmModel {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn from_solution(sol: &DualSolution, data: &Dataset, kernel: KernelSpec, c: f64, k: usize) -> Self {
        let idx: Vec<usize> = (0..sol.alpha.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
        SvmModel {
            format_version: Self::FORMAT_VERSION,
            kernel,
            c,
            k,
            rho: sol.rho,
            alpha: idx.iter().map(|&i| sol.alpha[i]).collect(),
            labels: idx.iter().map(|&i| data.target(i)).collect(),
            support_vectors: idx.iter().map(|&i| data.row(i).to_vec()).collect(),
        }
    }

    pub fn decision(&self, query: &[f64]) -> f64 {
        self.alpha
            .iter()
            .zip(&self.labels)
            .zip(&self.support_vectors)
            .map(|((a, y), x)| a * y * self.kernel.eval(x, query))
            .sum()
    }
}
