//! Independent finite-difference and brute-force oracles.
//!
//! Everything here treats the function under test as a black box (value
//! evaluations only), so these routines stay usable as ground truth for
//! the extended-forward engine and the objective gradients. Default
//! steps: 1e-5 for first derivatives, 1e-4 for pure second derivatives.

use crate::error::Result;
use crate::network::NetworkParams;
use crate::objective;
use crate::problem::StokesProblem;
use crate::sampler::Dataset;

/// Central-difference Jacobian and pure second derivatives of a vector
/// map at `x`.
///
/// Returns `(jac, d2)` row-major `[outputs x inputs]` with
/// `jac[k][j] = (f(x+h e_j) - f(x-h e_j)) / 2h` and
/// `d2[k][j] = (f(x+h e_j) - 2 f(x) + f(x-h e_j)) / h^2`.
pub fn fd_input_derivatives<F>(f: &F, x: &[f64], h: f64) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    let d = x.len();
    let f0 = f(x);
    let m = f0.len();
    let mut jac = vec![0.0; m * d];
    let mut d2 = vec![0.0; m * d];
    let mut xp = x.to_vec();
    for j in 0..d {
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        for k in 0..m {
            jac[k * d + j] = (fp[k] - fm[k]) / (2.0 * h);
            d2[k * d + j] = (fp[k] - 2.0 * f0[k] + fm[k]) / (h * h);
        }
    }
    (jac, d2)
}

/// Central-difference divergence of a vector field at `x`
/// (`sum_j d f_j / d x_j`).
pub fn fd_divergence<F>(f: &F, x: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    let (jac, _) = fd_input_derivatives(f, x, h);
    let d = x.len();
    (0..d).map(|j| jac[j * d + j]).sum()
}

/// Per-parameter central-difference gradient of a scalar loss.
///
/// The step for parameter `k` is `h * max(1, |theta_k|)`.
pub fn fd_param_gradient<F>(loss: &mut F, params: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64 + ?Sized,
{
    let mut grad = vec![0.0; params.len()];
    let mut work = params.to_vec();
    for k in 0..params.len() {
        let hk = h * params[k].abs().max(1.0);
        work[k] = params[k] + hk;
        let lp = loss(&work);
        work[k] = params[k] - hk;
        let lm = loss(&work);
        work[k] = params[k];
        grad[k] = (lp - lm) / (2.0 * hk);
    }
    grad
}

/// Outcome of the finite-population unbiasedness check: the mean of
/// per-sample objective gradients must equal the full-dataset gradient.
#[derive(Clone, Debug)]
pub struct UnbiasednessReport {
    pub n_interior: usize,
    pub n_boundary: usize,
    /// Largest per-component deviation, normalized by max(1, |a|, |b|).
    pub max_component_dev: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl std::fmt::Display for UnbiasednessReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "unbiasedness: {} ({} interior + {} boundary samples, max component dev {:.3e}, tol {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.n_interior,
            self.n_boundary,
            self.max_component_dev,
            self.tolerance,
        )
    }
}

/// Compare the mean of single-sample gradients against the gradient of
/// the dataset objective. Passes at 1e-10 (unit-scale relative error).
pub fn check_unbiasedness(
    params: &NetworkParams,
    problem: &StokesProblem,
    dataset: &Dataset,
) -> Result<UnbiasednessReport> {
    let tolerance = 1e-10;
    let n_int = dataset.interior.len();
    let n_bnd = dataset.boundary.len();

    let mut mean = vec![0.0; params.total_len()];
    for i in 0..n_int {
        let g = objective::interior_gradient(params, problem, dataset.interior.get(i))?;
        for (m, gi) in mean.iter_mut().zip(&g) {
            *m += gi / n_int as f64;
        }
    }
    for i in 0..n_bnd {
        let g = objective::boundary_gradient(params, problem, dataset.boundary.get(i))?;
        for (m, gi) in mean.iter_mut().zip(&g) {
            *m += gi / n_bnd as f64;
        }
    }

    let (_, full) = objective::objective_gradient(params, problem, &dataset.interior, &dataset.boundary)?;
    let max_component_dev = mean
        .iter()
        .zip(&full)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1.0))
        .fold(0.0, f64::max);

    Ok(UnbiasednessReport {
        n_interior: n_int,
        n_boundary: n_bnd,
        max_component_dev,
        tolerance,
        passed: max_component_dev <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_has_no_curvature() {
        let f = |x: &[f64]| vec![3.0 * x[0] - 2.0 * x[1] + 0.5];
        let (jac, d2) = fd_input_derivatives(&f, &[0.4, 0.6], 1e-5);
        assert!((jac[0] - 3.0).abs() < 1e-9);
        assert!((jac[1] + 2.0).abs() < 1e-9);
        assert!(d2.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn second_derivative_of_sine_matches_closed_form() {
        let f = |x: &[f64]| vec![(std::f64::consts::PI * x[0]).sin()];
        let (_, d2) = fd_input_derivatives(&f, &[0.3], 1e-4);
        let expected = -std::f64::consts::PI.powi(2) * (0.3 * std::f64::consts::PI).sin();
        assert!(((d2[0] - expected) / expected).abs() < 1e-5);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut loss = |_: &[f64]| 4.2;
        let g = fd_param_gradient(&mut loss, &[1.0, -2.0, 3.0], 1e-5);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quadratic_loss_gradient_is_two_theta() {
        let theta = [0.5, -1.5, 2.0, 0.0];
        let mut loss = |t: &[f64]| t.iter().map(|v| v * v).sum::<f64>();
        let g = fd_param_gradient(&mut loss, &theta, 1e-6);
        for (gi, ti) in g.iter().zip(&theta) {
            assert!((gi - 2.0 * ti).abs() < 1e-10, "{gi} vs {}", 2.0 * ti);
        }
    }
}
