//! The collocation objective and its parameter gradient.
//!
//! For interior points the loss penalizes the squared momentum residual
//! and squared divergence; for boundary points the squared mismatch
//! against the Dirichlet data. Interior terms are averaged over the
//! interior batch and the boundary term over the boundary batch, then
//! summed. The paired single-sample form (one interior point, one
//! boundary point) is exposed as [`point_loss`]; averaging its gradients
//! over a dataset reproduces the batch gradient exactly up to rounding,
//! which is what makes the single-sample update an unbiased estimator.

use serde::{Deserialize, Serialize};

use crate::autodiff::{backward_params_into, forward_extended, ExtendedBlock};
use crate::error::{DgmError, Result};
use crate::network::{forward_value, NetKind, NetworkParams};
use crate::parallel::{chunk_reduce, ExecMode};
use crate::problem::{apply_operator, StokesProblem};
use crate::sampler::PointSet;

/// Per-term weights. Defaults to unit weights on all three terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub residual: f64,
    pub divergence: f64,
    pub boundary: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            residual: 1.0,
            divergence: 1.0,
            boundary: 1.0,
        }
    }
}

/// The three objective terms and their sum. Each term is already
/// weighted and averaged over its own batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub residual: f64,
    pub divergence: f64,
    pub boundary: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn assemble(residual: f64, divergence: f64, boundary: f64) -> Self {
        LossBreakdown {
            residual,
            divergence,
            boundary,
            total: residual + divergence + boundary,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// Velocity value/derivative blocks and pressure gradient at one point —
/// everything the momentum residual needs.
pub struct FieldBundle {
    pub u: ExtendedBlock,
    pub p_grad: Vec<f64>,
}

/// A velocity/pressure field the objective can be evaluated on. The
/// network is the production implementation; tests substitute exact
/// solutions with finite-difference bundles.
pub trait FlowField: Sync {
    fn dim(&self) -> usize;
    fn bundle(&self, x: &[f64]) -> Result<FieldBundle>;
    fn velocity(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// The trained networks viewed as a [`FlowField`].
pub struct NetworkField<'a> {
    params: &'a NetworkParams,
}

impl<'a> NetworkField<'a> {
    pub fn new(params: &'a NetworkParams) -> Self {
        NetworkField { params }
    }
}

impl FlowField for NetworkField<'_> {
    fn dim(&self) -> usize {
        self.params.arch().input_dim
    }

    fn bundle(&self, x: &[f64]) -> Result<FieldBundle> {
        let vel = forward_extended(self.params, NetKind::Velocity, x)?;
        let pres = forward_extended(self.params, NetKind::Pressure, x)?;
        Ok(FieldBundle {
            u: vel.output,
            p_grad: pres.output.jac,
        })
    }

    fn velocity(&self, x: &[f64]) -> Result<Vec<f64>> {
        forward_value(self.params, NetKind::Velocity, x)
    }
}

fn divergence_of(u: &ExtendedBlock) -> f64 {
    (0..u.rows()).map(|i| u.jac_at(i, i)).sum()
}

/// Squared residual magnitude and squared divergence at one interior
/// point of a generic field.
fn interior_terms(field: &dyn FlowField, problem: &StokesProblem, x: &[f64]) -> Result<(f64, f64)> {
    let bundle = field.bundle(x)?;
    let residual = apply_operator(problem, x, &bundle.u, &bundle.p_grad)?;
    let res2: f64 = residual.iter().map(|r| r * r).sum();
    let div = divergence_of(&bundle.u);
    if !(res2.is_finite() && div.is_finite()) {
        return Err(DgmError::NonFinite(format!("interior loss at {x:?}")));
    }
    Ok((res2, div * div))
}

/// Squared boundary mismatch at one boundary point of a generic field.
fn boundary_term(field: &dyn FlowField, problem: &StokesProblem, r: &[f64]) -> Result<f64> {
    let u = field.velocity(r)?;
    let g = (problem.boundary)(r);
    let m2: f64 = u.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum();
    if !m2.is_finite() {
        return Err(DgmError::NonFinite(format!("boundary loss at {r:?}")));
    }
    Ok(m2)
}

/// Single-sample loss `G(theta, s)` for the pair `s = (x, r)`: squared
/// residual and divergence at the interior point `x` plus squared
/// boundary mismatch at `r`.
pub fn point_loss(params: &NetworkParams, problem: &StokesProblem, x: &[f64], r: &[f64]) -> Result<f64> {
    let field = NetworkField::new(params);
    let (res2, div2) = interior_terms(&field, problem, x)?;
    let bnd = boundary_term(&field, problem, r)?;
    Ok(res2 + div2 + bnd)
}

/// Gradient of [`point_loss`] over the stacked parameters.
pub fn point_loss_gradient(
    params: &NetworkParams,
    problem: &StokesProblem,
    x: &[f64],
    r: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; params.total_len()];
    let (res2, div2) = interior_grad_accum(params, problem, x, 1.0, &LossWeights::default(), &mut grad)?;
    let bnd = boundary_grad_accum(params, problem, r, 1.0, &LossWeights::default(), &mut grad)?;
    Ok((res2 + div2 + bnd, grad))
}

/// Gradient of the interior terms at a single point (unit scale).
pub fn interior_gradient(params: &NetworkParams, problem: &StokesProblem, x: &[f64]) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; params.total_len()];
    interior_grad_accum(params, problem, x, 1.0, &LossWeights::default(), &mut grad)?;
    Ok(grad)
}

/// Gradient of the boundary term at a single point (unit scale).
pub fn boundary_gradient(params: &NetworkParams, problem: &StokesProblem, r: &[f64]) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; params.total_len()];
    boundary_grad_accum(params, problem, r, 1.0, &LossWeights::default(), &mut grad)?;
    Ok(grad)
}

/// Interior-point contribution: accumulates `scale * w * d(term)/d(theta)`
/// into `grad` and returns the unweighted `(res^2, div^2)` pair.
fn interior_grad_accum(
    params: &NetworkParams,
    problem: &StokesProblem,
    x: &[f64],
    scale: f64,
    weights: &LossWeights,
    grad: &mut [f64],
) -> Result<(f64, f64)> {
    let d = problem.dim;
    let vel = forward_extended(params, NetKind::Velocity, x)?;
    let pres = forward_extended(params, NetKind::Pressure, x)?;
    let residual = apply_operator(problem, x, &vel.output, &pres.output.jac)?;
    let div = divergence_of(&vel.output);
    let res2: f64 = residual.iter().map(|r| r * r).sum();
    if !(res2.is_finite() && div.is_finite()) {
        return Err(DgmError::NonFinite(format!("interior loss at {x:?}")));
    }

    // d(res^2)/d(U_i) = 2 r_i alpha; d/d(lap U_i) = -2 r_i nu;
    // d(div^2)/d(jac_ii) = 2 div
    let w_res = scale * weights.residual;
    let w_div = scale * weights.divergence;
    let mut vseed = ExtendedBlock::zeros(d, d);
    for i in 0..d {
        vseed.value[i] = w_res * 2.0 * residual[i] * problem.alpha;
        *vseed.jac_at_mut(i, i) = w_div * 2.0 * div;
        for j in 0..d {
            *vseed.d2_at_mut(i, j) += -w_res * 2.0 * residual[i] * problem.nu;
        }
    }
    backward_params_into(&vel, params, &vseed, grad)?;

    let mut pseed = ExtendedBlock::zeros(1, d);
    for i in 0..d {
        pseed.jac[i] = w_res * 2.0 * residual[i];
    }
    backward_params_into(&pres, params, &pseed, grad)?;
    Ok((res2, div * div))
}

/// Boundary-point contribution; returns the unweighted squared mismatch.
fn boundary_grad_accum(
    params: &NetworkParams,
    problem: &StokesProblem,
    r: &[f64],
    scale: f64,
    weights: &LossWeights,
    grad: &mut [f64],
) -> Result<f64> {
    let d = problem.dim;
    let vel = forward_extended(params, NetKind::Velocity, r)?;
    let g = (problem.boundary)(r);
    let mut m2 = 0.0;
    let mut vseed = ExtendedBlock::zeros(d, d);
    for i in 0..d {
        let m = vel.output.value[i] - g[i];
        m2 += m * m;
        vseed.value[i] = scale * weights.boundary * 2.0 * m;
    }
    if !m2.is_finite() {
        return Err(DgmError::NonFinite(format!("boundary loss at {r:?}")));
    }
    backward_params_into(&vel, params, &vseed, grad)?;
    Ok(m2)
}

fn check_batches(interior: &PointSet, boundary: &PointSet) -> Result<()> {
    if interior.is_empty() {
        return Err(DgmError::EmptyBatch("interior batch"));
    }
    if boundary.is_empty() {
        return Err(DgmError::EmptyBatch("boundary batch"));
    }
    Ok(())
}

struct TermAcc {
    res2: f64,
    div2: f64,
    err: Option<DgmError>,
}

/// Batch objective over a generic field. Interior terms averaged over
/// the interior batch, boundary term over the boundary batch.
pub fn batch_objective(
    field: &dyn FlowField,
    problem: &StokesProblem,
    interior: &PointSet,
    boundary: &PointSet,
) -> Result<LossBreakdown> {
    batch_objective_weighted(field, problem, interior, boundary, &LossWeights::default(), ExecMode::Auto)
}

pub fn batch_objective_weighted(
    field: &dyn FlowField,
    problem: &StokesProblem,
    interior: &PointSet,
    boundary: &PointSet,
    weights: &LossWeights,
    mode: ExecMode,
) -> Result<LossBreakdown> {
    check_batches(interior, boundary)?;
    let ni = interior.len() as f64;
    let nb = boundary.len() as f64;

    let int_acc = chunk_reduce(
        mode,
        interior.len(),
        || TermAcc { res2: 0.0, div2: 0.0, err: None },
        |acc, i| {
            if acc.err.is_some() {
                return;
            }
            match interior_terms(field, problem, interior.get(i)) {
                Ok((r, d)) => {
                    acc.res2 += r;
                    acc.div2 += d;
                }
                Err(e) => acc.err = Some(e),
            }
        },
        |l, r| {
            l.res2 += r.res2;
            l.div2 += r.div2;
            if l.err.is_none() {
                l.err = r.err;
            }
        },
    )
    .expect("non-empty interior batch");
    if let Some(e) = int_acc.err {
        return Err(e);
    }

    let bnd_acc = chunk_reduce(
        mode,
        boundary.len(),
        || (0.0f64, None::<DgmError>),
        |acc, i| {
            if acc.1.is_some() {
                return;
            }
            match boundary_term(field, problem, boundary.get(i)) {
                Ok(b) => acc.0 += b,
                Err(e) => acc.1 = Some(e),
            }
        },
        |l, r| {
            l.0 += r.0;
            if l.1.is_none() {
                l.1 = r.1;
            }
        },
    )
    .expect("non-empty boundary batch");
    if let Some(e) = bnd_acc.1 {
        return Err(e);
    }

    Ok(LossBreakdown::assemble(
        weights.residual * int_acc.res2 / ni,
        weights.divergence * int_acc.div2 / ni,
        weights.boundary * bnd_acc.0 / nb,
    ))
}

/// Loss and exact gradient of the batch objective over the stacked
/// parameters `theta1 (+) theta2`.
pub fn objective_gradient(
    params: &NetworkParams,
    problem: &StokesProblem,
    interior: &PointSet,
    boundary: &PointSet,
) -> Result<(LossBreakdown, Vec<f64>)> {
    objective_gradient_weighted(params, problem, interior, boundary, &LossWeights::default(), ExecMode::Auto)
}

struct GradAcc {
    res2: f64,
    div2: f64,
    bnd: f64,
    grad: Vec<f64>,
    err: Option<DgmError>,
}

pub fn objective_gradient_weighted(
    params: &NetworkParams,
    problem: &StokesProblem,
    interior: &PointSet,
    boundary: &PointSet,
    weights: &LossWeights,
    mode: ExecMode,
) -> Result<(LossBreakdown, Vec<f64>)> {
    check_batches(interior, boundary)?;
    let n = params.total_len();
    let ni = interior.len();
    let nb = boundary.len();
    let int_scale = 1.0 / ni as f64;
    let bnd_scale = 1.0 / nb as f64;

    // one pass over interior + boundary indices: 0..ni interior,
    // ni..ni+nb boundary
    let acc = chunk_reduce(
        mode,
        ni + nb,
        || GradAcc {
            res2: 0.0,
            div2: 0.0,
            bnd: 0.0,
            grad: vec![0.0; n],
            err: None,
        },
        |acc, i| {
            if acc.err.is_some() {
                return;
            }
            let r = if i < ni {
                interior_grad_accum(params, problem, interior.get(i), int_scale, weights, &mut acc.grad).map(
                    |(r2, d2)| {
                        acc.res2 += r2;
                        acc.div2 += d2;
                    },
                )
            } else {
                boundary_grad_accum(params, problem, boundary.get(i - ni), bnd_scale, weights, &mut acc.grad)
                    .map(|b| acc.bnd += b)
            };
            if let Err(e) = r {
                acc.err = Some(e);
            }
        },
        |l, r| {
            l.res2 += r.res2;
            l.div2 += r.div2;
            l.bnd += r.bnd;
            for (a, b) in l.grad.iter_mut().zip(&r.grad) {
                *a += b;
            }
            if l.err.is_none() {
                l.err = r.err;
            }
        },
    )
    .expect("non-empty batches");
    if let Some(e) = acc.err {
        return Err(e);
    }

    let loss = LossBreakdown::assemble(
        weights.residual * acc.res2 / ni as f64,
        weights.divergence * acc.div2 / ni as f64,
        weights.boundary * acc.bnd / nb as f64,
    );
    Ok((loss, acc.grad))
}
