//! First-order parameter updates: plain SGD and Adam.

use serde::{Deserialize, Serialize};

use crate::error::{DgmError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam
    }
}

impl OptimizerKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(DgmError::Config(format!("unknown optimizer '{other}' (expected sgd or adam)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

/// Adam moment estimates (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

#[derive(Clone, Debug)]
pub enum Optimizer {
    Sgd,
    Adam(AdamState),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam(AdamState {
                m: vec![0.0; n_params],
                v: vec![0.0; n_params],
                t: 0,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            }),
        }
    }

    /// One update with step size `lr`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        match self {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam(state) => {
                state.t += 1;
                let b1c = 1.0 - state.beta1.powi(state.t as i32);
                let b2c = 1.0 - state.beta2.powi(state.t as i32);
                for i in 0..params.len() {
                    let g = grad[i];
                    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
                    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
                    let m_hat = state.m[i] / b1c;
                    let v_hat = state.v[i] / b2c;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step_is_plain_descent() {
        let mut p = vec![1.0, -2.0];
        let g = vec![0.5, 0.25];
        Optimizer::new(OptimizerKind::Sgd, 2).step(&mut p, &g, 0.1);
        assert_eq!(p, vec![1.0 - 0.05, -2.0 - 0.025]);
    }

    #[test]
    fn adam_converges_on_a_quadratic() {
        // minimize |theta - c|^2
        let c = [3.0, -1.0, 0.5];
        let mut p = vec![0.0; 3];
        let mut opt = Optimizer::new(OptimizerKind::Adam, 3);
        for _ in 0..4000 {
            let g: Vec<f64> = p.iter().zip(&c).map(|(pi, ci)| 2.0 * (pi - ci)).collect();
            opt.step(&mut p, &g, 0.01);
        }
        for (pi, ci) in p.iter().zip(&c) {
            assert!((pi - ci).abs() < 1e-4, "{pi} vs {ci}");
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // bias correction makes the very first Adam step ~lr in the
        // gradient direction, independent of gradient scale
        let mut p = vec![0.0];
        let mut opt = Optimizer::new(OptimizerKind::Adam, 1);
        opt.step(&mut p, &[1234.5], 0.001);
        assert!((p[0] + 0.001).abs() < 1e-8, "{}", p[0]);
    }
}
