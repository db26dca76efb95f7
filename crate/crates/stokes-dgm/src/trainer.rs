//! The stochastic-gradient training loop.
//!
//! Each iteration draws a batch, computes the objective gradient over
//! the stacked parameters, and applies one optimizer update with the
//! scheduled step size `lr0 / (1 + decay * n)`. Training stops at the
//! iteration cap, when the trailing-window average gradient norm falls
//! below the tolerance, or when the loss goes non-finite (in which case
//! the last checkpointed parameters are preserved).
//!
//! Checkpoint rows carry the objective over the full dataset plus, when
//! an exact solution exists, velocity errors over the dataset interior.
//! Fresh-grid errors for reporting come from `metrics::eval_grid`.

use std::collections::VecDeque;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{DgmError, Result};
use crate::metrics::{err_l1, err_l2};
use crate::network::{predict, Architecture, NetworkParams};
use crate::objective::{batch_objective_weighted, objective_gradient_weighted, LossBreakdown, LossWeights, NetworkField};
use crate::optimizer::{Optimizer, OptimizerKind};
use crate::parallel::ExecMode;
use crate::problem::StokesProblem;
use crate::sampler::{BatchSampler, Dataset, SamplingMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_iterations: u64,
    pub optimizer: OptimizerKind,
    /// Initial learning rate, in (0, 1).
    pub lr0: f64,
    /// Inverse-time decay constant; 0 keeps the rate constant.
    pub lr_decay: f64,
    pub batch_interior: usize,
    pub batch_boundary: usize,
    /// Stop when the trailing-window average gradient norm drops below
    /// this.
    pub grad_norm_tolerance: f64,
    pub grad_norm_window: usize,
    /// Checkpoint stride in iterations.
    pub eval_every: u64,
    pub seed: u64,
    pub sampling: SamplingMode,
    pub loss_weights: LossWeights,
    /// Zeroes the wall-clock column so histories are byte-reproducible.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iterations: 20_000,
            optimizer: OptimizerKind::Adam,
            lr0: 1e-3,
            lr_decay: 0.0,
            batch_interior: 128,
            batch_boundary: 32,
            grad_norm_tolerance: 1e-8,
            grad_norm_window: 100,
            eval_every: 1000,
            seed: 0,
            sampling: SamplingMode::Fixed,
            loss_weights: LossWeights::default(),
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(DgmError::Config("max_iterations must be >= 1".into()));
        }
        if !(self.lr0 > 0.0 && self.lr0 < 1.0) {
            return Err(DgmError::Config(format!("lr0 must lie in (0,1), got {}", self.lr0)));
        }
        if self.lr_decay < 0.0 {
            return Err(DgmError::Config("lr_decay must be >= 0".into()));
        }
        if self.batch_interior == 0 || self.batch_boundary == 0 {
            return Err(DgmError::Config("batch sizes must be positive".into()));
        }
        if self.grad_norm_window == 0 {
            return Err(DgmError::Config("grad_norm_window must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(DgmError::Config("eval_every must be positive".into()));
        }
        Ok(())
    }
}

/// Inverse-time step-size schedule `lr0 / (1 + decay * n)`; strictly
/// decreasing for positive decay, always in `(0, lr0]`.
pub fn lr_schedule(config: &TrainConfig, n: u64) -> f64 {
    config.lr0 / (1.0 + config.lr_decay * n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    MaxIters,
    GradNorm,
    Diverged,
    User,
}

/// One checkpoint row: objective over the full dataset, velocity errors
/// over the dataset interior (when an exact solution exists), step size
/// and elapsed wall time.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRecord {
    pub iteration: u64,
    pub loss: LossBreakdown,
    pub err_l1: Option<f64>,
    pub err_l2: Option<f64>,
    pub lr: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
    pub final_params: NetworkParams,
    pub termination: TerminationReason,
    /// Number of optimizer updates actually applied.
    pub iterations: u64,
}

impl TrainHistory {
    pub fn final_record(&self) -> &HistoryRecord {
        self.records.last().expect("history always has the initial record")
    }

    /// CSV columns: iter,J,residual,divergence,boundary,errL1,errL2,lr,wall_ms.
    /// Error columns stay empty for problems without an exact solution.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,J,residual,divergence,boundary,errL1,errL2,lr,wall_ms")?;
        for r in &self.records {
            let e1 = r.err_l1.map(|v| v.to_string()).unwrap_or_default();
            let e2 = r.err_l2.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.iteration,
                r.loss.total,
                r.loss.residual,
                r.loss.divergence,
                r.loss.boundary,
                e1,
                e2,
                r.lr,
                r.wall_ms
            )?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Derive decorrelated stream seeds from the config seed.
fn subseed(seed: u64, stream: u64) -> u64 {
    // splitmix64 of seed + stream
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn evaluate_record(
    params: &NetworkParams,
    problem: &StokesProblem,
    dataset: &Dataset,
    config: &TrainConfig,
    iteration: u64,
    lr: f64,
    started: &Instant,
) -> Result<HistoryRecord> {
    let field = NetworkField::new(params);
    let loss = batch_objective_weighted(
        &field,
        problem,
        &dataset.interior,
        &dataset.boundary,
        &config.loss_weights,
        ExecMode::Auto,
    )?;
    let (e1, e2) = match &problem.exact {
        Some(exact) => {
            let n = dataset.interior.len();
            let d = dataset.dim;
            let mut pred = Vec::with_capacity(n * d);
            let mut truth = Vec::with_capacity(n * d);
            for x in dataset.interior.iter() {
                let (u, _) = predict(params, x)?;
                pred.extend_from_slice(&u);
                truth.extend_from_slice(&exact(x).0);
            }
            (Some(err_l1(&pred, &truth, d)?), Some(err_l2(&pred, &truth, d)?))
        }
        None => (None, None),
    };
    let wall_ms = if config.deterministic {
        0
    } else {
        started.elapsed().as_millis() as u64
    };
    Ok(HistoryRecord {
        iteration,
        loss,
        err_l1: e1,
        err_l2: e2,
        lr,
        wall_ms,
    })
}

/// Run the training loop. Deterministic for a fixed config seed: batch
/// order, initialization and the chunked gradient reduction are all
/// reproducible.
pub fn train(
    problem: &StokesProblem,
    dataset: &Dataset,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    arch.validate()?;
    if arch.input_dim != problem.dim || dataset.dim != problem.dim {
        return Err(DgmError::shape(
            "train dimensions (problem/arch/dataset)",
            problem.dim.to_string(),
            format!("{}/{}", arch.input_dim, dataset.dim),
        ));
    }
    if config.sampling == SamplingMode::Fixed {
        if config.batch_interior > dataset.interior.len() || config.batch_boundary > dataset.boundary.len() {
            return Err(DgmError::Config(format!(
                "batch sizes ({}, {}) exceed dataset sizes ({}, {})",
                config.batch_interior,
                config.batch_boundary,
                dataset.interior.len(),
                dataset.boundary.len()
            )));
        }
    }

    let started = Instant::now();
    let mut params = NetworkParams::init(arch, subseed(config.seed, 0))?;
    let mut sampler = BatchSampler::new(dataset, config.sampling, subseed(config.seed, 1));
    let mut optimizer = Optimizer::new(config.optimizer, params.total_len());
    let mut window: VecDeque<f64> = VecDeque::with_capacity(config.grad_norm_window);

    let mut records = vec![evaluate_record(&params, problem, dataset, config, 0, lr_schedule(config, 0), &started)?];
    let mut last_checkpoint = params.clone();
    let mut iterations = 0;
    let mut termination = TerminationReason::MaxIters;

    for n in 0..config.max_iterations {
        let (xb, rb) = sampler.next_batch(config.batch_interior, config.batch_boundary)?;
        let step = objective_gradient_weighted(&params, problem, &xb, &rb, &config.loss_weights, ExecMode::Auto);
        let (loss, grad) = match step {
            Ok(ok) => ok,
            Err(DgmError::NonFinite(_)) => {
                termination = TerminationReason::Diverged;
                params = last_checkpoint.clone();
                break;
            }
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            termination = TerminationReason::Diverged;
            params = last_checkpoint.clone();
            break;
        }

        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if window.len() == config.grad_norm_window {
            window.pop_front();
        }
        window.push_back(gnorm);
        let avg = window.iter().sum::<f64>() / window.len() as f64;
        if avg <= config.grad_norm_tolerance {
            termination = TerminationReason::GradNorm;
            break;
        }

        let lr = lr_schedule(config, n);
        optimizer.step(params.stacked_mut(), &grad, lr);
        iterations = n + 1;

        if iterations % config.eval_every == 0 {
            records.push(evaluate_record(&params, problem, dataset, config, iterations, lr, &started)?);
            last_checkpoint = params.clone();
        }
    }

    if records.last().map(|r| r.iteration) != Some(iterations) {
        let lr = lr_schedule(config, iterations.saturating_sub(1));
        records.push(evaluate_record(&params, problem, dataset, config, iterations, lr, &started)?);
    }

    Ok(TrainHistory {
        records,
        final_params: params,
        termination,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::point_loss;
    use crate::sampler::PointSet;

    fn quick_config() -> TrainConfig {
        TrainConfig {
            max_iterations: 50,
            batch_interior: 8,
            batch_boundary: 4,
            eval_every: 25,
            seed: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schedule_values() {
        let mut c = TrainConfig::default();
        c.lr0 = 0.01;
        c.lr_decay = 1e-4;
        assert_eq!(lr_schedule(&c, 0), 0.01);
        assert!((lr_schedule(&c, 10_000) - 0.005).abs() < 1e-15);
        c.lr_decay = 0.0;
        assert_eq!(lr_schedule(&c, 123_456), 0.01);
    }

    #[test]
    fn schedule_is_decreasing_and_bounded() {
        let mut c = TrainConfig::default();
        c.lr0 = 0.5;
        c.lr_decay = 0.01;
        let mut prev = f64::INFINITY;
        for n in 0..1000 {
            let lr = lr_schedule(&c, n);
            assert!(lr > 0.0 && lr <= c.lr0);
            assert!(lr < prev);
            prev = lr;
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut c = TrainConfig::default();
        c.lr0 = 1.5;
        assert!(c.validate().is_err());
        c.lr0 = 0.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.max_iterations = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn tolerance_above_initial_gradient_stops_before_any_update() {
        let problem = StokesProblem::by_name("stokes2d", None, None).unwrap();
        let dataset = Dataset::sample(2, 60, 0.25, 3).unwrap();
        let arch = Architecture::arch_k(1, 2);
        let mut config = quick_config();
        config.grad_norm_tolerance = 1e12;
        let history = train(&problem, &dataset, &arch, &config).unwrap();
        assert_eq!(history.termination, TerminationReason::GradNorm);
        assert_eq!(history.iterations, 0);
        // params unchanged from initialization
        let init = NetworkParams::init(&arch, subseed(config.seed, 0)).unwrap();
        assert_eq!(history.final_params.stacked(), init.stacked());
        assert_eq!(history.records.first().unwrap().iteration, 0);
    }

    #[test]
    fn single_sgd_step_decreases_a_fixed_point_loss() {
        // 1-hidden-unit net, one fixed sample pair, small steps: the
        // paired loss must fall over the first iterations
        let problem = StokesProblem::by_name("stokes2d", None, None).unwrap();
        let arch = Architecture::new(1, 1, crate::autodiff::Activation::Tanh, 2);
        let mut params = NetworkParams::init(&arch, 5).unwrap();
        let x = [0.4, 0.6];
        let r = [0.0, 0.3];
        let mut opt = Optimizer::new(OptimizerKind::Sgd, params.total_len());
        let mut prev = point_loss(&params, &problem, &x, &r).unwrap();
        for _ in 0..10 {
            let (_, grad) = crate::objective::point_loss_gradient(&params, &problem, &x, &r).unwrap();
            opt.step(params.stacked_mut(), &grad, 1e-4);
            let now = point_loss(&params, &problem, &x, &r).unwrap();
            assert!(now < prev, "loss must strictly decrease: {now} vs {prev}");
            prev = now;
        }
    }

    #[test]
    fn sgd_step_with_tiny_rate_never_increases_the_batch_objective() {
        let problem = StokesProblem::by_name("general_stokes2d", None, None).unwrap();
        let dataset = Dataset::sample(2, 40, 0.25, 8).unwrap();
        for seed in 0..20u64 {
            let arch = Architecture::arch_k(1 + (seed as usize) % 2, 2);
            let mut params = NetworkParams::init(&arch, seed).unwrap();
            let mut xs = PointSet::new(2);
            let mut rs = PointSet::new(2);
            for i in 0..8 {
                xs.push(dataset.interior.get(i));
            }
            for i in 0..4 {
                rs.push(dataset.boundary.get(i));
            }
            let (before, grad) =
                crate::objective::objective_gradient(&params, &problem, &xs, &rs).unwrap();
            let mut opt = Optimizer::new(OptimizerKind::Sgd, params.total_len());
            opt.step(params.stacked_mut(), &grad, 1e-6);
            let field = NetworkField::new(&params);
            let after =
                crate::objective::batch_objective(&field, &problem, &xs, &rs).unwrap();
            assert!(
                after.total <= before.total + 1e-15,
                "seed {seed}: {} -> {}",
                before.total,
                after.total
            );
        }
    }

    #[test]
    fn history_is_deterministic_for_a_fixed_seed() {
        let problem = StokesProblem::by_name("stokes2d", None, None).unwrap();
        let dataset = Dataset::sample(2, 80, 0.25, 2).unwrap();
        let arch = Architecture::arch_k(1, 2);
        let mut config = quick_config();
        config.deterministic = true;
        let a = train(&problem, &dataset, &arch, &config).unwrap();
        let b = train(&problem, &dataset, &arch, &config).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_params.stacked(), b.final_params.stacked());
    }

    #[test]
    fn history_iterations_increase_and_wall_clock_is_monotone() {
        let problem = StokesProblem::by_name("stokes2d", None, None).unwrap();
        let dataset = Dataset::sample(2, 80, 0.25, 2).unwrap();
        let arch = Architecture::arch_k(1, 2);
        let history = train(&problem, &dataset, &arch, &quick_config()).unwrap();
        assert_eq!(history.termination, TerminationReason::MaxIters);
        assert_eq!(history.iterations, 50);
        for pair in history.records.windows(2) {
            assert!(pair[1].iteration > pair[0].iteration);
            assert!(pair[1].wall_ms >= pair[0].wall_ms);
        }
        assert_eq!(history.final_record().iteration, 50);
    }

    #[test]
    fn csv_has_the_documented_columns() {
        let problem = StokesProblem::by_name("stokes2d", None, None).unwrap();
        let dataset = Dataset::sample(2, 60, 0.25, 2).unwrap();
        let arch = Architecture::arch_k(1, 2);
        let history = train(&problem, &dataset, &arch, &quick_config()).unwrap();
        let mut buf = Vec::new();
        history.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,J,residual,divergence,boundary,errL1,errL2,lr,wall_ms"
        );
        let first = lines.next().unwrap();
        assert_eq!(first.split(',').count(), 9);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let problem = StokesProblem::by_name("stokes3d", None, None).unwrap();
        let dataset = Dataset::sample(2, 60, 0.25, 2).unwrap();
        let arch = Architecture::arch_k(1, 2);
        assert!(train(&problem, &dataset, &arch, &quick_config()).is_err());
    }
}
