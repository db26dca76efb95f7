//! Velocity and pressure multilayer perceptrons: architecture family,
//! flat parameter layout, initialization, and the plain forward pass.
//!
//! Both fields are approximated by separate MLPs of equal depth. The
//! velocity net maps `R^d -> R^d` from a single trunk; the pressure net
//! maps `R^d -> R`. Their parameters live in two disjoint flat vectors
//! (`theta1` for velocity, `theta2` for pressure) backed by one
//! contiguous store, so optimizers can step the stacked vector directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;
use crate::error::{DgmError, Result};

/// Which of the two networks an operation addresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Velocity,
    Pressure,
}

/// MLP shape shared by the velocity and pressure nets.
///
/// `arch_k(k, d)` gives the stock family: `k` hidden layers of 16 tanh
/// units each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden_layers: usize,
    pub units_per_layer: usize,
    pub activation: Activation,
    pub input_dim: usize,
}

impl Architecture {
    pub fn new(hidden_layers: usize, units_per_layer: usize, activation: Activation, input_dim: usize) -> Self {
        Architecture {
            hidden_layers,
            units_per_layer,
            activation,
            input_dim,
        }
    }

    /// Stock architecture with `k` hidden layers of 16 tanh units.
    pub fn arch_k(k: usize, input_dim: usize) -> Self {
        Architecture::new(k, 16, Activation::Tanh, input_dim)
    }

    /// The velocity net emits all `d` components from one trunk.
    pub fn velocity_outputs(&self) -> usize {
        self.input_dim
    }

    pub fn pressure_outputs(&self) -> usize {
        1
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers < 1 {
            return Err(DgmError::Config("hidden_layers must be >= 1".into()));
        }
        if self.units_per_layer < 1 {
            return Err(DgmError::Config("units_per_layer must be >= 1".into()));
        }
        if self.input_dim < 1 {
            return Err(DgmError::Config("input_dim must be >= 1".into()));
        }
        Ok(())
    }

    pub fn layout(&self, net: NetKind) -> NetLayout {
        let outputs = match net {
            NetKind::Velocity => self.velocity_outputs(),
            NetKind::Pressure => self.pressure_outputs(),
        };
        NetLayout::new(self.input_dim, self.hidden_layers, self.units_per_layer, outputs)
    }
}

/// One affine stage inside a flat parameter vector: a `rows x cols`
/// weight matrix (row-major) at `w_offset`, then a `rows` bias at
/// `b_offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct StageShape {
    pub rows: usize,
    pub cols: usize,
    pub w_offset: usize,
    pub b_offset: usize,
}

/// Mapping between (layer, row, col) coordinates and flat indices for
/// one net. Hidden layers are followed by the activation; the final
/// stage is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct NetLayout {
    stages: Vec<StageShape>,
    total: usize,
}

impl NetLayout {
    pub fn new(input_dim: usize, hidden_layers: usize, units: usize, outputs: usize) -> Self {
        let mut widths = Vec::with_capacity(hidden_layers + 2);
        widths.push(input_dim);
        widths.extend(std::iter::repeat(units).take(hidden_layers));
        widths.push(outputs);

        let mut stages = Vec::with_capacity(hidden_layers + 1);
        let mut offset = 0;
        for win in widths.windows(2) {
            let (cols, rows) = (win[0], win[1]);
            stages.push(StageShape {
                rows,
                cols,
                w_offset: offset,
                b_offset: offset + rows * cols,
            });
            offset += rows * cols + rows;
        }
        NetLayout { stages, total: offset }
    }

    pub fn stages(&self) -> &[StageShape] {
        &self.stages
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn weight<'a>(&self, flat: &'a [f64], stage: usize) -> &'a [f64] {
        let s = &self.stages[stage];
        &flat[s.w_offset..s.w_offset + s.rows * s.cols]
    }

    pub fn bias<'a>(&self, flat: &'a [f64], stage: usize) -> &'a [f64] {
        let s = &self.stages[stage];
        &flat[s.b_offset..s.b_offset + s.rows]
    }

    pub fn weight_index(&self, stage: usize, row: usize, col: usize) -> usize {
        let s = &self.stages[stage];
        debug_assert!(row < s.rows && col < s.cols);
        s.w_offset + row * s.cols + col
    }

    pub fn bias_index(&self, stage: usize, row: usize) -> usize {
        let s = &self.stages[stage];
        debug_assert!(row < s.rows);
        s.b_offset + row
    }
}

/// Flat parameter store for both nets.
///
/// `theta1` (velocity) and `theta2` (pressure) are disjoint slices of a
/// single backing vector; gradients use the same stacked order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    flat: Vec<f64>,
    theta1_len: usize,
    seed: u64,
    vel_layout: NetLayout,
    pres_layout: NetLayout,
}

impl NetworkParams {
    /// Glorot-uniform weights (`+-sqrt(6/(fan_in+fan_out))` per stage),
    /// zero biases. Bitwise reproducible from `(arch, seed)`.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = NetworkParams::zeros(arch)?;
        for net in [NetKind::Velocity, NetKind::Pressure] {
            let base = params.net_base(net);
            let layout = params.layout(net).clone();
            for (i, stage) in layout.stages().iter().enumerate() {
                let bound = (6.0 / (stage.rows + stage.cols) as f64).sqrt();
                let w_start = base + stage.w_offset;
                for w in &mut params.flat[w_start..w_start + stage.rows * stage.cols] {
                    *w = rng.gen_range(-bound..=bound);
                }
                let _ = i;
            }
        }
        params.seed = seed;
        Ok(params)
    }

    /// All-zero parameters (useful as a base for hand-built nets).
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let vel_layout = arch.layout(NetKind::Velocity);
        let pres_layout = arch.layout(NetKind::Pressure);
        let theta1_len = vel_layout.total_len();
        let total = theta1_len + pres_layout.total_len();
        Ok(NetworkParams {
            arch: arch.clone(),
            flat: vec![0.0; total],
            theta1_len,
            seed: 0,
            vel_layout,
            pres_layout,
        })
    }

    /// Rebuild from the two flat vectors (checkpoint loading).
    pub fn from_parts(arch: &Architecture, theta1: Vec<f64>, theta2: Vec<f64>, seed: u64) -> Result<Self> {
        let mut params = NetworkParams::zeros(arch)?;
        if theta1.len() != params.theta1_len {
            return Err(DgmError::shape(
                "theta1",
                params.theta1_len.to_string(),
                theta1.len().to_string(),
            ));
        }
        if theta2.len() != params.flat.len() - params.theta1_len {
            return Err(DgmError::shape(
                "theta2",
                (params.flat.len() - params.theta1_len).to_string(),
                theta2.len().to_string(),
            ));
        }
        params.flat[..theta1.len()].copy_from_slice(&theta1);
        params.flat[theta1.len()..].copy_from_slice(&theta2);
        params.seed = seed;
        Ok(params)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Velocity-net parameters.
    pub fn theta1(&self) -> &[f64] {
        &self.flat[..self.theta1_len]
    }

    /// Pressure-net parameters.
    pub fn theta2(&self) -> &[f64] {
        &self.flat[self.theta1_len..]
    }

    /// The stacked vector `theta1 (+) theta2`.
    pub fn stacked(&self) -> &[f64] {
        &self.flat
    }

    pub fn stacked_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn total_len(&self) -> usize {
        self.flat.len()
    }

    /// Offset of `net`'s parameters inside the stacked vector.
    pub fn net_base(&self, net: NetKind) -> usize {
        match net {
            NetKind::Velocity => 0,
            NetKind::Pressure => self.theta1_len,
        }
    }

    pub fn net_params(&self, net: NetKind) -> &[f64] {
        match net {
            NetKind::Velocity => self.theta1(),
            NetKind::Pressure => self.theta2(),
        }
    }

    pub fn layout(&self, net: NetKind) -> &NetLayout {
        match net {
            NetKind::Velocity => &self.vel_layout,
            NetKind::Pressure => &self.pres_layout,
        }
    }
}

/// Plain forward pass (no derivative blocks): velocity vector and
/// pressure scalar at `x`.
pub fn predict(params: &NetworkParams, x: &[f64]) -> Result<(Vec<f64>, f64)> {
    let u = forward_value(params, NetKind::Velocity, x)?;
    let p = forward_value(params, NetKind::Pressure, x)?;
    Ok((u, p[0]))
}

/// Value-only forward pass through one net.
pub fn forward_value(params: &NetworkParams, net: NetKind, x: &[f64]) -> Result<Vec<f64>> {
    let arch = params.arch();
    if x.len() != arch.input_dim {
        return Err(DgmError::shape("network input", arch.input_dim.to_string(), x.len().to_string()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(DgmError::NonFinite("network input point".into()));
    }
    let layout = params.layout(net);
    let flat = params.net_params(net);
    let n_stages = layout.num_stages();
    let mut a = x.to_vec();
    for (i, stage) in layout.stages().iter().enumerate() {
        let w = layout.weight(flat, i);
        let b = layout.bias(flat, i);
        let mut z = vec![0.0; stage.rows];
        for r in 0..stage.rows {
            let mut acc = b[r];
            let row = &w[r * stage.cols..(r + 1) * stage.cols];
            for (wj, aj) in row.iter().zip(&a) {
                acc += wj * aj;
            }
            z[r] = acc;
        }
        if i + 1 < n_stages {
            for v in &mut z {
                *v = arch.activation.value(*v);
            }
        }
        a = z;
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_lengths_match_layer_arithmetic() {
        // ARCH-1, d=2: velocity (2*16+16)+(16*2+2) = 82, pressure (2*16+16)+(16*1+1) = 65
        let arch = Architecture::arch_k(1, 2);
        let p = NetworkParams::zeros(&arch).unwrap();
        assert_eq!(p.theta1().len(), 82);
        assert_eq!(p.theta2().len(), 65);
        assert_eq!(p.total_len(), 147);
    }

    #[test]
    fn arch3_has_four_affine_stages_per_net() {
        let arch = Architecture::arch_k(3, 3);
        let p = NetworkParams::zeros(&arch).unwrap();
        assert_eq!(p.layout(NetKind::Velocity).num_stages(), 4);
        assert_eq!(p.layout(NetKind::Pressure).num_stages(), 4);
    }

    #[test]
    fn init_is_deterministic() {
        let arch = Architecture::arch_k(2, 2);
        let a = NetworkParams::init(&arch, 42).unwrap();
        let b = NetworkParams::init(&arch, 42).unwrap();
        assert_eq!(a.stacked(), b.stacked());
        let c = NetworkParams::init(&arch, 43).unwrap();
        assert_ne!(a.stacked(), c.stacked());
    }

    #[test]
    fn init_biases_are_zero_and_weights_bounded() {
        let arch = Architecture::arch_k(2, 2);
        let p = NetworkParams::init(&arch, 7).unwrap();
        for net in [NetKind::Velocity, NetKind::Pressure] {
            let layout = p.layout(net).clone();
            let flat = p.net_params(net);
            for (i, stage) in layout.stages().iter().enumerate() {
                let bound = (6.0 / (stage.rows + stage.cols) as f64).sqrt();
                assert!(layout.weight(flat, i).iter().all(|w| w.abs() <= bound));
                assert!(layout.bias(flat, i).iter().all(|b| *b == 0.0));
            }
        }
    }

    #[test]
    fn flat_index_round_trip() {
        let arch = Architecture::arch_k(2, 3);
        let mut p = NetworkParams::zeros(&arch).unwrap();
        let layout = p.layout(NetKind::Velocity).clone();
        let idx = layout.weight_index(1, 4, 2);
        p.stacked_mut()[idx] = 3.5;
        assert_eq!(layout.weight(p.theta1(), 1)[4 * 16 + 2], 3.5);
        let bidx = layout.bias_index(2, 1);
        p.stacked_mut()[bidx] = -1.25;
        assert_eq!(layout.bias(p.theta1(), 2)[1], -1.25);
    }

    #[test]
    fn zero_params_predict_zero() {
        let arch = Architecture::arch_k(2, 2);
        let p = NetworkParams::zeros(&arch).unwrap();
        let (u, pr) = predict(&p, &[0.3, 0.7]).unwrap();
        assert_eq!(u, vec![0.0, 0.0]);
        assert_eq!(pr, 0.0);
    }

    #[test]
    fn predict_rejects_bad_input() {
        let arch = Architecture::arch_k(1, 2);
        let p = NetworkParams::zeros(&arch).unwrap();
        assert!(predict(&p, &[0.5]).is_err());
        assert!(predict(&p, &[f64::NAN, 0.2]).is_err());
    }

    #[test]
    fn theta_slices_are_disjoint_views() {
        let arch = Architecture::arch_k(1, 2);
        let mut p = NetworkParams::init(&arch, 1).unwrap();
        let before_theta2 = p.theta2().to_vec();
        let (u_before, _) = predict(&p, &[0.4, 0.6]).unwrap();
        // perturb theta2: U must not move
        let base = p.net_base(NetKind::Pressure);
        p.stacked_mut()[base] += 0.5;
        let (u_after, _) = predict(&p, &[0.4, 0.6]).unwrap();
        assert_eq!(u_before, u_after);
        assert_ne!(before_theta2, p.theta2());
    }
}
