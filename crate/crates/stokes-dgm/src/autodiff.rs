//! Extended-forward automatic differentiation for MLPs.
//!
//! Every evaluation propagates three blocks per layer: the value vector,
//! the input-Jacobian `d out_k / d x_j`, and the pure second derivatives
//! `d^2 out_k / d x_j^2`. That is exactly enough to assemble the gradient,
//! divergence and Laplacian terms of the momentum residual without a
//! generic third-order AD engine; mixed partials are never formed.
//!
//! The forward pass records a [`Tape`] of per-stage input blocks. A
//! reverse sweep over that tape turns any scalar weighting of
//! `(value, jac, d2)` into a gradient with respect to the network
//! parameters. Because the second-derivative block is itself built from
//! first derivatives, the reverse sweep through an activation needs its
//! third derivative.

use serde::{Deserialize, Serialize};

use crate::error::{DgmError, Result};
use crate::network::{NetKind, NetworkParams};

/// Twice-differentiable scalar activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(DgmError::Config(format!("unknown activation '{other}' (expected tanh or sigmoid)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// `(sigma, sigma', sigma'')` at `z`.
    #[inline]
    pub fn eval2(self, z: f64) -> (f64, f64, f64) {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = 1.0 - t * t;
                (t, d1, -2.0 * t * d1)
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                let d1 = s * (1.0 - s);
                (s, d1, d1 * (1.0 - 2.0 * s))
            }
        }
    }

    /// Third derivative, used only by the reverse sweep.
    #[inline]
    pub fn third(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = 1.0 - t * t;
                -2.0 * d1 * (1.0 - 3.0 * t * t)
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s)
            }
        }
    }
}

/// Value, input-Jacobian and pure second derivatives of one layer's
/// outputs with respect to the network inputs.
///
/// `jac` and `d2` are row-major `[rows x cols]` where `rows` is the
/// layer width and `cols` the input dimension. The same shape doubles as
/// the adjoint seed for [`backward_params`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedBlock {
    rows: usize,
    cols: usize,
    pub value: Vec<f64>,
    pub jac: Vec<f64>,
    pub d2: Vec<f64>,
}

impl ExtendedBlock {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ExtendedBlock {
            rows,
            cols,
            value: vec![0.0; rows],
            jac: vec![0.0; rows * cols],
            d2: vec![0.0; rows * cols],
        }
    }

    /// The identity block at `x`: value = x, jac = I, d2 = 0.
    pub fn seed(x: &[f64]) -> Self {
        let d = x.len();
        let mut block = ExtendedBlock::zeros(d, d);
        block.value.copy_from_slice(x);
        for j in 0..d {
            block.jac[j * d + j] = 1.0;
        }
        block
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn jac_at(&self, k: usize, j: usize) -> f64 {
        self.jac[k * self.cols + j]
    }

    #[inline]
    pub fn d2_at(&self, k: usize, j: usize) -> f64 {
        self.d2[k * self.cols + j]
    }

    #[inline]
    pub fn jac_at_mut(&mut self, k: usize, j: usize) -> &mut f64 {
        &mut self.jac[k * self.cols + j]
    }

    #[inline]
    pub fn d2_at_mut(&mut self, k: usize, j: usize) -> &mut f64 {
        &mut self.d2[k * self.cols + j]
    }

    /// `sum_j d2[k][j]` — the Laplacian of output `k`.
    pub fn laplacian(&self, k: usize) -> f64 {
        self.d2[k * self.cols..(k + 1) * self.cols].iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.value.iter().chain(&self.jac).chain(&self.d2).all(|v| v.is_finite())
    }
}

/// Push an extended block through an affine map `z = W a + b`.
///
/// Affine maps carry no curvature, so all three blocks transform
/// linearly: `value' = W value + b`, `jac' = W jac`, `d2' = W d2`.
pub fn extend_affine(input: &ExtendedBlock, w: &[f64], b: &[f64]) -> Result<ExtendedBlock> {
    let rows_out = b.len();
    let rows_in = input.rows;
    if w.len() != rows_out * rows_in {
        return Err(DgmError::shape(
            "extend_affine weight",
            format!("{rows_out}x{rows_in} = {}", rows_out * rows_in),
            w.len().to_string(),
        ));
    }
    let cols = input.cols;
    let mut out = ExtendedBlock::zeros(rows_out, cols);
    for i in 0..rows_out {
        let row = &w[i * rows_in..(i + 1) * rows_in];
        let mut acc = b[i];
        for (wj, vj) in row.iter().zip(&input.value) {
            acc += wj * vj;
        }
        out.value[i] = acc;
        for c in 0..cols {
            let mut jacc = 0.0;
            let mut hacc = 0.0;
            for (j, wj) in row.iter().enumerate() {
                jacc += wj * input.jac[j * cols + c];
                hacc += wj * input.d2[j * cols + c];
            }
            out.jac[i * cols + c] = jacc;
            out.d2[i * cols + c] = hacc;
        }
    }
    Ok(out)
}

/// Push an extended block through an elementwise activation.
///
/// With `a_k = sigma(z_k)`:
/// `jac'[k][j] = sigma'(z_k) jac[k][j]` and
/// `d2'[k][j] = sigma''(z_k) jac[k][j]^2 + sigma'(z_k) d2[k][j]`.
pub fn extend_activation(input: &ExtendedBlock, act: Activation) -> ExtendedBlock {
    let (rows, cols) = (input.rows, input.cols);
    let mut out = ExtendedBlock::zeros(rows, cols);
    for k in 0..rows {
        let (s0, s1, s2) = act.eval2(input.value[k]);
        out.value[k] = s0;
        for j in 0..cols {
            let g = input.jac[k * cols + j];
            out.jac[k * cols + j] = s1 * g;
            out.d2[k * cols + j] = s2 * g * g + s1 * input.d2[k * cols + j];
        }
    }
    out
}

#[derive(Clone, Debug)]
enum TapeOp {
    Affine { stage: usize },
    Activation(Activation),
}

/// Ordered record of the extended forward pass through one net.
///
/// `inputs[i]` is the block fed into operation `i`; replaying the ops in
/// order reproduces the recorded blocks bit-for-bit, and the reverse
/// sweep visits them back-to-front.
#[derive(Clone, Debug)]
pub struct Tape {
    net: NetKind,
    ops: Vec<TapeOp>,
    inputs: Vec<ExtendedBlock>,
}

impl Tape {
    pub fn net(&self) -> NetKind {
        self.net
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Re-run the recorded computation, checking each recorded block
    /// against the recomputation. Returns the final output block.
    pub fn replay(&self, params: &NetworkParams) -> Result<ExtendedBlock> {
        let layout = params.layout(self.net);
        let flat = params.net_params(self.net);
        let mut block = self.inputs[0].clone();
        for (i, op) in self.ops.iter().enumerate() {
            if block != self.inputs[i] {
                return Err(DgmError::Domain(format!("tape replay diverged at op {i}")));
            }
            block = match op {
                TapeOp::Affine { stage } => {
                    extend_affine(&block, layout.weight(flat, *stage), layout.bias(flat, *stage))?
                }
                TapeOp::Activation(act) => extend_activation(&block, *act),
            };
        }
        Ok(block)
    }
}

/// Network output with derivative blocks and the tape that produced it.
#[derive(Clone, Debug)]
pub struct ExtendedEval {
    pub output: ExtendedBlock,
    tape: Tape,
}

impl ExtendedEval {
    pub fn net(&self) -> NetKind {
        self.tape.net
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn value(&self) -> &[f64] {
        &self.output.value
    }

    pub fn laplacian(&self, k: usize) -> f64 {
        self.output.laplacian(k)
    }
}

/// Evaluate one net with value, Jacobian and pure second derivatives at
/// `x`, keeping the tape for a later parameter-gradient sweep.
pub fn forward_extended(params: &NetworkParams, net: NetKind, x: &[f64]) -> Result<ExtendedEval> {
    let arch = params.arch();
    if x.len() != arch.input_dim {
        return Err(DgmError::shape(
            "forward_extended input",
            arch.input_dim.to_string(),
            x.len().to_string(),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(DgmError::NonFinite("input point".into()));
    }
    let layout = params.layout(net);
    let flat = params.net_params(net);
    let n_stages = layout.num_stages();

    let mut ops = Vec::with_capacity(2 * n_stages - 1);
    let mut inputs = Vec::with_capacity(2 * n_stages - 1);
    let mut block = ExtendedBlock::seed(x);
    for stage in 0..n_stages {
        let w = layout.weight(flat, stage);
        let b = layout.bias(flat, stage);
        if w.iter().chain(b).any(|v| !v.is_finite()) {
            return Err(DgmError::NonFinite(format!("{:?} net, layer {stage} parameters", net)));
        }
        let next = extend_affine(&block, w, b)?;
        ops.push(TapeOp::Affine { stage });
        inputs.push(block);
        block = next;
        if stage + 1 < n_stages {
            let next = extend_activation(&block, arch.activation);
            ops.push(TapeOp::Activation(arch.activation));
            inputs.push(block);
            block = next;
        }
    }
    if !block.is_finite() {
        return Err(DgmError::NonFinite(format!("{:?} net, layer {} output", net, n_stages - 1)));
    }
    Ok(ExtendedEval {
        output: block,
        tape: Tape { net, ops, inputs },
    })
}

/// Gradient of `<seed, (value, jac, d2)>` with respect to every network
/// parameter (stacked `theta1 (+) theta2` order; entries of the other
/// net stay zero).
///
/// The seed assigns one adjoint weight to each entry of the output
/// block. Rerunning with the same tape and seed is deterministic.
pub fn backward_params(eval: &ExtendedEval, params: &NetworkParams, seed: &ExtendedBlock) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; params.total_len()];
    backward_params_into(eval, params, seed, &mut grad)?;
    Ok(grad)
}

/// Accumulating form of [`backward_params`]: adds into `grad`.
pub fn backward_params_into(
    eval: &ExtendedEval,
    params: &NetworkParams,
    seed: &ExtendedBlock,
    grad: &mut [f64],
) -> Result<()> {
    let out = &eval.output;
    if seed.rows != out.rows || seed.cols != out.cols {
        return Err(DgmError::shape(
            "backward_params seed",
            format!("{}x{}", out.rows, out.cols),
            format!("{}x{}", seed.rows, seed.cols),
        ));
    }
    if grad.len() != params.total_len() {
        return Err(DgmError::shape(
            "backward_params gradient buffer",
            params.total_len().to_string(),
            grad.len().to_string(),
        ));
    }
    let tape = &eval.tape;
    let layout = params.layout(tape.net);
    let flat = params.net_params(tape.net);
    let base = params.net_base(tape.net);
    let cols = out.cols;

    let mut adj = seed.clone();
    for (op, input) in tape.ops.iter().zip(&tape.inputs).rev() {
        match op {
            TapeOp::Affine { stage } => {
                let shape = &layout.stages()[*stage];
                let (rows_out, rows_in) = (shape.rows, shape.cols);
                let w = layout.weight(flat, *stage);
                // parameter gradients: the weight W_ij touches the value,
                // jacobian and curvature rows alike
                for i in 0..rows_out {
                    let av = adj.value[i];
                    let w_row = base + shape.w_offset + i * rows_in;
                    for j in 0..rows_in {
                        let mut g = av * input.value[j];
                        for c in 0..cols {
                            g += adj.jac[i * cols + c] * input.jac[j * cols + c]
                                + adj.d2[i * cols + c] * input.d2[j * cols + c];
                        }
                        grad[w_row + j] += g;
                    }
                    grad[base + shape.b_offset + i] += av;
                }
                // pull the adjoint back through W^T
                let mut prev = ExtendedBlock::zeros(rows_in, cols);
                for i in 0..rows_out {
                    let row = &w[i * rows_in..(i + 1) * rows_in];
                    let av = adj.value[i];
                    for (j, wij) in row.iter().enumerate() {
                        prev.value[j] += wij * av;
                        for c in 0..cols {
                            prev.jac[j * cols + c] += wij * adj.jac[i * cols + c];
                            prev.d2[j * cols + c] += wij * adj.d2[i * cols + c];
                        }
                    }
                }
                adj = prev;
            }
            TapeOp::Activation(act) => {
                let z = input;
                let rows = z.rows;
                let mut prev = ExtendedBlock::zeros(rows, cols);
                for k in 0..rows {
                    let (_, s1, s2) = act.eval2(z.value[k]);
                    let s3 = act.third(z.value[k]);
                    let mut vbar = adj.value[k] * s1;
                    for j in 0..cols {
                        let gj = z.jac[k * cols + j];
                        let hj = z.d2[k * cols + j];
                        let ja = adj.jac[k * cols + j];
                        let ha = adj.d2[k * cols + j];
                        vbar += ja * s2 * gj + ha * (s3 * gj * gj + s2 * hj);
                        prev.jac[k * cols + j] = ja * s1 + ha * 2.0 * s2 * gj;
                        prev.d2[k * cols + j] = ha * s1;
                    }
                    prev.value[k] = vbar;
                }
                adj = prev;
            }
        }
    }
    Ok(())
}
