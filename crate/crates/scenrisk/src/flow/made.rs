//! Masked dense layers and the residual autoregressive conditioner.
//!
//! Degrees follow the usual masked-autoencoder construction: inputs carry
//! degrees 1..d, hidden units cycle through 1..d-1, and the shift/log-scale
//! heads use strict masks so output i sees only inputs of strictly smaller
//! degree. Residual skips connect equal-degree hidden layers, which keeps
//! the autoregressive property intact.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::tape::{NodeId, Tape};

/// Width multiplier of the hidden layers (2d hidden features).
pub const HIDDEN_MULTIPLIER: usize = 2;

pub fn input_degrees(d: usize) -> Vec<usize> {
    (1..=d).collect()
}

/// Hidden degrees cycle 1..max(1, d-1) so every hidden unit can feed some
/// output through the strict output masks.
pub fn hidden_degrees(d: usize, width: usize) -> Vec<usize> {
    let m = d.saturating_sub(1).max(1);
    (0..width).map(|k| k % m + 1).collect()
}

fn mask_from_degrees(in_deg: &[usize], out_deg: &[usize], strict: bool) -> Array2<f64> {
    Array2::from_shape_fn((in_deg.len(), out_deg.len()), |(i, o)| {
        let connected = if strict {
            out_deg[o] > in_deg[i]
        } else {
            out_deg[o] >= in_deg[i]
        };
        if connected {
            1.0
        } else {
            0.0
        }
    })
}

/// A dense layer whose effective weight is `w * mask` at all times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedDense {
    /// (in, out) weights; masked entries are kept at zero.
    pub w: Array2<f64>,
    /// (1, out) bias row.
    pub b: Array2<f64>,
    /// (in, out) binary connectivity mask.
    pub mask: Array2<f64>,
    pub in_degrees: Vec<usize>,
    pub out_degrees: Vec<usize>,
}

impl MaskedDense {
    /// Random initialization, uniform in +-1/sqrt(fan_in), masked entries
    /// zeroed.
    pub fn new(
        in_deg: &[usize],
        out_deg: &[usize],
        strict: bool,
        rng: &mut dyn RngCore,
    ) -> Self {
        let mask = mask_from_degrees(in_deg, out_deg, strict);
        let bound = 1.0 / (in_deg.len() as f64).sqrt();
        let mut w = Array2::from_shape_fn((in_deg.len(), out_deg.len()), |_| {
            rng.random_range(-bound..bound)
        });
        w *= &mask;
        let b = Array2::from_shape_fn((1, out_deg.len()), |_| rng.random_range(-bound..bound));
        Self {
            w,
            b,
            mask,
            in_degrees: in_deg.to_vec(),
            out_degrees: out_deg.to_vec(),
        }
    }

    pub fn out_features(&self) -> usize {
        self.w.ncols()
    }

    /// Plain evaluation: x @ (w * mask) + b.
    pub fn forward_eval(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let eff = &self.w * &self.mask;
        let mut y = x.dot(&eff);
        y += &self.b.broadcast(y.raw_dim()).expect("bias row");
        y
    }

    /// Tape evaluation; `param_base` is the index of `w` in the canonical
    /// parameter ordering (the bias is `param_base + 1`).
    pub fn forward_tape(&self, tape: &mut Tape, x: NodeId, param_base: usize) -> NodeId {
        let w = tape.param(param_base, self.w.clone());
        let mask = tape.constant(self.mask.clone());
        let eff = tape.mul_elem(w, mask);
        let y = tape.matmul(x, eff);
        let b = tape.param(param_base + 1, self.b.clone());
        tape.add_row(y, b)
    }

    /// Zeroes all weights and biases (used to pin down constant outputs).
    pub fn zero(&mut self) {
        self.w.fill(0.0);
        self.b.fill(0.0);
    }
}

/// Pre-activation residual block of two masked dense layers: the input is
/// passed through relu -> dense -> relu -> dropout -> dense and added back
/// onto the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlock {
    pub first: MaskedDense,
    pub second: MaskedDense,
}

impl ResidualBlock {
    fn new(hidden_deg: &[usize], rng: &mut dyn RngCore) -> Self {
        Self {
            first: MaskedDense::new(hidden_deg, hidden_deg, false, rng),
            second: MaskedDense::new(hidden_deg, hidden_deg, false, rng),
        }
    }

    fn forward_eval(&self, h: &Array2<f64>) -> Array2<f64> {
        let a = h.mapv(|v| v.max(0.0));
        let t = self.first.forward_eval(a.view());
        let a2 = t.mapv(|v| v.max(0.0));
        let u = self.second.forward_eval(a2.view());
        h + &u
    }

    /// Training-mode pass with an inverted-dropout mask applied before the
    /// second dense layer.
    fn forward_tape(
        &self,
        tape: &mut Tape,
        h: NodeId,
        dropout_mask: &Array2<f64>,
        param_base: usize,
    ) -> NodeId {
        let a = tape.relu(h);
        let t = self.first.forward_tape(tape, a, param_base);
        let a2 = tape.relu(t);
        let mask = tape.constant(dropout_mask.clone());
        let dropped = tape.mul_elem(a2, mask);
        let u = self.second.forward_tape(tape, dropped, param_base + 2);
        tape.add(h, u)
    }
}

/// Number of residual blocks in each conditioner.
pub const N_BLOCKS: usize = 2;

/// The autoregressive conditioner of one flow layer: a masked input
/// projection, two pre-activation residual blocks, and strict-masked shift
/// and log-scale heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditioner {
    pub input: MaskedDense,
    pub blocks: Vec<ResidualBlock>,
    pub shift_head: MaskedDense,
    pub log_scale_head: MaskedDense,
    pub dim: usize,
}

/// Parameter tensors per conditioner: input(2) + blocks(2*2*2) + heads(4).
pub const CONDITIONER_PARAMS: usize = 2 + N_BLOCKS * 4 + 4;

impl Conditioner {
    pub fn new(d: usize, rng: &mut dyn RngCore) -> Self {
        let in_deg = input_degrees(d);
        let hid = hidden_degrees(d, HIDDEN_MULTIPLIER * d);
        Self {
            input: MaskedDense::new(&in_deg, &hid, false, rng),
            blocks: (0..N_BLOCKS).map(|_| ResidualBlock::new(&hid, rng)).collect(),
            shift_head: MaskedDense::new(&hid, &in_deg, true, rng),
            log_scale_head: MaskedDense::new(&hid, &in_deg, true, rng),
            dim: d,
        }
    }

    /// Per-coordinate shift and unclamped log-scale, evaluation mode.
    pub fn forward_eval(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut h = self.input.forward_eval(x);
        for block in &self.blocks {
            h = block.forward_eval(&h);
        }
        let shift = self.shift_head.forward_eval(h.view());
        let log_scale = self.log_scale_head.forward_eval(h.view());
        (shift, log_scale)
    }

    /// Training-mode pass; `dropout_masks` has one mask per block.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        x: NodeId,
        dropout_masks: &[Array2<f64>],
        param_base: usize,
    ) -> (NodeId, NodeId) {
        let mut h = self.input.forward_tape(tape, x, param_base);
        let mut base = param_base + 2;
        for (block, mask) in self.blocks.iter().zip(dropout_masks.iter()) {
            h = block.forward_tape(tape, h, mask, base);
            base += 4;
        }
        let shift = self.shift_head.forward_tape(tape, h, base);
        let log_scale = self.log_scale_head.forward_tape(tape, h, base + 2);
        (shift, log_scale)
    }

    /// Zeroes both heads so the conditioner outputs constants (its biases).
    pub fn zero_heads(&mut self) {
        self.shift_head.zero();
        self.log_scale_head.zero();
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut out = vec![&self.input.w, &self.input.b];
        for blk in &self.blocks {
            out.extend([&blk.first.w, &blk.first.b, &blk.second.w, &blk.second.b]);
        }
        out.extend([
            &self.shift_head.w,
            &self.shift_head.b,
            &self.log_scale_head.w,
            &self.log_scale_head.b,
        ]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = vec![&mut self.input.w, &mut self.input.b];
        for blk in &mut self.blocks {
            out.push(&mut blk.first.w);
            out.push(&mut blk.first.b);
            out.push(&mut blk.second.w);
            out.push(&mut blk.second.b);
        }
        out.push(&mut self.shift_head.w);
        out.push(&mut self.shift_head.b);
        out.push(&mut self.log_scale_head.w);
        out.push(&mut self.log_scale_head.b);
        out
    }
}

/// Checks that the masked outputs respect the autoregressive ordering:
/// column i of (shift, log_scale) must not react to inputs with degree
/// >= i+1. Used by tests.
#[cfg(test)]
pub fn check_autoregressive(cond: &Conditioner) -> bool {
    use ndarray::Array1;
    let d = cond.dim;
    let x0 = Array2::zeros((1, d));
    let (s0, a0) = cond.forward_eval(x0.view());
    for j in 0..d {
        let mut x = Array2::zeros((1, d));
        x[[0, j]] = 1.5;
        let (s, a) = cond.forward_eval(x.view());
        for i in 0..=j {
            // coordinate i may depend only on strictly smaller degrees
            let ds = (s[[0, i]] - s0[[0, i]]).abs();
            let da = (a[[0, i]] - a0[[0, i]]).abs();
            if ds > 1e-12 || da > 1e-12 {
                return false;
            }
        }
        let _ = Array1::<f64>::zeros(1);
    }
    true
}
