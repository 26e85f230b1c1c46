//! The flow model: stacked coupling layers (masked autoregressive
//! transform, flow batch normalization, fixed random permutation) over a
//! standard Gaussian base, with exact log-density via the change of
//! variables formula.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::made::{Conditioner, CONDITIONER_PARAMS, HIDDEN_MULTIPLIER, N_BLOCKS};
use super::tape::{NodeId, Tape};
use crate::dataset::Standardization;
use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::math::LN_2PI;

/// Log-scales are clamped to this magnitude before exponentiation; the
/// clamp sits inside the differentiated graph.
pub const ALPHA_CLAMP: f64 = 7.0;

/// Parameter tensors per coupling layer: conditioner + batch-norm gamma/beta.
pub const LAYER_PARAMS: usize = CONDITIONER_PARAMS + 2;

/// Masked autoregressive transform. In the density (data-to-base)
/// direction: `z_i = (x_i - shift_i(x_<i)) * exp(-alpha_i(x_<i))` with
/// `log|det| = -sum_i alpha_i`, a triangular Jacobian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MafTransform {
    pub conditioner: Conditioner,
}

impl MafTransform {
    pub fn new(d: usize, rng: &mut dyn RngCore) -> Self {
        Self {
            conditioner: Conditioner::new(d, rng),
        }
    }

    /// Data-to-base map; returns z and the per-sample log-determinant.
    pub fn forward_eval(&self, x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let (shift, log_scale) = self.conditioner.forward_eval(x.view());
        let alpha = log_scale.mapv(|a| a.clamp(-ALPHA_CLAMP, ALPHA_CLAMP));
        let z = (x - &shift) * alpha.mapv(|a| (-a).exp());
        let log_det = -alpha.sum_axis(Axis(1));
        (z, log_det)
    }

    /// Base-to-data map, inverting coordinate by coordinate in degree order.
    pub fn inverse_eval(&self, z: &Array2<f64>) -> Array2<f64> {
        let d = self.conditioner.dim;
        let mut x = Array2::<f64>::zeros(z.raw_dim());
        for i in 0..d {
            let (shift, log_scale) = self.conditioner.forward_eval(x.view());
            for r in 0..z.nrows() {
                let a = log_scale[[r, i]].clamp(-ALPHA_CLAMP, ALPHA_CLAMP);
                x[[r, i]] = z[[r, i]] * a.exp() + shift[[r, i]];
            }
        }
        x
    }
}

/// Flow batch normalization. Inference applies the fixed affine map
/// `zhat = gamma * (z - m) / sqrt(v + eps) + beta` with
/// `log|det| = sum_i (log|gamma_i| - 0.5 log(v_i + eps))`; training uses
/// the current batch statistics for both the map and the Jacobian term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowBatchNorm {
    pub gamma: Array2<f64>,
    pub beta: Array2<f64>,
    pub running_mean: Array2<f64>,
    pub running_var: Array2<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl FlowBatchNorm {
    pub fn new(d: usize) -> Self {
        Self {
            gamma: Array2::ones((1, d)),
            beta: Array2::zeros((1, d)),
            running_mean: Array2::zeros((1, d)),
            running_var: Array2::ones((1, d)),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// Inference transform under the running statistics.
    pub fn forward_eval(&self, z: &Array2<f64>) -> (Array2<f64>, f64) {
        let denom = self.running_var.mapv(|v| (v + self.eps).sqrt());
        let shape = z.raw_dim();
        let out = (z - &self.running_mean.broadcast(shape).unwrap())
            / &denom.broadcast(shape).unwrap()
            * &self.gamma.broadcast(shape).unwrap()
            + &self.beta.broadcast(shape).unwrap();
        let log_det = self
            .gamma
            .iter()
            .zip(self.running_var.iter())
            .map(|(g, v)| g.abs().ln() - 0.5 * (v + self.eps).ln())
            .sum();
        (out, log_det)
    }

    pub fn inverse_eval(&self, zhat: &Array2<f64>) -> Array2<f64> {
        let denom = self.running_var.mapv(|v| (v + self.eps).sqrt());
        let shape = zhat.raw_dim();
        (zhat - &self.beta.broadcast(shape).unwrap()) / &self.gamma.broadcast(shape).unwrap()
            * &denom.broadcast(shape).unwrap()
            + &self.running_mean.broadcast(shape).unwrap()
    }

    /// Folds the given batch statistics into the running statistics.
    pub fn update_running(&mut self, batch_mean: &Array2<f64>, batch_var: &Array2<f64>) {
        let m = self.momentum;
        self.running_mean = &self.running_mean * (1.0 - m) + &(batch_mean * m);
        self.running_var = &self.running_var * (1.0 - m) + &(batch_var * m);
    }
}

/// One coupling layer: MAF transform, batch normalization, then a fixed
/// random permutation (log|det| = 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingLayer {
    pub maf: MafTransform,
    pub batch_norm: FlowBatchNorm,
    pub permutation: Vec<usize>,
}

fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

/// Dropout masks for one training pass: one (batch, hidden) mask per
/// residual block per layer, already scaled by 1/(1 - rate).
#[derive(Debug, Clone)]
pub struct DropoutPlan {
    pub masks: Vec<Vec<Array2<f64>>>,
}

impl DropoutPlan {
    /// No dropout: all-ones masks.
    pub fn disabled(n_layers: usize, batch: usize, d: usize) -> Self {
        let hidden = HIDDEN_MULTIPLIER * d;
        Self {
            masks: (0..n_layers)
                .map(|_| (0..N_BLOCKS).map(|_| Array2::ones((batch, hidden))).collect())
                .collect(),
        }
    }

    /// Inverted dropout with keep probability 1 - rate.
    pub fn sample(
        n_layers: usize,
        batch: usize,
        d: usize,
        rate: f64,
        rng: &mut dyn RngCore,
    ) -> Self {
        assert!((0.0..1.0).contains(&rate));
        if rate == 0.0 {
            return Self::disabled(n_layers, batch, d);
        }
        let hidden = HIDDEN_MULTIPLIER * d;
        let keep = 1.0 - rate;
        let masks = (0..n_layers)
            .map(|_| {
                (0..N_BLOCKS)
                    .map(|_| {
                        Array2::from_shape_fn((batch, hidden), |_| {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect()
            })
            .collect();
        Self { masks }
    }
}

/// Batch statistics recorded during a training pass, one per layer.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Array2<f64>,
    pub var: Array2<f64>,
}

/// A trained (or freshly initialized) normalizing flow over a standard
/// Gaussian base. Immutable after training; log-densities are reported in
/// original units when a standardization record is attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowModel {
    pub layers: Vec<CouplingLayer>,
    dim: usize,
    standardization: Option<Standardization>,
    fingerprint: String,
}

impl FlowModel {
    /// Randomly initialized flow with `n_layers` coupling layers, each with
    /// its own random permutation drawn once at construction.
    pub fn new(dim: usize, n_layers: usize, rng: &mut dyn RngCore) -> Self {
        assert!(dim >= 1 && n_layers >= 1);
        let layers = (0..n_layers)
            .map(|_| {
                let mut perm: Vec<usize> = (0..dim).collect();
                perm.shuffle(rng);
                CouplingLayer {
                    maf: MafTransform::new(dim, rng),
                    batch_norm: FlowBatchNorm::new(dim),
                    permutation: perm,
                }
            })
            .collect();
        Self {
            layers,
            dim,
            standardization: None,
            fingerprint: "untrained".to_string(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn set_standardization(&mut self, st: Option<Standardization>) {
        self.standardization = st;
    }

    pub fn training_fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn set_training_fingerprint(&mut self, fp: String) {
        self.fingerprint = fp;
    }

    /// Full data-to-base transform in evaluation mode: returns z and the
    /// per-sample log-determinant of the inverse-map Jacobian.
    ///
    /// Fails with a layer-naming overflow error if any intermediate goes
    /// non-finite.
    pub fn transform_to_base(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        let mut cur = x.clone();
        let mut log_det = Array1::<f64>::zeros(x.nrows());
        for (l, layer) in self.layers.iter().enumerate() {
            let (z, ld) = layer.maf.forward_eval(&cur);
            let (normed, bn_ld) = layer.batch_norm.forward_eval(&z);
            if normed.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalOverflow {
                    layer: l,
                    context: "non-finite value after batch normalization".into(),
                });
            }
            log_det += &ld;
            log_det += bn_ld;
            let mut permuted = Array2::zeros(normed.raw_dim());
            for (k, &p) in layer.permutation.iter().enumerate() {
                permuted.column_mut(k).assign(&normed.column(p));
            }
            cur = permuted;
        }
        Ok((cur, log_det))
    }

    /// Base-to-data transform in evaluation mode.
    pub fn transform_from_base(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        let mut cur = z.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let inv = inverse_permutation(&layer.permutation);
            let mut unpermuted = Array2::zeros(cur.raw_dim());
            for (k, &p) in inv.iter().enumerate() {
                unpermuted.column_mut(k).assign(&cur.column(p));
            }
            let denormed = layer.batch_norm.inverse_eval(&unpermuted);
            cur = layer.maf.inverse_eval(&denormed);
            if cur.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalOverflow {
                    layer: l,
                    context: "non-finite value during inversion".into(),
                });
            }
        }
        Ok(cur)
    }

    /// Per-sample log-density of a batch given in the flow's own input
    /// space (standardized space when a record is attached; the
    /// change-of-variables correction to original units is NOT applied).
    pub fn log_density_batch_internal(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        let (z, log_det) = self.transform_to_base(x)?;
        let base = z
            .rows()
            .into_iter()
            .map(|r| crate::math::std_normal_logpdf_sq(r.dot(&r), self.dim))
            .collect::<Array1<f64>>();
        Ok(base + log_det)
    }

    /// Per-sample log-densities in original units for a batch of points in
    /// original units.
    pub fn log_density_batch(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        match &self.standardization {
            Some(st) => {
                let mut z = x.clone();
                for j in 0..self.dim {
                    let (m, s) = (st.mean[j], st.scale[j]);
                    z.column_mut(j).mapv_inplace(|v| (v - m) / s);
                }
                let lp = self.log_density_batch_internal(&z)?;
                Ok(lp - st.log_scale_sum())
            }
            None => self.log_density_batch_internal(x),
        }
    }

    /// Canonical parameter ordering: per layer, the conditioner tensors
    /// followed by batch-norm gamma and beta.
    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::with_capacity(self.layers.len() * LAYER_PARAMS);
        for layer in &self.layers {
            out.extend(layer.maf.conditioner.params());
            out.push(&layer.batch_norm.gamma);
            out.push(&layer.batch_norm.beta);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::with_capacity(self.layers.len() * LAYER_PARAMS);
        for layer in &mut self.layers {
            out.extend(layer.maf.conditioner.params_mut());
            out.push(&mut layer.batch_norm.gamma);
            out.push(&mut layer.batch_norm.beta);
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.layers.len() * LAYER_PARAMS
    }

    /// Builds the training-mode loss (mean negative log-likelihood of the
    /// batch, batch statistics in the normalization layers, dropout masks
    /// from the plan) on the tape. Returns the loss node and the per-layer
    /// batch statistics for running-average updates.
    pub fn training_graph(
        &self,
        tape: &mut Tape,
        batch: &Array2<f64>,
        dropout: &DropoutPlan,
    ) -> (NodeId, Vec<BatchStats>) {
        let n = batch.nrows();
        assert!(n > 0 && batch.ncols() == self.dim);
        let mut x = tape.constant(batch.clone());
        let mut ll_terms: Vec<NodeId> = Vec::new();
        let mut stats = Vec::with_capacity(self.layers.len());

        for (l, layer) in self.layers.iter().enumerate() {
            let base = l * LAYER_PARAMS;
            let (shift, log_scale) =
                layer
                    .maf
                    .conditioner
                    .forward_tape(tape, x, &dropout.masks[l], base);
            let alpha = tape.clamp(log_scale, -ALPHA_CLAMP, ALPHA_CLAMP);
            let neg_alpha = tape.scale(alpha, -1.0);
            let scale_factor = tape.exp(neg_alpha);
            let diff = tape.sub(x, shift);
            let z = tape.mul_elem(diff, scale_factor);
            // MAF log|det| summed over the batch
            let alpha_sum = tape.sum_all(alpha);
            let maf_ld = tape.scale(alpha_sum, -1.0);
            ll_terms.push(maf_ld);

            // batch normalization with batch statistics
            let mean = tape.col_mean(z);
            let neg_mean = tape.scale(mean, -1.0);
            let centered = tape.add_row(z, neg_mean);
            let sq = tape.mul_elem(centered, centered);
            let var = tape.col_mean(sq);
            let var_eps = tape.add_scalar(var, layer.batch_norm.eps);
            let inv_std = tape.powf(var_eps, -0.5);
            let zhat = tape.mul_row(centered, inv_std);
            let gamma = tape.param(base + CONDITIONER_PARAMS, layer.batch_norm.gamma.clone());
            let beta = tape.param(base + CONDITIONER_PARAMS + 1, layer.batch_norm.beta.clone());
            let scaled = tape.mul_row(zhat, gamma);
            let normed = tape.add_row(scaled, beta);

            // per-sample BN log|det|, identical across the batch
            let ln_gamma = tape.ln_abs(gamma);
            let t1 = tape.sum_all(ln_gamma);
            let ln_var = tape.ln_abs(var_eps);
            let half_ln_var = tape.sum_all(ln_var);
            let t2 = tape.scale(half_ln_var, 0.5);
            let bn_ld = tape.sub(t1, t2);
            let bn_ld_batch = tape.scale(bn_ld, n as f64);
            ll_terms.push(bn_ld_batch);

            stats.push(BatchStats {
                mean: tape.value(mean).clone(),
                var: tape.value(var).clone(),
            });

            x = tape.permute_cols(normed, &layer.permutation);
        }

        // base log-density summed over the batch (the constant term is
        // folded into the final scalar)
        let zsq = tape.mul_elem(x, x);
        let quad_sum = tape.sum_all(zsq);
        let quad = tape.scale(quad_sum, -0.5);
        ll_terms.push(quad);

        let mut total = ll_terms[0];
        for t in &ll_terms[1..] {
            total = tape.add(total, *t);
        }
        let mean_ll = tape.scale(total, 1.0 / n as f64);
        let neg = tape.scale(mean_ll, -1.0);
        let loss = tape.add_scalar(neg, 0.5 * self.dim as f64 * LN_2PI);
        (loss, stats)
    }

    /// Mean negative log-likelihood of the batch in training mode with the
    /// given dropout masks.
    pub fn training_loss(&self, batch: &Array2<f64>, dropout: &DropoutPlan) -> f64 {
        let mut tape = Tape::new();
        let (loss, _) = self.training_graph(&mut tape, batch, dropout);
        tape.scalar(loss)
    }

    /// Loss plus the exact reverse-mode gradient with respect to every
    /// parameter tensor, in canonical parameter order.
    pub fn training_gradient(
        &self,
        batch: &Array2<f64>,
        dropout: &DropoutPlan,
    ) -> (f64, Vec<Array2<f64>>, Vec<BatchStats>) {
        let mut tape = Tape::new();
        let (loss, stats) = self.training_graph(&mut tape, batch, dropout);
        let mut grads = tape.backward(loss, self.n_params());
        // parameters the graph never touched get zero gradients
        for (g, p) in grads.iter_mut().zip(self.params()) {
            if g.dim() == (0, 0) {
                *g = Array2::zeros(p.raw_dim());
            }
        }
        (tape.scalar(loss), grads, stats)
    }
}

impl DensityModel for FlowModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation {
                rows: vec![],
                reason: "query point must be finite".into(),
            });
        }
        let batch = x.to_owned().insert_axis(Axis(0));
        Ok(self.log_density_batch(&batch)?[0])
    }

    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Array2<f64> {
        let z = Array2::from_shape_fn((n, self.dim), |_| {
            let v: f64 = StandardNormal.sample(&mut *rng);
            v
        });
        let x = self
            .transform_from_base(&z)
            .expect("sampling from a finite flow");
        match &self.standardization {
            Some(st) => {
                let mut out = x;
                for j in 0..self.dim {
                    let (m, s) = (st.mean[j], st.scale[j]);
                    out.column_mut(j).mapv_inplace(|v| v * s + m);
                }
                out
            }
            None => x,
        }
    }

    fn fingerprint(&self) -> String {
        format!(
            "flow(d={}, layers={}, {})",
            self.dim,
            self.layers.len(),
            self.fingerprint
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Flow manually pinned to the identity map: zeroed conditioner heads,
    /// gamma 1, beta 0, running mean 0, running var 1 - eps.
    fn identity_flow(dim: usize, n_layers: usize, seed: u64) -> FlowModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flow = FlowModel::new(dim, n_layers, &mut rng);
        for layer in &mut flow.layers {
            layer.maf.conditioner.zero_heads();
            let eps = layer.batch_norm.eps;
            layer.batch_norm.running_var.fill(1.0 - eps);
        }
        flow
    }

    #[test]
    fn identity_flow_reproduces_standard_gaussian() {
        let flow = identity_flow(4, 4, 1);
        let lp = flow.log_density(array![0.0, 0.0, 0.0, 0.0].view()).unwrap();
        assert!((lp - (-2.0 * LN_2PI)).abs() < 1e-7, "lp = {lp}");
        assert!((lp - (-3.6757541)).abs() < 1e-6);
    }

    #[test]
    fn permutation_contributes_zero_log_det() {
        let flow = identity_flow(4, 4, 2);
        let x = array![[0.3, -0.7, 1.1, 0.2]];
        let (_, ld) = flow.transform_to_base(&x).unwrap();
        assert!(ld[0].abs() < 1e-12, "log det = {}", ld[0]);
    }

    #[test]
    fn constant_conditioner_hand_evaluation() {
        // d=1 transform with shift 1 and log-scale ln 2 at x=1: z=0 and
        // log p = -0.5 ln(2 pi) - ln 2
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut maf = MafTransform::new(1, &mut rng);
        maf.conditioner.zero_heads();
        maf.conditioner.shift_head.b[[0, 0]] = 1.0;
        maf.conditioner.log_scale_head.b[[0, 0]] = 2.0f64.ln();
        let x = array![[1.0]];
        let (z, ld) = maf.forward_eval(&x);
        assert!(z[[0, 0]].abs() < 1e-15);
        let log_p = -0.5 * LN_2PI + ld[0];
        assert!((log_p - (-0.5 * LN_2PI - 2.0f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn maf_jacobian_is_lower_triangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let maf = MafTransform::new(4, &mut rng);
        let x0 = Array2::from_shape_fn((1, 4), |_| rng.random::<f64>() - 0.5);
        let (z0, _) = maf.forward_eval(&x0);
        let eps = 1e-6;
        for j in 0..4 {
            let mut xp = x0.clone();
            xp[[0, j]] += eps;
            let (zp, _) = maf.forward_eval(&xp);
            for i in 0..j {
                let deriv = (zp[[0, i]] - z0[[0, i]]) / eps;
                assert!(
                    deriv.abs() < 1e-8,
                    "dz_{i}/dx_{j} = {deriv} should be 0 above the diagonal"
                );
            }
        }
    }

    #[test]
    fn round_trip_is_identity_in_eval_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let flow = FlowModel::new(4, 4, &mut rng);
        let x = Array2::from_shape_fn((100, 4), |_| rng.random::<f64>() * 2.0 - 1.0);
        let (z, _) = flow.transform_to_base(&x).unwrap();
        let back = flow.transform_from_base(&z).unwrap();
        for (a, b) in x.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn identity_flow_samples_are_base_samples() {
        let flow = identity_flow(3, 4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let n = 100_000;
        let s = flow.sample(&mut rng, n);
        let mean = s.mean_axis(Axis(0)).unwrap();
        for j in 0..3 {
            assert!(mean[j].abs() < 3.0 / (n as f64).sqrt() * 1.001, "mean {}", mean[j]);
        }
    }

    #[test]
    fn log_density_finite_at_every_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let flow = FlowModel::new(4, 4, &mut rng);
        let s = flow.sample(&mut rng, 200);
        for r in s.rows() {
            let lp = flow.log_density(r).unwrap();
            assert!(lp.is_finite());
        }
    }

    #[test]
    fn training_and_eval_paths_agree_when_stats_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut flow = FlowModel::new(3, 2, &mut rng);
        let batch = Array2::from_shape_fn((64, 3), |_| rng.random::<f64>() * 2.0 - 1.0);

        // run the training graph once to get the batch statistics
        let plan = DropoutPlan::disabled(2, 64, 3);
        let mut tape = Tape::new();
        let (loss_node, stats) = flow.training_graph(&mut tape, &batch, &plan);
        let train_loss = tape.scalar(loss_node);

        // force the running statistics to the batch statistics: eval-mode
        // mean log-likelihood must equal the training loss (negated)
        for (layer, st) in flow.layers.iter_mut().zip(stats.iter()) {
            layer.batch_norm.running_mean = st.mean.clone();
            layer.batch_norm.running_var = st.var.clone();
        }
        let eval_ll = flow.log_density_batch_internal(&batch).unwrap();
        let mean_eval = eval_ll.mean().unwrap();
        assert!(
            (mean_eval + train_loss).abs() < 1e-10,
            "eval {mean_eval} vs train {}",
            -train_loss
        );
    }

    #[test]
    fn masked_parameters_receive_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let flow = FlowModel::new(4, 2, &mut rng);
        let batch = Array2::from_shape_fn((16, 4), |_| rng.random::<f64>() - 0.5);
        let plan = DropoutPlan::disabled(2, 16, 4);
        let (_, grads, _) = flow.training_gradient(&batch, &plan);
        // weight tensors sit at the even conditioner slots; check every
        // masked weight entry has exactly zero gradient
        for (l, layer) in flow.layers.iter().enumerate() {
            let base = l * LAYER_PARAMS;
            let cond = &layer.maf.conditioner;
            let weight_masks = [
                (&cond.input.mask, base),
                (&cond.blocks[0].first.mask, base + 2),
                (&cond.blocks[0].second.mask, base + 4),
                (&cond.blocks[1].first.mask, base + 6),
                (&cond.blocks[1].second.mask, base + 8),
                (&cond.shift_head.mask, base + 10),
                (&cond.log_scale_head.mask, base + 12),
            ];
            for (mask, idx) in weight_masks {
                for (m, g) in mask.iter().zip(grads[idx].iter()) {
                    if *m == 0.0 {
                        assert_eq!(*g, 0.0, "masked weight received gradient");
                    }
                }
            }
        }
    }

    #[test]
    fn exploded_conditioner_names_the_offending_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut flow = FlowModel::new(3, 3, &mut rng);
        // an absurd shift overflows the subtraction in layer 1
        flow.layers[1].maf.conditioner.shift_head.b.fill(1e308);
        let x = Array2::zeros((4, 3));
        match flow.transform_to_base(&x) {
            Err(Error::NumericalOverflow { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("expected overflow error, got {other:?}"),
        }
    }

    #[test]
    fn serialization_round_trips_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let flow = FlowModel::new(4, 4, &mut rng);
        let json = serde_json::to_string(&flow).unwrap();
        let back: FlowModel = serde_json::from_str(&json).unwrap();
        let x = Array2::from_shape_fn((20, 4), |_| rng.random::<f64>() * 3.0 - 1.5);
        let a = flow.log_density_batch(&x).unwrap();
        let b = back.log_density_batch(&x).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
