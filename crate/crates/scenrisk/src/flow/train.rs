//! Flow training: Adam on the mean negative log-likelihood of the fit
//! split, per-iteration validation in evaluation mode, early stopping, and
//! best-of-restarts selection.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{DropoutPlan, FlowModel};
use crate::dataset::{split_n, Dataset, SplitIndices};
use crate::error::{Error, Result};
use crate::seeds;

/// Training hyperparameters. An iteration is one optimizer step on one
/// batch; validation is evaluated after every iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_iterations: usize,
    /// Iterations without validation improvement before a restart stops.
    pub patience: usize,
    /// Independent trainings with fresh initializations and permutations.
    pub restarts: usize,
    pub learning_rate: f64,
    /// Full batch is used when the fit split is smaller than this.
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub n_layers: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            patience: 100,
            restarts: 4,
            learning_rate: 1e-3,
            batch_size: 256,
            dropout_rate: 0.20,
            n_layers: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0
            || self.patience == 0
            || self.restarts == 0
            || self.batch_size == 0
            || self.n_layers == 0
        {
            return Err(Error::InvalidConfig(
                "training counts must all be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(
                "dropout rate must be in [0, 1)".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        format!(
            "iters={} patience={} restarts={} lr={} batch={} dropout={} layers={} seed={}",
            self.max_iterations,
            self.patience,
            self.restarts,
            self.learning_rate,
            self.batch_size,
            self.dropout_rate,
            self.n_layers,
            self.seed
        )
    }
}

/// Adam with bias correction; one moment pair per parameter tensor.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: usize,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Array2<f64>], grads: &[Array2<f64>]) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(&mut **p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let m_hat = *m / b1t;
                    let v_hat = *v / b2t;
                    *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                });
        }
    }
}

/// Per-restart training record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestartReport {
    pub restart: usize,
    pub iterations_run: usize,
    pub best_iteration: usize,
    /// Best validation mean log-likelihood, in original units.
    pub best_validation_ll: f64,
    pub diverged: bool,
}

/// Instrumented record of a full training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub restarts: Vec<RestartReport>,
    pub selected_restart: usize,
    /// Validation mean log-likelihood of the selected snapshot, original units.
    pub validation_ll: f64,
}

/// Trains a flow on the dataset: standardizes, splits 80/20, then runs
/// `config.restarts` independent trainings and returns the snapshot with
/// the best validation mean log-likelihood (earliest restart on ties).
pub fn train_flow(data: &Dataset, config: &TrainConfig) -> Result<(FlowModel, TrainReport)> {
    config.validate()?;
    if data.n() < 20 {
        return Err(Error::TooFewSamples {
            needed: 20,
            got: data.n(),
        });
    }
    let mut split_rng = ChaCha8Rng::seed_from_u64(seeds::derive(config.seed, &[0x5911]));
    let split = split_n(data.n(), &mut split_rng)?;
    train_flow_with_split(data, &split, config)
}

/// As [`train_flow`], but with a caller-provided fit/validation split.
pub fn train_flow_with_split(
    data: &Dataset,
    split: &SplitIndices,
    config: &TrainConfig,
) -> Result<(FlowModel, TrainReport)> {
    config.validate()?;
    let standardized = if data.standardization().is_some() {
        data.clone()
    } else {
        // standardization statistics come from the fit split only, so the
        // validation points stay untouched by held-out information
        let fit_rows = data.select(&split.fit_indices);
        let st = crate::dataset::Standardization::fit(fit_rows.rows())?;
        data.with_standardization(st)?
    };
    let st = standardized
        .standardization()
        .cloned()
        .expect("standardized data carries a record");
    // validation is reported in original units so estimators compare
    let unit_shift = st.log_scale_sum();

    let fit = standardized.select(&split.fit_indices);
    let val = standardized.select(&split.test_indices);
    if fit.n() == 0 || val.n() == 0 {
        return Err(Error::TooFewSamples {
            needed: 5,
            got: standardized.n(),
        });
    }

    let mut best: Option<(FlowModel, f64, usize)> = None;
    let mut reports = Vec::with_capacity(config.restarts);

    for restart in 0..config.restarts {
        let seed = seeds::derive(config.seed, &[1, restart as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match run_restart(&fit, &val, config, &mut rng) {
            Ok((model, report)) => {
                let ll = report.best_validation_ll - unit_shift;
                reports.push(RestartReport {
                    restart,
                    best_validation_ll: ll,
                    ..report
                });
                let better = match &best {
                    Some((_, best_ll, _)) => ll > *best_ll,
                    None => true,
                };
                if better {
                    best = Some((model, ll, restart));
                }
            }
            Err(Error::TrainingFailed { .. }) => {
                log::warn!("flow training restart {restart} diverged; discarding");
                reports.push(RestartReport {
                    restart,
                    iterations_run: 0,
                    best_iteration: 0,
                    best_validation_ll: f64::NEG_INFINITY,
                    diverged: true,
                });
            }
            Err(e) => return Err(e),
        }
    }

    match best {
        Some((mut model, ll, selected)) => {
            model.set_standardization(Some(st));
            model.set_training_fingerprint(config.fingerprint());
            Ok((
                model,
                TrainReport {
                    restarts: reports,
                    selected_restart: selected,
                    validation_ll: ll,
                },
            ))
        }
        None => Err(Error::TrainingFailed {
            restarts: config.restarts,
        }),
    }
}

/// One restart: fresh initialization and permutations, Adam until the
/// iteration cap or `patience` iterations without validation improvement.
/// The returned report's validation value is in standardized units.
fn run_restart(
    fit: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(FlowModel, RestartReport)> {
    let d = fit.dim();
    let mut model = FlowModel::new(d, config.n_layers, rng);
    let shapes: Vec<(usize, usize)> = model.params().iter().map(|p| p.dim()).collect();
    let mut adam = Adam::new(config.learning_rate, &shapes);

    let batch_size = config.batch_size.min(fit.n());
    let mut order: Vec<usize> = (0..fit.n()).collect();
    let mut cursor = order.len(); // force an initial shuffle

    let mut best_ll = f64::NEG_INFINITY;
    let mut best_snapshot: Option<FlowModel> = None;
    let mut best_iteration = 0;
    let mut stall = 0;
    let mut iterations_run = 0;

    for iteration in 1..=config.max_iterations {
        // next batch, reshuffling at each epoch boundary
        if cursor + batch_size > order.len() {
            order.shuffle(rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + batch_size];
        cursor += batch_size;
        let mut batch = Array2::<f64>::zeros((batch_size, d));
        for (k, &i) in idx.iter().enumerate() {
            batch.row_mut(k).assign(&fit.row(i));
        }

        let plan = DropoutPlan::sample(
            config.n_layers,
            batch_size,
            d,
            config.dropout_rate,
            rng,
        );
        let (loss, grads, stats) = model.training_gradient(&batch, &plan);
        if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::TrainingFailed { restarts: 1 });
        }
        {
            let mut params = model.params_mut();
            adam.step(&mut params, &grads);
        }
        for (layer, st) in model.layers.iter_mut().zip(stats.iter()) {
            layer.batch_norm.update_running(&st.mean, &st.var);
        }
        iterations_run = iteration;

        // validation in evaluation mode: running statistics, no dropout
        let val_ll = match model.log_density_batch_internal(val.rows()) {
            Ok(lp) => lp.mean().unwrap(),
            Err(_) => return Err(Error::TrainingFailed { restarts: 1 }),
        };
        if !val_ll.is_finite() {
            return Err(Error::TrainingFailed { restarts: 1 });
        }

        if val_ll > best_ll {
            best_ll = val_ll;
            best_snapshot = Some(model.clone());
            best_iteration = iteration;
            stall = 0;
        } else {
            stall += 1;
            if stall >= config.patience {
                break;
            }
        }
    }

    let snapshot = best_snapshot.ok_or(Error::TrainingFailed { restarts: 1 })?;
    Ok((
        snapshot,
        RestartReport {
            restart: 0,
            iterations_run,
            best_iteration,
            best_validation_ll: best_ll,
            diverged: false,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{DensityModel, GaussianMixture};
    use crate::math::LN_2PI;
    use ndarray::array;
    use rand::Rng;

    fn gaussian_data(n: usize, seed: u64) -> Dataset {
        let cov = array![
            [1.0, 0.4, 0.0, 0.2],
            [0.4, 2.0, 0.3, 0.0],
            [0.0, 0.3, 0.5, 0.1],
            [0.2, 0.0, 0.1, 1.5]
        ];
        let g = GaussianMixture::single(array![1.0, -2.0, 0.5, 3.0], cov).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new(g.sample(&mut rng, n)).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut model = FlowModel::new(4, 2, &mut rng);
        let batch = Array2::from_shape_fn((16, 4), |_| rng.random::<f64>() * 2.0 - 1.0);
        // fixed dropout masks so the loss is a pure function of parameters
        let plan = DropoutPlan::sample(2, 16, 4, 0.2, &mut rng);
        let (_, grads, _) = model.training_gradient(&batch, &plan);

        let h = 1e-5;
        let n_params = model.n_params();
        for t in 0..n_params {
            let shape = model.params()[t].raw_dim();
            for r in 0..shape[0] {
                for c in 0..shape[1] {
                    let orig = model.params()[t][[r, c]];
                    model.params_mut()[t][[r, c]] = orig + h;
                    let lp = model.training_loss(&batch, &plan);
                    model.params_mut()[t][[r, c]] = orig - h;
                    let lm = model.training_loss(&batch, &plan);
                    model.params_mut()[t][[r, c]] = orig;
                    let fd = (lp - lm) / (2.0 * h);
                    let an = grads[t][[r, c]];
                    let denom = fd.abs().max(an.abs()).max(1e-6);
                    assert!(
                        (fd - an).abs() / denom < 1e-4,
                        "param {t} [{r},{c}]: analytic {an} vs fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn constant_conditioner_matches_affine_gradient() {
        // zero all conditioner weights: the flow is z = (x - b_mu) e^{-b_a}
        // per layer with batch norm; check the d=1, single-layer head-bias
        // gradients against the hand-derived affine case (no batch norm by
        // pinning gamma=1, beta=0 and checking only the MAF biases).
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut model = FlowModel::new(1, 1, &mut rng);
        model.layers[0].maf.conditioner.zero_heads();
        let (mu, a) = (0.7, 0.3);
        model.layers[0].maf.conditioner.shift_head.b[[0, 0]] = mu;
        model.layers[0].maf.conditioner.log_scale_head.b[[0, 0]] = a;
        // zero every non-head parameter's influence is already nil; freeze
        // batch norm by construction of the graph (gamma=1, beta=0)
        let batch = array![[1.0], [2.0], [-0.5], [0.3]];
        let plan = DropoutPlan::disabled(1, 4, 1);
        let (_, grads, _) = model.training_gradient(&batch, &plan);

        // hand-derived: with z = (x-mu)e^{-a}, m = mean(z), v = var(z),
        // zh = (z-m)/sqrt(v+eps), loss = mean(zh^2)/2 + 0.5 ln(v+eps)
        //      + a + 0.5 ln(2 pi)
        // d loss / d a: z scales by -z, v by -2v =>
        //   d[0.5 mean(zh^2)]/da = -mean(zh^2) + mean(zh)^2... cross-check
        //   against finite differences instead of a fragile closed form for
        //   the normalized part; the direct -1 term from log|det| and the
        //   translation invariance d loss / d mu = 0 are the affine facts.
        let h = 1e-6;
        for (idx, name) in [(11usize, "shift bias"), (13usize, "log-scale bias")] {
            let orig = model.params()[idx][[0, 0]];
            model.params_mut()[idx][[0, 0]] = orig + h;
            let lp = model.training_loss(&batch, &plan);
            model.params_mut()[idx][[0, 0]] = orig - h;
            let lm = model.training_loss(&batch, &plan);
            model.params_mut()[idx][[0, 0]] = orig;
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (grads[idx][[0, 0]] - fd).abs() < 1e-6,
                "{name}: {} vs {fd}",
                grads[idx][[0, 0]]
            );
        }
        // translation invariance: batch norm removes the mean, so the shift
        // bias has exactly zero gradient in the affine case
        assert!(grads[11][[0, 0]].abs() < 1e-12);
    }

    #[test]
    fn training_fits_correlated_gaussian() {
        let data = gaussian_data(2000, 1);
        let config = TrainConfig {
            seed: 5,
            ..TrainConfig::default()
        };
        let (model, report) = train_flow(&data, &config).unwrap();
        // analytic: mean log-likelihood at the truth is -H = -0.5 ln((2 pi e)^d det C)
        let cov = array![
            [1.0, 0.4, 0.0, 0.2],
            [0.4, 2.0, 0.3, 0.0],
            [0.0, 0.3, 0.5, 0.1],
            [0.2, 0.0, 0.1, 1.5]
        ];
        let l = crate::linalg::cholesky(&cov).unwrap();
        let log_det: f64 = (0..4).map(|i| 2.0 * l[[i, i]].ln()).sum();
        let neg_entropy = -0.5 * (4.0 * (LN_2PI + 1.0) + log_det);
        assert!(
            (report.validation_ll - neg_entropy).abs() < 0.15,
            "validation {} vs -H {}",
            report.validation_ll,
            neg_entropy
        );
        assert_eq!(model.dim(), 4);
        assert_eq!(report.restarts.len(), 4);
    }

    #[test]
    fn plateau_stops_within_patience() {
        let data = gaussian_data(200, 2);
        // zero learning rate: validation never improves after iteration 1
        let config = TrainConfig {
            learning_rate: 1e-300,
            patience: 20,
            max_iterations: 5000,
            restarts: 1,
            seed: 3,
            ..TrainConfig::default()
        };
        let (_, report) = train_flow(&data, &config).unwrap();
        let r = &report.restarts[0];
        assert!(
            r.iterations_run <= r.best_iteration + config.patience,
            "ran {} iterations, best at {}",
            r.iterations_run,
            r.best_iteration
        );
    }

    #[test]
    fn training_is_deterministic_under_seed() {
        let data = gaussian_data(200, 4);
        let config = TrainConfig {
            max_iterations: 60,
            patience: 30,
            restarts: 2,
            seed: 11,
            ..TrainConfig::default()
        };
        let (a, ra) = train_flow(&data, &config).unwrap();
        let (b, rb) = train_flow(&data, &config).unwrap();
        assert_eq!(ra.selected_restart, rb.selected_restart);
        assert_eq!(ra.validation_ll.to_bits(), rb.validation_ll.to_bits());
        for (pa, pb) in a.params().iter().zip(b.params().iter()) {
            for (x, y) in pa.iter().zip(pb.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn all_diverging_restarts_fail_training() {
        let data = gaussian_data(100, 6);
        // an absurd learning rate overflows the parameters immediately
        let config = TrainConfig {
            learning_rate: 1e300,
            restarts: 2,
            max_iterations: 20,
            patience: 10,
            seed: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_flow(&data, &config),
            Err(Error::TrainingFailed { restarts: 2 })
        ));
    }

    #[test]
    fn too_few_samples_rejected() {
        let data = gaussian_data(19, 5);
        assert!(matches!(
            train_flow(&data, &TrainConfig::default()),
            Err(Error::TooFewSamples { needed: 20, .. })
        ));
    }
}
