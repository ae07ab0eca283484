//! Adam optimization with mini-batching, validation-driven early stopping,
//! and best-checkpoint selection.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{mse_gradient, mse_loss, Batch, ModelError, ModelGrads, TResNetModel};
use crate::nn::Tensor;
use crate::sampler::SampleSet;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("invalid training config: {0}")]
    BadConfig(String),

    #[error("the {0} set is empty")]
    EmptySet(&'static str),

    #[error("optimizer state covers {state} tensors of total size {state_len}, got {given}")]
    StateMismatch {
        state: usize,
        state_len: usize,
        given: usize,
    },

    #[error("non-finite loss at epoch {epoch}, {}", batch_label(.batch))]
    Diverged {
        epoch: usize,
        batch: Option<usize>,
        history: Box<TrainHistory>,
    },
}

fn batch_label(batch: &Option<usize>) -> String {
    match batch {
        Some(b) => format!("batch {b}"),
        None => "validation".into(),
    }
}

/// Adam optimizer state: first and second moment estimates per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(
        parameter_sizes: &[usize],
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Self {
        AdamState {
            step: 0,
            m: parameter_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: parameter_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            learning_rate,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update:
    /// m = b1*m + (1-b1)*g, v = b2*v + (1-b2)*g^2,
    /// theta -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
    ) -> Result<(), TrainingError> {
        let check = |given: usize, state: &AdamState| {
            if given != state.m.len() {
                return Err(TrainingError::StateMismatch {
                    state: state.m.len(),
                    state_len: state.m.iter().map(Vec::len).sum(),
                    given,
                });
            }
            Ok(())
        };
        check(params.len(), self)?;
        check(grads.len(), self)?;
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(TrainingError::StateMismatch {
                    state: self.m.len(),
                    state_len: m.len(),
                    given: p.len().max(g.len()),
                });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let m_correction = 1.0 - self.beta1.powi(t);
        let v_correction = 1.0 - self.beta2.powi(t);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(&mut self.v))
        {
            let data = param.data_mut();
            for (i, &g) in grad.data().iter().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / m_correction;
                let v_hat = v[i] / v_correction;
                data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub shuffle_seed: u64,
    /// Global-norm gradient clip; off by default, for divergence rescue.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            shuffle_seed: 0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(TrainingError::BadConfig(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if self.batch_size == 0 {
            return Err(TrainingError::BadConfig("batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(TrainingError::BadConfig("max_epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(TrainingError::BadConfig("patience must be at least 1".into()));
        }
        positive("learning_rate", self.learning_rate)?;
        positive("epsilon", self.epsilon)?;
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(TrainingError::BadConfig(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if let Some(clip) = self.clip_norm {
            positive("clip_norm", clip)?;
        }
        Ok(())
    }
}

/// One epoch's record. `duration_seconds` is wall-clock time and is excluded
/// from the CSV export so that exports are reproducible.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub improved: bool,
    pub clipped_batches: usize,
    pub duration_seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Index of the epoch with the lowest validation loss (first on ties).
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,improved\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.train_loss, e.val_loss, e.improved
            ));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        sink.write_all(self.to_csv().as_bytes())
    }
}

/// Full-set MSE in inference mode, batched in index order with a single
/// sum-then-divide reduction.
pub fn evaluate_mse(
    model: &TResNetModel,
    set: &SampleSet,
    batch_size: usize,
) -> Result<f64, TrainingError> {
    if set.is_empty() {
        return Err(TrainingError::EmptySet("evaluation"));
    }
    if batch_size == 0 {
        return Err(TrainingError::BadConfig("batch_size must be at least 1".into()));
    }
    let indices: Vec<usize> = (0..set.len()).collect();
    let mut sum = 0.0;
    for chunk in indices.chunks(batch_size) {
        let batch = Batch::from_set(set, chunk)?;
        let preds = model.predict(&batch)?;
        for (p, t) in preds.iter().zip(&batch.targets) {
            sum += (p - t) * (p - t);
        }
    }
    Ok(sum / set.len() as f64)
}

/// Trains with seeded shuffled mini-batches, evaluates the full validation
/// set after every epoch, snapshots on improvement (parameters and BN running
/// statistics), and stops after `patience` non-improving epochs. Returns the
/// best snapshot.
pub fn train(
    model: TResNetModel,
    train_set: &SampleSet,
    val_set: &SampleSet,
    config: &TrainConfig,
) -> Result<(TResNetModel, TrainHistory), TrainingError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainingError::EmptySet("training"));
    }
    if val_set.is_empty() {
        return Err(TrainingError::EmptySet("validation"));
    }

    let mut model = model;
    let sizes: Vec<usize> = model.parameters().iter().map(|p| p.len()).collect();
    let mut adam = AdamState::new(
        &sizes,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, TResNetModel)> = None;
    let mut bad_epochs = 0;

    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut clipped_batches = 0;
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = Batch::from_set(train_set, chunk)?;
            let (preds, cache) = model.forward_train(&batch)?;
            let loss = mse_loss(&preds, &batch.targets)?;
            if !loss.is_finite() {
                return Err(TrainingError::Diverged {
                    epoch,
                    batch: Some(batch_index),
                    history: Box::new(history),
                });
            }
            loss_sum += loss * chunk.len() as f64;
            let grad = mse_gradient(&preds, &batch.targets)?;
            let mut grads = model.backward(&cache, &grad)?;
            if let Some(limit) = config.clip_norm {
                if clip_global_norm(&mut grads, limit) {
                    clipped_batches += 1;
                }
            }
            adam.step(&mut model.parameters_mut(), &grads.tensors)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;

        let val_loss = evaluate_mse(&model, val_set, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(TrainingError::Diverged {
                epoch,
                batch: None,
                history: Box::new(history),
            });
        }

        let improved = best.as_ref().is_none_or(|(b, _)| val_loss < *b);
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            improved,
            clipped_batches,
            duration_seconds: started.elapsed().as_secs_f64(),
        });
        if improved {
            history.best_epoch = epoch;
            best = Some((val_loss, model.clone()));
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= config.patience {
                break;
            }
        }
    }

    let (_, best_model) = best.expect("at least one epoch ran and improved on +inf");
    Ok((best_model, history))
}

/// Scales all gradients so their joint L2 norm is at most `limit`. Returns
/// whether clipping fired.
fn clip_global_norm(grads: &mut ModelGrads, limit: f64) -> bool {
    let norm = grads
        .tensors
        .iter()
        .flat_map(|t| t.data())
        .map(|&g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm <= limit {
        return false;
    }
    let scale = limit / norm;
    for tensor in &mut grads.tensors {
        for g in tensor.data_mut() {
            *g *= scale;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CpuReading, Deployment, SplitSpec, VmSeries, DEFAULT_LOG_EPSILON};
    use crate::model::build_model;
    use crate::sampler::{build_dataset, fit_deployment_scalers, Dataset, FragmentSpec};

    fn tiny_spec() -> FragmentSpec {
        FragmentSpec {
            locality_len: 4,
            periodicity_len: 4,
            periodicity_stride: 1,
            tendency_len: 3,
            tendency_stride: 1,
        }
    }

    /// All lengths 2: zero residual blocks, so the model has no BN and no
    /// running statistics that could move between epochs.
    fn bn_free_spec() -> FragmentSpec {
        FragmentSpec {
            locality_len: 2,
            periodicity_len: 2,
            periodicity_stride: 1,
            tendency_len: 2,
            tendency_stride: 1,
        }
    }

    /// Smooth noiseless deployment: drift plus an optional sinusoid.
    fn toy_dataset(
        spec: &FragmentSpec,
        amplitude: f64,
        n_vms: usize,
        len: usize,
        train_end: usize,
        val_end: usize,
    ) -> Dataset {
        let vms = (0..n_vms)
            .map(|v| {
                let readings = (0..len)
                    .map(|t| {
                        let phase = t as f64 / 8.0 * std::f64::consts::TAU;
                        let base = 0.3
                            + amplitude * phase.sin()
                            + 0.3 * t as f64 / len as f64
                            + 0.04 * v as f64;
                        CpuReading::new(base * 0.6, base * 0.8, base)
                    })
                    .collect();
                VmSeries::new(format!("vm-{v}"), 300, 0, readings).unwrap()
            })
            .collect();
        let dep = Deployment::new("toy", vms).unwrap();
        let split = SplitSpec::new(train_end, val_end, len).unwrap();
        let scalers = fit_deployment_scalers(&dep, train_end, DEFAULT_LOG_EPSILON).unwrap();
        build_dataset(&dep, 0, spec, &split, &scalers).unwrap()
    }

    fn scalar_tensor(v: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![v]).unwrap()
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut theta = scalar_tensor(1.25);
        let mut state = AdamState::new(&[1], 0.1, 0.9, 0.999, 1e-8);
        state.step(&mut [&mut theta], &[scalar_tensor(0.0)]).unwrap();
        assert_eq!(theta.data(), &[1.25]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_first_step_matches_closed_form() {
        let mut theta = scalar_tensor(1.0);
        let mut state = AdamState::new(&[1], 0.1, 0.9, 0.999, 1e-8);
        state.step(&mut [&mut theta], &[scalar_tensor(1.0)]).unwrap();
        // m_hat = 1, v_hat = 1, so theta -> 1 - 0.1 / (1 + 1e-8).
        assert!((theta.data()[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn adam_constant_gradient_tends_to_signed_learning_rate() {
        for &g in &[3.0, -0.25] {
            let mut theta = scalar_tensor(0.0);
            let mut state = AdamState::new(&[1], 0.05, 0.9, 0.999, 1e-8);
            let mut prev = theta.data()[0];
            for _ in 0..10 {
                state.step(&mut [&mut theta], &[scalar_tensor(g)]).unwrap();
                let update = theta.data()[0] - prev;
                prev = theta.data()[0];
                assert!(
                    (update - (-0.05 * g.signum())).abs() < 1e-6,
                    "update {update} for gradient {g}"
                );
            }
        }
    }

    #[test]
    fn adam_rejects_mismatched_shapes() {
        let mut theta = scalar_tensor(1.0);
        let mut state = AdamState::new(&[2], 0.1, 0.9, 0.999, 1e-8);
        let err = state.step(&mut [&mut theta], &[scalar_tensor(1.0)]);
        assert!(matches!(err, Err(TrainingError::StateMismatch { .. })));
    }

    #[test]
    fn config_validation_catches_degenerate_values() {
        let ok = TrainConfig::default();
        ok.validate().unwrap();
        for patch in [
            |c: &mut TrainConfig| c.batch_size = 0,
            |c: &mut TrainConfig| c.patience = 0,
            |c: &mut TrainConfig| c.max_epochs = 0,
            |c: &mut TrainConfig| c.learning_rate = 0.0,
            |c: &mut TrainConfig| c.beta1 = 1.0,
            |c: &mut TrainConfig| c.clip_norm = Some(0.0),
        ] {
            let mut bad = ok;
            patch(&mut bad);
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn zero_learning_rate_stops_after_patience_and_keeps_the_first_snapshot() {
        let ds = toy_dataset(&bn_free_spec(), 0.2, 1, 24, 16, 20);
        let model = build_model(&bn_free_spec(), 0, 2, 3).unwrap();
        let initial = model.clone();
        // Updates of ~1e-300 vanish below one ulp of any parameter, so the
        // model is bit-frozen (no BN, so no running statistics either), the
        // validation loss ties every epoch, and a tie is not an improvement;
        // patience=1 stops after epoch 1.
        let config = TrainConfig {
            learning_rate: 1e-300,
            patience: 1,
            max_epochs: 50,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let (best, history) = train(model, &ds.train, &ds.validation, &config).unwrap();
        assert_eq!(history.epochs.len(), 2);
        assert_eq!(history.best_epoch, 0);
        assert!(history.epochs[0].improved);
        assert!(!history.epochs[1].improved);
        // Zero-initialized parameters (the fusion bias) pick up +-1e-300 of
        // dust; everything else is bit-identical.
        for (a, b) in best.parameters().iter().zip(initial.parameters()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-250);
            }
        }
    }

    #[test]
    fn training_is_seed_deterministic() {
        let ds = toy_dataset(&tiny_spec(), 0.2, 2, 28, 20, 24);
        let config = TrainConfig {
            batch_size: 8,
            max_epochs: 4,
            patience: 10,
            learning_rate: 5e-3,
            shuffle_seed: 42,
            ..TrainConfig::default()
        };
        let run = || {
            let model = build_model(&tiny_spec(), 0, 2, 9).unwrap();
            let (best, history) = train(model, &ds.train, &ds.validation, &config).unwrap();
            let mut bytes = Vec::new();
            best.save(&mut bytes).unwrap();
            (bytes, history.to_csv())
        };
        let (bytes_a, csv_a) = run();
        let (bytes_b, csv_b) = run();
        assert_eq!(bytes_a, bytes_b);
        assert_eq!(csv_a, csv_b);
        assert!(csv_a.lines().count() >= 2);
    }

    #[test]
    fn best_snapshot_reproduces_its_recorded_validation_loss() {
        let ds = toy_dataset(&tiny_spec(), 0.2, 1, 32, 24, 28);
        let model = build_model(&tiny_spec(), 0, 2, 5).unwrap();
        let config = TrainConfig {
            batch_size: 8,
            max_epochs: 6,
            learning_rate: 5e-3,
            ..TrainConfig::default()
        };
        let (best, history) = train(model, &ds.train, &ds.validation, &config).unwrap();
        let best_stats = &history.epochs[history.best_epoch];
        let recomputed = evaluate_mse(&best, &ds.validation, config.batch_size).unwrap();
        assert_eq!(recomputed, best_stats.val_loss);
        let min = history
            .epochs
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best_stats.val_loss, min);
        for e in &history.epochs {
            if e.epoch < history.best_epoch {
                assert!(e.val_loss >= best_stats.val_loss);
            }
        }
    }

    #[test]
    fn overfits_a_small_noiseless_set() {
        let ds = toy_dataset(&tiny_spec(), 0.0, 1, 44, 36, 40);
        assert_eq!(ds.train.len(), 32);
        let model = build_model(&tiny_spec(), 0, 4, 7).unwrap();
        let config = TrainConfig {
            batch_size: 8,
            max_epochs: 200,
            patience: 200,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let (_, history) = train(model, &ds.train, &ds.validation, &config).unwrap();
        let final_loss = history.epochs.last().unwrap().train_loss;
        assert!(final_loss < 1e-3, "final training loss {final_loss}");
    }

    #[test]
    fn memorizes_eight_samples_to_a_tenth_of_initial_loss() {
        // Horizon 3, so anchors 3..15 give 12 samples; 8 land in train.
        let ds = toy_dataset(&tiny_spec(), 0.0, 1, 16, 12, 14);
        assert_eq!(ds.train.len(), 8);
        let train_set = &ds.train;
        let model = build_model(&tiny_spec(), 0, 4, 11).unwrap();
        let config = TrainConfig {
            batch_size: 8,
            max_epochs: 300,
            patience: 300,
            learning_rate: 2e-2,
            ..TrainConfig::default()
        };
        let (_, history) = train(model, train_set, &ds.validation, &config).unwrap();
        let first = history.epochs.first().unwrap().train_loss;
        let best = &history.epochs[history.best_epoch];
        assert!(
            best.train_loss < 0.1 * first,
            "best train loss {} vs first {first}",
            best.train_loss
        );
    }

    #[test]
    fn nan_parameters_surface_as_divergence_with_location() {
        let ds = toy_dataset(&tiny_spec(), 0.2, 1, 24, 16, 20);
        let mut model = build_model(&tiny_spec(), 0, 2, 3).unwrap();
        model.fusion.bias.data_mut()[0] = f64::NAN;
        let config = TrainConfig {
            batch_size: 4,
            ..TrainConfig::default()
        };
        match train(model, &ds.train, &ds.validation, &config) {
            Err(TrainingError::Diverged { epoch, batch, history }) => {
                assert_eq!(epoch, 0);
                assert_eq!(batch, Some(0));
                assert!(history.epochs.is_empty());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn empty_sets_are_rejected() {
        let ds = toy_dataset(&tiny_spec(), 0.2, 1, 24, 16, 20);
        let model = build_model(&tiny_spec(), 0, 2, 3).unwrap();
        let empty = ds.train.for_vm(99);
        assert!(matches!(
            train(model.clone(), &empty, &ds.validation, &TrainConfig::default()),
            Err(TrainingError::EmptySet("training"))
        ));
        assert!(matches!(
            train(model, &ds.train, &empty, &TrainConfig::default()),
            Err(TrainingError::EmptySet("validation"))
        ));
    }

    #[test]
    fn gradient_clipping_fires_and_is_recorded() {
        let ds = toy_dataset(&tiny_spec(), 0.2, 1, 24, 16, 20);
        let model = build_model(&tiny_spec(), 0, 2, 3).unwrap();
        let config = TrainConfig {
            batch_size: 4,
            max_epochs: 2,
            clip_norm: Some(1e-9),
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let (_, history) = train(model, &ds.train, &ds.validation, &config).unwrap();
        assert!(history.epochs.iter().any(|e| e.clipped_batches > 0));
    }

    #[test]
    fn history_csv_has_header_and_one_row_per_epoch() {
        let history = TrainHistory {
            epochs: vec![
                EpochStats {
                    epoch: 0,
                    train_loss: 0.5,
                    val_loss: 0.25,
                    improved: true,
                    clipped_batches: 0,
                    duration_seconds: 1.0,
                },
                EpochStats {
                    epoch: 1,
                    train_loss: 0.4,
                    val_loss: 0.3,
                    improved: false,
                    clipped_batches: 2,
                    duration_seconds: 2.0,
                },
            ],
            best_epoch: 0,
        };
        assert_eq!(
            history.to_csv(),
            "epoch,train_loss,val_loss,improved\n0,0.5,0.25,true\n1,0.4,0.3,false\n"
        );
    }
}
