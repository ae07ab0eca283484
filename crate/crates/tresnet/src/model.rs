//! The full three-branch residual network: per-fragment branches, feature
//! fusion, sigmoid head, MSE loss, and a versioned parameter file format.

use std::io::{Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nn::{
    avg_pool_time, avg_pool_time_backward, sigmoid, sigmoid_backward, BatchNorm1d, Conv1d, Dense,
    NnError, ResidualBlock, ResidualCache, ResidualGrads, Tensor,
};
use crate::sampler::{FragmentSpec, Sample, SampleSet};

pub const MODEL_MAGIC: &[u8; 4] = b"TRSN";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),

    #[error("architecture error: {0}")]
    Architecture(String),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("got {predictions} predictions for {targets} targets")]
    LengthMismatch { predictions: usize, targets: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed model file: {0}")]
    Format(String),

    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),

    #[error("model file checksum mismatch")]
    ChecksumMismatch,
}

/// How branch activations are reduced to a per-branch feature vector before
/// fusion. Only global average pooling is implemented; the tag is recorded in
/// the model file so a flatten variant could coexist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureReduction {
    GlobalAveragePool,
}

impl FeatureReduction {
    fn tag(self) -> u8 {
        match self {
            FeatureReduction::GlobalAveragePool => 0,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, ModelError> {
        match tag {
            0 => Ok(FeatureReduction::GlobalAveragePool),
            other => Err(ModelError::Format(format!(
                "unknown feature reduction tag {other}"
            ))),
        }
    }
}

/// Architecture metadata carried by the model and its file format.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub fragment_spec: FragmentSpec,
    pub k: usize,
    pub stem_channels: usize,
    pub reduction: FeatureReduction,
    /// Deployment the model was trained on, if known; lets tools flag a
    /// model/config mismatch early.
    pub deployment_id: Option<String>,
}

impl ModelMeta {
    /// Channels per fragment row: (min, avg, max) plus k peer channels.
    pub fn input_channels(&self) -> usize {
        3 + self.k
    }
}

/// Number of stride-2 blocks needed to reduce `input_length` to at most 2 by
/// repeated ceil-halving.
pub fn blocks_for_length(input_length: usize) -> Result<usize, ModelError> {
    if input_length < 2 {
        return Err(ModelError::Architecture(format!(
            "branch input length must be at least 2, got {input_length}"
        )));
    }
    let mut len = input_length;
    let mut blocks = 0;
    while len > 2 {
        len = len / 2 + len % 2;
        blocks += 1;
    }
    Ok(blocks)
}

/// Derived shape of one branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchConfig {
    pub input_length: usize,
    pub input_channels: usize,
    pub stem_channels: usize,
    pub num_blocks: usize,
    /// Channels after the last block: stem_channels * 2^num_blocks.
    pub feature_channels: usize,
}

impl BranchConfig {
    pub fn derive(
        input_length: usize,
        input_channels: usize,
        stem_channels: usize,
    ) -> Result<Self, ModelError> {
        if input_channels == 0 || stem_channels == 0 {
            return Err(ModelError::Architecture(format!(
                "channel counts must be positive: input {input_channels}, stem {stem_channels}"
            )));
        }
        let num_blocks = blocks_for_length(input_length)?;
        Ok(BranchConfig {
            input_length,
            input_channels,
            stem_channels,
            num_blocks,
            feature_channels: stem_channels << num_blocks,
        })
    }
}

/// One fragment branch: stem convolution, stride-2 residual blocks, global
/// average pool over the remaining time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub stem: Conv1d,
    pub blocks: Vec<ResidualBlock>,
}

/// Activations retained by one branch's training forward pass.
#[derive(Debug, Clone)]
pub struct BranchCache {
    input: Tensor,
    blocks: Vec<ResidualCache>,
    /// Time length entering the pool.
    final_len: usize,
}

#[derive(Debug, Clone)]
pub struct BranchGrads {
    pub stem_weights: Tensor,
    pub blocks: Vec<ResidualGrads>,
}

impl Branch {
    fn build(config: &BranchConfig) -> Result<Self, ModelError> {
        let stem = Conv1d::new(config.input_channels, config.stem_channels, 3, 1, 1, false)?;
        let mut blocks = Vec::with_capacity(config.num_blocks);
        let mut channels = config.stem_channels;
        for _ in 0..config.num_blocks {
            blocks.push(ResidualBlock::new(channels)?);
            channels *= 2;
        }
        Ok(Branch { stem, blocks })
    }

    fn init<R: Rng>(&mut self, rng: &mut R) {
        self.stem.init_he(rng);
        for block in &mut self.blocks {
            block.init_he(rng);
        }
    }

    pub fn feature_channels(&self) -> usize {
        self.blocks
            .last()
            .map_or(self.stem.out_channels, ResidualBlock::out_channels)
    }

    /// Pooled features (batch, feature_channels).
    fn forward_infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut h = self.stem.forward(x)?;
        for block in &self.blocks {
            h = block.forward_infer(&h)?;
        }
        avg_pool_time(&h)
    }

    fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BranchCache), NnError> {
        let mut h = self.stem.forward(x)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let (out, cache) = block.forward_train(&h)?;
            caches.push(cache);
            h = out;
        }
        let final_len = h.dims3()?.1;
        let pooled = avg_pool_time(&h)?;
        Ok((
            pooled,
            BranchCache {
                input: x.clone(),
                blocks: caches,
                final_len,
            },
        ))
    }

    fn backward(
        &self,
        cache: &BranchCache,
        grad_features: &Tensor,
    ) -> Result<BranchGrads, NnError> {
        let mut g = avg_pool_time_backward(grad_features, cache.final_len)?;
        let mut block_grads = vec![None; self.blocks.len()];
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let grads = block.backward(&cache.blocks[i], &g)?;
            g = grads.input.clone();
            block_grads[i] = Some(grads);
        }
        let stem_grads = self.stem.backward(&cache.input, &g)?;
        Ok(BranchGrads {
            stem_weights: stem_grads.weights,
            blocks: block_grads.into_iter().map(Option::unwrap).collect(),
        })
    }
}

/// A batch of samples as three stacked fragment tensors plus targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// (batch, locality length, channels).
    pub locality: Tensor,
    /// (batch, periodicity length, channels).
    pub periodicity: Tensor,
    /// (batch, tendency length, channels).
    pub tendency: Tensor,
    pub targets: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Stacks the given sample indices of a set, in the given order.
    pub fn from_set(set: &SampleSet, indices: &[usize]) -> Result<Batch, ModelError> {
        let samples: Vec<Sample> = indices.iter().map(|&i| set.get(i)).collect();
        Batch::from_samples(&samples)
    }

    pub fn from_samples(samples: &[Sample]) -> Result<Batch, ModelError> {
        let first = samples.first().ok_or(ModelError::EmptyBatch)?;
        let shape = |f: &crate::sampler::Fragment| (f.rows, f.channels);
        let shapes = (
            shape(&first.locality),
            shape(&first.periodicity),
            shape(&first.tendency),
        );
        for s in samples {
            let got = (shape(&s.locality), shape(&s.periodicity), shape(&s.tendency));
            if got != shapes {
                return Err(ModelError::Architecture(format!(
                    "inconsistent fragment shapes in batch: {shapes:?} vs {got:?}"
                )));
            }
        }
        let stack = |pick: &dyn Fn(&Sample) -> &crate::sampler::Fragment,
                     (rows, channels): (usize, usize)|
         -> Result<Tensor, ModelError> {
            let mut data = Vec::with_capacity(samples.len() * rows * channels);
            for s in samples {
                data.extend_from_slice(&pick(s).values);
            }
            Ok(Tensor::from_vec(&[samples.len(), rows, channels], data)?)
        };
        Ok(Batch {
            locality: stack(&|s| &s.locality, shapes.0)?,
            periodicity: stack(&|s| &s.periodicity, shapes.1)?,
            tendency: stack(&|s| &s.tendency, shapes.2)?,
            targets: samples.iter().map(|s| s.target).collect(),
        })
    }
}

/// Activations retained by a training-mode forward pass, consumed by
/// [`TResNetModel::backward`]. Holding the cache is the proof that a matching
/// forward ran; there is no way to call backward without one.
#[derive(Debug, Clone)]
pub struct ModelCache {
    locality: BranchCache,
    periodicity: BranchCache,
    tendency: BranchCache,
    /// Concatenated pooled features (batch, fusion inputs).
    features: Tensor,
    /// Sigmoid outputs, needed for the head's backward.
    predictions: Vec<f64>,
}

/// Parameter gradients in [`TResNetModel::parameters`] order.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub tensors: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TResNetModel {
    pub meta: ModelMeta,
    pub locality: Branch,
    pub periodicity: Branch,
    pub tendency: Branch,
    pub fusion: Dense,
}

/// Builds and seeds the network. Branch depths are derived from the fragment
/// lengths; all three lengths must be at least 2.
pub fn build_model(
    spec: &FragmentSpec,
    k: usize,
    stem_channels: usize,
    seed: u64,
) -> Result<TResNetModel, ModelError> {
    spec.validate()
        .map_err(|e| ModelError::Architecture(e.to_string()))?;
    let channels = 3 + k;
    let locality_cfg = BranchConfig::derive(spec.locality_len, channels, stem_channels)?;
    let periodicity_cfg = BranchConfig::derive(spec.periodicity_len, channels, stem_channels)?;
    let tendency_cfg = BranchConfig::derive(spec.tendency_len, channels, stem_channels)?;

    let mut locality = Branch::build(&locality_cfg)?;
    let mut periodicity = Branch::build(&periodicity_cfg)?;
    let mut tendency = Branch::build(&tendency_cfg)?;
    let fusion_inputs = locality_cfg.feature_channels
        + periodicity_cfg.feature_channels
        + tendency_cfg.feature_channels;
    let mut fusion = Dense::new(fusion_inputs, 1)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    locality.init(&mut rng);
    periodicity.init(&mut rng);
    tendency.init(&mut rng);
    fusion.init_he(&mut rng);

    Ok(TResNetModel {
        meta: ModelMeta {
            fragment_spec: *spec,
            k,
            stem_channels,
            reduction: FeatureReduction::GlobalAveragePool,
            deployment_id: None,
        },
        locality,
        periodicity,
        tendency,
        fusion,
    })
}

/// Mean squared error over a batch.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64, ModelError> {
    check_pair(predictions, targets)?;
    let n = predictions.len() as f64;
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// Gradient of [`mse_loss`] with respect to the predictions: 2(p - t)/N.
pub fn mse_gradient(predictions: &[f64], targets: &[f64]) -> Result<Vec<f64>, ModelError> {
    check_pair(predictions, targets)?;
    let n = predictions.len() as f64;
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect())
}

fn check_pair(predictions: &[f64], targets: &[f64]) -> Result<(), ModelError> {
    if predictions.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    if predictions.len() != targets.len() {
        return Err(ModelError::LengthMismatch {
            predictions: predictions.len(),
            targets: targets.len(),
        });
    }
    Ok(())
}

impl TResNetModel {
    pub fn fragment_spec(&self) -> &FragmentSpec {
        &self.meta.fragment_spec
    }

    pub fn input_channels(&self) -> usize {
        self.meta.input_channels()
    }

    fn check_batch(&self, batch: &Batch) -> Result<usize, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let spec = &self.meta.fragment_spec;
        let channels = self.input_channels();
        let expect = [
            ("locality", &batch.locality, spec.locality_len),
            ("periodicity", &batch.periodicity, spec.periodicity_len),
            ("tendency", &batch.tendency, spec.tendency_len),
        ];
        let batch_size = batch.targets.len();
        for (name, tensor, len) in expect {
            let dims = tensor.dims();
            if dims != [batch_size, len, channels] {
                return Err(ModelError::Architecture(format!(
                    "{name} fragment has shape {dims:?}, model expects {:?}",
                    [batch_size, len, channels]
                )));
            }
        }
        Ok(batch_size)
    }

    /// Inference-mode predictions, one value in (0, 1) per sample. Uses the
    /// BN running statistics; valid (if uninformative) straight after
    /// initialization.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<f64>, ModelError> {
        self.check_batch(batch)?;
        let fl = self.locality.forward_infer(&batch.locality)?;
        let fp = self.periodicity.forward_infer(&batch.periodicity)?;
        let ft = self.tendency.forward_infer(&batch.tendency)?;
        let features = concat_columns(&[&fl, &fp, &ft])?;
        let logits = self.fusion.forward(&features)?;
        Ok(sigmoid(&logits).data().to_vec())
    }

    /// Training-mode forward: batch statistics in every BN, caches retained.
    pub fn forward_train(&mut self, batch: &Batch) -> Result<(Vec<f64>, ModelCache), ModelError> {
        self.check_batch(batch)?;
        let (fl, locality) = self.locality.forward_train(&batch.locality)?;
        let (fp, periodicity) = self.periodicity.forward_train(&batch.periodicity)?;
        let (ft, tendency) = self.tendency.forward_train(&batch.tendency)?;
        let features = concat_columns(&[&fl, &fp, &ft])?;
        let logits = self.fusion.forward(&features)?;
        let predictions = sigmoid(&logits).data().to_vec();
        Ok((
            predictions.clone(),
            ModelCache {
                locality,
                periodicity,
                tendency,
                features,
                predictions,
            },
        ))
    }

    /// Exact gradients for every parameter, in [`Self::parameters`] order.
    /// `grad_predictions` is dL/dprediction per sample (for MSE, from
    /// [`mse_gradient`]).
    pub fn backward(
        &self,
        cache: &ModelCache,
        grad_predictions: &[f64],
    ) -> Result<ModelGrads, ModelError> {
        let b = cache.predictions.len();
        if grad_predictions.len() != b {
            return Err(ModelError::LengthMismatch {
                predictions: b,
                targets: grad_predictions.len(),
            });
        }
        let preds = Tensor::from_vec(&[b, 1], cache.predictions.clone())?;
        let g_pred = Tensor::from_vec(&[b, 1], grad_predictions.to_vec())?;
        let g_logits = sigmoid_backward(&preds, &g_pred);
        let fusion_grads = self.fusion.backward(&cache.features, &g_logits)?;
        let widths = [
            self.locality.feature_channels(),
            self.periodicity.feature_channels(),
            self.tendency.feature_channels(),
        ];
        let parts = split_columns(&fusion_grads.input, &widths)?;
        let gl = self.locality.backward(&cache.locality, &parts[0])?;
        let gp = self.periodicity.backward(&cache.periodicity, &parts[1])?;
        let gt = self.tendency.backward(&cache.tendency, &parts[2])?;

        let mut tensors = Vec::new();
        for branch in [gl, gp, gt] {
            tensors.push(branch.stem_weights);
            for block in branch.blocks {
                tensors.push(block.bn_a_gamma);
                tensors.push(block.bn_a_beta);
                tensors.push(block.conv_a_weights);
                tensors.push(block.bn_b_gamma);
                tensors.push(block.bn_b_beta);
                tensors.push(block.conv_b_weights);
                tensors.push(block.shortcut_weights);
            }
        }
        tensors.push(fusion_grads.weights);
        tensors.push(fusion_grads.bias);
        Ok(ModelGrads { tensors })
    }

    /// All trainable tensors, in the fixed order shared with
    /// [`Self::parameter_names`] and [`Self::backward`].
    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for branch in [&self.locality, &self.periodicity, &self.tendency] {
            out.push(&branch.stem.weights);
            for block in &branch.blocks {
                out.push(&block.bn_a.gamma);
                out.push(&block.bn_a.beta);
                out.push(&block.conv_a.weights);
                out.push(&block.bn_b.gamma);
                out.push(&block.bn_b.beta);
                out.push(&block.conv_b.weights);
                out.push(&block.shortcut.weights);
            }
        }
        out.push(&self.fusion.weights);
        out.push(&self.fusion.bias);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let TResNetModel {
            locality,
            periodicity,
            tendency,
            fusion,
            ..
        } = self;
        let mut out = Vec::new();
        for branch in [locality, periodicity, tendency] {
            out.push(&mut branch.stem.weights);
            for block in branch.blocks.iter_mut() {
                let ResidualBlock {
                    bn_a,
                    conv_a,
                    bn_b,
                    conv_b,
                    shortcut,
                } = block;
                let BatchNorm1d { gamma, beta, .. } = bn_a;
                out.push(gamma);
                out.push(beta);
                out.push(&mut conv_a.weights);
                let BatchNorm1d { gamma, beta, .. } = bn_b;
                out.push(gamma);
                out.push(beta);
                out.push(&mut conv_b.weights);
                out.push(&mut shortcut.weights);
            }
        }
        out.push(&mut fusion.weights);
        out.push(&mut fusion.bias);
        out
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.state_names()
            .into_iter()
            .filter(|(_, is_param)| *is_param)
            .map(|(name, _)| name)
            .collect()
    }

    /// (name, is_parameter) for every stored tensor, in file order. BN
    /// running statistics are state but not parameters.
    fn state_names(&self) -> Vec<(String, bool)> {
        let mut out = Vec::new();
        let branches = [
            ("locality", &self.locality),
            ("periodicity", &self.periodicity),
            ("tendency", &self.tendency),
        ];
        for (prefix, branch) in branches {
            out.push((format!("{prefix}.stem.weights"), true));
            for i in 0..branch.blocks.len() {
                for bn in ["bn_a", "bn_b"] {
                    out.push((format!("{prefix}.block{i}.{bn}.gamma"), true));
                    out.push((format!("{prefix}.block{i}.{bn}.beta"), true));
                    out.push((format!("{prefix}.block{i}.{bn}.running_mean"), false));
                    out.push((format!("{prefix}.block{i}.{bn}.running_var"), false));
                }
                out.push((format!("{prefix}.block{i}.conv_a.weights"), true));
                out.push((format!("{prefix}.block{i}.conv_b.weights"), true));
                out.push((format!("{prefix}.block{i}.shortcut.weights"), true));
            }
        }
        out.push(("fusion.weights".into(), true));
        out.push(("fusion.bias".into(), true));
        out
    }

    /// Every stored tensor in file order, aligned with [`Self::state_names`].
    fn state(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for branch in [&self.locality, &self.periodicity, &self.tendency] {
            out.push(&branch.stem.weights);
            for block in &branch.blocks {
                for bn in [&block.bn_a, &block.bn_b] {
                    out.push(&bn.gamma);
                    out.push(&bn.beta);
                    out.push(&bn.running_mean);
                    out.push(&bn.running_var);
                }
                out.push(&block.conv_a.weights);
                out.push(&block.conv_b.weights);
                out.push(&block.shortcut.weights);
            }
        }
        out.push(&self.fusion.weights);
        out.push(&self.fusion.bias);
        out
    }

    fn state_mut(&mut self) -> Vec<&mut Tensor> {
        let TResNetModel {
            locality,
            periodicity,
            tendency,
            fusion,
            ..
        } = self;
        let mut out = Vec::new();
        for branch in [locality, periodicity, tendency] {
            out.push(&mut branch.stem.weights);
            for block in branch.blocks.iter_mut() {
                let ResidualBlock {
                    bn_a,
                    conv_a,
                    bn_b,
                    conv_b,
                    shortcut,
                } = block;
                for bn in [bn_a, bn_b] {
                    let BatchNorm1d {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                        ..
                    } = bn;
                    out.push(gamma);
                    out.push(beta);
                    out.push(running_mean);
                    out.push(running_var);
                }
                out.push(&mut conv_a.weights);
                out.push(&mut conv_b.weights);
                out.push(&mut shortcut.weights);
            }
        }
        out.push(&mut fusion.weights);
        out.push(&mut fusion.bias);
        out
    }

    /// Writes the versioned model file: magic, version, metadata, named
    /// tensors, SHA-256 trailer. The byte layout is documented in the README.
    pub fn save<W: Write>(&self, mut sink: W) -> Result<(), ModelError> {
        let mut body = Vec::new();
        body.extend_from_slice(MODEL_MAGIC);
        push_u32(&mut body, MODEL_FORMAT_VERSION);

        let spec = &self.meta.fragment_spec;
        for value in [
            spec.locality_len,
            spec.periodicity_len,
            spec.periodicity_stride,
            spec.tendency_len,
            spec.tendency_stride,
            self.meta.k,
            self.meta.stem_channels,
        ] {
            push_u32(&mut body, cast_u32(value)?);
        }
        body.push(self.meta.reduction.tag());
        match &self.meta.deployment_id {
            None => body.push(0),
            Some(id) => {
                body.push(1);
                push_u32(&mut body, cast_u32(id.len())?);
                body.extend_from_slice(id.as_bytes());
            }
        }

        let names = self.state_names();
        let tensors = self.state();
        push_u32(&mut body, cast_u32(tensors.len())?);
        for ((name, _), tensor) in names.iter().zip(&tensors) {
            let name_bytes = name.as_bytes();
            body.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
            body.extend_from_slice(name_bytes);
            body.push(tensor.dims().len() as u8);
            for &dim in tensor.dims() {
                push_u32(&mut body, cast_u32(dim)?);
            }
            for &value in tensor.data() {
                body.extend_from_slice(&value.to_le_bytes());
            }
        }

        let checksum = Sha256::digest(&body);
        sink.write_all(&body)?;
        sink.write_all(&checksum)?;
        Ok(())
    }

    pub fn load<R: Read>(mut source: R) -> Result<TResNetModel, ModelError> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        Self::load_bytes(&bytes)
    }

    pub fn load_bytes(bytes: &[u8]) -> Result<TResNetModel, ModelError> {
        if bytes.len() < 32 {
            return Err(ModelError::Format("file too short for a checksum".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        let checksum = Sha256::digest(body);
        if checksum.as_slice() != trailer {
            return Err(ModelError::ChecksumMismatch);
        }

        let mut cursor = Reader { buf: body, pos: 0 };
        if cursor.take(4)? != MODEL_MAGIC {
            return Err(ModelError::Format("bad magic".into()));
        }
        let version = cursor.u32()?;
        if version != MODEL_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(version));
        }

        let spec = FragmentSpec {
            locality_len: cursor.u32()? as usize,
            periodicity_len: cursor.u32()? as usize,
            periodicity_stride: cursor.u32()? as usize,
            tendency_len: cursor.u32()? as usize,
            tendency_stride: cursor.u32()? as usize,
        };
        let k = cursor.u32()? as usize;
        let stem_channels = cursor.u32()? as usize;
        let reduction = FeatureReduction::from_tag(cursor.u8()?);
        let reduction = reduction?;
        let deployment_id = match cursor.u8()? {
            0 => None,
            1 => {
                let len = cursor.u32()? as usize;
                let raw = cursor.take(len)?;
                Some(String::from_utf8(raw.to_vec()).map_err(|_| {
                    ModelError::Format("deployment id is not valid UTF-8".into())
                })?)
            }
            other => {
                return Err(ModelError::Format(format!(
                    "bad deployment id flag {other}"
                )))
            }
        };

        let mut model = build_model(&spec, k, stem_channels, 0)?;
        model.meta.reduction = reduction;
        model.meta.deployment_id = deployment_id;

        let count = cursor.u32()? as usize;
        let names = model.state_names();
        if count != names.len() {
            return Err(ModelError::Format(format!(
                "file holds {count} tensors, architecture needs {}",
                names.len()
            )));
        }
        for ((name, _), slot) in names.iter().zip(model.state_mut()) {
            let name_len = cursor.u16()? as usize;
            let got_name = cursor.take(name_len)?;
            if got_name != name.as_bytes() {
                return Err(ModelError::Format(format!(
                    "expected tensor {name:?}, found {:?}",
                    String::from_utf8_lossy(got_name)
                )));
            }
            let rank = cursor.u8()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(cursor.u32()? as usize);
            }
            if dims != slot.dims() {
                return Err(ModelError::Format(format!(
                    "tensor {name} has dims {dims:?}, architecture needs {:?}",
                    slot.dims()
                )));
            }
            for value in slot.data_mut() {
                *value = cursor.f64()?;
            }
        }
        if cursor.pos != body.len() {
            return Err(ModelError::Format(format!(
                "{} trailing bytes after the last tensor",
                body.len() - cursor.pos
            )));
        }
        Ok(model)
    }
}

/// Concatenates (batch, w_i) tensors along the feature axis.
fn concat_columns(parts: &[&Tensor]) -> Result<Tensor, NnError> {
    let b = parts[0].dims2()?.0;
    let mut widths = Vec::with_capacity(parts.len());
    for part in parts {
        let (pb, w) = part.dims2()?;
        if pb != b {
            return Err(NnError::Shape(format!(
                "cannot concatenate features with batch sizes {b} and {pb}"
            )));
        }
        widths.push(w);
    }
    let total: usize = widths.iter().sum();
    let mut out = Tensor::zeros(&[b, total]);
    let data = out.data_mut();
    for row in 0..b {
        let mut offset = row * total;
        for (part, &w) in parts.iter().zip(&widths) {
            data[offset..offset + w].copy_from_slice(&part.data()[row * w..(row + 1) * w]);
            offset += w;
        }
    }
    Ok(out)
}

/// Splits a (batch, sum widths) tensor back into per-branch columns.
fn split_columns(x: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>, NnError> {
    let (b, total) = x.dims2()?;
    if widths.iter().sum::<usize>() != total {
        return Err(NnError::Shape(format!(
            "cannot split {total} features into widths {widths:?}"
        )));
    }
    let mut out = Vec::with_capacity(widths.len());
    let mut offset = 0;
    for &w in widths {
        let mut part = Tensor::zeros(&[b, w]);
        for row in 0..b {
            part.data_mut()[row * w..(row + 1) * w]
                .copy_from_slice(&x.data()[row * total + offset..row * total + offset + w]);
        }
        out.push(part);
        offset += w;
    }
    Ok(out)
}

fn push_u32(buf: &mut Vec<u8>, value: u32) {
    buf.extend_from_slice(&value.to_le_bytes());
}

fn cast_u32(value: usize) -> Result<u32, ModelError> {
    u32::try_from(value).map_err(|_| ModelError::Format(format!("value {value} exceeds u32")))
}

/// Bounds-checked little-endian reader over the model file body.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.buf.len() {
            return Err(ModelError::Format("unexpected end of file".into()));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
