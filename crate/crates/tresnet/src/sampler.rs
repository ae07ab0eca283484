//! Expanded multi-channel series and fragment extraction: turns deployments
//! into (locality, periodicity, tendency, target) samples.

use std::io::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::analysis::{top_k_relevant, AnalysisError};
use crate::data::{fit_scaler, Channel, DataError, Deployment, ScalerParams, Split, SplitSpec};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Analysis(#[from] AnalysisError),

    #[error("invalid fragment spec: {0}")]
    InvalidFragmentSpec(String),

    #[error("timestamp {ts} is below the lookback horizon {horizon}")]
    InsufficientHistory { ts: usize, horizon: usize },

    #[error("timestamp {ts} does not fit a series of length {len}")]
    TimestampOutOfRange { ts: usize, len: usize },

    #[error("vm index {index} out of range for {count} vms")]
    VmIndexOutOfRange { index: usize, count: usize },

    #[error("k={k} exceeds the {available} other vms in the deployment")]
    KTooLarge { k: usize, available: usize },

    #[error("scaler set covers {scalers} vms but the deployment has {vms}")]
    ScalerMismatch { scalers: usize, vms: usize },

    #[error("no sample fits: series length {len} leaves no timestamp past horizon {horizon}")]
    EmptyDataset { len: usize, horizon: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Window lengths and strides of the three fragments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragmentSpec {
    /// Locality rows, taken at every interval.
    pub locality_len: usize,
    /// Periodicity rows, taken every `periodicity_stride` intervals.
    pub periodicity_len: usize,
    pub periodicity_stride: usize,
    /// Tendency rows, taken every `tendency_stride` intervals.
    pub tendency_len: usize,
    pub tendency_stride: usize,
}

impl Default for FragmentSpec {
    /// 12 five-minute steps, 24 hours, 7 days.
    fn default() -> Self {
        FragmentSpec {
            locality_len: 12,
            periodicity_len: 24,
            periodicity_stride: 12,
            tendency_len: 7,
            tendency_stride: 288,
        }
    }
}

impl FragmentSpec {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let fields = [
            ("locality length", self.locality_len),
            ("periodicity length", self.periodicity_len),
            ("periodicity stride", self.periodicity_stride),
            ("tendency length", self.tendency_len),
            ("tendency stride", self.tendency_stride),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(SamplerError::InvalidFragmentSpec(format!(
                    "{name} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Earliest timestamp index with full lookback coverage.
    pub fn horizon(&self) -> usize {
        (self.locality_len - 1)
            .max((self.periodicity_len - 1) * self.periodicity_stride)
            .max((self.tendency_len - 1) * self.tendency_stride)
    }
}

/// A target VM's scaled (min, avg, max) channels plus the scaled max channels
/// of its k most correlated peers, in descending correlation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedSeries {
    pub target_vm: usize,
    /// Peer VM indices contributing channels 3.., descending correlation.
    pub relevant_vms: Vec<usize>,
    /// (3 + k) channels, each of the full series length.
    pub channels: Vec<Vec<f64>>,
}

impl ExpandedSeries {
    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One fragment: `rows` chronological readings of all channels, ending at the
/// anchor timestamp. Row-major (row, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub rows: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl Fragment {
    pub fn at(&self, row: usize, channel: usize) -> f64 {
        self.values[row * self.channels + channel]
    }
}

/// One training/evaluation instance anchored at timestamp `ts`, labeled with
/// the scaled max utilization at `ts + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub vm: usize,
    pub ts: usize,
    pub locality: Fragment,
    pub periodicity: Fragment,
    pub tendency: Fragment,
    pub target: f64,
}

/// Per-VM, per-channel scalers, all fit on the training prefix only.
#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentScalers {
    pub train_len: usize,
    /// Indexed by VM, then by channel (min, avg, max).
    pub per_vm: Vec<[ScalerParams; 3]>,
}

pub fn fit_deployment_scalers(
    deployment: &Deployment,
    train_len: usize,
    log_epsilon: f64,
) -> Result<DeploymentScalers, SamplerError> {
    if train_len == 0 || train_len > deployment.len() {
        return Err(SamplerError::TimestampOutOfRange {
            ts: train_len,
            len: deployment.len(),
        });
    }
    let mut per_vm = Vec::with_capacity(deployment.vm_count());
    for vm in deployment.vms() {
        let mut channels = [ScalerParams {
            log_epsilon,
            min_value: 0.0,
            max_value: 1.0,
        }; 3];
        for (slot, channel) in [Channel::Min, Channel::Avg, Channel::Max].into_iter().enumerate() {
            let values: Vec<f64> = vm.values()[..train_len]
                .iter()
                .map(|r| r.channel(channel))
                .collect();
            channels[slot] = fit_scaler(&values, log_epsilon)?;
        }
        per_vm.push(channels);
    }
    Ok(DeploymentScalers { train_len, per_vm })
}

/// Builds the (3 + k)-channel scaled series for one target VM. Peer channels
/// are the max channels of the k most correlated VMs over the training
/// prefix, each scaled with its own VM's training-fit parameters.
pub fn expand_series(
    deployment: &Deployment,
    target_index: usize,
    k: usize,
    scalers: &DeploymentScalers,
) -> Result<ExpandedSeries, SamplerError> {
    let n = deployment.vm_count();
    if target_index >= n {
        return Err(SamplerError::VmIndexOutOfRange {
            index: target_index,
            count: n,
        });
    }
    if k > n - 1 {
        return Err(SamplerError::KTooLarge {
            k,
            available: n - 1,
        });
    }
    if scalers.per_vm.len() != n {
        return Err(SamplerError::ScalerMismatch {
            scalers: scalers.per_vm.len(),
            vms: n,
        });
    }

    let mut channels = Vec::with_capacity(3 + k);
    let target = deployment.vm(target_index);
    for (slot, channel) in [Channel::Min, Channel::Avg, Channel::Max].into_iter().enumerate() {
        let params = &scalers.per_vm[target_index][slot];
        channels.push(params.scale_slice(&target.channel(channel)));
    }

    let relevant_vms = top_k_relevant(deployment, target_index, k, 0..scalers.train_len)?;
    for &peer in &relevant_vms {
        let params = &scalers.per_vm[peer][2];
        channels.push(params.scale_slice(&deployment.vm(peer).channel(Channel::Max)));
    }

    Ok(ExpandedSeries {
        target_vm: target_index,
        relevant_vms,
        channels,
    })
}

/// Cuts the three fragments ending at `ts` out of an expanded series.
pub fn extract_fragments(
    series: &ExpandedSeries,
    ts: usize,
    spec: &FragmentSpec,
) -> Result<(Fragment, Fragment, Fragment), SamplerError> {
    spec.validate()?;
    let len = series.len();
    if ts >= len {
        return Err(SamplerError::TimestampOutOfRange { ts, len });
    }
    let horizon = spec.horizon();
    if ts < horizon {
        return Err(SamplerError::InsufficientHistory { ts, horizon });
    }
    Ok((
        cut(series, ts, spec.locality_len, 1),
        cut(series, ts, spec.periodicity_len, spec.periodicity_stride),
        cut(series, ts, spec.tendency_len, spec.tendency_stride),
    ))
}

fn cut(series: &ExpandedSeries, ts: usize, rows: usize, stride: usize) -> Fragment {
    let channels = series.channel_count();
    let mut values = Vec::with_capacity(rows * channels);
    for row in 0..rows {
        let t = ts - (rows - 1 - row) * stride;
        for channel in &series.channels {
            values.push(channel[t]);
        }
    }
    Fragment {
        rows,
        channels,
        values,
    }
}

/// Reference to one sample inside a shared expanded-series set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SampleRef {
    vm: u32,
    ts: u32,
}

/// One split's samples. Fragments are materialized on access; the set itself
/// only holds (vm, ts) references into the shared expanded series.
#[derive(Debug, Clone)]
pub struct SampleSet {
    series: Arc<Vec<ExpandedSeries>>,
    spec: FragmentSpec,
    entries: Vec<SampleRef>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn spec(&self) -> &FragmentSpec {
        &self.spec
    }

    pub fn channel_count(&self) -> usize {
        self.series.first().map_or(0, |s| s.channel_count())
    }

    /// (vm, anchor timestamp) of sample `index`.
    pub fn entry(&self, index: usize) -> (usize, usize) {
        let e = self.entries[index];
        (e.vm as usize, e.ts as usize)
    }

    pub fn get(&self, index: usize) -> Sample {
        let e = self.entries[index];
        let series = &self.series[e.vm as usize];
        let ts = e.ts as usize;
        let (locality, periodicity, tendency) =
            extract_fragments(series, ts, &self.spec).expect("entries are pre-validated");
        Sample {
            vm: e.vm as usize,
            ts,
            locality,
            periodicity,
            tendency,
            target: series.channels[2][ts + 1],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Sample> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    pub fn targets(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| self.series[e.vm as usize].channels[2][e.ts as usize + 1])
            .collect()
    }

    /// Restricts the set to one VM's samples, preserving order.
    pub fn for_vm(&self, vm: usize) -> SampleSet {
        SampleSet {
            series: Arc::clone(&self.series),
            spec: self.spec,
            entries: self
                .entries
                .iter()
                .copied()
                .filter(|e| e.vm as usize == vm)
                .collect(),
        }
    }
}

/// The three split collections over one deployment.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: SampleSet,
    pub validation: SampleSet,
    pub test: SampleSet,
}

impl Dataset {
    pub fn expanded_series(&self) -> &[ExpandedSeries] {
        &self.train.series
    }
}

/// Expands every VM and enumerates all samples in (vm, ts) order. A sample
/// anchored at `ts` predicts `ts + 1` and is assigned to the split region
/// containing that target timestamp.
pub fn build_dataset(
    deployment: &Deployment,
    k: usize,
    spec: &FragmentSpec,
    split: &SplitSpec,
    scalers: &DeploymentScalers,
) -> Result<Dataset, SamplerError> {
    spec.validate()?;
    let len = deployment.len();
    split.validate(len)?;
    let horizon = spec.horizon();
    if len < horizon + 2 {
        return Err(SamplerError::EmptyDataset { len, horizon });
    }

    let mut series = Vec::with_capacity(deployment.vm_count());
    for vm in 0..deployment.vm_count() {
        series.push(expand_series(deployment, vm, k, scalers)?);
    }
    let series = Arc::new(series);

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for vm in 0..deployment.vm_count() {
        for ts in horizon..len - 1 {
            let entry = SampleRef {
                vm: vm as u32,
                ts: ts as u32,
            };
            match split.split_of(ts + 1) {
                Split::Train => train.push(entry),
                Split::Validation => validation.push(entry),
                Split::Test => test.push(entry),
            }
        }
    }

    let make = |entries: Vec<SampleRef>| SampleSet {
        series: Arc::clone(&series),
        spec: *spec,
        entries,
    };
    Ok(Dataset {
        train: make(train),
        validation: make(validation),
        test: make(test),
    })
}

/// Debug dump: one line per sample with fragment shapes and the target.
pub fn dump_samples<W: Write>(
    mut writer: W,
    samples: impl Iterator<Item = Sample>,
) -> std::io::Result<()> {
    for s in samples {
        writeln!(
            writer,
            "{{\"vm\":{},\"ts\":{},\"locality\":[{},{}],\"periodicity\":[{},{}],\"tendency\":[{},{}],\"target\":{}}}",
            s.vm,
            s.ts,
            s.locality.rows,
            s.locality.channels,
            s.periodicity.rows,
            s.periodicity.channels,
            s.tendency.rows,
            s.tendency.channels,
            s.target,
        )?;
    }
    Ok(())
}
