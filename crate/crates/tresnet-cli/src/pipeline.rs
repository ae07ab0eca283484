//! Shared trace-to-dataset assembly for train, predict, and evaluate.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use tresnet::data::{
    filter_long_running, parse_trace, Deployment, RawTrace, SplitSpec, TraceSchema,
    DEFAULT_LOG_EPSILON,
};
use tresnet::sampler::{build_dataset, fit_deployment_scalers, Dataset, DeploymentScalers,
    FragmentSpec};

use crate::errors::{io_data, usage, CliError};

pub fn schema_from(percent: bool, interval: i64) -> TraceSchema {
    if percent {
        TraceSchema::percentages(interval)
    } else {
        TraceSchema::fractions(interval)
    }
}

pub fn load_raw_trace(path: &Path, schema: &TraceSchema) -> Result<RawTrace, CliError> {
    let file = File::open(path).map_err(|e| io_data(path, e))?;
    parse_trace(BufReader::new(file), schema).map_err(|e| io_data(path, e))
}

/// Keeps the VMs that cover the longest span present in the trace, grouped
/// into deployments.
pub fn assemble_deployments(raw: &RawTrace) -> Result<Vec<Deployment>, CliError> {
    let interval = raw.interval_seconds;
    let span = raw
        .deployments
        .iter()
        .flat_map(|d| d.vms.iter())
        .filter_map(|vm| {
            let first = vm.rows.first()?.0;
            let last = vm.rows.last()?.0;
            Some(last - first)
        })
        .max()
        .map(|s| s + interval)
        .unwrap_or(interval);
    let deployments =
        filter_long_running(raw, span).map_err(|e| CliError::Data(e.to_string()))?;
    if deployments.is_empty() {
        return Err(CliError::Data(
            "no deployment in the trace covers its full span".into(),
        ));
    }
    Ok(deployments)
}

/// Picks by id when given; otherwise the trace must hold exactly one
/// deployment.
pub fn pick_deployment(
    mut deployments: Vec<Deployment>,
    id: Option<&str>,
) -> Result<Deployment, CliError> {
    let available = || {
        deployments
            .iter()
            .map(|d| d.deployment_id().to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    match id {
        Some(id) => {
            let index = deployments
                .iter()
                .position(|d| d.deployment_id() == id)
                .ok_or_else(|| {
                    usage(format!(
                        "deployment `{id}` not found; trace has: {}",
                        available()
                    ))
                })?;
            Ok(deployments.swap_remove(index))
        }
        None => {
            if deployments.len() == 1 {
                Ok(deployments.pop().expect("length checked"))
            } else {
                Err(usage(format!(
                    "trace holds {} deployments; pick one with --deployment-id ({})",
                    deployments.len(),
                    available()
                )))
            }
        }
    }
}

#[derive(Debug)]
pub struct Pipeline {
    pub deployment: Deployment,
    pub split: SplitSpec,
    pub scalers: DeploymentScalers,
    pub dataset: Dataset,
}

/// Fits scalers on the training region only, then materializes the three
/// sample collections.
pub fn build_pipeline(
    deployment: Deployment,
    spec: &FragmentSpec,
    k: usize,
    train_days: u32,
    val_days: u32,
) -> Result<Pipeline, CliError> {
    let split = SplitSpec::from_days(
        train_days,
        val_days,
        deployment.interval_seconds(),
        deployment.len(),
    )
    .map_err(|e| {
        usage(format!(
            "split of {train_days}+{val_days} days does not fit a {}-step trace: {e}",
            deployment.len()
        ))
    })?;
    let scalers = fit_deployment_scalers(&deployment, split.train_end, DEFAULT_LOG_EPSILON)
        .map_err(|e| CliError::Data(format!("fitting scalers: {e}")))?;
    let dataset = build_dataset(&deployment, k, spec, &split, &scalers)
        .map_err(|e| CliError::Data(format!("building samples: {e}")))?;
    Ok(Pipeline {
        deployment,
        split,
        scalers,
        dataset,
    })
}

/// Fragment/architecture values predict and evaluate accept purely as
/// consistency checks against the model file's metadata.
#[derive(Debug, Clone, Default)]
pub struct MetaOverrides {
    pub k: Option<usize>,
    pub ll: Option<usize>,
    pub lp: Option<usize>,
    pub lt: Option<usize>,
    pub tp: Option<usize>,
    pub tt: Option<usize>,
    pub stem_channels: Option<usize>,
}

impl MetaOverrides {
    pub fn resolve(
        r: &mut crate::config::Resolver,
        k: Option<usize>,
        ll: Option<usize>,
        lp: Option<usize>,
        lt: Option<usize>,
        tp: Option<usize>,
        tt: Option<usize>,
        stem_channels: Option<usize>,
    ) -> Result<Self, CliError> {
        Ok(MetaOverrides {
            k: r.resolve_opt("k", k)?,
            ll: r.resolve_opt("ll", ll)?,
            lp: r.resolve_opt("lp", lp)?,
            lt: r.resolve_opt("lt", lt)?,
            tp: r.resolve_opt("tp", tp)?,
            tt: r.resolve_opt("tt", tt)?,
            stem_channels: r.resolve_opt("stem-channels", stem_channels)?,
        })
    }

    /// Any value present in flags or config must match the model file.
    pub fn enforce(&self, meta: &tresnet::model::ModelMeta) -> Result<(), CliError> {
        let spec = &meta.fragment_spec;
        let checks: [(&str, Option<usize>, usize); 7] = [
            ("k", self.k, meta.k),
            ("ll", self.ll, spec.locality_len),
            ("lp", self.lp, spec.periodicity_len),
            ("tp", self.tp, spec.periodicity_stride),
            ("lt", self.lt, spec.tendency_len),
            ("tt", self.tt, spec.tendency_stride),
            ("stem-channels", self.stem_channels, meta.stem_channels),
        ];
        for (name, given, actual) in checks {
            if let Some(given) = given {
                if given != actual {
                    return Err(usage(format!(
                        "model/config mismatch: {name} is {actual} in the model file, \
                         {given} in the configuration"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn load_model(path: &Path) -> Result<tresnet::model::TResNetModel, CliError> {
    let file = File::open(path).map_err(|e| io_data(path, e))?;
    tresnet::model::TResNetModel::load(BufReader::new(file)).map_err(|e| io_data(path, e))
}

/// Echoes the model's effective architecture so the echo file is complete.
pub fn record_meta(r: &mut crate::config::Resolver, meta: &tresnet::model::ModelMeta) {
    let spec = &meta.fragment_spec;
    r.record("k", meta.k);
    r.record("ll", spec.locality_len);
    r.record("lp", spec.periodicity_len);
    r.record("tp", spec.periodicity_stride);
    r.record("lt", spec.tendency_len);
    r.record("tt", spec.tendency_stride);
    r.record("stem-channels", meta.stem_channels);
}

/// Resolves which deployment a saved model applies to: an explicit request
/// must agree with the metadata, otherwise the metadata decides.
pub fn effective_deployment_id(
    requested: Option<String>,
    meta: &tresnet::model::ModelMeta,
) -> Result<Option<String>, CliError> {
    match (&requested, &meta.deployment_id) {
        (Some(req), Some(trained)) if req != trained => Err(usage(format!(
            "model/config mismatch: the model was trained on deployment `{trained}`, \
             the configuration asks for `{req}`"
        ))),
        (None, Some(trained)) => Ok(Some(trained.clone())),
        _ => Ok(requested),
    }
}
