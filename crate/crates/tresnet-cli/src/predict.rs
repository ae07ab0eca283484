//! Next-interval predictions over the test region of a trace.

use std::fs;
use std::path::{Path, PathBuf};

use tresnet::model::{Batch, TResNetModel};
use tresnet::sampler::SampleSet;

use crate::config::Resolver;
use crate::errors::{io_data, CliError};
use crate::pipeline::{assemble_deployments, build_pipeline, effective_deployment_id,
    load_model, load_raw_trace, pick_deployment, record_meta, schema_from, MetaOverrides,
    Pipeline};

#[derive(Debug, Clone, Default, clap::Args)]
pub struct PredictArgs {
    /// Input trace file
    #[arg(long)]
    pub trace: Option<String>,
    /// Trained model file
    #[arg(long)]
    pub model: Option<String>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Optional key = value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Deployment to predict for (must match the model's, if recorded)
    #[arg(long)]
    pub deployment_id: Option<String>,
    /// Consistency check against the model file
    #[arg(long)]
    pub k: Option<usize>,
    /// Consistency check against the model file
    #[arg(long)]
    pub ll: Option<usize>,
    /// Consistency check against the model file
    #[arg(long)]
    pub lp: Option<usize>,
    /// Consistency check against the model file
    #[arg(long)]
    pub lt: Option<usize>,
    /// Consistency check against the model file
    #[arg(long)]
    pub tp: Option<usize>,
    /// Consistency check against the model file
    #[arg(long)]
    pub tt: Option<usize>,
    /// Consistency check against the model file
    #[arg(long)]
    pub stem_channels: Option<usize>,
    /// Days of data in the training region [default: 14]
    #[arg(long)]
    pub train_days: Option<u32>,
    /// Days of data in the validation region [default: 7]
    #[arg(long)]
    pub val_days: Option<u32>,
    /// Report on the raw fraction-of-capacity scale instead of normalized
    #[arg(long)]
    pub unscaled: bool,
    /// CPU columns are percentages in [0, 100] rather than fractions
    #[arg(long)]
    pub schema_percent: bool,
    /// Sampling interval in seconds [default: 300]
    #[arg(long)]
    pub interval: Option<i64>,
}

/// Batched inference over a sample set, in index order.
pub fn predict_set(
    model: &TResNetModel,
    set: &SampleSet,
    chunk: usize,
) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::with_capacity(set.len());
    let indices: Vec<usize> = (0..set.len()).collect();
    for chunk_indices in indices.chunks(chunk.max(1)) {
        let batch = Batch::from_set(set, chunk_indices)
            .map_err(|e| CliError::Data(format!("assembling a batch: {e}")))?;
        let preds = model
            .predict(&batch)
            .map_err(|e| CliError::Numeric(format!("inference failed: {e}")))?;
        out.extend(preds);
    }
    Ok(out)
}

/// The shared restore path for predict and evaluate: load the model, check
/// it against the requested configuration, and rebuild the sample pipeline
/// the model expects.
pub struct Restored {
    pub model: TResNetModel,
    pub pipeline: Pipeline,
}

#[allow(clippy::too_many_arguments)]
pub fn restore(
    resolver: &mut Resolver,
    trace: &str,
    model_path: &str,
    deployment_id: Option<String>,
    overrides: &MetaOverrides,
    train_days: u32,
    val_days: u32,
    percent: bool,
    interval: i64,
) -> Result<Restored, CliError> {
    let model = load_model(Path::new(model_path))?;
    overrides.enforce(&model.meta)?;
    record_meta(resolver, &model.meta);
    let effective_id = effective_deployment_id(deployment_id, &model.meta)?;

    let schema = schema_from(percent, interval);
    let raw = load_raw_trace(Path::new(trace), &schema)?;
    let deployment = pick_deployment(assemble_deployments(&raw)?, effective_id.as_deref())?;
    let pipeline = build_pipeline(
        deployment,
        &model.meta.fragment_spec,
        model.meta.k,
        train_days,
        val_days,
    )?;
    Ok(Restored { model, pipeline })
}

pub fn cmd_predict(args: &PredictArgs) -> Result<(), CliError> {
    let mut resolver = Resolver::new(args.config.as_deref())?;
    let trace = resolver.resolve_required("trace", args.trace.clone())?;
    let model_path = resolver.resolve_required("model", args.model.clone())?;
    let deployment_id = resolver.resolve_opt("deployment-id", args.deployment_id.clone())?;
    let overrides = MetaOverrides::resolve(
        &mut resolver,
        args.k,
        args.ll,
        args.lp,
        args.lt,
        args.tp,
        args.tt,
        args.stem_channels,
    )?;
    let train_days = resolver.resolve("train-days", args.train_days, 14)?;
    let val_days = resolver.resolve("val-days", args.val_days, 7)?;
    let unscaled = resolver.resolve_flag("unscaled", args.unscaled)?;
    let percent = resolver.resolve_flag("schema-percent", args.schema_percent)?;
    let interval = resolver.resolve("interval", args.interval, 300)?;

    let restored = restore(
        &mut resolver,
        &trace,
        &model_path,
        deployment_id,
        &overrides,
        train_days,
        val_days,
        percent,
        interval,
    )?;
    let Restored { model, pipeline } = &restored;
    let test = &pipeline.dataset.test;
    if test.is_empty() {
        return Err(CliError::Data("the test region holds no samples".into()));
    }

    let mut predictions = predict_set(model, test, 256)?;
    let mut truths = test.targets();
    if unscaled {
        for i in 0..test.len() {
            let (vm, _) = test.entry(i);
            let scaler = &pipeline.scalers.per_vm[vm][2];
            predictions[i] = scaler.unscale(predictions[i]);
            truths[i] = scaler.unscale(truths[i]);
        }
    }

    fs::create_dir_all(&args.out).map_err(|e| io_data(&args.out, e))?;
    let mut csv = String::from("vm_id,timestamp,prediction,truth\n");
    for i in 0..test.len() {
        let (vm, ts) = test.entry(i);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            pipeline.deployment.vm(vm).vm_id(),
            pipeline.deployment.timestamp_at(ts + 1),
            predictions[i],
            truths[i],
        ));
    }
    let csv_path = args.out.join("predictions.csv");
    fs::write(&csv_path, csv).map_err(|e| io_data(&csv_path, e))?;
    resolver.write_echo(&args.out, "predict")?;
    println!(
        "wrote {} predictions to {}",
        test.len(),
        csv_path.display()
    );
    Ok(())
}
