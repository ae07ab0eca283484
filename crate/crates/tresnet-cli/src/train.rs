//! End-to-end training: ingest, scale, sample, fit, save.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use tresnet::model::build_model;
use tresnet::sampler::FragmentSpec;
use tresnet::training::{train, TrainConfig, TrainingError};

use crate::config::Resolver;
use crate::errors::{io_data, usage, CliError};
use crate::pipeline::{assemble_deployments, build_pipeline, load_raw_trace, pick_deployment,
    schema_from};

#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainArgs {
    /// Input trace file
    #[arg(long)]
    pub trace: Option<String>,
    /// Output directory for the model, history, and config echo
    #[arg(long)]
    pub out: PathBuf,
    /// Optional key = value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Deployment to train on (required when the trace has several)
    #[arg(long)]
    pub deployment_id: Option<String>,
    /// Relevant peer VMs appended as extra channels [default: 0]
    #[arg(long)]
    pub k: Option<usize>,
    /// Locality fragment length [default: 12]
    #[arg(long)]
    pub ll: Option<usize>,
    /// Periodicity fragment length [default: 24]
    #[arg(long)]
    pub lp: Option<usize>,
    /// Tendency fragment length [default: 7]
    #[arg(long)]
    pub lt: Option<usize>,
    /// Periodicity stride in steps [default: 12]
    #[arg(long)]
    pub tp: Option<usize>,
    /// Tendency stride in steps [default: 288]
    #[arg(long)]
    pub tt: Option<usize>,
    /// Stem feature channels, doubled by every residual block [default: 16]
    #[arg(long)]
    pub stem_channels: Option<usize>,
    /// Minibatch size [default: 64]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Maximum training epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs without validation improvement before stopping [default: 10]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Seed for initialization and shuffling [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Days of data for the training region [default: 14]
    #[arg(long)]
    pub train_days: Option<u32>,
    /// Days of data for the validation region [default: 7]
    #[arg(long)]
    pub val_days: Option<u32>,
    /// CPU columns are percentages in [0, 100] rather than fractions
    #[arg(long)]
    pub schema_percent: bool,
    /// Sampling interval in seconds [default: 300]
    #[arg(long)]
    pub interval: Option<i64>,
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let mut resolver = Resolver::new(args.config.as_deref())?;
    let trace = resolver.resolve_required("trace", args.trace.clone())?;
    let deployment_id = resolver.resolve_opt("deployment-id", args.deployment_id.clone())?;
    let k = resolver.resolve("k", args.k, 0)?;
    let spec = FragmentSpec {
        locality_len: resolver.resolve("ll", args.ll, 12)?,
        periodicity_len: resolver.resolve("lp", args.lp, 24)?,
        periodicity_stride: resolver.resolve("tp", args.tp, 12)?,
        tendency_len: resolver.resolve("lt", args.lt, 7)?,
        tendency_stride: resolver.resolve("tt", args.tt, 288)?,
    };
    let stem_channels = resolver.resolve("stem-channels", args.stem_channels, 16)?;
    let train_config = TrainConfig {
        batch_size: resolver.resolve("batch-size", args.batch_size, 64)?,
        learning_rate: resolver.resolve("lr", args.lr, 1e-3)?,
        max_epochs: resolver.resolve("epochs", args.epochs, 100)?,
        patience: resolver.resolve("patience", args.patience, 10)?,
        shuffle_seed: resolver.resolve("seed", args.seed, 0)?,
        ..TrainConfig::default()
    };
    let seed = train_config.shuffle_seed;
    let train_days = resolver.resolve("train-days", args.train_days, 14)?;
    let val_days = resolver.resolve("val-days", args.val_days, 7)?;
    let percent = resolver.resolve_flag("schema-percent", args.schema_percent)?;
    let interval = resolver.resolve("interval", args.interval, 300)?;

    spec.validate()
        .map_err(|e| usage(format!("fragment configuration: {e}")))?;
    train_config
        .validate()
        .map_err(|e| usage(e.to_string()))?;

    let schema = schema_from(percent, interval);
    let raw = load_raw_trace(Path::new(&trace), &schema)?;
    let deployment = pick_deployment(assemble_deployments(&raw)?, deployment_id.as_deref())?;
    let dep_id = deployment.deployment_id().to_string();
    let pipeline = build_pipeline(deployment, &spec, k, train_days, val_days)?;
    println!(
        "deployment {dep_id}: {} train / {} validation / {} test samples",
        pipeline.dataset.train.len(),
        pipeline.dataset.validation.len(),
        pipeline.dataset.test.len()
    );

    let mut model = build_model(&spec, k, stem_channels, seed)
        .map_err(|e| usage(format!("architecture: {e}")))?;
    model.meta.deployment_id = Some(dep_id);

    fs::create_dir_all(&args.out).map_err(|e| io_data(&args.out, e))?;
    resolver.write_echo(&args.out, "train")?;
    let history_path = args.out.join("history.csv");

    match train(
        model,
        &pipeline.dataset.train,
        &pipeline.dataset.validation,
        &train_config,
    ) {
        Ok((best, history)) => {
            write_history(&history_path, &history.to_csv())?;
            let model_path = args.out.join("model.trsn");
            let file = File::create(&model_path).map_err(|e| io_data(&model_path, e))?;
            best.save(BufWriter::new(file))
                .map_err(|e| io_data(&model_path, e))?;
            let best_stats = &history.epochs[history.best_epoch];
            println!(
                "trained {} epoch(s); best epoch {} with validation loss {:.6}",
                history.epochs.len(),
                history.best_epoch,
                best_stats.val_loss
            );
            println!("model written to {}", model_path.display());
            Ok(())
        }
        Err(TrainingError::Diverged {
            epoch,
            batch,
            history,
        }) => {
            write_history(&history_path, &history.to_csv())?;
            Err(CliError::Numeric(format!(
                "training diverged at epoch {epoch}{}; history up to the failure is in {}",
                match batch {
                    Some(b) => format!(", batch {b}"),
                    None => ", validation".into(),
                },
                history_path.display()
            )))
        }
        Err(TrainingError::BadConfig(msg)) => Err(usage(msg)),
        Err(e) => Err(CliError::Data(e.to_string())),
    }
}

fn write_history(path: &PathBuf, csv: &str) -> Result<(), CliError> {
    fs::write(path, csv).map_err(|e| io_data(path, e))
}
