//! Model-versus-baselines scoring over the test region.

use std::fs;
use std::path::PathBuf;

use tresnet::eval::{evaluate, mean_predict, naive_predict, seasonal_naive_predict,
    tresnet_method_name, EvalError, EvalScale, MetricReport};
use tresnet::sampler::{Sample, SampleSet};

use crate::config::Resolver;
use crate::errors::{io_data, CliError};
use crate::predict::{predict_set, restore, Restored};
use crate::pipeline::MetaOverrides;
use crate::svg::{self, Panel, Series};

#[derive(Debug, Clone, Default, clap::Args)]
pub struct EvaluateArgs {
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
    /// Deployment to evaluate on (must match the model's, if recorded)
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
    /// Truths below this are excluded from MAPE [default: 0.001]
    #[arg(long)]
    pub mape_floor: Option<f64>,
    /// Also write a per-VM metric breakdown
    #[arg(long)]
    pub per_vm: bool,
    /// Report on the raw fraction-of-capacity scale instead of normalized
    #[arg(long)]
    pub unscaled: bool,
    /// Window of the mean baseline, at most the locality length [default: 12]
    #[arg(long)]
    pub window: Option<usize>,
    /// CPU columns are percentages in [0, 100] rather than fractions
    #[arg(long)]
    pub schema_percent: bool,
    /// Sampling interval in seconds [default: 300]
    #[arg(long)]
    pub interval: Option<i64>,
}

/// Scores the four methods over one sample set.
fn score_set(
    restored: &Restored,
    set: &SampleSet,
    unscale: bool,
    window: usize,
    floor: f64,
    scale: EvalScale,
) -> Result<MetricReport, CliError> {
    let samples: Vec<Sample> = set.iter().collect();
    let mut truths = set.targets();
    let model_preds = predict_set(&restored.model, set, 256)?;

    let transform = |i: usize, v: f64| -> f64 {
        if unscale {
            let (vm, _) = set.entry(i);
            restored.pipeline.scalers.per_vm[vm][2].unscale(v)
        } else {
            v
        }
    };
    let transform_all = |values: Result<Vec<f64>, EvalError>| {
        values.map(|v| v.into_iter().enumerate().map(|(i, x)| transform(i, x)).collect())
    };

    for (i, t) in truths.iter_mut().enumerate() {
        *t = transform(i, *t);
    }
    let methods = vec![
        ("NAIVE".to_string(), transform_all(Ok(naive_predict(&samples)))),
        (
            "SEASONAL-NAIVE".to_string(),
            transform_all(seasonal_naive_predict(&samples, 1)),
        ),
        (
            "WINDOW-MEAN".to_string(),
            transform_all(mean_predict(&samples, window)),
        ),
        (
            tresnet_method_name(restored.model.meta.k),
            transform_all(Ok(model_preds)),
        ),
    ];
    evaluate(methods, &truths, floor, scale).map_err(|e| CliError::Data(e.to_string()))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
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
    let floor = resolver.resolve("mape-floor", args.mape_floor, 1e-3)?;
    let per_vm = resolver.resolve_flag("per-vm", args.per_vm)?;
    let unscaled = resolver.resolve_flag("unscaled", args.unscaled)?;
    let window = resolver.resolve("window", args.window, 12)?;
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
    let test = &restored.pipeline.dataset.test;
    if test.is_empty() {
        return Err(CliError::Data("the test region holds no samples".into()));
    }
    let scale = if unscaled {
        EvalScale::Unscaled
    } else {
        EvalScale::Normalized
    };

    let report = score_set(&restored, test, unscaled, window, floor, scale)?;

    fs::create_dir_all(&args.out).map_err(|e| io_data(&args.out, e))?;
    let text = report.to_text();
    print!("{text}");
    let txt_path = args.out.join("report.txt");
    fs::write(&txt_path, &text).map_err(|e| io_data(&txt_path, e))?;
    let csv_path = args.out.join("report.csv");
    fs::write(&csv_path, report.to_csv()).map_err(|e| io_data(&csv_path, e))?;

    if per_vm {
        write_per_vm_breakdown(&args.out, &restored, unscaled, window, floor, scale)?;
    }
    write_overlays(&args.out, &restored, unscaled)?;
    resolver.write_echo(&args.out, "evaluate")?;
    println!("report written to {}", txt_path.display());
    Ok(())
}

fn write_per_vm_breakdown(
    out: &PathBuf,
    restored: &Restored,
    unscaled: bool,
    window: usize,
    floor: f64,
    scale: EvalScale,
) -> Result<(), CliError> {
    let mut csv = String::from("method,vm_id,rmse,mae,mape,n,excluded\n");
    let test = &restored.pipeline.dataset.test;
    for vm in 0..restored.pipeline.deployment.vm_count() {
        let subset = test.for_vm(vm);
        if subset.is_empty() {
            continue;
        }
        let report = score_set(restored, &subset, unscaled, window, floor, scale)?;
        let vm_id = restored.pipeline.deployment.vm(vm).vm_id();
        for entry in &report.methods {
            if let Ok(s) = &entry.outcome {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    entry.method, vm_id, s.rmse, s.mae, s.mape, report.sample_count,
                    s.mape_excluded
                ));
            }
        }
    }
    let path = out.join("per_vm.csv");
    fs::write(&path, csv).map_err(|e| io_data(&path, e))
}

/// One prediction-versus-truth chart per VM over the test timestamps.
fn write_overlays(out: &PathBuf, restored: &Restored, unscaled: bool) -> Result<(), CliError> {
    let test = &restored.pipeline.dataset.test;
    for vm in 0..restored.pipeline.deployment.vm_count() {
        let subset = test.for_vm(vm);
        if subset.is_empty() {
            continue;
        }
        let mut predictions = predict_set(&restored.model, &subset, 256)?;
        let mut truths = subset.targets();
        if unscaled {
            let scaler = &restored.pipeline.scalers.per_vm[vm][2];
            predictions.iter_mut().for_each(|p| *p = scaler.unscale(*p));
            truths.iter_mut().for_each(|t| *t = scaler.unscale(*t));
        }
        let times: Vec<f64> = (0..subset.len())
            .map(|i| {
                let (_, ts) = subset.entry(i);
                restored.pipeline.deployment.timestamp_at(ts + 1) as f64
            })
            .collect();
        let vm_id = restored.pipeline.deployment.vm(vm).vm_id();
        let panel = Panel {
            title: format!("{vm_id}: next-interval max CPU, test region"),
            series: vec![
                Series::new("truth", times.iter().copied().zip(truths).collect()),
                Series::new("predicted", times.iter().copied().zip(predictions).collect()),
            ],
        };
        let path = out.join(format!(
            "overlay_{}.svg",
            vm_id
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
                .collect::<String>()
        ));
        fs::write(&path, svg::render(&[panel], 760, 220)).map_err(|e| io_data(&path, e))?;
    }
    Ok(())
}
