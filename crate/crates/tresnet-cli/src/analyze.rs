//! Decomposition and correlation artifacts for a trace.

use std::fs;
use std::path::{Path, PathBuf};

use tresnet::analysis::{gaussian_kde, linspace, seasonal_decompose, Bandwidth,
    CorrelationMatrix};
use tresnet::data::{Channel, Deployment};

use crate::config::Resolver;
use crate::errors::{io_data, CliError};
use crate::pipeline::{assemble_deployments, load_raw_trace, pick_deployment, schema_from};
use crate::svg::{self, Panel, Series};

#[derive(Debug, Clone, Default, clap::Args)]
pub struct AnalyzeArgs {
    /// Input trace file
    #[arg(long)]
    pub trace: Option<String>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Optional key = value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Restrict the analysis to one deployment
    #[arg(long)]
    pub deployment_id: Option<String>,
    /// CPU columns are percentages in [0, 100] rather than fractions
    #[arg(long)]
    pub schema_percent: bool,
    /// Sampling interval in seconds [default: 300]
    #[arg(long)]
    pub interval: Option<i64>,
}

/// Keeps artifact file names portable regardless of id contents.
fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| io_data(path, e))
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let mut resolver = Resolver::new(args.config.as_deref())?;
    let trace = resolver.resolve_required("trace", args.trace.clone())?;
    let deployment_id = resolver.resolve_opt("deployment-id", args.deployment_id.clone())?;
    let percent = resolver.resolve_flag("schema-percent", args.schema_percent)?;
    let interval = resolver.resolve("interval", args.interval, 300)?;

    let schema = schema_from(percent, interval);
    let raw = load_raw_trace(Path::new(&trace), &schema)?;
    let deployments = assemble_deployments(&raw)?;
    let selected: Vec<Deployment> = match &deployment_id {
        Some(id) => vec![pick_deployment(deployments, Some(id))?],
        None => deployments,
    };

    fs::create_dir_all(&args.out).map_err(|e| io_data(&args.out, e))?;
    let steps_per_day = (86_400 / interval.max(1)) as usize;
    let mut notes: Vec<String> = Vec::new();

    for dep in &selected {
        let dep_tag = sanitize(dep.deployment_id());
        for vm in dep.vms() {
            let series = vm.channel(Channel::Max);
            match seasonal_decompose(&series, steps_per_day) {
                Ok(decomp) => {
                    let vm_tag = sanitize(vm.vm_id());
                    let base = args.out.join(format!("decomp_{dep_tag}_{vm_tag}"));
                    write_decomposition_csv(
                        &base.with_extension("csv"),
                        vm.start_timestamp(),
                        interval,
                        &series,
                        &decomp,
                    )?;
                    write_decomposition_svg(
                        &base.with_extension("svg"),
                        vm.start_timestamp(),
                        interval,
                        &series,
                        &decomp,
                    )?;
                }
                Err(e) => notes.push(format!(
                    "deployment {} vm {}: decomposition skipped: {e}",
                    dep.deployment_id(),
                    vm.vm_id()
                )),
            }
        }

        if dep.vm_count() < 2 {
            notes.push(format!(
                "deployment {}: only one VM, correlation KDE skipped",
                dep.deployment_id()
            ));
            continue;
        }
        match correlation_kde(dep) {
            Ok((grid, density)) => {
                let base = args.out.join(format!("correlation_kde_{dep_tag}"));
                let mut csv = String::from("correlation,density\n");
                for (x, d) in grid.iter().zip(&density) {
                    csv.push_str(&format!("{x},{d}\n"));
                }
                write_file(&base.with_extension("csv"), &csv)?;
                let panel = Panel {
                    title: format!(
                        "pairwise max-CPU correlation density ({})",
                        dep.deployment_id()
                    ),
                    series: vec![Series::new(
                        "density",
                        grid.iter().copied().zip(density.iter().copied()).collect(),
                    )],
                };
                write_file(&base.with_extension("svg"), &svg::render(&[panel], 640, 240))?;
            }
            Err(e) => notes.push(format!(
                "deployment {}: correlation KDE skipped: {e}",
                dep.deployment_id()
            )),
        }
    }

    for note in &notes {
        println!("{note}");
    }
    if !notes.is_empty() {
        write_file(&args.out.join("notes.txt"), &(notes.join("\n") + "\n"))?;
    }
    resolver.write_echo(&args.out, "analyze")?;
    println!(
        "analyzed {} deployment(s) into {}",
        selected.len(),
        args.out.display()
    );
    Ok(())
}

fn correlation_kde(dep: &Deployment) -> Result<(Vec<f64>, Vec<f64>), String> {
    let corr =
        CorrelationMatrix::compute(dep, 0..dep.len()).map_err(|e| e.to_string())?;
    let values = corr.upper_triangle_values();
    if values.is_empty() {
        return Err("no defined pairwise correlations".into());
    }
    let grid = linspace(-1.0, 1.0, 100);
    let density =
        gaussian_kde(&values, &grid, Bandwidth::Silverman).map_err(|e| e.to_string())?;
    Ok((grid, density))
}

fn write_decomposition_csv(
    path: &Path,
    start: i64,
    interval: i64,
    observed: &[f64],
    decomp: &tresnet::analysis::Decomposition,
) -> Result<(), CliError> {
    let mut out = String::from("timestamp,observed,trend,seasonal,residual\n");
    let opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (i, value) in observed.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            start + i as i64 * interval,
            value,
            opt(&decomp.trend[i]),
            decomp.seasonal[i],
            opt(&decomp.residual[i]),
        ));
    }
    write_file(path, &out)
}

fn write_decomposition_svg(
    path: &Path,
    start: i64,
    interval: i64,
    observed: &[f64],
    decomp: &tresnet::analysis::Decomposition,
) -> Result<(), CliError> {
    let at = |i: usize| (start + i as i64 * interval) as f64;
    let full = |values: &[f64]| -> Vec<(f64, f64)> {
        values.iter().enumerate().map(|(i, &v)| (at(i), v)).collect()
    };
    let partial = |values: &[Option<f64>]| -> Vec<(f64, f64)> {
        values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|y| (at(i), y)))
            .collect()
    };
    let panels = vec![
        Panel {
            title: "observed".into(),
            series: vec![Series::new("observed", full(observed))],
        },
        Panel {
            title: "trend".into(),
            series: vec![Series::new("trend", partial(&decomp.trend))],
        },
        Panel {
            title: "seasonal".into(),
            series: vec![Series::new("seasonal", full(&decomp.seasonal))],
        },
        Panel {
            title: "residual".into(),
            series: vec![Series::new("residual", partial(&decomp.residual))],
        },
    ];
    write_file(path, &svg::render(&panels, 760, 150))
}
