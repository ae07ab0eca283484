//! Seeded synthetic utilization traces.
//!
//! Each deployment mixes three latent ingredients: a daily sinusoid, a
//! piecewise-linear drift, and autoregressive noise. Every VM blends a
//! deployment-shared stack of those with a private stack, weighted
//! sqrt(rho) / sqrt(1 - rho), so pairwise correlation is steered by `rho`
//! and validated empirically rather than guaranteed analytically.

use std::f64::consts::TAU;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use tresnet::data::{CpuReading, Deployment, VmSeries};

use crate::errors::{usage, CliError};

/// First timestamp of every generated trace, in epoch seconds.
pub const SYNTH_START: i64 = 1_700_000_000;

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub vms: usize,
    pub days: u32,
    pub interval: i64,
    pub rho: f64,
    pub noise: f64,
    pub deployments: usize,
    pub drift_segments: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            vms: 8,
            days: 30,
            interval: 300,
            rho: 0.9,
            noise: 0.1,
            deployments: 1,
            drift_segments: 4,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.vms == 0 || self.days == 0 || self.deployments == 0 || self.drift_segments == 0 {
            return Err(usage(
                "vms, days, deployments, and drift-segments must all be positive",
            ));
        }
        if self.interval <= 0 || 86_400 % self.interval != 0 {
            return Err(usage(format!(
                "interval must be a positive divisor of 86400 seconds, got {}",
                self.interval
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(usage(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return Err(usage(format!(
                "noise must be non-negative, got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Zero-mean, unit-variance copy; constant inputs come back as zeros.
fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    for v in values.iter_mut() {
        *v = (*v - mean) / std;
    }
}

/// One daily sinusoid plus a weaker second harmonic, standardized.
fn sinusoid(steps: usize, steps_per_day: usize, phase: f64, harmonic: f64) -> Vec<f64> {
    let p = steps_per_day as f64;
    let mut out: Vec<f64> = (0..steps)
        .map(|t| {
            let theta = TAU * t as f64 / p + phase;
            theta.sin() + harmonic * (2.0 * theta).sin()
        })
        .collect();
    standardize(&mut out);
    out
}

/// Piecewise-linear interpolation through uniformly drawn knots, standardized.
fn drift(steps: usize, segments: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let knots: Vec<f64> = (0..=segments).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let pos = t as f64 / (steps.max(2) - 1) as f64 * segments as f64;
        let seg = (pos.floor() as usize).min(segments - 1);
        let frac = pos - seg as f64;
        out.push(knots[seg] * (1.0 - frac) + knots[seg + 1] * frac);
    }
    standardize(&mut out);
    out
}

/// Stationary unit-variance AR(1), standardized empirically afterwards.
fn ar1(steps: usize, a: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let innovation_scale = (1.0 - a * a).sqrt();
    let mut out = Vec::with_capacity(steps);
    let mut x: f64 = normal.sample(rng);
    for _ in 0..steps {
        out.push(x);
        x = a * x + innovation_scale * normal.sample(rng);
    }
    standardize(&mut out);
    out
}

const DRIFT_WEIGHT: f64 = 0.6;
/// The private stack down-weights its sinusoid so random phase offsets
/// cannot cancel much of the shared one at high rho.
const OWN_SEASON_WEIGHT: f64 = 0.5;
const SHARED_AR_COEFF: f64 = 0.97;
const IDIO_AR_COEFF: f64 = 0.45;

/// Weighted season + drift + noise mix, standardized to unit variance.
fn stack(season: &[f64], drift: &[f64], ar: &[f64], season_w: f64, noise: f64) -> Vec<f64> {
    let mut out: Vec<f64> = (0..season.len())
        .map(|t| season_w * season[t] + DRIFT_WEIGHT * drift[t] + noise * ar[t])
        .collect();
    standardize(&mut out);
    out
}

pub fn generate(params: &SynthParams) -> Result<Vec<Deployment>, CliError> {
    params.validate()?;
    let steps_per_day = (86_400 / params.interval) as usize;
    let steps = params.days as usize * steps_per_day;

    let mut deployments = Vec::with_capacity(params.deployments);
    for d in 0..params.deployments {
        let mut rng = ChaCha8Rng::seed_from_u64(
            params
                .seed
                .wrapping_add((d as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );

        let phase = rng.random_range(0.0..TAU);
        let harmonic = rng.random_range(0.15..0.35);
        let shared_season = sinusoid(steps, steps_per_day, phase, harmonic);
        let shared_drift = drift(steps, params.drift_segments, &mut rng);
        let shared_ar = ar1(steps, SHARED_AR_COEFF, &mut rng);
        let shared_stack = stack(&shared_season, &shared_drift, &shared_ar, 1.0, params.noise);

        let w_shared = params.rho.sqrt();
        let w_own = (1.0 - params.rho).sqrt();

        let mut vms = Vec::with_capacity(params.vms);
        for v in 0..params.vms {
            let own_phase = rng.random_range(0.0..TAU);
            let own_harmonic = rng.random_range(0.15..0.35);
            let own_season = sinusoid(steps, steps_per_day, own_phase, own_harmonic);
            let own_drift = drift(steps, params.drift_segments, &mut rng);
            let own_ar = ar1(steps, IDIO_AR_COEFF, &mut rng);
            let own_stack = stack(
                &own_season,
                &own_drift,
                &own_ar,
                OWN_SEASON_WEIGHT,
                params.noise,
            );

            let center = 0.45 + rng.random_range(-0.05..0.05);
            let amplitude = 0.08 + rng.random_range(0.0..0.03);
            let r_min = rng.random_range(0.50..0.65);
            let r_avg = rng.random_range(0.72..0.88);

            let readings: Vec<CpuReading> = (0..steps)
                .map(|t| {
                    let signal = w_shared * shared_stack[t] + w_own * own_stack[t];
                    let base = (center + amplitude * signal).clamp(0.01, 0.99);
                    CpuReading::new(r_min * base, r_avg * base, base)
                })
                .collect();

            let series = VmSeries::new(
                format!("vm{d}-{v}"),
                params.interval,
                SYNTH_START,
                readings,
            )
            .map_err(|e| CliError::Data(format!("generated series invalid: {e}")))?;
            vms.push(series);
        }

        let deployment = Deployment::new(format!("dep{d}"), vms)
            .map_err(|e| CliError::Data(format!("generated deployment invalid: {e}")))?;
        deployments.push(deployment);
    }
    Ok(deployments)
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct SynthArgs {
    /// Output directory for trace.csv and the config echo
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Optional key = value configuration file
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// VMs per deployment [default: 8]
    #[arg(long)]
    pub vms: Option<usize>,
    /// Trace length in days [default: 30]
    #[arg(long)]
    pub days: Option<u32>,
    /// Sampling interval in seconds, a divisor of 86400 [default: 300]
    #[arg(long)]
    pub interval: Option<i64>,
    /// Target pairwise correlation in [0, 1] [default: 0.9]
    #[arg(long)]
    pub rho: Option<f64>,
    /// Autoregressive noise weight, 0 disables noise [default: 0.1]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Number of deployments [default: 1]
    #[arg(long)]
    pub deployments: Option<usize>,
    /// Piecewise-linear drift segments [default: 4]
    #[arg(long)]
    pub drift_segments: Option<usize>,
    /// Generator seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let mut resolver = crate::config::Resolver::new(args.config.as_deref())?;
    let params = SynthParams {
        vms: resolver.resolve("vms", args.vms, 8)?,
        days: resolver.resolve("days", args.days, 30)?,
        interval: resolver.resolve("interval", args.interval, 300)?,
        rho: resolver.resolve("rho", args.rho, 0.9)?,
        noise: resolver.resolve("noise", args.noise, 0.1)?,
        deployments: resolver.resolve("deployments", args.deployments, 1)?,
        drift_segments: resolver.resolve("drift-segments", args.drift_segments, 4)?,
        seed: resolver.resolve("seed", args.seed, 0)?,
    };
    let deployments = generate(&params)?;

    std::fs::create_dir_all(&args.out).map_err(|e| crate::errors::io_data(&args.out, e))?;
    let trace_path = args.out.join("trace.csv");
    let file = std::fs::File::create(&trace_path)
        .map_err(|e| crate::errors::io_data(&trace_path, e))?;
    tresnet::data::serialize_trace(std::io::BufWriter::new(file), &deployments)
        .map_err(|e| crate::errors::io_data(&trace_path, e))?;
    resolver.write_echo(&args.out, "synth")?;

    let steps = deployments[0].len();
    println!(
        "wrote {} deployment(s) x {} VM(s) x {} steps to {}",
        deployments.len(),
        params.vms,
        steps,
        trace_path.display()
    );
    Ok(())
}
