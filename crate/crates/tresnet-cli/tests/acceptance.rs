//! Acceptance gate: one test per release criterion. Each test line printed by
//! the harness is the pass/fail verdict for that criterion; the printed
//! details (visible with --nocapture) carry the measured numbers.

use std::fs;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tresnet::analysis::{
    gaussian_kde, linspace, pearson, seasonal_decompose, top_k_relevant, Bandwidth,
};
use tresnet::data::{
    fit_scaler, parse_trace, serialize_trace, CpuReading, Deployment, TraceSchema, VmSeries,
};
use tresnet::eval::{mae, mape, rmse};
use tresnet::model::{
    blocks_for_length, build_model, mse_gradient, mse_loss, Batch, TResNetModel,
};
use tresnet::nn::gradcheck::relative_error;
use tresnet::nn::{avg_pool_time, relu, sigmoid, BatchNorm1d, Conv1d, Dense, ResidualBlock, Tensor};
use tresnet::sampler::{extract_fragments, ExpandedSeries, FragmentSpec, Sample};

use tresnet_cli::evaluate::{cmd_evaluate, EvaluateArgs};
use tresnet_cli::synth::{cmd_synth, SynthArgs};
use tresnet_cli::train::{cmd_train, TrainArgs};

// Reference deployment for the convergence and relevant-VM criteria: 8 VMs,
// 30 days at 5-minute cadence, correlation target 0.9, moderate noise. The
// noise weight was fixed after a five-seed-pair study (see the ignored
// extended test below); the same value must keep the K=2 advantage stable.
const REF_VMS: usize = 8;
const REF_DAYS: u32 = 30;
const REF_INTERVAL: i64 = 300;
const REF_RHO: f64 = 0.9;
const REF_NOISE: f64 = 0.4;
const REF_TRAIN_DAYS: u32 = 8;
const REF_VAL_DAYS: u32 = 2;
const REF_EPOCHS: usize = 40;
const REF_PATIENCE: usize = 40;
const REF_LR: f64 = 5e-4;
const REF_BATCH: usize = 64;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn max_rel(actual: &[f64], expected: &[f64]) -> f64 {
    assert_eq!(actual.len(), expected.len());
    actual
        .iter()
        .zip(expected)
        .map(|(&a, &e)| relative_error(a, e))
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Gradient correctness
// ---------------------------------------------------------------------------

fn miniature_spec() -> FragmentSpec {
    FragmentSpec {
        locality_len: 4,
        periodicity_len: 4,
        periodicity_stride: 2,
        tendency_len: 3,
        tendency_stride: 3,
    }
}

fn random_batch(spec: &FragmentSpec, k: usize, rng: &mut ChaCha8Rng) -> (Batch, Vec<f64>) {
    let len = spec.horizon() + 4;
    let series = ExpandedSeries {
        target_vm: 0,
        relevant_vms: (1..=k).collect(),
        channels: (0..3 + k)
            .map(|_| (0..len).map(|_| rng.random_range(0.05..0.95)).collect())
            .collect(),
    };
    let mut samples = Vec::new();
    for ts in spec.horizon()..spec.horizon() + 2 {
        let (l, p, t) = extract_fragments(&series, ts, spec).unwrap();
        samples.push(Sample {
            vm: 0,
            ts,
            locality: l,
            periodicity: p,
            tendency: t,
            target: rng.random_range(0.1..0.9),
        });
    }
    let targets = samples.iter().map(|s| s.target).collect();
    (Batch::from_samples(&samples).unwrap(), targets)
}

/// Training-mode batch loss of `model` with its parameters overwritten by
/// `flat`. Works on a clone, so running statistics are never disturbed.
fn loss_at(model: &TResNetModel, flat: &[f64], batch: &Batch, targets: &[f64]) -> f64 {
    let mut probe = model.clone();
    let mut cursor = 0;
    for tensor in probe.parameters_mut() {
        let n = tensor.len();
        tensor.data_mut().copy_from_slice(&flat[cursor..cursor + n]);
        cursor += n;
    }
    assert_eq!(cursor, flat.len());
    let (preds, _) = probe.forward_train(batch).unwrap();
    mse_loss(&preds, targets).unwrap()
}

#[test]
fn criterion_gradient_correctness() {
    let start = Instant::now();
    let spec = miniature_spec();
    let mut worst = 0.0f64;
    for k in [0usize, 1] {
        for seed in 0..10u64 {
            let mut data_rng = rng(0xA11CE + seed * 31 + k as u64);
            let (batch, targets) = random_batch(&spec, k, &mut data_rng);
            let mut model = build_model(&spec, k, 2, seed).unwrap();

            let (preds, cache) = model.forward_train(&batch).unwrap();
            let grads = model.backward(&cache, &mse_gradient(&preds, &targets).unwrap()).unwrap();
            let analytic: Vec<f64> = grads
                .tensors
                .iter()
                .flat_map(|t| t.data().iter().copied())
                .collect();

            let flat: Vec<f64> = model
                .parameters()
                .iter()
                .flat_map(|t| t.data().iter().copied())
                .collect();
            assert_eq!(flat.len(), analytic.len());

            // Independent central finite differences over every parameter.
            let h = 1e-5;
            let mut numeric = Vec::with_capacity(flat.len());
            let mut scratch = flat.clone();
            for i in 0..flat.len() {
                scratch[i] = flat[i] + h;
                let plus = loss_at(&model, &scratch, &batch, &targets);
                scratch[i] = flat[i] - h;
                let minus = loss_at(&model, &scratch, &batch, &targets);
                scratch[i] = flat[i];
                numeric.push((plus - minus) / (2.0 * h));
            }
            worst = worst.max(max_rel(&numeric, &analytic));
        }
    }
    let elapsed = start.elapsed();
    println!("gradient check: max relative error {worst:.3e} over 20 seeded models in {elapsed:.1?}");
    assert!(worst < 1e-4, "max relative error {worst}");
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
}

// ---------------------------------------------------------------------------
// Layer oracles
// ---------------------------------------------------------------------------

fn random_tensor(dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

fn brute_conv(conv: &Conv1d, x: &Tensor) -> Vec<f64> {
    let (b, l, c) = x.dims3().unwrap();
    let l_out = conv.output_len(l).unwrap();
    let (oc, k, pad, stride) = (conv.out_channels, conv.kernel_size, conv.padding, conv.stride);
    let w = conv.weights.data();
    let at = |bi: usize, ti: i64, ci: usize| -> f64 {
        if ti < 0 || ti >= l as i64 {
            0.0
        } else {
            x.data()[(bi * l + ti as usize) * c + ci]
        }
    };
    let mut out = Vec::with_capacity(b * l_out * oc);
    for bi in 0..b {
        for lo in 0..l_out {
            for o in 0..oc {
                let mut acc = 0.0;
                for ci in 0..c {
                    for ki in 0..k {
                        let ti = (lo * stride + ki) as i64 - pad as i64;
                        acc += w[(o * c + ci) * k + ki] * at(bi, ti, ci);
                    }
                }
                if let Some(bias) = &conv.bias {
                    acc += bias.data()[o];
                }
                out.push(acc);
            }
        }
    }
    out
}

#[test]
fn criterion_layer_oracles() {
    let start = Instant::now();
    let mut r = rng(0x04AC1E);
    let cases = 20;

    // conv1d vs an index-arithmetic triple loop.
    let mut conv_worst = 0.0f64;
    for _ in 0..cases {
        let (c, oc) = (r.random_range(1..4), r.random_range(1..5));
        let k = r.random_range(1..4);
        let stride = r.random_range(1..3);
        let pad = r.random_range(0..2);
        let l = r.random_range(k.max(2)..10);
        let b = r.random_range(1..4);
        let mut conv = Conv1d::new(c, oc, k, stride, pad, r.random_bool(0.5)).unwrap();
        conv.init_he(&mut r);
        if let Some(bias) = &mut conv.bias {
            for v in bias.data_mut() {
                *v = r.random_range(-0.5..0.5);
            }
        }
        let x = random_tensor(&[b, l, c], &mut r);
        let y = conv.forward(&x).unwrap();
        conv_worst = conv_worst.max(max_rel(y.data(), &brute_conv(&conv, &x)));
    }
    assert!(conv_worst < 1e-5, "conv worst {conv_worst}");

    // Batch norm (training mode) vs the direct biased-moment formula.
    let mut bn_worst = 0.0f64;
    for _ in 0..cases {
        let c = r.random_range(1..5);
        let (b, l) = (r.random_range(1..4), r.random_range(2..7));
        let mut bn = BatchNorm1d::new(c).unwrap();
        for v in bn.gamma.data_mut() {
            *v = r.random_range(0.5..1.5);
        }
        for v in bn.beta.data_mut() {
            *v = r.random_range(-0.5..0.5);
        }
        let x = random_tensor(&[b, l, c], &mut r);
        let (y, _) = bn.forward_train(&x).unwrap();

        let m = (b * l) as f64;
        let mut expected = vec![0.0; b * l * c];
        for ch in 0..c {
            let column: Vec<f64> = (0..b * l).map(|i| x.data()[i * c + ch]).collect();
            let mean = column.iter().sum::<f64>() / m;
            let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            for (i, &v) in column.iter().enumerate() {
                expected[i * c + ch] = bn.gamma.data()[ch] * (v - mean) / (var + bn.epsilon).sqrt()
                    + bn.beta.data()[ch];
            }
        }
        bn_worst = bn_worst.max(max_rel(y.data(), &expected));
    }
    assert!(bn_worst < 1e-5, "batch norm worst {bn_worst}");

    // ReLU and sigmoid vs pointwise references.
    let mut act_worst = 0.0f64;
    for _ in 0..cases {
        let x = random_tensor(&[r.random_range(1..4), r.random_range(1..6), 2], &mut r);
        let (yr, ys) = (relu(&x), sigmoid(&x));
        for (i, &v) in x.data().iter().enumerate() {
            act_worst = act_worst.max(relative_error(yr.data()[i], v.max(0.0)));
            act_worst = act_worst.max(relative_error(ys.data()[i], 1.0 / (1.0 + (-v).exp())));
        }
    }
    assert!(act_worst < 1e-12, "activation worst {act_worst}");

    // Global average pooling vs a direct mean.
    let mut pool_worst = 0.0f64;
    for _ in 0..cases {
        let (b, l, c) = (r.random_range(1..4), r.random_range(1..8), r.random_range(1..5));
        let x = random_tensor(&[b, l, c], &mut r);
        let y = avg_pool_time(&x).unwrap();
        for bi in 0..b {
            for ch in 0..c {
                let mean =
                    (0..l).map(|t| x.data()[(bi * l + t) * c + ch]).sum::<f64>() / l as f64;
                pool_worst = pool_worst.max(relative_error(y.data()[bi * c + ch], mean));
            }
        }
    }
    assert!(pool_worst < 1e-12, "pool worst {pool_worst}");

    // Dense vs a direct matrix-vector loop.
    let mut dense_worst = 0.0f64;
    for _ in 0..cases {
        let (fi, fo, b) = (r.random_range(1..7), r.random_range(1..5), r.random_range(1..4));
        let mut dense = Dense::new(fi, fo).unwrap();
        dense.init_he(&mut r);
        for v in dense.bias.data_mut() {
            *v = r.random_range(-0.5..0.5);
        }
        let x = random_tensor(&[b, fi], &mut r);
        let y = dense.forward(&x).unwrap();
        for bi in 0..b {
            for o in 0..fo {
                let want = (0..fi)
                    .map(|i| dense.weights.data()[o * fi + i] * x.data()[bi * fi + i])
                    .sum::<f64>()
                    + dense.bias.data()[o];
                dense_worst = dense_worst.max(relative_error(y.data()[bi * fo + o], want));
            }
        }
    }
    assert!(dense_worst < 1e-5, "dense worst {dense_worst}");

    // Residual block end to end: analytic input gradient vs central
    // finite differences of the scalar sum of outputs.
    let mut block_worst = 0.0f64;
    for case in 0..cases {
        let c = r.random_range(1..4);
        let (b, l) = (r.random_range(2..4), r.random_range(2..7));
        let mut block = ResidualBlock::new(c).unwrap();
        block.init_he(&mut r);
        let x = random_tensor(&[b, l, c], &mut r);

        let (y, cache) = block.clone().forward_train(&x).unwrap();
        let ones = Tensor::from_vec(y.dims(), vec![1.0; y.len()]).unwrap();
        let grads = block.backward(&cache, &ones).unwrap();

        let h = 1e-5;
        let mut numeric = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let eval = |delta: f64| {
                let mut xp = x.clone();
                xp.data_mut()[i] += delta;
                let (yp, _) = block.clone().forward_train(&xp).unwrap();
                yp.data().iter().sum::<f64>()
            };
            numeric.push((eval(h) - eval(-h)) / (2.0 * h));
        }
        let worst = max_rel(&numeric, grads.input.data());
        assert!(worst < 1e-4, "residual case {case}: worst {worst}");
        block_worst = block_worst.max(worst);
    }

    let elapsed = start.elapsed();
    println!(
        "layer oracles: conv {conv_worst:.2e}, bn {bn_worst:.2e}, act {act_worst:.2e}, \
         pool {pool_worst:.2e}, dense {dense_worst:.2e}, residual {block_worst:.2e} in {elapsed:.1?}"
    );
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
}

// ---------------------------------------------------------------------------
// Shape algebra
// ---------------------------------------------------------------------------

#[test]
fn criterion_shape_algebra() {
    assert_eq!(blocks_for_length(12).unwrap(), 3);
    assert_eq!(blocks_for_length(24).unwrap(), 4);
    assert_eq!(blocks_for_length(7).unwrap(), 2);
    for l in 2..64usize {
        let block = ResidualBlock::new(1).unwrap();
        assert_eq!(block.output_len(l).unwrap(), l.div_ceil(2), "L = {l}");
    }
    println!("shape algebra: block counts 3/4/2 and halving holds for L in 2..64");
}

// ---------------------------------------------------------------------------
// Statistical oracles
// ---------------------------------------------------------------------------

fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let (vx, vy): (f64, f64) = (
        x.iter().map(|a| (a - mx) * (a - mx)).sum(),
        y.iter().map(|b| (b - my) * (b - my)).sum(),
    );
    cov / (vx.sqrt() * vy.sqrt())
}

fn random_deployment(vms: usize, len: usize, r: &mut ChaCha8Rng) -> Deployment {
    let series = (0..vms)
        .map(|v| {
            let values = (0..len)
                .map(|_| {
                    let max = r.random_range(0.2..0.9);
                    CpuReading::new(0.25 * max, 0.5 * max, max)
                })
                .collect();
            VmSeries::new(format!("vm{v}"), 300, 0, values).unwrap()
        })
        .collect();
    Deployment::new("dep", series).unwrap()
}

#[test]
fn criterion_statistical_oracles() {
    let mut r = rng(0x57A7);

    // Pearson against the direct moment formula.
    for _ in 0..20 {
        let n = r.random_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let got = pearson(&x, &y).unwrap();
        assert!((got - brute_pearson(&x, &y)).abs() < 1e-12);
    }

    // Top-k selection against an exhaustive sort.
    for _ in 0..20 {
        let vms = r.random_range(3..8);
        let len = r.random_range(10..30);
        let dep = random_deployment(vms, len, &mut r);
        let target = r.random_range(0..vms);
        let k = r.random_range(0..vms - 1);
        let got = top_k_relevant(&dep, target, k, 0..len).unwrap();

        let max_channel = |v: usize| -> Vec<f64> {
            (0..len).map(|i| dep.vm(v).values()[i].max).collect()
        };
        let t = max_channel(target);
        let mut scored: Vec<(usize, f64)> = (0..vms)
            .filter(|&v| v != target)
            .map(|v| (v, brute_pearson(&t, &max_channel(v))))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let want: Vec<usize> = scored.iter().take(k).map(|&(v, _)| v).collect();
        assert_eq!(got, want);
    }

    // Additive decomposition identity and zero-mean seasonality.
    for &period in &[7usize, 12] {
        for _ in 0..10 {
            let n = r.random_range(3 * period..6 * period);
            let series: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
            let d = seasonal_decompose(&series, period).unwrap();
            for i in 0..n {
                if let (Some(trend), Some(resid)) = (d.trend[i], d.residual[i]) {
                    let rebuilt = trend + d.seasonal[i] + resid;
                    assert!((rebuilt - series[i]).abs() < 1e-9, "index {i}");
                }
            }
            let season_mean: f64 = d.seasonal[..period].iter().sum::<f64>() / period as f64;
            assert!(season_mean.abs() < 1e-9);
        }
    }

    // KDE normalizes to unit mass.
    for _ in 0..10 {
        let n = r.random_range(20..200);
        let samples: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let grid = linspace(-6.0, 7.0, 1024);
        let density = gaussian_kde(&samples, &grid, Bandwidth::Silverman).unwrap();
        let dx = grid[1] - grid[0];
        let integral: f64 = density.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dx).sum();
        assert!((integral - 1.0).abs() < 1e-2, "integral {integral}");
    }

    // Metric formulas against direct loops, then RMSE >= MAE in bulk.
    for _ in 0..20 {
        let n = r.random_range(1..50);
        let p: Vec<f64> = (0..n).map(|_| r.random_range(0.1..1.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| r.random_range(0.1..1.0)).collect();
        let se: f64 = p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum();
        let ae: f64 = p.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum();
        let pe: f64 = p.iter().zip(&t).map(|(a, b)| (a - b).abs() / b).sum();
        assert!((rmse(&p, &t).unwrap() - (se / n as f64).sqrt()).abs() < 1e-12);
        assert!((mae(&p, &t).unwrap() - ae / n as f64).abs() < 1e-12);
        let m = mape(&p, &t, 1e-9).unwrap();
        assert_eq!(m.excluded, 0);
        assert!((m.value - pe / n as f64).abs() < 1e-12);
    }
    let mut holds = 0;
    for _ in 0..1000 {
        let n = r.random_range(1..30);
        let p: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        if rmse(&p, &t).unwrap() >= mae(&p, &t).unwrap() {
            holds += 1;
        }
    }
    assert_eq!(holds, 1000, "RMSE >= MAE failed on {} vectors", 1000 - holds);
    println!("statistical oracles: pearson, top-k, decomposition, KDE, metrics all match");
}

// ---------------------------------------------------------------------------
// Pipeline convergence and the relevant-VM effect (shared reference run)
// ---------------------------------------------------------------------------

struct ReferenceRun {
    _dir: tempfile::TempDir,
    trace: String,
    naive_rmse: f64,
    k0_rmse: f64,
    train_seconds: f64,
    total_seconds: f64,
}

fn parse_report(path: &std::path::Path) -> Vec<(String, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            (fields[0].to_string(), fields[1].parse().unwrap())
        })
        .collect()
}

/// Trains K = `k` on `trace` with the reference hyperparameters and returns
/// (NAIVE RMSE, model RMSE) from the evaluation report.
fn reference_pair(trace: &str, k: usize, seed: u64, dir: &std::path::Path) -> (f64, f64) {
    let tout = dir.join(format!("train_k{k}_s{seed}"));
    cmd_train(&TrainArgs {
        trace: Some(trace.to_string()),
        out: tout.clone(),
        k: Some(k),
        batch_size: Some(REF_BATCH),
        lr: Some(REF_LR),
        epochs: Some(REF_EPOCHS),
        patience: Some(REF_PATIENCE),
        seed: Some(seed),
        train_days: Some(REF_TRAIN_DAYS),
        val_days: Some(REF_VAL_DAYS),
        interval: Some(REF_INTERVAL),
        ..Default::default()
    })
    .unwrap();
    let eout = dir.join(format!("eval_k{k}_s{seed}"));
    cmd_evaluate(&EvaluateArgs {
        trace: Some(trace.to_string()),
        model: Some(tout.join("model.trsn").to_string_lossy().into_owned()),
        out: eout.clone(),
        k: Some(k),
        train_days: Some(REF_TRAIN_DAYS),
        val_days: Some(REF_VAL_DAYS),
        interval: Some(REF_INTERVAL),
        ..Default::default()
    })
    .unwrap();
    let report = parse_report(&eout.join("report.csv"));
    let naive = report.iter().find(|(m, _)| m == "NAIVE").unwrap().1;
    let model = report
        .iter()
        .find(|(m, _)| m.starts_with("T-ResNet"))
        .unwrap()
        .1;
    (naive, model)
}

fn synth_reference_trace(dir: &std::path::Path, seed: u64) -> String {
    cmd_synth(&SynthArgs {
        out: dir.to_path_buf(),
        vms: Some(REF_VMS),
        days: Some(REF_DAYS),
        interval: Some(REF_INTERVAL),
        rho: Some(REF_RHO),
        noise: Some(REF_NOISE),
        drift_segments: Some(REF_DAYS as usize),
        seed: Some(seed),
        ..Default::default()
    })
    .unwrap();
    dir.join("trace.csv").to_string_lossy().into_owned()
}

static REFERENCE: OnceLock<ReferenceRun> = OnceLock::new();

fn reference_run() -> &'static ReferenceRun {
    REFERENCE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let t0 = Instant::now();
        let trace = synth_reference_trace(&dir.path().join("trace"), 0);
        let t1 = Instant::now();
        let (naive_rmse, k0_rmse) = reference_pair(&trace, 0, 0, dir.path());
        ReferenceRun {
            trace,
            naive_rmse,
            k0_rmse,
            train_seconds: t1.elapsed().as_secs_f64(),
            total_seconds: t0.elapsed().as_secs_f64(),
            _dir: dir,
        }
    })
}

#[test]
fn criterion_pipeline_convergence() {
    let run = reference_run();
    println!(
        "pipeline convergence: T-ResNet RMSE {:.5} vs NAIVE {:.5} \
         (train+eval {:.0}s, total {:.0}s)",
        run.k0_rmse, run.naive_rmse, run.train_seconds, run.total_seconds
    );
    assert!(
        run.k0_rmse < run.naive_rmse,
        "model {} not below NAIVE {}",
        run.k0_rmse,
        run.naive_rmse
    );
    assert!(
        run.total_seconds < 900.0,
        "reference run took {:.0}s, budget 900s",
        run.total_seconds
    );
}

#[test]
fn criterion_relevant_vm_effect() {
    let run = reference_run();
    let dir = tempfile::tempdir().unwrap();
    let (_, k2_rmse) = reference_pair(&run.trace, 2, 0, dir.path());
    println!(
        "relevant-VM effect: K=2 RMSE {:.5} vs K=0 RMSE {:.5} (paired seed 0, noise {REF_NOISE})",
        k2_rmse, run.k0_rmse
    );
    assert!(
        k2_rmse <= run.k0_rmse,
        "K=2 RMSE {} above K=0 RMSE {}",
        k2_rmse,
        run.k0_rmse
    );
}

/// Five-seed-pair stability study behind the default single-pair check.
/// Run with: cargo test -p tresnet-cli --test acceptance -- --ignored
#[test]
#[ignore = "runs ten reference trainings; several minutes per pair"]
fn extended_relevant_vm_effect_five_seed_pairs() {
    let mut wins = 0;
    for seed in 0..5u64 {
        let dir = tempfile::tempdir().unwrap();
        let trace = synth_reference_trace(&dir.path().join("trace"), seed);
        let (_, k0) = reference_pair(&trace, 0, seed, dir.path());
        let (_, k2) = reference_pair(&trace, 2, seed, dir.path());
        let ok = k2 <= k0;
        println!("seed pair {seed}: K=2 {k2:.5} vs K=0 {k0:.5} -> {}", if ok { "holds" } else { "FAILS" });
        if ok {
            wins += 1;
        }
    }
    assert_eq!(wins, 5, "K=2 <= K=0 held on {wins}/5 seed pairs at noise {REF_NOISE}");
}

// ---------------------------------------------------------------------------
// Determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let trace_dir = tmp.path().join("trace");
    cmd_synth(&SynthArgs {
        out: trace_dir.clone(),
        vms: Some(2),
        days: Some(8),
        interval: Some(1800),
        noise: Some(0.2),
        ..Default::default()
    })
    .unwrap();
    let trace = trace_dir.join("trace.csv").to_string_lossy().into_owned();
    let train = |out: std::path::PathBuf| {
        cmd_train(&TrainArgs {
            trace: Some(trace.clone()),
            out,
            k: Some(0),
            ll: Some(12),
            lp: Some(12),
            tp: Some(4),
            lt: Some(4),
            tt: Some(48),
            stem_channels: Some(4),
            batch_size: Some(32),
            lr: Some(1e-3),
            epochs: Some(3),
            patience: Some(3),
            seed: Some(11),
            train_days: Some(6),
            val_days: Some(1),
            interval: Some(1800),
            ..Default::default()
        })
        .unwrap();
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    train(a.clone());
    train(b.clone());
    assert_eq!(
        fs::read(a.join("model.trsn")).unwrap(),
        fs::read(b.join("model.trsn")).unwrap(),
        "model files differ"
    );
    assert_eq!(
        fs::read(a.join("history.csv")).unwrap(),
        fs::read(b.join("history.csv")).unwrap(),
        "histories differ"
    );
    println!("determinism: repeated cmd_train produced bit-identical model and history");
}

// ---------------------------------------------------------------------------
// Round trips
// ---------------------------------------------------------------------------

#[test]
fn criterion_round_trips() {
    // Trace: serialize(parse(bytes)) == bytes on a generated trace.
    let tmp = tempfile::tempdir().unwrap();
    cmd_synth(&SynthArgs {
        out: tmp.path().to_path_buf(),
        vms: Some(3),
        days: Some(2),
        interval: Some(1800),
        ..Default::default()
    })
    .unwrap();
    let original = fs::read(tmp.path().join("trace.csv")).unwrap();
    let schema = TraceSchema::fractions(1800);
    let raw = parse_trace(original.as_slice(), &schema).unwrap();
    let deployments = tresnet_cli::pipeline::assemble_deployments(&raw).unwrap();
    let mut rewritten = Vec::new();
    serialize_trace(&mut rewritten, &deployments).unwrap();
    assert_eq!(original, rewritten, "trace bytes changed across parse/serialize");

    // Scaler: unscale(scale(x)) within 1e-12 across the fit range.
    let mut r = rng(0x5CA1E);
    for _ in 0..50 {
        let values: Vec<f64> = (0..100).map(|_| r.random_range(0.01..0.99)).collect();
        let params = fit_scaler(&values, 1e-3).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..20 {
            let x = r.random_range(lo..hi);
            assert!((params.unscale(params.scale(x)) - x).abs() < 1e-12);
        }
    }

    // Model: save -> load -> save is bit-exact.
    let model = build_model(&miniature_spec(), 1, 2, 3).unwrap();
    let mut bytes = Vec::new();
    model.save(&mut bytes).unwrap();
    let reloaded = TResNetModel::load_bytes(&bytes).unwrap();
    let mut bytes_again = Vec::new();
    reloaded.save(&mut bytes_again).unwrap();
    assert_eq!(bytes, bytes_again, "model bytes changed across save/load");
    println!("round trips: trace, scaler (1e-12), and model file are identities");
}

// ---------------------------------------------------------------------------
// Optional real-trace criterion
// ---------------------------------------------------------------------------

/// Checks the long-running filter against the published Azure 2019 counts.
/// Needs the real trace: set TRESNET_AZURE_TRACE to a CSV readable by the
/// percentage schema, then run with --ignored.
#[test]
#[ignore = "needs the downloaded Azure trace; set TRESNET_AZURE_TRACE"]
fn criterion_azure_long_running_filter() {
    let path = std::env::var("TRESNET_AZURE_TRACE")
        .expect("set TRESNET_AZURE_TRACE to the trace CSV path");
    let file = std::fs::File::open(&path).unwrap();
    let schema = TraceSchema::percentages(300);
    let raw = parse_trace(std::io::BufReader::new(file), &schema).unwrap();
    let filtered = tresnet::data::filter_long_running(&raw, 30 * 86400).unwrap();
    let deployments = filtered.len();
    let vms: usize = filtered.iter().map(|d| d.vm_count()).sum();
    println!("azure filter: {deployments} deployments, {vms} VMs");
    assert_eq!((deployments, vms), (3005, 16065));
}
