//! Dense vs factorized convolution: analytic FLOPs and measured wall time.

use std::hint::black_box;
use std::time::Instant;

use anyhow::{Context, Result};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stconv_core::dataio::mix64;
use stconv_core::nn::{conv3d_factorized_forward, conv3d_forward, flop_count, Conv3dKernel, ConvDims, ConvKind, FactorizedConv3d};
use stconv_core::tensor::Tensor5;

use crate::{BenchSize, RunConfig, UsageError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub size: BenchSize,
    pub dense_flops: u64,
    pub factorized_flops: u64,
    /// `dense_flops / factorized_flops` in lowest terms.
    pub flop_ratio_num: u64,
    pub flop_ratio_den: u64,
    pub flop_ratio: f64,
    pub dense_median_seconds: f64,
    pub factorized_median_seconds: f64,
    /// Measured `dense / factorized` time.
    pub speedup: f64,
    /// A second, independently timed dense run; the ratio of the two dense medians.
    pub dense_control_median_seconds: f64,
    pub control_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hardware {
    pub arch: String,
    pub os: String,
    pub available_cores: usize,
    /// Convolutions run single-threaded; this is the worker pool size for per-clip work.
    pub worker_threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub repeats: usize,
    pub hardware: Hardware,
    pub rows: Vec<BenchRow>,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn random_tensor(shape: [usize; 5], rng: &mut ChaCha8Rng) -> Result<Tensor5> {
    let dist = Uniform::new(-1.0, 1.0);
    let len = shape.iter().product();
    Ok(Tensor5::from_vec(shape, (0..len).map(|_| dist.sample(rng)).collect())?)
}

fn time_once(f: impl FnOnce() -> stconv_core::Result<Tensor5>) -> Result<f64> {
    let t0 = Instant::now();
    let out = f()?;
    let elapsed = t0.elapsed().as_secs_f64();
    black_box(out);
    Ok(elapsed)
}

/// Analytic and measured comparison for one layer size. Inputs are generated up front;
/// each kind gets one untimed warm-up, then the three kinds are timed round-robin.
pub fn bench_size(size: BenchSize, repeats: usize, seed: u64) -> Result<BenchRow> {
    let BenchSize { batch, cin, cout, dims, k } = size;
    if batch == 0 || cin == 0 || cout == 0 || k == 0 || dims.contains(&0) || repeats == 0 {
        return Err(UsageError(format!("bench size {size:?} with {repeats} repeats has a zero extent")).into());
    }
    let pad = k / 2;
    let as64 = |v: usize| v as u64;
    let flop_dims = ConvDims::from_input(
        as64(batch),
        as64(cin),
        as64(cout),
        as64(cout),
        dims.map(as64),
        [as64(k); 3],
        [1; 3],
        [as64(pad); 3],
    )?;
    let dense_flops = flop_count(ConvKind::Dense, &flop_dims)?;
    let factorized_flops = flop_count(ConvKind::Factorized, &flop_dims)?;
    let g = gcd(dense_flops, factorized_flops);

    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed));
    let x = random_tensor([batch, cin, dims[0], dims[1], dims[2]], &mut rng)?;
    let dense = Conv3dKernel::new(random_tensor([cout, cin, k, k, k], &mut rng)?, vec![0.0; cout], [1; 3], [pad; 3])?;
    let mut fact = FactorizedConv3d::zeros(cin, cout, cout, [k; 3], [1; 3], [pad; 3])?;
    fact.temporal.weights = random_tensor(fact.temporal.weights.shape(), &mut rng)?;
    fact.spatial.weights = random_tensor(fact.spatial.weights.shape(), &mut rng)?;

    time_once(|| conv3d_forward(&x, &dense))?;
    time_once(|| conv3d_factorized_forward(&x, &fact))?;
    let (mut d, mut f, mut c) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..repeats {
        d.push(time_once(|| conv3d_forward(&x, &dense))?);
        f.push(time_once(|| conv3d_factorized_forward(&x, &fact))?);
        c.push(time_once(|| conv3d_forward(&x, &dense))?);
    }
    let (dm, fm, cm) = (median(d), median(f), median(c));
    Ok(BenchRow {
        size,
        dense_flops,
        factorized_flops,
        flop_ratio_num: dense_flops / g,
        flop_ratio_den: factorized_flops / g,
        flop_ratio: dense_flops as f64 / factorized_flops as f64,
        dense_median_seconds: dm,
        factorized_median_seconds: fm,
        speedup: dm / fm,
        dense_control_median_seconds: cm,
        control_ratio: dm / cm,
    })
}

/// Benchmark every configured size and write `out/bench.json`.
pub fn run_bench(cfg: &RunConfig) -> Result<BenchReport> {
    let rows = cfg
        .bench
        .sizes
        .iter()
        .map(|&s| bench_size(s, cfg.bench.repeats, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    let report = BenchReport {
        repeats: cfg.bench.repeats,
        hardware: Hardware {
            arch: std::env::consts::ARCH.to_string(),
            os: std::env::consts::OS.to_string(),
            available_cores: std::thread::available_parallelism().map_or(1, usize::from),
            worker_threads: rayon::current_num_threads(),
        },
        rows,
    };
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let path = cfg.out.join("bench.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(report)
}
