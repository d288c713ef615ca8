//! Wall-clock timing of the inference path.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{predict, ModelParams, Refiner};
use crate::parallel::{current_threads, with_threads};
use crate::tensor::{Shape, Tensor};

/// Order statistics of a series of timings, in milliseconds.
#[derive(Clone, Debug, PartialEq)]
pub struct TimingStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub min: f64,
    pub max: f64,
    pub samples: Vec<f64>,
}

impl TimingStats {
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no timing samples".into()));
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        // nearest-rank percentile
        let rank = |q: f64| sorted[((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
        Ok(TimingStats {
            mean: samples.iter().sum::<f64>() / samples.len() as f64,
            p50: rank(0.5),
            p95: rank(0.95),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            samples,
        })
    }
}

/// What to time and how.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchConfig {
    pub height: usize,
    pub width: usize,
    pub iterations: usize,
    pub warmup: usize,
    /// Refinement applied after the network.
    pub refiner: Refiner,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            height: 128,
            width: 128,
            iterations: 50,
            warmup: 10,
            refiner: Refiner::Feathering,
            seed: 0,
        }
    }
}

/// Times [`predict`] on a fixed random `1×3×h×w` input in the
/// current thread pool. Warmup runs are not recorded.
pub fn benchmark_forward(params: &ModelParams, cfg: &BenchConfig) -> Result<TimingStats> {
    if cfg.iterations == 0 {
        return Err(Error::InvalidArgument("benchmark needs at least one iteration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let image = Tensor::from_fn(Shape::new(1, 3, cfg.height, cfg.width), |_, _, _, _| rng.random::<f32>());
    let run = || predict(&image, params, cfg.refiner);
    for _ in 0..cfg.warmup {
        run()?;
    }
    let mut samples = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let t = Instant::now();
        std::hint::black_box(run()?);
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    TimingStats::from_samples(samples)
}

/// Single-thread and default-pool timings, measured separately.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub single: TimingStats,
    pub multi: TimingStats,
    pub multi_threads: usize,
}

pub fn benchmark_modes(params: &ModelParams, cfg: &BenchConfig, threads: Option<usize>) -> Result<BenchReport> {
    let single = with_threads(Some(1), || benchmark_forward(params, cfg))?;
    let (multi, multi_threads) = with_threads(threads, || (benchmark_forward(params, cfg), current_threads()));
    Ok(BenchReport {
        single,
        multi: multi?,
        multi_threads,
    })
}
