//! Replicate execution and aggregation.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::quadrature::KahanSum;

/// Worker pool handle. Results are collected in replicate order and reduced
/// sequentially, so they do not depend on the worker count.
#[derive(Clone, Debug)]
pub struct Parallel {
    pool: Arc<rayon::ThreadPool>,
}

pub const WORKERS_ENV: &str = "POTMAX_WORKERS";

impl Parallel {
    pub fn new(workers: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("thread pool");
        Parallel { pool: Arc::new(pool) }
    }

    /// Worker count from `POTMAX_WORKERS`, else the number of CPUs.
    pub fn from_env() -> Self {
        let n = std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|n| *n > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        Parallel::new(n)
    }

    /// Shared default pool.
    pub fn global() -> Self {
        static G: OnceLock<Parallel> = OnceLock::new();
        G.get_or_init(Parallel::from_env).clone()
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// `f(0), …, f(n−1)` in order.
    pub fn map<T: Send>(&self, n: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }

    pub fn map_items<I: Sync, T: Send>(&self, items: &[I], f: impl Fn(&I) -> T + Sync + Send) -> Vec<T> {
        self.pool.install(|| items.par_iter().map(&f).collect())
    }
}

/// Mean, standard error and replicate count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Summary {
                n: 0,
                mean: f64::NAN,
                stderr: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().copied().collect::<KahanSum>().value() / n as f64;
        let ss = values
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .collect::<KahanSum>()
            .value();
        let var = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
        Summary {
            n,
            mean,
            stderr: (var / n as f64).sqrt(),
            std: var.sqrt(),
        }
    }

    /// Symmetric normal-approximation interval `mean ± z·stderr`.
    pub fn ci(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.stderr, self.mean + z * self.stderr)
    }

    /// `|mean − target| ≤ k·stderr + slack`.
    pub fn agrees(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + slack
    }
}

/// Two-sided normal quantile for the 99% interval.
pub const Z99: f64 = 2.5758293035489004;

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < v.len() {
        v[i] * (1.0 - f) + v[i + 1] * f
    } else {
        v[i]
    }
}

/// One-sample Kolmogorov–Smirnov distance against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}
