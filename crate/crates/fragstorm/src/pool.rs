//! Replica fan-out with results that do not depend on the thread count.

use fragstorm_core::rng::{replica_rng, replica_seed, ReplicaRng};
use fragstorm_core::stats::{Accumulator, Estimate};
use rayon::prelude::*;

use crate::error::Result;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "FRAGSTORM_THREADS";

/// Monte Carlo samples per work unit; unit `k` of a stream draws from `replica_rng(stream, k)`.
pub const CHUNK: u64 = 4096;

pub struct Pool {
    inner: rayon::ThreadPool,
}

impl Pool {
    pub fn new(threads: usize) -> Result<Self> {
        Ok(Self {
            inner: rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build()?,
        })
    }

    /// Available cores, capped by `FRAGSTORM_THREADS` when set.
    pub fn from_env() -> Result<Self> {
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        let cap = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0);
        Self::new(cap.map_or(cores, |c| c.min(cores)))
    }

    pub fn threads(&self) -> usize {
        self.inner.current_num_threads()
    }

    /// `f(i, rng_i)` for replicas `0..n`, returned in replica order.
    pub fn replicas<T, F>(&self, seed: u64, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, &mut ReplicaRng) -> T + Sync,
    {
        self.inner
            .install(|| (0..n).into_par_iter().map(|i| f(i, &mut replica_rng(seed, i))).collect())
    }

    /// Mean and standard error of `samples` draws of `draw`, from the stream `stream`.
    ///
    /// Per-chunk accumulators are merged in chunk order.
    pub fn estimate<F>(&self, stream: u64, samples: u64, draw: F) -> Result<Estimate>
    where
        F: Fn(&mut ReplicaRng) -> fragstorm_core::Result<f64> + Sync,
    {
        let chunks = samples.div_ceil(CHUNK);
        let parts: Vec<fragstorm_core::Result<Accumulator>> = self.inner.install(|| {
            (0..chunks)
                .into_par_iter()
                .map(|k| {
                    let mut rng = replica_rng(stream, k);
                    let mut acc = Accumulator::new();
                    for _ in 0..CHUNK.min(samples - k * CHUNK) {
                        acc.push(draw(&mut rng)?);
                    }
                    Ok(acc)
                })
                .collect()
        });
        let mut total = Accumulator::new();
        for p in parts {
            total.merge(&p?);
        }
        Ok(total.estimate())
    }
}

/// Seed of the `index`-th independent stream of an experiment.
pub fn stream(seed: u64, index: u64) -> u64 {
    replica_seed(seed, index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fragstorm_core::rng::uniform_open;

    #[test]
    fn thread_count_does_not_matter() {
        let one = Pool::new(1).unwrap();
        let three = Pool::new(3).unwrap();
        let f = |r: &mut ReplicaRng| Ok(uniform_open(r));
        let a = one.estimate(5, 50_001, f).unwrap();
        let b = three.estimate(5, 50_001, f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples, 50_001);
        assert!((a.mean - 0.5).abs() < 5.0 * a.std_error);
        let g = |i: u64, r: &mut ReplicaRng| (i, uniform_open(r));
        assert_eq!(one.replicas(9, 17, g), three.replicas(9, 17, g));
    }
}
