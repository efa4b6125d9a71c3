//! Exact samplers for `μ_N`: the recursive method driven by a partition
//! function table, and Boltzmann rejection sampling from the poissonized
//! measure. Replicas run in parallel with one ChaCha8 stream each.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::gibbs::{ModelParams, PartitionFunctionTable};
use crate::partition::Partition;
use crate::poisson::Poisson;
use crate::tilt::solve_tilt;

/// Largest `N` for which the recursive method is the default.
pub const RECURSIVE_DEFAULT_LIMIT: u64 = 100_000;

/// Poisson means below this are treated as zero by the Boltzmann sampler.
pub const BOLTZMANN_MEAN_CUTOFF: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Recursive,
    Boltzmann,
}

impl Method {
    pub fn default_for(n: u64) -> Self {
        if n <= RECURSIVE_DEFAULT_LIMIT {
            Method::Recursive
        } else {
            Method::Boltzmann
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub method: Method,
    pub replica_count: usize,
    pub max_rejections: u64,
}

impl SamplerConfig {
    pub fn new(seed: u64, method: Method, replica_count: usize) -> Self {
        Self {
            seed,
            method,
            replica_count,
            max_rejections: 1_000_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replica_count == 0 {
            return arg_err("replica_count must be at least 1");
        }
        if self.max_rejections == 0 {
            return arg_err("max_rejections must be at least 1");
        }
        Ok(())
    }
}

/// The generator for replica `replica` of a run seeded with `seed`.
///
/// Streams are ChaCha8 keyed by `seed` with stream id `replica`, so every
/// replica is reproducible on its own and independent of thread scheduling.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// One draw from `μ_n` by sequentially choosing component sizes with
/// probability `k·a_k·c_{n-k} / (n·c_n)`.
pub fn recursive_sample<R: Rng + ?Sized>(table: &PartitionFunctionTable, n: u64, rng: &mut R) -> Result<Partition> {
    if n as usize > table.n_max() {
        return arg_err(format!("N = {n} exceeds table N_max = {}", table.n_max()));
    }
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    let mut rest = n as usize;
    while rest > 0 {
        let k = table.choose_size(rest, rng.random());
        if k == 0 {
            return Err(Error::Numeric(format!("c_{rest} vanishes; no partition of {rest} has positive weight")));
        }
        *counts.entry(k as u64).or_insert(0) += 1;
        rest -= k;
    }
    Partition::from_counts(counts)
}

/// Poissonized sampler conditioned on total size `N` by rejection.
///
/// The total number of components is Poisson with mean `S = Σ λ_k`,
/// `λ_k = a_k e^{-δk}`, and sizes are i.i.d. with law `λ_k / S`; this is the
/// same law as independent `Poisson(λ_k)` counts. A draw is abandoned as soon
/// as its mass exceeds `N`.
#[derive(Debug, Clone)]
pub struct BoltzmannSampler {
    n: u64,
    delta: f64,
    sizes: Vec<u64>,
    alias: WeightedAliasIndex<f64>,
    count: Poisson,
    second_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannDraw {
    pub partition: Partition,
    pub rejections: u64,
}

impl BoltzmannSampler {
    pub fn new(params: &ModelParams, n: u64, delta: f64) -> Result<Self> {
        if n == 0 {
            return arg_err("Boltzmann sampler needs N >= 1");
        }
        let kmax = params.max_size().map_or(n, |m| m.min(n));
        let mut sizes = Vec::new();
        let mut weights = Vec::new();
        let mut total = 0.0;
        let mut second_moment = 0.0;
        for k in 1..=kmax {
            let lambda = params.a(k) * (-delta * k as f64).exp();
            if !lambda.is_finite() {
                return Err(Error::Numeric(format!("Poisson mean for size {k} is not finite at δ = {delta}")));
            }
            if lambda < BOLTZMANN_MEAN_CUTOFF {
                continue;
            }
            sizes.push(k);
            weights.push(lambda);
            total += lambda;
            second_moment += (k * k) as f64 * lambda;
        }
        if sizes.is_empty() {
            return Err(Error::Numeric(format!("all Poisson means vanish at δ = {delta}")));
        }
        let scale = weights.iter().cloned().fold(0.0, f64::max);
        let normalized: Vec<f64> = weights.iter().map(|w| w / scale).collect();
        let alias = WeightedAliasIndex::new(normalized).map_err(|e| Error::Numeric(format!("alias table: {e}")))?;
        Ok(Self {
            n,
            delta,
            sizes,
            alias,
            count: Poisson::new(total),
            second_moment,
        })
    }

    /// Sampler at the tilt solving `Σ k a_k e^{-δk} = N`.
    pub fn at_tilt(params: &ModelParams, n: u64) -> Result<Self> {
        let t = solve_tilt(params, n)?;
        Self::new(params, n, t.delta)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `S = Σ λ_k` over the retained sizes.
    pub fn mean_components(&self) -> f64 {
        self.count.mean()
    }

    /// Gaussian estimate `(2π Σ k² λ_k)^{-1/2}` of the acceptance probability.
    pub fn gaussian_acceptance(&self) -> f64 {
        (2.0 * std::f64::consts::PI * self.second_moment).powf(-0.5)
    }

    /// One attempt; `None` when the draw is rejected.
    pub fn attempt<R: Rng + ?Sized>(&self, rng: &mut R, buf: &mut Vec<u64>) -> Option<Partition> {
        buf.clear();
        let m = self.count.sample(rng);
        let mut mass = 0u64;
        for _ in 0..m {
            let k = self.sizes[self.alias.sample(rng)];
            mass += k;
            if mass > self.n {
                return None;
            }
            buf.push(k);
        }
        if mass != self.n {
            return None;
        }
        Some(Partition::from_parts(buf).expect("sizes are positive"))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, max_rejections: u64) -> Result<BoltzmannDraw> {
        let mut buf = Vec::new();
        let mut rejections = 0u64;
        loop {
            if let Some(partition) = self.attempt(rng, &mut buf) {
                return Ok(BoltzmannDraw { partition, rejections });
            }
            rejections += 1;
            if rejections >= max_rejections {
                // every attempt in this run was rejected
                return Err(Error::RejectionCap {
                    attempts: rejections,
                    acceptance_rate: 0.0,
                });
            }
        }
    }

    /// Fraction of `attempts` accepted.
    pub fn acceptance_rate<R: Rng + ?Sized>(&self, rng: &mut R, attempts: u64) -> f64 {
        let mut buf = Vec::new();
        let accepted = (0..attempts).filter(|_| self.attempt(rng, &mut buf).is_some()).count();
        accepted as f64 / attempts as f64
    }
}

/// Convenience wrapper building a [`BoltzmannSampler`] for one draw.
pub fn boltzmann_sample<R: Rng + ?Sized>(
    params: &ModelParams,
    n: u64,
    delta: f64,
    rng: &mut R,
    max_rejections: u64,
) -> Result<BoltzmannDraw> {
    BoltzmannSampler::new(params, n, delta)?.sample(rng, max_rejections)
}

/// A sampler with its precomputation done, shareable across threads.
#[derive(Debug, Clone)]
pub enum PreparedSampler {
    Recursive { table: Arc<PartitionFunctionTable>, n: u64 },
    Boltzmann(BoltzmannSampler),
}

impl PreparedSampler {
    pub fn new(params: &ModelParams, n: u64, method: Method) -> Result<Self> {
        match method {
            Method::Recursive => {
                let table = PartitionFunctionTable::new(params, n as i64)?;
                Ok(Self::Recursive {
                    table: Arc::new(table),
                    n,
                })
            }
            Method::Boltzmann => Ok(Self::Boltzmann(BoltzmannSampler::at_tilt(params, n)?)),
        }
    }

    pub fn method(&self) -> Method {
        match self {
            Self::Recursive { .. } => Method::Recursive,
            Self::Boltzmann(_) => Method::Boltzmann,
        }
    }

    /// One draw and the number of rejected attempts before it.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, max_rejections: u64) -> Result<(Partition, u64)> {
        match self {
            Self::Recursive { table, n } => Ok((recursive_sample(table, *n, rng)?, 0)),
            Self::Boltzmann(b) => {
                let d = b.sample(rng, max_rejections)?;
                Ok((d.partition, d.rejections))
            }
        }
    }
}

/// Runs `f(replica, rng)` for `replica = 0..count` in parallel and returns
/// the results in replica order.
pub fn map_replicas<T, F>(seed: u64, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i);
            f(i, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub replica: u64,
    /// ChaCha8 stream id used for this replica (equal to `replica`).
    pub stream: u64,
    pub rejections: u64,
    pub partition: Partition,
}

/// `config.replica_count` independent draws from `μ_n`.
pub fn sample_batch(config: &SamplerConfig, params: &ModelParams, n: u64) -> Result<Vec<Sample>> {
    config.validate()?;
    let sampler = PreparedSampler::new(params, n, config.method)?;
    let cap = config.max_rejections;
    map_replicas(config.seed, config.replica_count, |i, rng| {
        let (partition, rejections) = sampler.draw(rng, cap)?;
        Ok(Sample {
            replica: i,
            stream: i,
            rejections,
            partition,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchHeader {
    pub params: ModelParams,
    #[serde(rename = "N")]
    pub n: u64,
    pub seed: u64,
    pub method: Method,
    pub replica_count: usize,
}

/// JSON lines: the header record, then one sample per line.
pub fn write_jsonl<W: Write>(mut w: W, header: &BatchHeader, samples: &[Sample]) -> Result<()> {
    #[derive(Serialize)]
    struct Record<'a> {
        header: &'a BatchHeader,
    }
    serde_json::to_writer(&mut w, &Record { header })?;
    writeln!(w)?;
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        writeln!(w)?;
    }
    Ok(())
}
