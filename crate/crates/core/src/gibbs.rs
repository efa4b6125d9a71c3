//! Parameter functions, partition functions `c_N` and the exact pmf of the
//! Gibbs measure `μ_N(η) = c_N⁻¹ Π a_k^{n_k} / n_k!`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::partition::Partition;
use crate::special::ln_factorial;
use crate::tilt::solve_tilt;

/// The parameter function `a_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelParams {
    /// `a_k = C·k^{p-1}`.
    PowerLaw {
        #[serde(rename = "C")]
        c: f64,
        p: f64,
    },
    /// `a_1..a_max` given explicitly; sizes beyond the table are not allowed.
    Explicit { a: Vec<f64> },
}

impl ModelParams {
    pub fn power_law(c: f64, p: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return arg_err(format!("C must be positive, got {c}"));
        }
        if !(p > 0.0 && p.is_finite()) {
            return arg_err(format!("p must be positive, got {p}"));
        }
        Ok(Self::PowerLaw { c, p })
    }

    pub fn explicit(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return arg_err("explicit parameter table is empty");
        }
        if let Some((i, v)) = a.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return arg_err(format!("a_{} = {} is not a positive real", i + 1, v));
        }
        Ok(Self::Explicit { a })
    }

    /// Reads a table with one positive real per line; line `k` holds `a_k`.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn from_table_file(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref())?;
        let mut a = Vec::new();
        for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let v: f64 = t
                .parse()
                .map_err(|_| Error::Argument(format!("line {}: cannot parse {t:?}", i + 1)))?;
            a.push(v);
        }
        Self::explicit(a)
    }

    /// `a_k`, or 0 when `k` is outside an explicit table.
    pub fn a(&self, k: u64) -> f64 {
        match self {
            Self::PowerLaw { c, p } => {
                if k == 0 {
                    0.0
                } else if *p == 1.0 {
                    *c
                } else {
                    c * (k as f64).powf(p - 1.0)
                }
            }
            Self::Explicit { a } => {
                if k == 0 {
                    0.0
                } else {
                    a.get(k as usize - 1).copied().unwrap_or(0.0)
                }
            }
        }
    }

    /// Largest size with `a_k > 0`, if finite.
    pub fn max_size(&self) -> Option<u64> {
        match self {
            Self::PowerLaw { .. } => None,
            Self::Explicit { a } => Some(a.len() as u64),
        }
    }

    /// `(C, p)` for power-law parameters.
    pub fn power_law_constants(&self) -> Option<(f64, f64)> {
        match self {
            Self::PowerLaw { c, p } => Some((*c, *p)),
            Self::Explicit { .. } => None,
        }
    }
}

/// A run of table entries sharing one log-scale.
#[derive(Debug, Clone, Copy)]
struct Block {
    start: usize,
    log_scale: f64,
}

/// Entries whose log magnitude relative to their block exceeds this open a
/// new block.
const BLOCK_LOG_RANGE: f64 = 200.0;

/// `log c_n` for `n = 0..=N_max`, together with the tilted weights the
/// recursive sampler draws from.
///
/// Internally the recurrence `n·c_n = Σ_k k·a_k·c_{n-k}` is run on
/// `g_n = c_n·e^{-δn}` with `δ` the tilt for `N_max`, which keeps the terms
/// of every convolution within a narrow dynamic range. `g` is stored as a
/// mantissa per entry plus a log-scale per block of entries.
#[derive(Debug, Clone)]
pub struct PartitionFunctionTable {
    params: ModelParams,
    logc: Vec<f64>,
    delta: f64,
    weights: Vec<f64>,
    mant: Vec<f64>,
    blocks: Vec<Block>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut s: f64 = acc.iter().sum();
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

impl PartitionFunctionTable {
    pub fn new(params: &ModelParams, n_max: i64) -> Result<Self> {
        if n_max < 0 {
            return arg_err(format!("N_max must be non-negative, got {n_max}"));
        }
        let n_max = n_max as usize;
        let delta = if n_max == 0 {
            0.0
        } else {
            solve_tilt(params, n_max as u64).map(|t| t.delta).unwrap_or(0.0)
        };

        let mut weights = vec![0.0; n_max + 1];
        for (k, w) in weights.iter_mut().enumerate().skip(1) {
            let a = params.a(k as u64);
            *w = if a > 0.0 {
                ((k as f64).ln() + a.ln() - delta * k as f64).exp()
            } else {
                0.0
            };
            if !w.is_finite() {
                return Err(Error::Numeric(format!("weight for size {k} overflows")));
            }
        }
        // reversed weights so each convolution is a forward dot product
        let rev: Vec<f64> = weights.iter().rev().copied().collect();

        let mut logc = vec![0.0; n_max + 1];
        let mut mant = vec![0.0; n_max + 1];
        mant[0] = 1.0;
        let mut blocks = vec![Block {
            start: 0,
            log_scale: 0.0,
        }];
        let mut partial: Vec<f64> = Vec::new();

        for n in 1..=n_max {
            partial.clear();
            let mut best = f64::NEG_INFINITY;
            for (b, blk) in blocks.iter().enumerate() {
                let end = blocks.get(b + 1).map_or(n, |nb| nb.start).min(n);
                let s = dot(&mant[blk.start..end], &rev[n_max - n + blk.start..n_max - n + end]);
                let t = if s > 0.0 { s.ln() + blk.log_scale } else { f64::NEG_INFINITY };
                best = best.max(t);
                partial.push(t);
            }
            let cur = blocks.last().expect("at least one block").log_scale;
            if best == f64::NEG_INFINITY {
                logc[n] = f64::NEG_INFINITY;
                mant[n] = 0.0;
                continue;
            }
            let sum: f64 = partial.iter().map(|t| (t - best).exp()).sum();
            let ln_g = best + sum.ln() - (n as f64).ln();
            logc[n] = ln_g + delta * n as f64;
            let rel = ln_g - cur;
            if rel.abs() > BLOCK_LOG_RANGE {
                blocks.push(Block {
                    start: n,
                    log_scale: ln_g,
                });
                mant[n] = 1.0;
            } else {
                mant[n] = rel.exp();
            }
        }

        Ok(Self {
            params: params.clone(),
            logc,
            delta,
            weights,
            mant,
            blocks,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n_max(&self) -> usize {
        self.logc.len() - 1
    }

    pub fn logc(&self) -> &[f64] {
        &self.logc
    }

    pub fn log_c(&self, n: usize) -> f64 {
        self.logc[n]
    }

    /// The tilt `δ` used internally.
    pub fn tilt(&self) -> f64 {
        self.delta
    }

    fn block_of(&self, i: usize) -> usize {
        self.blocks.partition_point(|b| b.start <= i) - 1
    }

    /// Picks the first component size when `n` units of mass remain:
    /// size `k` has probability `k·a_k·c_{n-k} / (n·c_n)`. `u` is uniform
    /// on `[0, 1)`. Returns 0 when `c_n = 0`.
    pub fn choose_size(&self, n: usize, u: f64) -> usize {
        debug_assert!(n >= 1 && n <= self.n_max());
        let bn = self.block_of(n);
        let reference = self.blocks[bn].log_scale;
        let target = u * n as f64 * self.mant[n];
        if !(self.mant[n] > 0.0) {
            return 0;
        }
        let mut cum = 0.0;
        let mut last = 0;
        let mut hi = n;
        for b in (0..=self.block_of(n - 1)).rev() {
            let blk = self.blocks[b];
            let factor = (blk.log_scale - reference).exp();
            if factor > 0.0 {
                for i in (blk.start..hi).rev() {
                    let t = self.weights[n - i] * self.mant[i];
                    if t > 0.0 {
                        cum += t * factor;
                        last = n - i;
                        if cum > target {
                            return last;
                        }
                    }
                }
            }
            hi = blk.start;
        }
        last
    }

    /// Writes the table as CSV with columns `n,logc`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,logc")?;
        for (n, v) in self.logc.iter().enumerate() {
            writeln!(w, "{n},{v}")?;
        }
        Ok(())
    }
}

/// Convenience wrapper for [`PartitionFunctionTable::new`].
pub fn partition_function_table(params: &ModelParams, n_max: i64) -> Result<PartitionFunctionTable> {
    PartitionFunctionTable::new(params, n_max)
}

/// `log μ_N(η) = Σ_k (n_k log a_k − log n_k!) − log c_N`.
pub fn log_pmf(eta: &Partition, table: &PartitionFunctionTable) -> Result<f64> {
    let n = eta.total() as usize;
    if n > table.n_max() {
        return arg_err(format!("partition of {n} exceeds table N_max = {}", table.n_max()));
    }
    let mut acc = -table.log_c(n);
    for (&k, &m) in eta.counts() {
        let a = table.params().a(k);
        if !(a > 0.0) {
            return arg_err(format!("a_{k} is undefined for these parameters"));
        }
        acc += m as f64 * a.ln() - ln_factorial(m);
    }
    Ok(acc)
}
