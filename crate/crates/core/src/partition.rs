//! Integer partitions stored as sparse multiplicity maps, plus the step
//! function bounding their Young diagram.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{arg_err, Result};

/// A partition of `total` into components, kept as `size -> multiplicity`.
///
/// Only sizes with a positive multiplicity are stored, so the map stays small
/// even when `total` is in the millions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Partition {
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl Partition {
    /// The empty partition of 0.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a partition from `(size, multiplicity)` pairs. Pairs with zero
    /// multiplicity are dropped; repeated sizes are merged.
    pub fn from_counts<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        let mut counts = BTreeMap::new();
        let mut total: u64 = 0;
        for (k, n) in pairs {
            if k == 0 {
                return arg_err("component size must be positive");
            }
            if n == 0 {
                continue;
            }
            let mass = k
                .checked_mul(n)
                .and_then(|m| total.checked_add(m))
                .ok_or_else(|| crate::Error::Argument("partition total overflows u64".into()))?;
            total = mass;
            *counts.entry(k).or_insert(0) += n;
        }
        Ok(Self { counts, total })
    }

    /// Builds a partition from a list of parts, e.g. `[3, 3, 1]`.
    pub fn from_parts(parts: &[u64]) -> Result<Self> {
        Self::from_counts(parts.iter().map(|&k| (k, 1)))
    }

    /// Checks a parsed counts map against a declared total.
    pub fn with_total(pairs: Vec<(u64, u64)>, total: u64) -> Result<Self> {
        let p = Self::from_counts(pairs)?;
        if p.total != total {
            return arg_err(format!(
                "counts sum to {} but total is declared as {}",
                p.total, total
            ));
        }
        Ok(p)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    /// Multiplicity `n_k` of size `k`.
    pub fn count(&self, k: u64) -> u64 {
        self.counts.get(&k).copied().unwrap_or(0)
    }

    /// Total number of components, `ν(0)`.
    pub fn num_components(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Parts in non-increasing order.
    pub fn parts(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.num_components() as usize);
        for (&k, &n) in self.counts.iter().rev() {
            out.extend(std::iter::repeat_n(k, n as usize));
        }
        out
    }

    /// `ν(x) = Σ_{k ≥ ⌈x⌉} n_k`, the number of components of size at least `x`.
    pub fn components_at_least(&self, x: f64) -> u64 {
        let lo = if x <= 0.0 { 0 } else { x.ceil() as u64 };
        self.counts.range(lo..).map(|(_, &n)| n).sum()
    }

    /// Count and mass of components with size in `[lo, hi)`.
    pub fn stratum(&self, lo: u64, hi: u64) -> (u64, u64) {
        if hi <= lo {
            return (0, 0);
        }
        self.counts
            .range(lo..hi)
            .fold((0, 0), |(c, m), (&k, &n)| (c + n, m + k * n))
    }
}

/// Size of the largest component; 0 for the empty partition.
pub fn largest_component(eta: &Partition) -> u64 {
    eta.counts.keys().next_back().copied().unwrap_or(0)
}

#[derive(Serialize, Deserialize)]
struct PartitionRepr {
    #[serde(rename = "N")]
    n: u64,
    counts: Vec<(u64, u64)>,
}

impl Serialize for Partition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PartitionRepr {
            n: self.total,
            counts: self.counts.iter().map(|(&k, &n)| (k, n)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PartitionRepr::deserialize(d)?;
        Partition::with_total(repr.counts, repr.n).map_err(serde::de::Error::custom)
    }
}

/// Boundary of a (possibly scaled) Young diagram as a step function.
///
/// `steps[i] = (x_i, v_i)` means the curve equals `v_i` on `(x_{i-1}, x_i]`
/// with `x_{-1} = 0`; the value at 0 is `v_0` and the curve vanishes past the
/// last abscissa. Abscissae are strictly increasing, values non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct YoungCurve {
    steps: Vec<(f64, f64)>,
    scale_factor: Option<f64>,
}

impl YoungCurve {
    pub fn steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    pub fn is_scaled(&self) -> bool {
        self.scale_factor.is_some()
    }

    pub fn scale_factor(&self) -> Option<f64> {
        self.scale_factor
    }

    pub fn eval(&self, u: f64) -> f64 {
        if u < 0.0 {
            return self.steps.first().map_or(0.0, |s| s.1);
        }
        let idx = self.steps.partition_point(|&(x, _)| x < u);
        self.steps.get(idx).map_or(0.0, |s| s.1)
    }

    pub fn integral(&self) -> f64 {
        let mut prev = 0.0;
        let mut acc = 0.0;
        for &(x, v) in &self.steps {
            acc += (x - prev) * v;
            prev = x;
        }
        acc
    }
}

/// Young diagram boundary `ν(u)` of `eta`, or its scaled version
/// `ν̃(u) = (r/N)·ν(r·u)` when `scaling = Some(r)`.
pub fn young_curve(eta: &Partition, scaling: Option<f64>) -> Result<YoungCurve> {
    if let Some(r) = scaling {
        if !(r > 0.0 && r.is_finite()) {
            return arg_err(format!("scaling factor must be positive, got {r}"));
        }
    }
    let mut steps = Vec::with_capacity(eta.counts.len());
    let mut tail: u64 = eta.num_components();
    let (xs, vs) = match scaling {
        Some(r) if eta.total > 0 => (1.0 / r, r / eta.total as f64),
        _ => (1.0, 1.0),
    };
    for (&k, &n) in &eta.counts {
        steps.push((k as f64 * xs, tail as f64 * vs));
        tail -= n;
    }
    Ok(YoungCurve {
        steps,
        scale_factor: scaling,
    })
}
