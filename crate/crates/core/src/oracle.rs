//! Brute-force ground truth for small `N`: enumeration of all partitions,
//! exact laws of statistics, and distance / goodness-of-fit utilities.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;

use log::warn;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{arg_err, Result};
use crate::gibbs::ModelParams;
use crate::partition::Partition;
use crate::special::ln_factorial;

/// Largest `N` accepted by the enumerators (`p(40) = 37338`).
pub const ENUMERATION_CAP: u64 = 40;

fn check_cap(n: u64) -> Result<()> {
    if n > ENUMERATION_CAP {
        return arg_err(format!("enumeration is capped at N = {ENUMERATION_CAP}, got {n}"));
    }
    Ok(())
}

/// Visits every partition of `n` as a non-increasing part list, in
/// reverse-lexicographic order starting from `[n]`.
pub fn for_each_partition<F: FnMut(&[u64])>(n: u64, mut visit: F) -> Result<()> {
    check_cap(n)?;
    if n == 0 {
        visit(&[]);
        return Ok(());
    }
    let mut parts = vec![n];
    loop {
        visit(&parts);
        // strip trailing ones, then decrement the last part above one
        let mut ones = 0;
        while parts.last() == Some(&1) {
            parts.pop();
            ones += 1;
        }
        let Some(last) = parts.last_mut() else {
            return Ok(());
        };
        *last -= 1;
        let cap = *last;
        let mut rest = ones + 1;
        while rest > 0 {
            let take = rest.min(cap);
            parts.push(take);
            rest -= take;
        }
    }
}

/// All partitions of `n`, in reverse-lexicographic order.
pub fn enumerate_partitions(n: u64) -> Result<Vec<Partition>> {
    let mut out = Vec::new();
    for_each_partition(n, |parts| {
        out.push(Partition::from_parts(parts).expect("generated parts are positive"));
    })?;
    Ok(out)
}

/// `log Π a_k^{n_k} / n_k!` for a partition.
fn log_weight(eta: &Partition, params: &ModelParams) -> f64 {
    eta.counts()
        .iter()
        .map(|(&k, &m)| {
            let a = params.a(k);
            if a > 0.0 {
                m as f64 * a.ln() - ln_factorial(m)
            } else {
                f64::NEG_INFINITY
            }
        })
        .sum()
}

/// `c_n` as the direct sum over all partitions of `n`.
pub fn weight_sum(n: u64, params: &ModelParams) -> Result<f64> {
    let mut total = 0.0;
    for_each_partition(n, |parts| {
        let eta = Partition::from_parts(parts).expect("generated parts are positive");
        total += log_weight(&eta, params).exp();
    })?;
    Ok(total)
}

/// A finite law over values of some statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactDistribution<T: Ord> {
    support: BTreeMap<T, f64>,
}

impl<T: Ord + Clone> ExactDistribution<T> {
    /// Wraps probabilities that must be non-negative and sum to one.
    pub fn from_probabilities(support: BTreeMap<T, f64>) -> Result<Self> {
        if support.values().any(|&p| !(p >= 0.0)) {
            return arg_err("probabilities must be non-negative");
        }
        let s: f64 = support.values().sum();
        if (s - 1.0).abs() > 1e-12 {
            return arg_err(format!("probabilities sum to {s}, not 1"));
        }
        Ok(Self { support })
    }

    /// Empirical law of the observations.
    pub fn empirical<'a, I>(obs: I) -> Self
    where
        I: IntoIterator<Item = (&'a T, &'a u64)>,
        T: 'a,
    {
        let counts: Vec<(T, u64)> = obs.into_iter().map(|(k, &n)| (k.clone(), n)).collect();
        let total: u64 = counts.iter().map(|(_, n)| n).sum();
        let support = counts
            .into_iter()
            .map(|(k, n)| (k, n as f64 / total as f64))
            .collect();
        Self { support }
    }

    pub fn support(&self) -> &BTreeMap<T, f64> {
        &self.support
    }

    pub fn probability(&self, v: &T) -> f64 {
        self.support.get(v).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64
    where
        T: Into<f64> + Copy,
    {
        self.support.iter().map(|(&v, &p)| v.into() * p).sum()
    }
}

impl<T: Ord + Display> ExactDistribution<T> {
    /// CSV with columns `value,probability`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "value,probability")?;
        for (v, p) in &self.support {
            writeln!(w, "{v},{p}")?;
        }
        Ok(())
    }
}

/// Exact law under `μ_n` of `statistic(η)`, accumulated during enumeration.
pub fn exact_distribution<T, F>(n: u64, params: &ModelParams, statistic: F) -> Result<ExactDistribution<T>>
where
    T: Ord + Clone,
    F: Fn(&Partition) -> T,
{
    let mut logw: Vec<(T, f64)> = Vec::new();
    for_each_partition(n, |parts| {
        let eta = Partition::from_parts(parts).expect("generated parts are positive");
        logw.push((statistic(&eta), log_weight(&eta, params)));
    })?;
    let m = logw.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return arg_err(format!("no partition of {n} has positive weight"));
    }
    let z: f64 = logw.iter().map(|x| (x.1 - m).exp()).sum();
    let mut support = BTreeMap::new();
    for (v, lw) in logw {
        *support.entry(v).or_insert(0.0) += (lw - m).exp() / z;
    }
    Ok(ExactDistribution { support })
}

/// `½ Σ |p₁ − p₂|` over the union of the supports.
pub fn total_variation<T: Ord + Clone>(d1: &ExactDistribution<T>, d2: &ExactDistribution<T>) -> f64 {
    let mut acc = 0.0;
    for (v, &p) in &d1.support {
        acc += (p - d2.probability(v)).abs();
    }
    for (v, &p) in &d2.support {
        if !d1.support.contains_key(v) {
            acc += p;
        }
    }
    (0.5 * acc).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub critical: f64,
    pub p_value: f64,
    pub pass: bool,
    /// All mass fell into a single cell; the test passes vacuously.
    pub degenerate: bool,
}

fn finish(statistic: f64, cells: usize, significance: f64) -> ChiSquareResult {
    if cells <= 1 {
        warn!("chi-square test degenerate: all mass pooled into one cell");
        return ChiSquareResult {
            statistic: 0.0,
            dof: 0,
            critical: f64::INFINITY,
            p_value: 1.0,
            pass: true,
            degenerate: true,
        };
    }
    let dof = cells - 1;
    let chi = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    let critical = chi.inverse_cdf(1.0 - significance);
    let p_value = if statistic.is_finite() { chi.sf(statistic) } else { 0.0 };
    ChiSquareResult {
        statistic,
        dof,
        critical,
        p_value,
        pass: statistic < critical,
        degenerate: false,
    }
}

/// Groups cell indices so every group has expected mass ≥ `min_expected`.
/// Cells are visited from smallest to largest expectation; small ones are
/// merged together and a leftover pool is folded into the next cell.
fn pool_cells(expected: &[f64], min_expected: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..expected.len()).collect();
    order.sort_by(|&a, &b| expected[a].total_cmp(&expected[b]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut pool: Vec<usize> = Vec::new();
    let mut pool_mass = 0.0;
    for i in order {
        if pool.is_empty() && expected[i] >= min_expected {
            groups.push(vec![i]);
            continue;
        }
        pool.push(i);
        pool_mass += expected[i];
        if pool_mass >= min_expected {
            groups.push(std::mem::take(&mut pool));
            pool_mass = 0.0;
        }
    }
    if !pool.is_empty() {
        match groups.last_mut() {
            Some(g) => g.extend(pool),
            None => groups.push(pool),
        }
    }
    groups
}

/// Pearson goodness-of-fit of observed counts against an exact law, with
/// small cells pooled until each expected count is at least `min_expected`.
/// Observations outside the support make the statistic infinite.
pub fn chi_square_gof<T: Ord + Clone>(
    observed: &BTreeMap<T, u64>,
    expected: &ExactDistribution<T>,
    min_expected: f64,
    significance: f64,
) -> ChiSquareResult {
    let n: u64 = observed.values().sum();
    if observed.keys().any(|k| expected.probability(k) == 0.0) {
        return finish(f64::INFINITY, 2, significance);
    }
    let keys: Vec<&T> = expected.support.keys().collect();
    let exp: Vec<f64> = keys.iter().map(|k| expected.support[*k] * n as f64).collect();
    let obs: Vec<f64> = keys
        .iter()
        .map(|k| observed.get(*k).copied().unwrap_or(0) as f64)
        .collect();
    let groups = pool_cells(&exp, min_expected);
    let stat = groups
        .iter()
        .map(|g| {
            let e: f64 = g.iter().map(|&i| exp[i]).sum();
            let o: f64 = g.iter().map(|&i| obs[i]).sum();
            if e > 0.0 {
                (o - e) * (o - e) / e
            } else {
                0.0
            }
        })
        .sum();
    finish(stat, groups.len(), significance)
}

/// Pearson test of homogeneity for two samples of counts over the same
/// categories; cells are pooled so both expected counts reach `min_expected`.
pub fn chi_square_two_sample<T: Ord + Clone>(
    a: &BTreeMap<T, u64>,
    b: &BTreeMap<T, u64>,
    min_expected: f64,
    significance: f64,
) -> ChiSquareResult {
    let mut keys: Vec<&T> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    let total = (na + nb) as f64;
    let oa: Vec<f64> = keys.iter().map(|k| a.get(*k).copied().unwrap_or(0) as f64).collect();
    let ob: Vec<f64> = keys.iter().map(|k| b.get(*k).copied().unwrap_or(0) as f64).collect();
    let smaller = na.min(nb) as f64;
    // expected count in the smaller sample drives pooling
    let key_mass: Vec<f64> = oa.iter().zip(&ob).map(|(x, y)| (x + y) / total * smaller).collect();
    let groups = pool_cells(&key_mass, min_expected);
    let mut stat = 0.0;
    for g in &groups {
        let xa: f64 = g.iter().map(|&i| oa[i]).sum();
        let xb: f64 = g.iter().map(|&i| ob[i]).sum();
        let col = xa + xb;
        let ea = col * na as f64 / total;
        let eb = col * nb as f64 / total;
        if ea > 0.0 {
            stat += (xa - ea) * (xa - ea) / ea;
        }
        if eb > 0.0 {
            stat += (xb - eb) * (xb - eb) / eb;
        }
    }
    finish(stat, groups.len(), significance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::largest_component;

    fn partition_numbers() -> Vec<u64> {
        // Euler's pentagonal recurrence
        let n = ENUMERATION_CAP as usize;
        let mut p = vec![0i64; n + 1];
        p[0] = 1;
        for m in 1..=n {
            let mut k: i64 = 1;
            let mut acc = 0i64;
            loop {
                let g1 = (k * (3 * k - 1) / 2) as usize;
                if g1 > m {
                    break;
                }
                let sign = if k % 2 == 1 { 1 } else { -1 };
                acc += sign * p[m - g1];
                let g2 = (k * (3 * k + 1) / 2) as usize;
                if g2 <= m {
                    acc += sign * p[m - g2];
                }
                k += 1;
            }
            p[m] = acc;
        }
        p.into_iter().map(|v| v as u64).collect()
    }

    #[test]
    fn counts_match_partition_numbers() {
        let p = partition_numbers();
        assert_eq!(p[40], 37338);
        for n in 0..=ENUMERATION_CAP {
            let mut count = 0u64;
            for_each_partition(n, |parts| {
                assert_eq!(parts.iter().sum::<u64>(), n);
                count += 1;
            })
            .unwrap();
            assert_eq!(count, p[n as usize], "n = {n}");
        }
    }

    #[test]
    fn small_enumerations() {
        assert_eq!(enumerate_partitions(5).unwrap().len(), 7);
        assert_eq!(enumerate_partitions(10).unwrap().len(), 42);
        let zero = enumerate_partitions(0).unwrap();
        assert_eq!(zero, vec![Partition::empty()]);
        assert!(enumerate_partitions(41).is_err());
    }

    #[test]
    fn reverse_lexicographic_order() {
        let mut seen: Vec<Vec<u64>> = Vec::new();
        for_each_partition(6, |p| seen.push(p.to_vec())).unwrap();
        assert_eq!(seen.first().unwrap(), &vec![6]);
        assert_eq!(seen.last().unwrap(), &vec![1; 6]);
        for w in seen.windows(2) {
            assert!(w[0] > w[1], "{:?} before {:?}", w[0], w[1]);
        }
        let distinct: std::collections::BTreeSet<_> = seen.iter().collect();
        assert_eq!(distinct.len(), seen.len());
    }

    #[test]
    fn exact_laws_for_two() {
        let ones = ModelParams::power_law(1.0, 1.0).unwrap();
        let nu0 = exact_distribution(2, &ones, |e| e.num_components()).unwrap();
        assert!((nu0.probability(&1) - 2.0 / 3.0).abs() < 1e-14);
        assert!((nu0.probability(&2) - 1.0 / 3.0).abs() < 1e-14);
        let q = exact_distribution(2, &ones, largest_component).unwrap();
        assert!((q.probability(&2) - 2.0 / 3.0).abs() < 1e-14);
        assert!((q.probability(&1) - 1.0 / 3.0).abs() < 1e-14);
        let point = exact_distribution(1, &ones, |e| e.num_components()).unwrap();
        assert_eq!(point.support().len(), 1);
        assert!((point.probability(&1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_law_matches_pmf() {
        use crate::gibbs::{log_pmf, partition_function_table};
        for params in [
            ModelParams::power_law(1.0, 2.0).unwrap(),
            ModelParams::power_law(4.0, 1.0).unwrap(),
        ] {
            let table = partition_function_table(&params, 14).unwrap();
            let law = exact_distribution(14, &params, |e| e.clone()).unwrap();
            for (eta, p) in law.support() {
                let q = log_pmf(eta, &table).unwrap().exp();
                assert!((p - q).abs() < 1e-10 * q.max(1e-300) + 1e-16);
            }
        }
    }

    #[test]
    fn tv_examples() {
        let mk = |v: Vec<(char, f64)>| ExactDistribution::from_probabilities(v.into_iter().collect()).unwrap();
        let a = mk(vec![('a', 0.5), ('b', 0.5)]);
        let b = mk(vec![('a', 0.75), ('b', 0.25)]);
        let c = mk(vec![('c', 1.0)]);
        assert_eq!(total_variation(&a, &a), 0.0);
        assert!((total_variation(&a, &c) - 1.0).abs() < 1e-15);
        assert!((total_variation(&a, &b) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn chi_square_exact_proportions() {
        let d = ExactDistribution::from_probabilities([(0u8, 0.2), (1, 0.3), (2, 0.5)].into_iter().collect()).unwrap();
        let obs: BTreeMap<u8, u64> = [(0, 200), (1, 300), (2, 500)].into_iter().collect();
        let r = chi_square_gof(&obs, &d, 5.0, 1e-3);
        assert!(r.statistic.abs() < 1e-12);
        assert!(r.pass);
        assert_eq!(r.dof, 2);
    }

    #[test]
    fn chi_square_hand_computed_two_cells() {
        // expected 60/40 of 100, observed 70/30: 100/60 + 100/40
        let d = ExactDistribution::from_probabilities([(0u8, 0.6), (1, 0.4)].into_iter().collect()).unwrap();
        let obs: BTreeMap<u8, u64> = [(0, 70), (1, 30)].into_iter().collect();
        let r = chi_square_gof(&obs, &d, 5.0, 1e-3);
        assert!((r.statistic - (100.0 / 60.0 + 100.0 / 40.0)).abs() < 1e-12);
        assert_eq!(r.dof, 1);
        assert!((r.critical - 10.827566170662733).abs() < 1e-6);
        assert!(r.pass);
    }

    #[test]
    fn chi_square_detects_wrong_law() {
        use rand::{Rng, SeedableRng};
        let params = ModelParams::power_law(1.0, 1.0).unwrap();
        let law = exact_distribution(8, &params, |e| e.num_components()).unwrap();
        // a sampler that draws the number of components uniformly
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut obs = BTreeMap::new();
        for _ in 0..100_000 {
            *obs.entry(rng.random_range(1..=8u64)).or_insert(0) += 1;
        }
        assert!(!chi_square_gof(&obs, &law, 5.0, 1e-3).pass);
    }

    #[test]
    fn chi_square_pools_and_degenerates() {
        let d = ExactDistribution::from_probabilities([(0u8, 0.999), (1, 0.001)].into_iter().collect()).unwrap();
        let obs: BTreeMap<u8, u64> = [(0, 100)].into_iter().collect();
        let r = chi_square_gof(&obs, &d, 5.0, 1e-3);
        assert!(r.degenerate && r.pass);
        let outside: BTreeMap<u8, u64> = [(7, 1)].into_iter().collect();
        assert!(!chi_square_gof(&outside, &d, 5.0, 1e-3).pass);
    }

    #[test]
    fn pooling_keeps_every_cell() {
        let e = [0.5, 7.0, 1.0, 30.0, 2.0, 2.5, 0.1];
        let groups = pool_cells(&e, 5.0);
        let mut all: Vec<usize> = groups.iter().flatten().copied().collect();
        all.sort();
        assert_eq!(all, (0..e.len()).collect::<Vec<_>>());
        for g in &groups {
            assert!(g.iter().map(|&i| e[i]).sum::<f64>() >= 5.0);
        }
    }

    #[test]
    fn two_sample_same_and_different() {
        let a: BTreeMap<u8, u64> = [(0, 500), (1, 300), (2, 200)].into_iter().collect();
        let b: BTreeMap<u8, u64> = [(0, 505), (1, 290), (2, 205)].into_iter().collect();
        assert!(chi_square_two_sample(&a, &b, 5.0, 1e-3).pass);
        let c: BTreeMap<u8, u64> = [(0, 300), (1, 300), (2, 400)].into_iter().collect();
        assert!(!chi_square_two_sample(&a, &c, 5.0, 1e-3).pass);
    }

    #[test]
    fn exact_distribution_csv() {
        let ones = ModelParams::power_law(1.0, 1.0).unwrap();
        let d = exact_distribution(2, &ones, |e| e.num_components()).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("value,probability\n1,0.6666"));
    }
}
