//! Mergeable moment accumulators and a normality check for Monte Carlo
//! output.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{arg_err, Result};

/// Running means and co-moments of fixed-dimension vectors.
///
/// Updates use Welford's recurrence and `merge` uses the pairwise formula of
/// Chan, Golub and LeVeque, so partial accumulators can be combined in any
/// grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    mean: Vec<f64>,
    /// Row-major `dim × dim` sums of centred products.
    comoment: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, x: &[f64]) {
        let d = self.dim();
        assert_eq!(x.len(), d, "dimension mismatch");
        self.count += 1;
        let n = self.count as f64;
        let before: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        for (m, b) in self.mean.iter_mut().zip(&before) {
            *m += b / n;
        }
        for i in 0..d {
            let after_i = x[i] - self.mean[i];
            for j in 0..d {
                self.comoment[i * d + j] += after_i * before[j];
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let d = self.dim();
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for i in 0..d {
            for j in 0..d {
                self.comoment[i * d + j] += other.comoment[i * d + j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl * nb / n;
        }
        self.count += other.count;
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased covariance entry; NaN with fewer than two observations.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.comoment[i * self.dim() + j] / (self.count - 1) as f64
    }

    pub fn covariance_matrix(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..d).map(|i| (0..d).map(|j| self.covariance(i, j)).collect()).collect()
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.covariance(i, i)
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.covariance(i, j) / (self.variance(i) * self.variance(j)).sqrt()
    }

    /// Standard error of the `i`-th mean.
    pub fn stderr(&self, i: usize) -> f64 {
        (self.variance(i) / self.count as f64).sqrt()
    }
}

/// Standard error of the unbiased covariance of columns `i`, `j`, estimated
/// from the spread of centred products.
pub fn covariance_stderr(rows: &[Vec<f64>], means: &[f64], i: usize, j: usize) -> f64 {
    let n = rows.len() as f64;
    let prods: Vec<f64> = rows.iter().map(|r| (r[i] - means[i]) * (r[j] - means[j])).collect();
    let m = prods.iter().sum::<f64>() / n;
    let v = prods.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (v / n).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityTest {
    /// Kolmogorov–Smirnov distance to the standard normal.
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
    pub samples: usize,
}

/// Kolmogorov–Smirnov test of standardized values against `N(0, 1)`.
///
/// Values living on a lattice of spacing `lattice_step` are first spread
/// uniformly over their lattice cell, which removes the discreteness the
/// statistic would otherwise detect. The sample is standardized with its own
/// mean and standard deviation; the asymptotic Kolmogorov critical value
/// `√(ln(2/α)/2)/√n` is then conservative.
pub fn ks_normality(values: &[f64], lattice_step: f64, rng: &mut ChaCha8Rng, significance: f64) -> Result<NormalityTest> {
    if values.len() < 2 {
        return arg_err("normality test needs at least two values");
    }
    if !(significance > 0.0 && significance < 1.0) {
        return arg_err(format!("significance must lie in (0, 1), got {significance}"));
    }
    let mut x: Vec<f64> = values
        .iter()
        .map(|v| v + lattice_step * (rng.random::<f64>() - 0.5))
        .collect();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return arg_err("normality test on a constant sample");
    }
    for v in &mut x {
        *v = (*v - mean) / sd;
    }
    x.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut d = 0.0f64;
    for (i, v) in x.iter().enumerate() {
        let f = normal.cdf(*v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let critical = (0.5 * (2.0 / significance).ln()).sqrt() / n.sqrt();
    Ok(NormalityTest {
        statistic: d,
        critical,
        pass: d < critical,
        samples: x.len(),
    })
}

/// Least-squares slope of `y` on `x`.
pub fn regression_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::replica_rng;
    use rand_distr::{Distribution, Exp, StandardNormal};

    fn two_pass_cov(rows: &[Vec<f64>], i: usize, j: usize) -> f64 {
        let n = rows.len() as f64;
        let mi = rows.iter().map(|r| r[i]).sum::<f64>() / n;
        let mj = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        rows.iter().map(|r| (r[i] - mi) * (r[j] - mj)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn matches_two_pass_formula() {
        let mut rng = replica_rng(1, 0);
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|_| {
                let a: f64 = rng.random();
                let b: f64 = rng.random::<f64>() + 2.0 * a;
                vec![a * 1e3 + 1e6, b, -a]
            })
            .collect();
        let mut acc = MomentAccumulator::new(3);
        rows.iter().for_each(|r| acc.push(r));
        for i in 0..3 {
            for j in 0..3 {
                let want = two_pass_cov(&rows, i, j);
                assert!((acc.covariance(i, j) - want).abs() <= 1e-9 * want.abs().max(1e-12), "({i},{j})");
            }
        }
        assert!((acc.correlation(0, 2) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn merge_is_associative_in_effect() {
        let mut rng = replica_rng(2, 0);
        let rows: Vec<Vec<f64>> = (0..301).map(|_| vec![rng.random(), rng.random::<f64>() * 5.0]).collect();
        let mut whole = MomentAccumulator::new(2);
        rows.iter().for_each(|r| whole.push(r));
        let mut parts: Vec<MomentAccumulator> = rows
            .chunks(37)
            .map(|c| {
                let mut a = MomentAccumulator::new(2);
                c.iter().for_each(|r| a.push(r));
                a
            })
            .collect();
        let mut merged = MomentAccumulator::new(2);
        for p in parts.iter().rev() {
            merged.merge(p);
        }
        let mut left = parts.remove(0);
        for p in &parts {
            left.merge(p);
        }
        for acc in [&merged, &left] {
            assert_eq!(acc.count(), 301);
            for i in 0..2 {
                assert!((acc.mean()[i] - whole.mean()[i]).abs() < 1e-12);
                for j in 0..2 {
                    assert!((acc.covariance(i, j) - whole.covariance(i, j)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn degenerate_counts() {
        let mut acc = MomentAccumulator::new(1);
        assert!(acc.covariance(0, 0).is_nan());
        acc.push(&[3.0]);
        assert!(acc.variance(0).is_nan());
        assert_eq!(acc.mean(), &[3.0]);
        let empty = MomentAccumulator::new(1);
        acc.merge(&empty);
        assert_eq!(acc.count(), 1);
    }

    #[test]
    fn ks_accepts_normal_and_rejects_exponential() {
        let mut rng = replica_rng(3, 0);
        let normal: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = ks_normality(&normal, 0.0, &mut replica_rng(3, 1), 1e-3).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.critical - 1.9495 / (20_000f64).sqrt()).abs() < 1e-4);
        let exp = Exp::new(1.0).unwrap();
        let skewed: Vec<f64> = (0..20_000).map(|_| exp.sample(&mut rng)).collect();
        assert!(!ks_normality(&skewed, 0.0, &mut replica_rng(3, 2), 1e-3).unwrap().pass);
    }

    #[test]
    fn jitter_removes_lattice_effect() {
        // rounded normals with a coarse lattice: raw fails, jittered passes
        let mut rng = replica_rng(4, 0);
        let step = 0.5;
        let rounded: Vec<f64> = (0..20_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z * 3.0 / step).round() * step
            })
            .collect();
        assert!(!ks_normality(&rounded, 0.0, &mut replica_rng(4, 1), 1e-3).unwrap().pass);
        assert!(ks_normality(&rounded, step, &mut replica_rng(4, 1), 1e-3).unwrap().pass);
    }

    #[test]
    fn ks_rejects_bad_input() {
        let mut rng = replica_rng(0, 0);
        assert!(ks_normality(&[1.0], 0.0, &mut rng, 1e-3).is_err());
        assert!(ks_normality(&[1.0, 1.0], 0.0, &mut rng, 1e-3).is_err());
        assert!(ks_normality(&[1.0, 2.0], 0.0, &mut rng, 0.0).is_err());
    }

    #[test]
    fn slope_of_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        assert!((regression_slope(&x, &y) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn covariance_stderr_shrinks_with_n() {
        let mut rng = replica_rng(5, 0);
        let rows: Vec<Vec<f64>> = (0..4000)
            .map(|_| vec![StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)])
            .collect();
        let means = [0.0, 0.0];
        let se_full = covariance_stderr(&rows, &means, 0, 0);
        let se_quarter = covariance_stderr(&rows[..1000], &means, 0, 0);
        // Var(Z²) = 2 for standard normals
        assert!((se_full - (2.0f64 / 4000.0).sqrt()).abs() < 0.004);
        assert!((se_quarter / se_full - 2.0).abs() < 0.3);
    }
}
