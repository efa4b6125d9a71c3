//! Exact Poisson variates: sequential inversion for small means and
//! Hörmann's transformed rejection with squeeze (PTRS) for larger ones.

use rand::Rng;

use crate::special::ln_gamma;

/// Means below this use inversion.
const INVERSION_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy)]
pub struct Poisson {
    lambda: f64,
    method: Method,
}

#[derive(Debug, Clone, Copy)]
enum Method {
    Zero,
    Inversion { exp_neg_lambda: f64 },
    Ptrs {
        ln_lambda: f64,
        a: f64,
        b: f64,
        inv_alpha: f64,
        v_r: f64,
    },
}

impl Poisson {
    /// Panics if `lambda` is negative or not finite.
    pub fn new(lambda: f64) -> Self {
        assert!(lambda >= 0.0 && lambda.is_finite(), "invalid Poisson mean {lambda}");
        let method = if lambda == 0.0 {
            Method::Zero
        } else if lambda < INVERSION_LIMIT {
            Method::Inversion {
                exp_neg_lambda: (-lambda).exp(),
            }
        } else {
            let slam = lambda.sqrt();
            let b = 0.931 + 2.53 * slam;
            Method::Ptrs {
                ln_lambda: lambda.ln(),
                a: -0.059 + 0.02483 * b,
                b,
                inv_alpha: 1.1239 + 1.1328 / (b - 3.4),
                v_r: 0.9277 - 3.6224 / (b - 2.0),
            }
        };
        Self { lambda, method }
    }

    pub fn mean(&self) -> f64 {
        self.lambda
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self.method {
            Method::Zero => 0,
            Method::Inversion { exp_neg_lambda } => {
                let u: f64 = rng.random();
                let mut k = 0u64;
                let mut p = exp_neg_lambda;
                let mut cdf = p;
                while u > cdf {
                    k += 1;
                    p *= self.lambda / k as f64;
                    if p == 0.0 {
                        break;
                    }
                    cdf += p;
                }
                k
            }
            Method::Ptrs {
                ln_lambda,
                a,
                b,
                inv_alpha,
                v_r,
            } => loop {
                let u = rng.random::<f64>() - 0.5;
                let v: f64 = rng.random();
                let us = 0.5 - u.abs();
                let k = ((2.0 * a / us + b) * u + self.lambda + 0.43).floor();
                if us >= 0.07 && v <= v_r {
                    return k as u64;
                }
                if k < 0.0 || (us < 0.013 && v > us) {
                    continue;
                }
                let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
                let rhs = -self.lambda + k * ln_lambda - ln_gamma(k + 1.0);
                if lhs <= rhs {
                    return k as u64;
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{chi_square_gof, ExactDistribution};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn pmf(lambda: f64, kmax: u64) -> ExactDistribution<u64> {
        let mut m = BTreeMap::new();
        for k in 0..=kmax {
            let lp = -lambda + k as f64 * lambda.ln() - ln_gamma(k as f64 + 1.0);
            m.insert(k, lp.exp());
        }
        let rest = 1.0 - m.values().sum::<f64>();
        *m.get_mut(&kmax).unwrap() += rest.max(0.0);
        ExactDistribution::from_probabilities(m).unwrap()
    }

    #[test]
    fn goodness_of_fit_across_regimes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &lambda in &[0.01, 0.7, 3.0, 9.99, 10.0, 25.0, 140.0, 2500.0] {
            let dist = Poisson::new(lambda);
            let kmax = (lambda + 12.0 * lambda.sqrt() + 20.0) as u64;
            let mut obs = BTreeMap::new();
            let n = 200_000;
            for _ in 0..n {
                let k = dist.sample(&mut rng).min(kmax);
                *obs.entry(k).or_insert(0u64) += 1;
            }
            let res = chi_square_gof(&obs, &pmf(lambda, kmax), 5.0, 1e-3);
            assert!(res.pass, "λ = {lambda}: {res:?}");
        }
    }

    #[test]
    fn zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(Poisson::new(0.0).sample(&mut rng), 0);
    }
}
