//! The tilt equation `Σ_{k=1}^{N} k·a_k·e^{-δk} = N` and the limit-shape
//! scaling constants `h`, `r_N`.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::gibbs::ModelParams;
use crate::special::gamma;

const MAX_ITER: usize = 200;
/// Terms below this fraction of `N` past the mode are dropped.
const TAIL_CUTOFF: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltSolution {
    pub delta: f64,
    /// `|Σ k a_k e^{-δk} − N|` at the returned `delta`.
    pub residual: f64,
    #[serde(rename = "N")]
    pub n: u64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingInfo {
    pub h: f64,
    pub r_n: f64,
    pub p: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

/// `(Σ k a_k e^{-δk}, Σ k² a_k e^{-δk})` over `k = 1..=N`.
pub fn tilted_moments(params: &ModelParams, n: u64, delta: f64) -> (f64, f64) {
    let kmax = params.max_size().map_or(n, |m| m.min(n));
    let cutoff = TAIL_CUTOFF * n as f64;
    let mode = match params {
        ModelParams::PowerLaw { p, .. } if delta > 0.0 => p / delta,
        _ => f64::INFINITY,
    };
    let mut first = 0.0;
    let mut second = 0.0;
    for k in 1..=kmax {
        let kf = k as f64;
        let a = params.a(k);
        let t = kf * a * (-delta * kf).exp();
        first += t;
        second += kf * t;
        if kf > mode + 1.0 && kf * t < cutoff {
            break;
        }
    }
    (first, second)
}

/// Solves for the tilt `δ_N` by bracketed Newton iteration seeded at
/// `h·N^{-1/(p+1)}` (power law) or 0 (explicit tables).
pub fn solve_tilt(params: &ModelParams, n: u64) -> Result<TiltSolution> {
    if n == 0 {
        return arg_err("tilt equation needs N >= 1");
    }
    let target = n as f64;
    let f = |d: f64| {
        let (m1, m2) = tilted_moments(params, n, d);
        let v = m1 - target;
        (if v.is_nan() { f64::INFINITY } else { v }, m2)
    };

    let seed = match params {
        ModelParams::PowerLaw { c, p } => {
            (c * gamma(p + 1.0)).powf(1.0 / (p + 1.0)) * target.powf(-1.0 / (p + 1.0))
        }
        ModelParams::Explicit { .. } => 0.0,
    };

    let (mut lo, mut hi);
    let (f0, _) = f(seed);
    let mut step = seed.abs().max(0.1);
    let mut iterations = 0;
    if f0 == 0.0 {
        return Ok(TiltSolution {
            delta: seed,
            residual: 0.0,
            n,
            iterations: 0,
        });
    } else if f0 > 0.0 {
        lo = seed;
        hi = seed + step;
        while f(hi).0 > 0.0 {
            lo = hi;
            step *= 2.0;
            hi += step;
            iterations += 1;
            if iterations > MAX_ITER {
                return Err(Error::Solver { iterations, lo, hi });
            }
        }
    } else {
        hi = seed;
        lo = seed - step;
        while f(lo).0 < 0.0 {
            hi = lo;
            step *= 2.0;
            lo -= step;
            iterations += 1;
            if iterations > MAX_ITER {
                return Err(Error::Solver { iterations, lo, hi });
            }
        }
    }

    let tol = 1e-13 * target;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..MAX_ITER {
        iterations += 1;
        let (fx, m2) = f(x);
        if fx.abs() <= tol {
            return Ok(TiltSolution {
                delta: x,
                residual: fx.abs(),
                n,
                iterations,
            });
        }
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // Newton on log F, which is convex in δ: d/dδ log F = −m2/F
        let m1 = fx + target;
        let newton = x + (m1.ln() - target.ln()) * m1 / m2;
        x = if m2 > 0.0 && m1 > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            let r = f(x).0.abs();
            if r <= 1e-9 * target {
                return Ok(TiltSolution {
                    delta: x,
                    residual: r,
                    n,
                    iterations,
                });
            }
            break;
        }
    }
    Err(Error::Solver { iterations, lo, hi })
}

/// `h = (C·Γ(p+1))^{1/(p+1)}` and `r_N = N^{1/(p+1)} / h`.
pub fn scaling_info(params: &ModelParams, n: u64) -> Result<ScalingInfo> {
    let Some((c, p)) = params.power_law_constants() else {
        return arg_err("scaling constants need power-law parameters");
    };
    let h = (c * gamma(p + 1.0)).powf(1.0 / (p + 1.0));
    Ok(ScalingInfo {
        h,
        r_n: (n as f64).powf(1.0 / (p + 1.0)) / h,
        p,
        c,
    })
}
