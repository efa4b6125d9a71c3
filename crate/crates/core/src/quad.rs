//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 60;
/// Absolute error floor below which tails are ignored.
const ABS_FLOOR: f64 = 1e-14;

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> (f64, f64) {
    let (val, err) = gk15(f, a, b);
    if err <= tol.max(ABS_FLOOR) || err <= 1e-15 * val.abs() || depth >= MAX_DEPTH {
        return (val, err);
    }
    let m = 0.5 * (a + b);
    let (l, el) = adapt(f, a, m, 0.5 * tol, depth + 1);
    let (r, er) = adapt(f, m, b, 0.5 * tol, depth + 1);
    (l + r, el + er)
}

/// Integrates `f` over `[a, b]` to an absolute tolerance `tol`, with an
/// absolute floor of 1e-14.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (val, err) = adapt(&f, a, b, tol, 0);
    if !val.is_finite() {
        return Err(Error::Numeric(format!("quadrature on [{a}, {b}] produced {val}")));
    }
    if err > 1e3 * tol.max(ABS_FLOOR) && err > 1e-10 * val.abs() {
        return Err(Error::Numeric(format!(
            "quadrature on [{a}, {b}] did not converge: estimate {val}, error {err}"
        )));
    }
    Ok(val)
}

/// Integrates `f` over `[a, ∞)` via `x = a + t/(1-t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, tol: f64) -> Result<f64> {
    let g = |t: f64| {
        let one_minus = 1.0 - t;
        if one_minus <= 0.0 {
            return 0.0;
        }
        let x = a + t / one_minus;
        let v = f(x) / (one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_exponentials() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-13).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let v = integrate_to_infinity(|x| (-x).exp(), 0.0, 1e-13).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let v = integrate_to_infinity(|x| (-x).exp(), 2.0, 1e-13).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-12);
        let v = integrate_to_infinity(|x| 1.0 / (1.0 + x * x), 0.0, 1e-12).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
    }

    #[test]
    fn integrable_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let v = integrate(|x| if x > 0.0 { x.powf(-0.5) } else { 0.0 }, 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-8);
    }
}
