//! Limiting objects: `b_r`, stratum integrals `f_j`, the limit shape
//! `l_{p-1}`, the limiting covariance matrices of the stratified counts and
//! masses, the small-size correlations `α_j`, and the Bose–Einstein /
//! Fermi–Dirac comparison shapes.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::gibbs::ModelParams;
use crate::quad::{integrate, integrate_to_infinity};
use crate::special::{gamma, upper_incomplete_gamma};

const QUAD_TOL: f64 = 1e-13;

/// Stratification points `0 = u_0 < u_1 < … < u_q`; `u_{q+1} = ∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataGrid {
    u: Vec<f64>,
}

impl StrataGrid {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.first() != Some(&0.0) {
            return arg_err("strata grid must start at u_0 = 0");
        }
        if u.iter().any(|x| !x.is_finite()) {
            return arg_err("strata grid points must be finite");
        }
        if u.windows(2).any(|w| w[1] <= w[0]) {
            return arg_err("strata grid must be strictly increasing");
        }
        Ok(Self { u })
    }

    /// `u_j = j·step` for `j = 0..=q`.
    pub fn equidistant(q: usize, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return arg_err(format!("grid step must be positive, got {step}"));
        }
        Self::new((0..=q).map(|j| j as f64 * step).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.u
    }

    /// Number of interior points `q`.
    pub fn q(&self) -> usize {
        self.u.len() - 1
    }

    /// `u_j` for `j = 0..=q+1`, with `u_{q+1} = ∞`.
    pub fn point(&self, j: usize) -> f64 {
        self.u.get(j).copied().unwrap_or(f64::INFINITY)
    }
}

/// A labelled dense symmetric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub dim: usize,
    pub entries: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl CovarianceSpec {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| (self.entries[i][j] - self.entries[j][i]).abs() <= tol))
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entries[i][j])
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.to_matrix()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

fn power_law(params: &ModelParams) -> Result<(f64, f64)> {
    params
        .power_law_constants()
        .map_or_else(|| arg_err("limiting quantities need power-law parameters"), Ok)
}

/// `b_r(u) = C·Γ(r+1, u)`; vanishes at `u = ∞`.
pub fn b_r(params: &ModelParams, r: f64, u: f64) -> Result<f64> {
    let (c, _) = power_law(params)?;
    if !(r > -1.0) {
        return arg_err(format!("b_r needs r > -1, got {r}"));
    }
    Ok(c * upper_incomplete_gamma(r + 1.0, u)?)
}

/// `f_j(s) = C ∫_{u_j}^{u_{j+1}} x^s e^{-x} dx = b_s(u_j) − b_s(u_{j+1})`.
pub fn f_strata(params: &ModelParams, s: f64, grid: &StrataGrid) -> Result<Vec<f64>> {
    let b: Vec<f64> = (0..=grid.q() + 1)
        .map(|j| b_r(params, s, grid.point(j)))
        .collect::<Result<_>>()?;
    Ok(b.windows(2).map(|w| w[0] - w[1]).collect())
}

/// `l_{p-1}(u) = Γ(p, u) / Γ(p+1)`.
pub fn limit_shape_l(p: f64, u: f64) -> Result<f64> {
    if !(p > 0.0) {
        return arg_err(format!("limit shape needs p > 0, got {p}"));
    }
    Ok(upper_incomplete_gamma(p, u)? / gamma(p + 1.0))
}

/// `C·Γ(p+2)`, the limiting scaled variance of the total mass.
pub fn mass_variance_constant(params: &ModelParams) -> Result<f64> {
    let (c, p) = power_law(params)?;
    Ok(c * gamma(p + 2.0))
}

fn need_strata(grid: &StrataGrid) -> Result<usize> {
    match grid.q() {
        0 => arg_err("covariance needs q >= 1"),
        q => Ok(q),
    }
}

fn labels(q: usize, nu: &str, k: &str) -> Vec<String> {
    (0..=q)
        .map(|j| format!("{nu}_{j}"))
        .chain((1..=q).map(|j| format!("{k}_{j}")))
        .collect()
}

/// Limiting covariance `ϑ*` of `(ν̂*_0, …, ν̂*_q, K̂*_1, …, K̂*_q)`.
pub fn cov_theta_star(params: &ModelParams, grid: &StrataGrid) -> Result<CovarianceSpec> {
    let q = need_strata(grid)?;
    let (_, p) = power_law(params)?;
    let d = mass_variance_constant(params)?;
    let fm1 = f_strata(params, p - 1.0, grid)?;
    let f0 = f_strata(params, p, grid)?;
    let f1 = f_strata(params, p + 1.0, grid)?;
    let dim = 2 * q + 1;
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let entries = (0..dim)
        .map(|m| {
            (0..dim)
                .map(|k| match (m <= q, k <= q) {
                    (true, true) => fm1[m] * delta(m, k) - f0[m] * f0[k] / d,
                    (true, false) => f0[m] * delta(m, k - q) - f0[m] * f1[k - q] / d,
                    (false, true) => f0[k] * delta(k, m - q) - f0[k] * f1[m - q] / d,
                    (false, false) => f1[m - q] * delta(m, k) - f1[m - q] * f1[k - q] / d,
                })
                .collect()
        })
        .collect();
    Ok(CovarianceSpec {
        dim,
        entries,
        labels: labels(q, "nu*", "K*"),
    })
}

/// Limiting covariance `e` of `(ν̂_0, …, ν̂_q, K̂_1, …, K̂_q)`, the tail-sum
/// counterpart of [`cov_theta_star`].
pub fn cov_e(params: &ModelParams, grid: &StrataGrid) -> Result<CovarianceSpec> {
    let q = need_strata(grid)?;
    let (_, p) = power_law(params)?;
    let d = mass_variance_constant(params)?;
    let fm1 = f_strata(params, p - 1.0, grid)?;
    let f0 = f_strata(params, p, grid)?;
    let b = |r: f64, j: usize| b_r(params, r, grid.point(j));
    let dim = 2 * q + 1;
    let mut entries = vec![vec![0.0; dim]; dim];
    for m in 0..dim {
        for k in m..dim {
            let v = if m == 0 {
                if k == 0 {
                    fm1[0] - f0[0] * f0[0] / d
                } else if k <= q {
                    -f0[0] * b(p, k)? / d
                } else {
                    -f0[0] * b(p + 1.0, k - q)? / d
                }
            } else if m <= q {
                if k <= q {
                    b(p - 1.0, m.max(k))? - b(p, m)? * b(p, k)? / d
                } else {
                    b(p, m.max(k - q))? - b(p, m)? * b(p + 1.0, k - q)? / d
                }
            } else {
                b(p + 1.0, m.max(k) - q)? - b(p + 1.0, m - q)? * b(p + 1.0, k - q)? / d
            };
            entries[m][k] = v;
            entries[k][m] = v;
        }
    }
    Ok(CovarianceSpec {
        dim,
        entries,
        labels: labels(q, "nu", "K"),
    })
}

/// `α_0, …, α_q` for the small-size regime from the stratum ratios
/// `ρ_j = lim M_j / M_{j+1}`, `j = 0..q-1`.
pub fn small_size_alphas(p: f64, rho: &[f64]) -> Result<Vec<f64>> {
    if !(p > 0.0) {
        return arg_err(format!("p must be positive, got {p}"));
    }
    if let Some(r) = rho.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
        return arg_err(format!("ρ must lie in [0, 1), got {r}"));
    }
    let lead = (p * (p + 2.0)).sqrt() / (p + 1.0);
    let mut out: Vec<f64> = rho
        .iter()
        .map(|&r| lead * (1.0 - r.powf(p + 1.0)) / ((1.0 - r.powf(p + 2.0)) * (1.0 - r.powf(p))).sqrt())
        .collect();
    out.push(gamma(p + 1.0) / (gamma(p) * gamma(p + 2.0)).sqrt());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeKind {
    #[serde(rename = "BE")]
    BoseEinstein,
    #[serde(rename = "FD")]
    FermiDirac,
}

impl ShapeKind {
    pub fn tag(self) -> &'static str {
        match self {
            ShapeKind::BoseEinstein => "BE",
            ShapeKind::FermiDirac => "FD",
        }
    }

    /// `1/(e^y − 1)` or `1/(e^y + 1)`.
    fn occupation(self, y: f64) -> f64 {
        match self {
            ShapeKind::BoseEinstein => 1.0 / y.exp_m1(),
            ShapeKind::FermiDirac => 1.0 / (y.exp() + 1.0),
        }
    }
}

fn check_shape_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return arg_err(format!("comparison shapes need p >= 1, got {p}"));
    }
    Ok(())
}

/// `∫_a^∞ x^{p-1} occ(c·x) dx`, splitting off `[a, a+1]` where the
/// integrand may be singular.
fn shape_integral(kind: ShapeKind, p: f64, c: f64, a: f64) -> Result<f64> {
    let f = |x: f64| x.powf(p - 1.0) * kind.occupation(c * x);
    let head = integrate(f, a, a + 1.0, QUAD_TOL)?;
    let tail = integrate_to_infinity(f, a + 1.0, QUAD_TOL)?;
    Ok(head + tail)
}

/// Normalizing constant making the comparison shape integrate to one.
///
/// Substituting `y = c·x` shows `∫_0^∞ shape = c^{-(p+1)} ∫_0^∞ y^p occ(y) dy`,
/// so `c = (∫_0^∞ y^p occ(y) dy)^{1/(p+1)}`.
pub fn comparison_constant(kind: ShapeKind, p: f64) -> Result<f64> {
    check_shape_p(p)?;
    let moment = shape_integral(kind, p + 1.0, 1.0, 0.0)?;
    Ok(moment.powf(1.0 / (p + 1.0)))
}

/// `∫_u^∞ x^{p-1} e^{-cx}/(1 ∓ e^{-cx}) dx` with the normalizing `c`.
/// The Bose–Einstein shape is `+∞` at `u = 0` for `p = 1`.
pub fn comparison_shape(kind: ShapeKind, p: f64, u: f64) -> Result<f64> {
    let c = comparison_constant(kind, p)?;
    comparison_shape_with(kind, p, c, u)
}

/// [`comparison_shape`] with a precomputed constant.
pub fn comparison_shape_with(kind: ShapeKind, p: f64, c: f64, u: f64) -> Result<f64> {
    check_shape_p(p)?;
    if !(u >= 0.0) {
        return arg_err(format!("u must be non-negative, got {u}"));
    }
    // integrand ~ x^{p-2}/c near 0
    if u == 0.0 && kind == ShapeKind::BoseEinstein && p == 1.0 {
        return Ok(f64::INFINITY);
    }
    let v = shape_integral(kind, p, c, u)?;
    if v.is_nan() {
        return Err(Error::Numeric(format!("comparison shape at u = {u} is NaN")));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub u: f64,
    pub value: f64,
    pub kind: String,
}

/// Writes curve points as CSV with columns `u,value,kind`.
pub fn write_curve_csv<W: Write>(mut w: W, points: &[CurvePoint]) -> Result<()> {
    writeln!(w, "u,value,kind")?;
    for pt in points {
        writeln!(w, "{},{},{}", pt.u, pt.value, pt.kind)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::{E, PI};

    fn pl(c: f64, p: f64) -> ModelParams {
        ModelParams::power_law(c, p).unwrap()
    }

    fn grid(u: &[f64]) -> StrataGrid {
        StrataGrid::new(u.to_vec()).unwrap()
    }

    /// `C ∫_a^b x^s e^{-x} dx` by quadrature.
    fn f_quad(c: f64, s: f64, a: f64, b: f64) -> f64 {
        let f = |x: f64| x.powf(s) * (-x).exp();
        c * if b.is_infinite() {
            integrate_to_infinity(f, a, 1e-14).unwrap()
        } else {
            integrate(f, a, b, 1e-14).unwrap()
        }
    }

    fn random_grid(rng: &mut impl Rng) -> StrataGrid {
        let q = rng.random_range(1..=5);
        let mut u = vec![0.0];
        for _ in 0..q {
            let last = *u.last().unwrap();
            u.push(last + rng.random_range(0.05..2.0));
        }
        StrataGrid::new(u).unwrap()
    }

    #[test]
    fn b_r_examples() {
        let one = pl(1.0, 1.0);
        assert!((b_r(&one, 0.0, 1.0).unwrap() - 1.0 / E).abs() < 1e-14);
        assert!((b_r(&one, 1.0, 1.0).unwrap() - 2.0 / E).abs() < 1e-14);
        assert!((b_r(&pl(3.0, 1.0), 1.0, 0.0).unwrap() - 3.0).abs() < 1e-13);
        assert!(b_r(&one, -1.0, 1.0).is_err());
        assert!(b_r(&ModelParams::explicit(vec![1.0]).unwrap(), 0.0, 1.0).is_err());
    }

    #[test]
    fn f_strata_examples() {
        let one = pl(1.0, 1.0);
        let g = grid(&[0.0, 1.0]);
        let f = f_strata(&one, 0.0, &g).unwrap();
        assert!((f[0] - f_quad(1.0, 0.0, 0.0, 1.0)).abs() < 1e-12);
        assert!((f[0] - 0.632_120_558_8).abs() < 1e-9);
        assert!((f[1] - 1.0 / E).abs() < 1e-14);
        let f1 = f_strata(&one, 1.0, &g).unwrap();
        assert!((f1[0] - f_quad(1.0, 1.0, 0.0, 1.0)).abs() < 1e-12);
        assert!((f1[0] - 0.264_241_117_7).abs() < 1e-9);
    }

    #[test]
    fn f_strata_match_quadrature_and_sum() {
        let mut rng = crate::sampler::replica_rng(10, 0);
        for _ in 0..100 {
            let g = random_grid(&mut rng);
            let c = rng.random_range(0.2..4.0);
            let p = rng.random_range(0.1..4.0);
            let params = pl(c, p);
            for s in [p - 1.0 + 0.05, p, p + 1.0] {
                let f = f_strata(&params, s, &g).unwrap();
                let total: f64 = f.iter().sum();
                assert!((total - c * gamma(s + 1.0)).abs() < 1e-8 * c * gamma(s + 1.0));
                for j in 0..f.len() {
                    if s >= 0.0 {
                        let want = f_quad(c, s, g.point(j), g.point(j + 1));
                        assert!((f[j] - want).abs() < 1e-9 * want.max(1e-3));
                    }
                }
            }
        }
    }

    #[test]
    fn limit_shape_examples() {
        for p in [0.5, 1.0, 2.0, 3.0] {
            assert!((limit_shape_l(p, 0.0).unwrap() - 1.0 / p).abs() < 1e-13);
        }
        assert!((limit_shape_l(1.0, 1.0).unwrap() - 0.367_879_44).abs() < 1e-8);
        for u in [0.0f64, 0.3, 2.0, 7.5] {
            let want = (1.0 + u) * (-u).exp() / 2.0;
            assert!((limit_shape_l(2.0, u).unwrap() - want).abs() < 1e-13);
        }
        assert!(limit_shape_l(0.0, 1.0).is_err());
    }

    #[test]
    fn limit_shape_has_unit_integral_and_decreases() {
        for p in [0.5, 1.0, 2.0, 3.0] {
            let head = integrate(|u| limit_shape_l(p, u).unwrap(), 0.0, 1.0, 1e-13).unwrap();
            let tail = integrate_to_infinity(|u| limit_shape_l(p, u).unwrap(), 1.0, 1e-13).unwrap();
            assert!((head + tail - 1.0).abs() < 1e-8, "p = {p}: {}", head + tail);
            let vals: Vec<f64> = (0..100).map(|i| limit_shape_l(p, i as f64 * 0.1).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn cauchy_schwarz_and_w_positive() {
        let mut rng = crate::sampler::replica_rng(11, 0);
        for _ in 0..100 {
            let g = random_grid(&mut rng);
            let p = rng.random_range(0.01..=4.0);
            let params = pl(rng.random_range(0.2..3.0), p);
            let fm1 = f_strata(&params, p - 1.0, &g).unwrap();
            let f0 = f_strata(&params, p, &g).unwrap();
            let f1 = f_strata(&params, p + 1.0, &g).unwrap();
            let f2 = f_strata(&params, p + 2.0, &g).unwrap();
            for j in 0..fm1.len() {
                assert!(f1[j] * fm1[j] - f0[j] * f0[j] > 0.0);
                assert!(f2[j] * fm1[j] - f1[j] * f0[j] > 0.0);
                assert!(f1[j] - f0[j] * f0[j] / fm1[j] > 0.0);
            }
        }
    }

    #[test]
    fn theta_star_example_and_signs() {
        let one = pl(1.0, 1.0);
        let g = grid(&[0.0, 1.0]);
        let th = cov_theta_star(&one, &g).unwrap();
        assert_eq!(th.dim, 3);
        let f00 = f_quad(1.0, 0.0, 0.0, 1.0);
        let f01 = f_quad(1.0, 1.0, 0.0, 1.0);
        assert!((th.get(0, 0) - (f00 - f01 * f01 / 2.0)).abs() < 1e-12);
        assert!((th.get(0, 0) - 0.59721).abs() < 1e-5);
        assert_eq!(th.labels, vec!["nu*_0", "nu*_1", "K*_1"]);
        let mut rng = crate::sampler::replica_rng(12, 0);
        for _ in 0..100 {
            let g = random_grid(&mut rng);
            let params = pl(rng.random_range(0.2..3.0), rng.random_range(0.05..4.0));
            let th = cov_theta_star(&params, &g).unwrap();
            let q = g.q();
            for m in 0..th.dim {
                for k in 0..th.dim {
                    let same_block = (m <= q) == (k <= q);
                    if m != k && same_block {
                        assert!(th.get(m, k) < 0.0, "({m},{k}) = {}", th.get(m, k));
                    }
                }
            }
            assert!(th.is_symmetric(1e-14));
            assert!(th.min_eigenvalue() >= -1e-10);
            let e = cov_e(&params, &g).unwrap();
            assert!(e.is_symmetric(1e-14));
            assert!(e.min_eigenvalue() >= -1e-10);
            for m in 1..=q {
                assert!(e.get(m, m) > 0.0);
            }
        }
    }

    #[test]
    fn theta_star_decays_on_equidistant_grid() {
        // off the diagonal |ϑ*_{mk}| ∝ f_k(p) (counts) or f_k(p+1) (masses),
        // so the decay in k starts past the mode of x^p e^{-x}, resp.
        // x^{p+1} e^{-x}; the unbounded last stratum is excluded as well
        for (p, step) in [(1.5, 0.7), (1.0, 0.5), (2.0, 1.0), (0.5, 0.25)] {
            let params = pl(1.0, p);
            let g = StrataGrid::equidistant(10, step).unwrap();
            let th = cov_theta_star(&params, &g).unwrap();
            let q = g.q();
            let past = |mode: f64, m: usize| -> Vec<usize> {
                let first = (0..q).find(|&k| g.point(k) >= mode).unwrap();
                (first.max(m + 1)..q).collect()
            };
            for m in 0..=q {
                let nu: Vec<f64> = past(p, m).iter().map(|&k| th.get(m, k).abs()).collect();
                let mass: Vec<f64> = past(p + 1.0, m).iter().map(|&k| th.get(m, q + k).abs()).collect();
                for row in [&nu, &mass] {
                    assert!(row.windows(2).all(|w| w[1] < w[0]), "p={p} row {m}: {row:?}");
                }
            }
        }
        // before the mode the magnitudes grow
        let th = cov_theta_star(&pl(1.0, 1.5), &StrataGrid::equidistant(8, 0.7).unwrap()).unwrap();
        assert!(th.get(0, 2).abs() > th.get(0, 1).abs());
    }

    #[test]
    fn e_example() {
        let e = cov_e(&pl(1.0, 1.0), &grid(&[0.0, 1.0])).unwrap();
        let want = 1.0 / E - 2.0 / (E * E);
        assert!((e.get(1, 1) - want).abs() < 1e-14);
        assert!((e.get(1, 1) - 0.09720).abs() < 1e-5);
    }

    /// `e = T ϑ* Tᵀ` with `ν_j = Σ_{i≥j} ν*_i` (j ≥ 1), `ν_0 = ν*_0` and
    /// likewise for the masses.
    #[test]
    fn e_is_congruent_to_theta_star() {
        let mut rng = crate::sampler::replica_rng(13, 0);
        for _ in 0..50 {
            let g = random_grid(&mut rng);
            let params = pl(rng.random_range(0.2..3.0), rng.random_range(0.1..4.0));
            let q = g.q();
            let dim = 2 * q + 1;
            let th = cov_theta_star(&params, &g).unwrap().to_matrix();
            let mut t = DMatrix::<f64>::zeros(dim, dim);
            t[(0, 0)] = 1.0;
            for j in 1..=q {
                for i in j..=q {
                    t[(j, i)] = 1.0;
                    t[(q + j, q + i)] = 1.0;
                }
            }
            let want = &t * th * t.transpose();
            let e = cov_e(&params, &g).unwrap();
            for m in 0..dim {
                for k in 0..dim {
                    let w = want[(m, k)];
                    assert!((e.get(m, k) - w).abs() < 1e-10 * w.abs().max(1.0), "({m},{k}): {} vs {w}", e.get(m, k));
                }
            }
        }
    }

    #[test]
    fn covariance_needs_strata() {
        let g = StrataGrid::new(vec![0.0]).unwrap();
        assert!(cov_theta_star(&pl(1.0, 1.0), &g).is_err());
        assert!(cov_e(&pl(1.0, 1.0), &g).is_err());
        assert!(StrataGrid::new(vec![0.5, 1.0]).is_err());
        assert!(StrataGrid::new(vec![0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn alpha_examples() {
        let a = small_size_alphas(1.0, &[0.0, 0.5]).unwrap();
        assert_eq!(a.len(), 3);
        assert!((a[0] - 3f64.sqrt() / 2.0).abs() < 1e-14);
        let want = (3f64.sqrt() / 2.0) * 0.75 / (0.875f64 * 0.5).sqrt();
        assert!((a[1] - want).abs() < 1e-14);
        assert!((a[1] - 0.9820).abs() < 1e-4);
        assert!((a[2] * a[2] - 0.5).abs() < 1e-14);
        for p in [0.3, 1.0, 2.5] {
            let a = small_size_alphas(p, &[0.999]).unwrap();
            assert!((a[0] - 1.0).abs() < 1e-3);
            assert!((a[1] * a[1] - p * p / (p * p + p)).abs() < 1e-13);
            let mut rng = crate::sampler::replica_rng(14, 0);
            for _ in 0..50 {
                let r: f64 = rng.random_range(0.0..0.999);
                let v = small_size_alphas(p, &[r]).unwrap()[0];
                assert!(v > 0.0 && v < 1.0);
            }
        }
        assert!(small_size_alphas(1.0, &[1.0]).is_err());
        assert!(small_size_alphas(1.0, &[-0.1]).is_err());
    }

    #[test]
    fn be_constant_and_closed_form() {
        let c1 = comparison_constant(ShapeKind::BoseEinstein, 1.0).unwrap();
        assert!((c1 - PI / 6f64.sqrt()).abs() < 1e-10);
        for u in [0.05, 0.2, 0.5, 1.0, 2.0, 4.0, 10.0] {
            let got = comparison_shape_with(ShapeKind::BoseEinstein, 1.0, PI / 6f64.sqrt(), u).unwrap();
            let want = -(6f64.sqrt() / PI) * (1.0 - (-PI * u / 6f64.sqrt()).exp()).ln();
            assert!((got - want).abs() < 1e-8, "u = {u}: {got} vs {want}");
        }
        assert_eq!(comparison_shape(ShapeKind::BoseEinstein, 1.0, 0.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn fd_constant_and_closed_form() {
        let c2 = comparison_constant(ShapeKind::FermiDirac, 1.0).unwrap();
        assert!((c2 - PI / 12f64.sqrt()).abs() < 1e-10);
        assert!((c2 - 0.90690).abs() < 1e-5);
        for u in [0.0, 0.5, 3.0] {
            let got = comparison_shape(ShapeKind::FermiDirac, 1.0, u).unwrap();
            let want = (1.0 + (-c2 * u).exp()).ln() / c2;
            assert!((got - want).abs() < 1e-9);
        }
        for p in [1.0, 1.5, 2.0, 3.0] {
            assert!(comparison_shape(ShapeKind::FermiDirac, p, 0.0).unwrap().is_finite());
        }
    }

    #[test]
    fn comparison_shapes_normalized_and_decreasing() {
        for kind in [ShapeKind::BoseEinstein, ShapeKind::FermiDirac] {
            for p in [1.0, 2.0, 3.0] {
                let c = comparison_constant(kind, p).unwrap();
                let vals: Vec<f64> = (1..60)
                    .map(|i| comparison_shape_with(kind, p, c, i as f64 * 0.1).unwrap())
                    .collect();
                assert!(vals.windows(2).all(|w| w[1] < w[0]));
                // ∫_0^∞ shape = ∫_0^∞ x^p occ(cx) dx
                let total = shape_integral(kind, p + 1.0, c, 0.0).unwrap();
                assert!((total - 1.0).abs() < 1e-9, "{kind:?} p={p}: {total}");
            }
        }
        assert!(comparison_constant(ShapeKind::FermiDirac, 0.5).is_err());
        assert!(comparison_shape(ShapeKind::FermiDirac, 1.0, -1.0).is_err());
    }

    #[test]
    fn be_shape_finite_at_zero_above_two() {
        assert!(comparison_shape(ShapeKind::BoseEinstein, 2.5, 0.0).unwrap().is_finite());
    }

    #[test]
    fn curve_csv() {
        let pts = vec![CurvePoint {
            u: 0.5,
            value: 0.25,
            kind: "BE".into(),
        }];
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &pts).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "u,value,kind\n0.5,0.25,BE\n");
    }
}
