//! Stratifications of component sizes, the moment sums that centre and
//! scale the stratified counts and masses, and the Monte Carlo runners.

mod clt;
mod limit_shape;
mod small_size;
mod threshold;

pub use clt::{run_clt_fluctuations, CltReport, CovarianceEntry};
pub use limit_shape::{run_limit_shape, LimitShapeReport};
pub use small_size::{run_smallsize_independence, SmallSizeReport};
pub use threshold::{run_threshold_diag, ThresholdReport};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::gibbs::ModelParams;
use crate::partition::Partition;
use crate::sampler::{map_replicas, Method, PreparedSampler};
use crate::theory::{f_strata, StrataGrid};
use crate::tilt::scaling_info;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime")]
pub enum Regime {
    /// Cut points `M_j = ⌊u_j·r_N⌋`.
    Threshold { grid: StrataGrid },
    /// Cut points `M_j = ⌈c_j·N^γ⌉`, `j = 1..=q`.
    SmallSize { coeffs: Vec<f64>, gamma: f64 },
}

/// Cut points `0 = M_0 < M_1 < … < M_q < N < M_{q+1} = N + 1`; stratum `j`
/// holds the sizes in `[M_j, M_{j+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratificationPlan {
    pub regime: Regime,
    #[serde(rename = "N")]
    pub n: u64,
    cuts: Vec<u64>,
}

impl StratificationPlan {
    pub fn threshold(params: &ModelParams, grid: StrataGrid, n: u64) -> Result<Self> {
        let r = scaling_info(params, n)?.r_n;
        let mut cuts: Vec<u64> = grid.points().iter().map(|u| (u * r).floor() as u64).collect();
        cuts.push(n + 1);
        Self::checked(Regime::Threshold { grid }, n, cuts)
    }

    pub fn small_size(params: &ModelParams, coeffs: Vec<f64>, gamma: f64, n: u64) -> Result<Self> {
        let Some((_, p)) = params.power_law_constants() else {
            return arg_err("small-size plan needs power-law parameters");
        };
        if !(gamma > 0.0 && gamma < 1.0 / (p + 1.0)) {
            return arg_err(format!("γ must lie in (0, 1/(p+1)) = (0, {}), got {gamma}", 1.0 / (p + 1.0)));
        }
        if coeffs.is_empty() || coeffs.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return arg_err("small-size coefficients must be positive");
        }
        let scale = (n as f64).powf(gamma);
        let mut cuts = vec![0];
        cuts.extend(coeffs.iter().map(|c| (c * scale).ceil() as u64));
        cuts.push(n + 1);
        Self::checked(Regime::SmallSize { coeffs, gamma }, n, cuts)
    }

    fn checked(regime: Regime, n: u64, cuts: Vec<u64>) -> Result<Self> {
        if cuts.len() < 3 {
            return arg_err("a stratification needs q >= 1");
        }
        if cuts.windows(2).any(|w| w[1] <= w[0]) {
            return arg_err(format!("cut points {cuts:?} are not strictly increasing"));
        }
        // stratum 0 must contain size 1 at least
        if cuts[1] < 2 {
            return arg_err(format!("M_1 = {} leaves stratum 0 empty", cuts[1]));
        }
        let q = cuts.len() - 2;
        if cuts[q] >= n {
            return arg_err(format!("M_q = {} must be below N = {n}", cuts[q]));
        }
        Ok(Self { regime, n, cuts })
    }

    pub fn q(&self) -> usize {
        self.cuts.len() - 2
    }

    /// `M_0, …, M_{q+1}`.
    pub fn cuts(&self) -> &[u64] {
        &self.cuts
    }

    /// Sizes of stratum `j` as the half-open range `[M_j, M_{j+1})`.
    pub fn stratum(&self, j: usize) -> (u64, u64) {
        (self.cuts[j], self.cuts[j + 1])
    }

    /// `ρ_0, …, ρ_{q-1}` with `ρ_0 = 0` (since `M_0 = 0`) and
    /// `ρ_j = c_j / c_{j+1}`; `None` for the threshold regime.
    pub fn rho(&self) -> Option<Vec<f64>> {
        match &self.regime {
            Regime::Threshold { .. } => None,
            Regime::SmallSize { coeffs, .. } => {
                let mut out = vec![0.0];
                out.extend(coeffs.windows(2).map(|w| w[0] / w[1]));
                Some(out)
            }
        }
    }
}

/// Exact finite sums `Σ a_k e^{-δk}`, `Σ k a_k e^{-δk}`, `Σ k² a_k e^{-δk}`
/// per stratum (starred) and as tails from `M_j` (unstarred, `j ≥ 1`; the
/// `j = 0` entry is the head sum over stratum 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTables {
    pub s: Vec<f64>,
    pub e: Vec<f64>,
    pub v: Vec<f64>,
    pub s_star: Vec<f64>,
    pub e_star: Vec<f64>,
    pub v_star: Vec<f64>,
}

fn tails(star: &[f64]) -> Vec<f64> {
    let q = star.len() - 1;
    (0..=q)
        .map(|j| if j == 0 { star[0] } else { star[j..].iter().sum() })
        .collect()
}

pub fn compute_moment_tables(params: &ModelParams, plan: &StratificationPlan, delta: f64) -> Result<MomentTables> {
    let q = plan.q();
    let mut s_star = vec![0.0; q + 1];
    let mut e_star = vec![0.0; q + 1];
    let mut v_star = vec![0.0; q + 1];
    for j in 0..=q {
        let (lo, hi) = plan.stratum(j);
        for k in lo.max(1)..hi.min(plan.n + 1) {
            let kf = k as f64;
            let t = params.a(k) * (-delta * kf).exp();
            s_star[j] += t;
            e_star[j] += kf * t;
            v_star[j] += kf * kf * t;
        }
    }
    if s_star.iter().chain(&e_star).chain(&v_star).any(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("moment sums overflow at δ = {delta}")));
    }
    Ok(MomentTables {
        s: tails(&s_star),
        e: tails(&e_star),
        v: tails(&v_star),
        s_star,
        e_star,
        v_star,
    })
}

/// Counts `ν*_j` and masses `K*_j` of each stratum of a partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawStrata {
    pub nu_star: Vec<u64>,
    pub k_star: Vec<u64>,
}

impl RawStrata {
    pub fn of(eta: &Partition, plan: &StratificationPlan) -> Self {
        let (nu_star, k_star) = (0..=plan.q())
            .map(|j| {
                let (lo, hi) = plan.stratum(j);
                eta.stratum(lo, hi)
            })
            .unzip();
        Self { nu_star, k_star }
    }

    fn tail(v: &[u64]) -> Vec<u64> {
        (0..v.len())
            .map(|j| if j == 0 { v[0] } else { v[j..].iter().sum() })
            .collect()
    }

    /// `ν_0 = ν*_0` and `ν_j = Σ_{i≥j} ν*_i`.
    pub fn nu(&self) -> Vec<u64> {
        Self::tail(&self.nu_star)
    }

    /// `K_0 = K*_0` and `K_j = Σ_{i≥j} K*_i`.
    pub fn k(&self) -> Vec<u64> {
        Self::tail(&self.k_star)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeTag {
    Threshold,
    SmallSize,
}

/// Centred and scaled stratum statistics.
///
/// Threshold regime: `ν̂*_j, K̂*_j, ν̂_j, K̂_j` for `j = 0..=q`, all scaled by
/// the stratum-0 normalizers `√f_0(p∓1)/√S_0`, `√f_0(p+1)/√V_0`.
/// Small-size regime: `ν̂*_j = (ν*_j − S*_j)/√S*_j` for `j = 0..=q` and
/// `K̂*_j = (K*_j − E*_j)/√V*_j` for `j < q`; the unstarred vectors are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledStats {
    pub regime: RegimeTag,
    pub nu_star_hat: Vec<f64>,
    pub k_star_hat: Vec<f64>,
    pub nu_hat: Vec<f64>,
    pub k_hat: Vec<f64>,
}

/// Precomputed centring and scale factors for one plan.
#[derive(Debug, Clone)]
pub struct Scaler {
    regime: RegimeTag,
    tables: MomentTables,
    nu_factor: Vec<f64>,
    k_factor: Vec<f64>,
}

impl Scaler {
    pub fn new(params: &ModelParams, plan: &StratificationPlan, tables: MomentTables) -> Result<Self> {
        let q = plan.q();
        let positive = |x: f64, what: &str| {
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(Error::Numeric(format!("{what} = {x} cannot normalize")))
            }
        };
        match &plan.regime {
            Regime::Threshold { grid } => {
                let Some((_, p)) = params.power_law_constants() else {
                    return arg_err("threshold scaling needs power-law parameters");
                };
                let a = (f_strata(params, p - 1.0, grid)?[0] / positive(tables.s[0], "S_0")?).sqrt();
                let b = (f_strata(params, p + 1.0, grid)?[0] / positive(tables.v[0], "V_0")?).sqrt();
                Ok(Self {
                    regime: RegimeTag::Threshold,
                    tables,
                    nu_factor: vec![a; q + 1],
                    k_factor: vec![b; q + 1],
                })
            }
            Regime::SmallSize { .. } => {
                let nu_factor = (0..=q)
                    .map(|j| positive(tables.s_star[j], &format!("S*_{j}")).map(|s| 1.0 / s.sqrt()))
                    .collect::<Result<_>>()?;
                let k_factor = (0..q)
                    .map(|j| positive(tables.v_star[j], &format!("V*_{j}")).map(|v| 1.0 / v.sqrt()))
                    .collect::<Result<_>>()?;
                Ok(Self {
                    regime: RegimeTag::SmallSize,
                    tables,
                    nu_factor,
                    k_factor,
                })
            }
        }
    }

    pub fn tables(&self) -> &MomentTables {
        &self.tables
    }

    /// Scale applied to one unit of `ν*_j`.
    pub fn nu_factor(&self, j: usize) -> f64 {
        self.nu_factor[j]
    }

    pub fn scale(&self, raw: &RawStrata) -> ScaledStats {
        let t = &self.tables;
        let centred = |x: &[u64], mean: &[f64], f: &[f64]| -> Vec<f64> {
            f.iter().enumerate().map(|(j, f)| f * (x[j] as f64 - mean[j])).collect()
        };
        match self.regime {
            RegimeTag::Threshold => ScaledStats {
                regime: self.regime,
                nu_star_hat: centred(&raw.nu_star, &t.s_star, &self.nu_factor),
                k_star_hat: centred(&raw.k_star, &t.e_star, &self.k_factor),
                nu_hat: centred(&raw.nu(), &t.s, &self.nu_factor),
                k_hat: centred(&raw.k(), &t.e, &self.k_factor),
            },
            RegimeTag::SmallSize => ScaledStats {
                regime: self.regime,
                nu_star_hat: centred(&raw.nu_star, &t.s_star, &self.nu_factor),
                k_star_hat: centred(&raw.k_star, &t.e_star, &self.k_factor),
                nu_hat: Vec::new(),
                k_hat: Vec::new(),
            },
        }
    }
}

/// One-off scaling of a single partition.
pub fn scale_stats(
    eta: &Partition,
    plan: &StratificationPlan,
    tables: &MomentTables,
    params: &ModelParams,
) -> Result<ScaledStats> {
    if eta.total() != plan.n {
        return arg_err(format!("partition of {} does not match plan N = {}", eta.total(), plan.n));
    }
    Ok(Scaler::new(params, plan, tables.clone())?.scale(&RawStrata::of(eta, plan)))
}

/// Monte Carlo settings shared by the runners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub samples: usize,
    pub method: Method,
    pub max_rejections: u64,
}

impl ExperimentConfig {
    /// Default sampler for `n`.
    pub fn new(seed: u64, samples: usize, n: u64) -> Self {
        Self {
            seed,
            samples,
            method: Method::default_for(n),
            max_rejections: 1_000_000_000,
        }
    }

    pub fn with_method(self, method: Method) -> Self {
        Self { method, ..self }
    }
}

/// Draws `cfg.samples` partitions of `n` and maps each through `f`,
/// keeping replica order.
pub(crate) fn sample_map<T, F>(params: &ModelParams, n: u64, cfg: &ExperimentConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Partition) -> Result<T> + Sync,
{
    if cfg.samples == 0 {
        return arg_err("samples must be at least 1");
    }
    let sampler = PreparedSampler::new(params, n, cfg.method)?;
    map_replicas(cfg.seed, cfg.samples, |_, rng| {
        let (eta, _) = sampler.draw(rng, cfg.max_rejections)?;
        f(&eta)
    })
}

/// A named pass/fail criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// `|value − target| ≤ tolerance`.
    pub fn within(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            tolerance,
            pass: (value - target).abs() <= tolerance,
        }
    }

    /// `value ≤ bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target: bound,
            tolerance: 0.0,
            pass: value <= bound,
        }
    }

    /// `value ≥ bound`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target: bound,
            tolerance: 0.0,
            pass: value >= bound,
        }
    }
}

/// Machine-readable record of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub params: ModelParams,
    #[serde(rename = "N")]
    pub n: u64,
    pub samples: usize,
    pub seed: u64,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub metrics: serde_json::Value,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Summary {
    pub(crate) fn new(
        experiment: &str,
        params: &ModelParams,
        n: u64,
        cfg: &ExperimentConfig,
        metrics: serde_json::Value,
        checks: Vec<Check>,
    ) -> Self {
        Self {
            experiment: experiment.into(),
            params: params.clone(),
            n,
            samples: cfg.samples,
            seed: cfg.seed,
            method: cfg.method,
            config: None,
            pass: checks.iter().all(|c| c.pass),
            metrics,
            checks,
        }
    }
}

/// Common output surface of the runners.
pub trait Report {
    fn summary(&self) -> &Summary;
    fn write_csv(&self, w: &mut dyn Write) -> Result<()>;
}
