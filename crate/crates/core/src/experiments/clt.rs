use std::io::Write;

use serde::Serialize;
use serde_json::json;

use super::{compute_moment_tables, sample_map, Check, ExperimentConfig, RawStrata, Report, Scaler, StratificationPlan, Summary};
use crate::error::{arg_err, Result};
use crate::gibbs::ModelParams;
use crate::partition::young_curve;
use crate::sampler::replica_rng;
use crate::special::gamma;
use crate::stats::{covariance_stderr, ks_normality, regression_slope, MomentAccumulator, NormalityTest};
use crate::theory::{cov_e, cov_theta_star, limit_shape_l, CovarianceSpec, StrataGrid};
use crate::tilt::{scaling_info, solve_tilt};

const VARIANCE_TOLERANCE: f64 = 0.15;
const SLOPE_TOLERANCE: f64 = 0.10;
const NORMALITY_SIGNIFICANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceEntry {
    /// `"theta_star"` or `"e"`.
    pub block: &'static str,
    pub row: usize,
    pub col: usize,
    pub label_row: String,
    pub label_col: String,
    pub theory: f64,
    pub empirical: f64,
    pub stderr: f64,
}

impl CovarianceEntry {
    pub fn z(&self) -> f64 {
        (self.empirical - self.theory) / self.stderr
    }
}

#[derive(Debug, Clone)]
pub struct CltReport {
    pub plan: StratificationPlan,
    pub theta_star: CovarianceSpec,
    pub e: CovarianceSpec,
    pub entries: Vec<CovarianceEntry>,
    /// Means and standard errors of `(ν̂*_0..q, K̂*_1..q)`.
    pub star_mean: Vec<f64>,
    pub star_stderr: Vec<f64>,
    /// KS tests of `ν̂_j`, `j = 1..=q`.
    pub normality: Vec<NormalityTest>,
    /// Regression slopes of `ν̂_j` on `Δ(u_j)`, `j = 1..=q`, and their target.
    pub slopes: Vec<f64>,
    pub slope_target: f64,
    summary: Summary,
}

fn entries(block: &'static str, spec: &CovarianceSpec, rows: &[Vec<f64>], acc: &MomentAccumulator) -> Vec<CovarianceEntry> {
    let mut out = Vec::new();
    for i in 0..spec.dim {
        for j in i..spec.dim {
            out.push(CovarianceEntry {
                block,
                row: i,
                col: j,
                label_row: spec.labels[i].clone(),
                label_col: spec.labels[j].clone(),
                theory: spec.get(i, j),
                empirical: acc.covariance(i, j),
                stderr: covariance_stderr(rows, acc.mean(), i, j),
            });
        }
    }
    out
}

/// Threshold-regime fluctuations of the stratified counts and masses.
///
/// The empirical covariance of `(ν̂*, K̂*)` is compared with `ϑ*` and that of
/// the tail sums with `e`. Checks: `Var(ν̂_j)` within 15% of `e_jj`,
/// normality of each `ν̂_j`, `Cov(ν̂*_0, ν̂*_1) < 0`, and the slope of `ν̂_j`
/// on the limit-shape deviation `Δ(u_j)` within 10% of `√(CΓ(p+1)N/r_N)`.
/// Agreement of every entry in standard-error units is reported, not checked.
pub fn run_clt_fluctuations(params: &ModelParams, n: u64, grid: &StrataGrid, cfg: &ExperimentConfig) -> Result<CltReport> {
    let Some((c, p)) = params.power_law_constants() else {
        return arg_err("fluctuations need power-law parameters");
    };
    if cfg.samples < 3 {
        return arg_err("fluctuations need at least 3 samples");
    }
    let q = grid.q();
    let theta_star = cov_theta_star(params, grid)?;
    let e = cov_e(params, grid)?;
    let plan = StratificationPlan::threshold(params, grid.clone(), n)?;
    let delta = solve_tilt(params, n)?.delta;
    let scaler = Scaler::new(params, &plan, compute_moment_tables(params, &plan, delta)?)?;
    let r = scaling_info(params, n)?.r_n;
    let l: Vec<f64> = (1..=q).map(|j| limit_shape_l(p, grid.point(j))).collect::<Result<_>>()?;

    // per sample: star vector, tail vector, Δ(u_1..q)
    let samples = sample_map(params, n, cfg, |eta| {
        let st = scaler.scale(&RawStrata::of(eta, &plan));
        let star: Vec<f64> = st.nu_star_hat.iter().chain(&st.k_star_hat[1..]).copied().collect();
        let tail: Vec<f64> = st.nu_hat.iter().chain(&st.k_hat[1..]).copied().collect();
        let curve = young_curve(eta, Some(r))?;
        let dev: Vec<f64> = (1..=q).map(|j| curve.eval(grid.point(j)) - l[j - 1]).collect();
        Ok((star, tail, dev))
    })?;

    let dim = 2 * q + 1;
    let mut star_acc = MomentAccumulator::new(dim);
    let mut tail_acc = MomentAccumulator::new(dim);
    for (star, tail, _) in &samples {
        star_acc.push(star);
        tail_acc.push(tail);
    }
    let star_rows: Vec<Vec<f64>> = samples.iter().map(|s| s.0.clone()).collect();
    let tail_rows: Vec<Vec<f64>> = samples.iter().map(|s| s.1.clone()).collect();
    let mut all = entries("theta_star", &theta_star, &star_rows, &star_acc);
    all.extend(entries("e", &e, &tail_rows, &tail_acc));

    let mut checks = Vec::new();
    for j in 1..=q {
        let target = e.get(j, j);
        checks.push(Check::within(
            format!("var_nu_hat_{j}"),
            tail_acc.variance(j),
            target,
            VARIANCE_TOLERANCE * target.abs(),
        ));
    }
    let mut normality = Vec::with_capacity(q);
    for j in 1..=q {
        let values: Vec<f64> = tail_rows.iter().map(|row| row[j]).collect();
        let mut rng = replica_rng(cfg.seed, cfg.samples as u64 + j as u64);
        let t = ks_normality(&values, scaler.nu_factor(j), &mut rng, NORMALITY_SIGNIFICANCE)?;
        checks.push(Check::at_most(format!("normality_nu_hat_{j}"), t.statistic, t.critical));
        normality.push(t);
    }
    checks.push(Check::at_most("cov_nu_star_0_1", star_acc.covariance(0, 1), 0.0));
    let slope_target = (c * gamma(p + 1.0) * n as f64 / r).sqrt();
    let mut slopes = Vec::with_capacity(q);
    for j in 1..=q {
        let x: Vec<f64> = samples.iter().map(|s| s.2[j - 1]).collect();
        let slope = regression_slope(&x, &tail_rows.iter().map(|row| row[j]).collect::<Vec<_>>());
        checks.push(Check::within(format!("slope_{j}"), slope, slope_target, SLOPE_TOLERANCE * slope_target));
        slopes.push(slope);
    }

    let star_mean = star_acc.mean().to_vec();
    let star_stderr: Vec<f64> = (0..dim).map(|i| star_acc.stderr(i)).collect();
    let max_mean_z = star_mean.iter().zip(&star_stderr).map(|(m, s)| (m / s).abs()).fold(0.0, f64::max);
    let max_cov_z = |block: &str| {
        all.iter().filter(|x| x.block == block).map(|x| x.z().abs()).fold(0.0, f64::max)
    };
    let metrics = json!({
        "r_N": r,
        "delta": delta,
        "cuts": plan.cuts(),
        "var_nu_hat": (1..=q).map(|j| tail_acc.variance(j)).collect::<Vec<_>>(),
        "e_diag": (1..=q).map(|j| e.get(j, j)).collect::<Vec<_>>(),
        "ks_statistic": normality.iter().map(|t| t.statistic).collect::<Vec<_>>(),
        "ks_critical": normality.first().map(|t| t.critical),
        "slopes": slopes,
        "slope_target": slope_target,
        "star_mean": star_mean,
        "star_stderr": star_stderr,
        "max_abs_mean_z": max_mean_z,
        "max_abs_cov_z_theta_star": max_cov_z("theta_star"),
        "max_abs_cov_z_e": max_cov_z("e"),
    });
    let summary = Summary::new("fluctuations", params, n, cfg, metrics, checks);
    Ok(CltReport {
        plan,
        theta_star,
        e,
        entries: all,
        star_mean,
        star_stderr,
        normality,
        slopes,
        slope_target,
        summary,
    })
}

impl Report for CltReport {
    fn summary(&self) -> &Summary {
        &self.summary
    }

    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        writeln!(w, "block,row,col,label_row,label_col,theory,empirical,stderr")?;
        for x in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                x.block, x.row, x.col, x.label_row, x.label_col, x.theory, x.empirical, x.stderr
            )?;
        }
        Ok(())
    }
}
