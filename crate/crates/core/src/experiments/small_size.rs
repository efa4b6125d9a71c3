use std::io::Write;

use serde_json::json;

use super::{compute_moment_tables, sample_map, Check, ExperimentConfig, RawStrata, Regime, Report, Scaler, StratificationPlan, Summary};
use crate::error::{arg_err, Result};
use crate::gibbs::ModelParams;
use crate::stats::MomentAccumulator;
use crate::theory::small_size_alphas;
use crate::tilt::solve_tilt;

const CORRELATION_TOLERANCE: f64 = 0.1;
const VARIANCE_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct SmallSizeReport {
    pub plan: StratificationPlan,
    /// `ν*_0, K*_0, …, ν*_{q-1}, K*_{q-1}, ν*_q`.
    pub labels: Vec<String>,
    pub correlation: Vec<Vec<f64>>,
    /// Block-diagonal target: 1 on the diagonal, `α_j` inside block `j`, 0 across.
    pub target: Vec<Vec<f64>>,
    /// Limits `α_0, …, α_q`.
    pub alphas: Vec<f64>,
    /// Finite-N `E*_j / √(S*_j V*_j)`.
    pub alphas_finite: Vec<f64>,
    pub var_last: f64,
    summary: Summary,
}

fn block_of(i: usize) -> usize {
    i / 2
}

/// Small-size regime: empirical correlations of the per-stratum counts and
/// masses against the block-diagonal limit.
///
/// Checks `|Corr(ν̂*_j, K̂*_j) − α_j| ≤ 0.1` for every `j < q`, all cross-block
/// correlations within 0.1 of zero, and `Var(ν̂*_q)` within 0.1 of `1 − α_q²`.
pub fn run_smallsize_independence(params: &ModelParams, plan: &StratificationPlan, cfg: &ExperimentConfig) -> Result<SmallSizeReport> {
    let Some((_, p)) = params.power_law_constants() else {
        return arg_err("small-size regime needs power-law parameters");
    };
    let Regime::SmallSize { .. } = plan.regime else {
        return arg_err("small-size run needs a small-size plan");
    };
    if cfg.samples < 3 {
        return arg_err("small-size run needs at least 3 samples");
    }
    let n = plan.n;
    let q = plan.q();
    let rho = plan.rho().expect("small-size plan");
    let alphas = small_size_alphas(p, &rho)?;
    let delta = solve_tilt(params, n)?.delta;
    let scaler = Scaler::new(params, plan, compute_moment_tables(params, plan, delta)?)?;
    let t = scaler.tables();
    let alphas_finite: Vec<f64> = (0..=q)
        .map(|j| t.e_star[j] / (t.s_star[j] * t.v_star[j]).sqrt())
        .collect();

    let rows = sample_map(params, n, cfg, |eta| {
        let st = scaler.scale(&RawStrata::of(eta, plan));
        let mut row = Vec::with_capacity(2 * q + 1);
        for j in 0..q {
            row.push(st.nu_star_hat[j]);
            row.push(st.k_star_hat[j]);
        }
        row.push(st.nu_star_hat[q]);
        Ok(row)
    })?;
    let dim = 2 * q + 1;
    let mut acc = MomentAccumulator::new(dim);
    for row in &rows {
        acc.push(row);
    }

    let mut labels = Vec::with_capacity(dim);
    for j in 0..q {
        labels.push(format!("nu*_{j}"));
        labels.push(format!("K*_{j}"));
    }
    labels.push(format!("nu*_{q}"));
    let correlation: Vec<Vec<f64>> = (0..dim).map(|i| (0..dim).map(|k| acc.correlation(i, k)).collect()).collect();
    let target: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|k| match (i == k, block_of(i) == block_of(k)) {
                    (true, _) => 1.0,
                    (false, true) => alphas[block_of(i)],
                    (false, false) => 0.0,
                })
                .collect()
        })
        .collect();

    let mut checks = Vec::new();
    for j in 0..q {
        checks.push(Check::within(
            format!("corr_nu_K_{j}"),
            correlation[2 * j][2 * j + 1],
            alphas[j],
            CORRELATION_TOLERANCE,
        ));
    }
    let mut max_cross = 0.0f64;
    for i in 0..dim {
        for k in i + 1..dim {
            if block_of(i) != block_of(k) {
                max_cross = max_cross.max(correlation[i][k].abs());
            }
        }
    }
    checks.push(Check::at_most("max_cross_block_corr", max_cross, CORRELATION_TOLERANCE));
    let var_last = acc.variance(dim - 1);
    let var_target = 1.0 - alphas[q] * alphas[q];
    checks.push(Check::within("var_nu_star_q", var_last, var_target, VARIANCE_TOLERANCE));

    let metrics = json!({
        "delta": delta,
        "cuts": plan.cuts(),
        "rho": rho,
        "alphas": alphas,
        "alphas_finite_N": alphas_finite,
        "corr_nu_K": (0..q).map(|j| correlation[2 * j][2 * j + 1]).collect::<Vec<_>>(),
        "max_cross_block_corr": max_cross,
        "var_nu_star_q": var_last,
        "var_target": var_target,
    });
    let summary = Summary::new("small-size", params, n, cfg, metrics, checks);
    Ok(SmallSizeReport {
        plan: plan.clone(),
        labels,
        correlation,
        target,
        alphas,
        alphas_finite,
        var_last,
        summary,
    })
}

impl Report for SmallSizeReport {
    fn summary(&self) -> &Summary {
        &self.summary
    }

    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        writeln!(w, "row,col,label_row,label_col,empirical,target")?;
        let dim = self.labels.len();
        for i in 0..dim {
            for k in i..dim {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    i, k, self.labels[i], self.labels[k], self.correlation[i][k], self.target[i][k]
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Method;

    #[test]
    fn small_run_structure() {
        let params = ModelParams::power_law(1.0, 1.0).unwrap();
        let plan = StratificationPlan::small_size(&params, vec![1.0, 2.0], 0.3, 3000).unwrap();
        let cfg = ExperimentConfig::new(2, 300, 3000).with_method(Method::Recursive);
        let rep = run_smallsize_independence(&params, &plan, &cfg).unwrap();
        assert_eq!(rep.labels, vec!["nu*_0", "K*_0", "nu*_1", "K*_1", "nu*_2"]);
        assert_eq!(rep.alphas.len(), 3);
        assert!((rep.alphas[0] - 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(rep.target[0][1], rep.alphas[0]);
        assert_eq!(rep.target[0][2], 0.0);
        assert!(rep.correlation[0][1] > 0.5);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 16);
    }

    #[test]
    fn rejects_threshold_plan() {
        let params = ModelParams::power_law(1.0, 1.0).unwrap();
        let grid = crate::theory::StrataGrid::new(vec![0.0, 1.0]).unwrap();
        let plan = StratificationPlan::threshold(&params, grid, 1000).unwrap();
        let cfg = ExperimentConfig::new(2, 10, 1000);
        assert!(run_smallsize_independence(&params, &plan, &cfg).is_err());
    }
}
