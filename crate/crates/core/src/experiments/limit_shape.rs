use std::io::Write;

use serde_json::json;

use super::{sample_map, Check, ExperimentConfig, Report, Summary};
use crate::error::{arg_err, Result};
use crate::gibbs::ModelParams;
use crate::partition::young_curve;
use crate::stats::MomentAccumulator;
use crate::theory::limit_shape_l;
use crate::tilt::scaling_info;

#[derive(Debug, Clone)]
pub struct LimitShapeReport {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub theory: Vec<f64>,
    /// `sup_u |mean ν̃(u) − l_{p-1}(u)|` over the grid.
    pub sup_deviation: f64,
    /// Fraction of samples whose own sup deviation is at most `eps`.
    pub fraction_within: f64,
    pub eps: f64,
    pub mean_components: f64,
    summary: Summary,
}

/// Monte Carlo mean of the scaled Young diagram `ν̃` against `l_{p-1}`.
///
/// Checks the sup deviation against `tolerance`, and for `p = 1` the mean
/// component count `ν(0)/√N` against `√C` within 10%.
pub fn run_limit_shape(
    params: &ModelParams,
    n: u64,
    grid: &[f64],
    eps: f64,
    tolerance: f64,
    cfg: &ExperimentConfig,
) -> Result<LimitShapeReport> {
    let Some((c, p)) = params.power_law_constants() else {
        return arg_err("limit shape needs power-law parameters");
    };
    if grid.is_empty() || grid.iter().any(|u| !(*u >= 0.0 && u.is_finite())) {
        return arg_err("evaluation grid must be non-empty, finite and non-negative");
    }
    let r = scaling_info(params, n)?.r_n;
    let theory: Vec<f64> = grid.iter().map(|&u| limit_shape_l(p, u)).collect::<Result<_>>()?;

    let rows = sample_map(params, n, cfg, |eta| {
        let curve = young_curve(eta, Some(r))?;
        let mut row: Vec<f64> = grid.iter().map(|&u| curve.eval(u)).collect();
        row.push(eta.num_components() as f64);
        Ok(row)
    })?;

    let g = grid.len();
    let mut acc = MomentAccumulator::new(g + 1);
    let mut within = 0usize;
    for row in &rows {
        acc.push(row);
        let dev = row[..g].iter().zip(&theory).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if dev <= eps {
            within += 1;
        }
    }
    let mean = acc.mean()[..g].to_vec();
    let stderr: Vec<f64> = (0..g).map(|i| acc.stderr(i)).collect();
    let sup_deviation = mean.iter().zip(&theory).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let fraction_within = within as f64 / rows.len() as f64;
    let mean_components = acc.mean()[g];
    let per_sqrt_n = mean_components / (n as f64).sqrt();

    let mut checks = vec![Check::at_most("sup_deviation", sup_deviation, tolerance)];
    if p == 1.0 {
        checks.push(Check::within("components_over_sqrt_n", per_sqrt_n, c.sqrt(), 0.1 * c.sqrt()));
    }
    let metrics = json!({
        "r_N": r,
        "sup_deviation": sup_deviation,
        "eps": eps,
        "fraction_within_eps": fraction_within,
        "mean_components": mean_components,
        "mean_components_over_sqrt_N": per_sqrt_n,
    });
    let summary = Summary::new("limit-shape", params, n, cfg, metrics, checks);
    Ok(LimitShapeReport {
        grid: grid.to_vec(),
        mean,
        stderr,
        theory,
        sup_deviation,
        fraction_within,
        eps,
        mean_components,
        summary,
    })
}

impl Report for LimitShapeReport {
    fn summary(&self) -> &Summary {
        &self.summary
    }

    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        writeln!(w, "u,mean,stderr,l_theory")?;
        for i in 0..self.grid.len() {
            writeln!(w, "{},{},{},{}", self.grid[i], self.mean[i], self.stderr[i], self.theory[i])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Method;

    #[test]
    fn trivial_n_runs() {
        let params = ModelParams::power_law(1.0, 1.0).unwrap();
        let cfg = ExperimentConfig::new(3, 5, 1);
        let rep = run_limit_shape(&params, 1, &[0.2, 0.5, 2.0], 0.1, 0.05, &cfg).unwrap();
        assert!(rep.sup_deviation.is_finite());
        // N = 1: ν̃(u) = r_1 for u < 1/r_1
        let r = scaling_info(&params, 1).unwrap().r_n;
        assert!((rep.mean[0] - r).abs() < 1e-12);
        assert_eq!(rep.mean_components, 1.0);
    }

    #[test]
    fn small_run_close_to_shape() {
        let params = ModelParams::power_law(1.0, 2.0).unwrap();
        let grid: Vec<f64> = (1..=20).map(|i| 0.2 * i as f64).collect();
        let cfg = ExperimentConfig::new(11, 60, 3000).with_method(Method::Recursive);
        let rep = run_limit_shape(&params, 3000, &grid, 0.2, 0.08, &cfg).unwrap();
        assert!(rep.summary().pass, "{:?}", rep.summary().checks);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("u,mean,stderr,l_theory\n"));
        assert_eq!(text.lines().count(), 21);
    }

    #[test]
    fn rejects_bad_grid() {
        let params = ModelParams::power_law(1.0, 1.0).unwrap();
        let cfg = ExperimentConfig::new(1, 2, 10);
        assert!(run_limit_shape(&params, 10, &[], 0.1, 0.1, &cfg).is_err());
        assert!(run_limit_shape(&params, 10, &[-1.0], 0.1, 0.1, &cfg).is_err());
    }
}
