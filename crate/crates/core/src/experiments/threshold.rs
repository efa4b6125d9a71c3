use std::io::Write;

use serde_json::json;

use super::{sample_map, Check, ExperimentConfig, Report, Summary};
use crate::error::{arg_err, Result};
use crate::gibbs::ModelParams;
use crate::partition::largest_component;
use crate::tilt::scaling_info;

#[derive(Debug, Clone)]
pub struct ThresholdReport {
    pub x_grid: Vec<f64>,
    /// `P̂(q_N ≤ x·r_N)` per grid point.
    pub cdf: Vec<f64>,
    pub window: (f64, f64),
    /// Mean fraction of `N` carried by sizes in `[u_lo·r_N, u_hi·r_N]`.
    pub mass_fraction: f64,
    pub gelled: usize,
    summary: Summary,
}

/// Largest component against the threshold scale `r_N`.
///
/// Checks `P̂(q_N ≤ cap·r_N) ≥ 0.99`, a mean mass fraction of at least 0.95
/// inside the window, and that no sample has `q_N > N/2`.
pub fn run_threshold_diag(
    params: &ModelParams,
    n: u64,
    x_grid: &[f64],
    window: (f64, f64),
    cap: f64,
    cfg: &ExperimentConfig,
) -> Result<ThresholdReport> {
    if x_grid.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return arg_err("x grid must be finite and non-negative");
    }
    if !(window.0 >= 0.0 && window.0 < window.1) {
        return arg_err(format!("invalid mass window {window:?}"));
    }
    let r = scaling_info(params, n)?.r_n;
    let (lo, hi) = (window.0 * r, window.1 * r);

    let rows = sample_map(params, n, cfg, |eta| {
        let in_window: u64 = eta
            .counts()
            .iter()
            .filter(|(&k, _)| (k as f64) >= lo && (k as f64) <= hi)
            .map(|(&k, &m)| k * m)
            .sum();
        Ok((largest_component(eta), in_window as f64 / n as f64))
    })?;

    let count = rows.len() as f64;
    let below = |x: f64| rows.iter().filter(|(q, _)| (*q as f64) <= x * r).count() as f64 / count;
    let cdf: Vec<f64> = x_grid.iter().map(|&x| below(x)).collect();
    let mass_fraction = rows.iter().map(|(_, f)| f).sum::<f64>() / count;
    let gelled = rows.iter().filter(|(q, _)| 2 * q > n).count();
    let p_cap = below(cap);
    let max_ratio = rows.iter().map(|(q, _)| *q as f64 / r).fold(0.0, f64::max);

    let checks = vec![
        Check::at_least("p_largest_below_cap", p_cap, 0.99),
        Check::at_least("mass_fraction_in_window", mass_fraction, 0.95),
        Check::at_most("samples_with_giant_component", gelled as f64, 0.0),
    ];
    let metrics = json!({
        "r_N": r,
        "cap": cap,
        "p_largest_below_cap": p_cap,
        "window": [window.0, window.1],
        "mass_fraction_in_window": mass_fraction,
        "samples_with_giant_component": gelled,
        "max_largest_over_r_N": max_ratio,
    });
    let summary = Summary::new("threshold", params, n, cfg, metrics, checks);
    Ok(ThresholdReport {
        x_grid: x_grid.to_vec(),
        cdf,
        window,
        mass_fraction,
        gelled,
        summary,
    })
}

impl Report for ThresholdReport {
    fn summary(&self) -> &Summary {
        &self.summary
    }

    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        writeln!(w, "x,cdf")?;
        for (x, f) in self.x_grid.iter().zip(&self.cdf) {
            writeln!(w, "{x},{f}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Method;

    #[test]
    fn cdf_monotone_and_reaches_one() {
        let params = ModelParams::power_law(1.0, 1.0).unwrap();
        let grid: Vec<f64> = (0..=40).map(|i| 0.5 * i as f64).collect();
        let cfg = ExperimentConfig::new(9, 200, 2000).with_method(Method::Recursive);
        let rep = run_threshold_diag(&params, 2000, &grid, (0.1, 10.0), 10.0, &cfg).unwrap();
        assert!(rep.cdf.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(rep.cdf[0], 0.0);
        assert_eq!(*rep.cdf.last().unwrap(), 1.0);
        assert_eq!(rep.gelled, 0);
        assert!(rep.mass_fraction > 0.9 && rep.mass_fraction <= 1.0);
    }

    #[test]
    fn rejects_bad_window() {
        let params = ModelParams::power_law(1.0, 1.0).unwrap();
        let cfg = ExperimentConfig::new(9, 2, 20);
        assert!(run_threshold_diag(&params, 20, &[1.0], (2.0, 1.0), 10.0, &cfg).is_err());
    }
}
