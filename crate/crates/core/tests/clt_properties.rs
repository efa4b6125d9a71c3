use gibbs_partitions::experiments::{run_clt_fluctuations, ExperimentConfig, Report};
use gibbs_partitions::gibbs::ModelParams;
use gibbs_partitions::theory::StrataGrid;

#[test]
fn threshold_moments_at_n_1e5() {
    let params = ModelParams::power_law(1.0, 1.0).unwrap();
    let grid = StrataGrid::new(vec![0.0, 0.5, 1.5]).unwrap();
    let cfg = ExperimentConfig::new(21, 20_000, 100_000);
    let rep = run_clt_fluctuations(&params, 100_000, &grid, &cfg).unwrap();
    for (i, (m, s)) in rep.star_mean.iter().zip(&rep.star_stderr).enumerate() {
        assert!(m.abs() <= 3.0 * s, "mean of coordinate {i}: {m} vs stderr {s}");
    }
    for e in rep.entries.iter().filter(|e| e.block == "theta_star") {
        assert!(
            (e.empirical - e.theory).abs() <= 5.0 * e.stderr,
            "{} {}: {} vs {} (stderr {})",
            e.label_row,
            e.label_col,
            e.empirical,
            e.theory,
            e.stderr
        );
    }
    assert!(rep.summary().pass, "{:?}", rep.summary().checks);
}

#[test]
fn mass_variance_constant_carries_c() {
    // D = C·Γ(p+2) vs the C-free alternative Γ(p+2), distinguished at C = 4
    let (c, p) = (4.0, 1.0);
    let params = ModelParams::power_law(c, p).unwrap();
    let grid = StrataGrid::new(vec![0.0, 0.7, 1.5]).unwrap();
    let cfg = ExperimentConfig::new(5, 5_000, 10_000);
    let rep = run_clt_fluctuations(&params, 10_000, &grid, &cfg).unwrap();
    let f = |s: f64| gibbs_partitions::theory::f_strata(&params, s, &grid).unwrap();
    let (fm1, f0) = (f(p - 1.0), f(p));
    let entry = rep
        .entries
        .iter()
        .find(|e| e.block == "theta_star" && e.row == 1 && e.col == 1)
        .unwrap();
    let with_c = fm1[1] - f0[1] * f0[1] / (c * 2.0);
    let without_c = fm1[1] - f0[1] * f0[1] / 2.0;
    assert!((entry.theory - with_c).abs() < 1e-12);
    let err_with = (entry.empirical - with_c).abs();
    let err_without = (entry.empirical - without_c).abs();
    assert!(err_with < 0.1 * with_c, "{} vs {with_c}", entry.empirical);
    assert!(err_without > 5.0 * err_with);
}
