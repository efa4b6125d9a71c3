//! `gibbs-part`: command-line front end for exact computation, sampling and
//! Monte Carlo experiments on Gibbs partitions.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use gibbs_partitions::experiments::{
    run_clt_fluctuations, run_limit_shape, run_smallsize_independence, run_threshold_diag, Check, ExperimentConfig,
    Report, StratificationPlan,
};
use gibbs_partitions::gibbs::{log_pmf, partition_function_table, ModelParams};
use gibbs_partitions::oracle::{chi_square_gof, exact_distribution, for_each_partition, weight_sum, ENUMERATION_CAP};
use gibbs_partitions::partition::Partition;
use gibbs_partitions::sampler::{sample_batch, write_jsonl, BatchHeader, Method, PreparedSampler, SamplerConfig};
use gibbs_partitions::theory::{
    comparison_constant, comparison_shape_with, limit_shape_l, write_curve_csv, CurvePoint, ShapeKind, StrataGrid,
};
use gibbs_partitions::tilt::{scaling_info, solve_tilt};
use gibbs_partitions::Error;

/// Default output directory when `--out` is absent.
const OUT_ENV: &str = "GIBBS_PART_OUT";

#[derive(Parser)]
#[command(name = "gibbs-part", version, about = "Gibbs distributions on integer partitions")]
struct Cli {
    /// Worker threads for sampling (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Command {
    /// Draw partitions from μ_N.
    Sample(SampleArgs),
    /// Partition-function table log c_n, optionally log μ_N of one partition.
    Pmf(PmfArgs),
    /// Solve the tilt equation.
    Tilt(TiltArgs),
    /// Scaled Young diagram against the limit shape.
    LimitShape(LimitShapeArgs),
    /// Stratified fluctuations against the limiting covariances.
    Fluctuations(FluctuationArgs),
    /// Small-size regime correlations.
    SmallSize(SmallSizeArgs),
    /// Largest component against the threshold scale.
    Threshold(ThresholdArgs),
    /// Limit shape next to the Bose–Einstein and Fermi–Dirac shapes.
    CompareShapes(CompareArgs),
    /// All partitions of a small N with their exact probabilities.
    Enumerate(EnumerateArgs),
    /// Fast internal consistency checks.
    Selftest(SelftestArgs),
}

#[derive(Args, Serialize)]
struct ModelArgs {
    #[arg(long, conflicts_with = "a_table", allow_negative_numbers = true)]
    p: Option<f64>,
    #[arg(long = "C", default_value_t = 1.0, allow_negative_numbers = true)]
    #[serde(rename = "C")]
    c: f64,
    /// File with one positive a_k per line.
    #[arg(long = "a-table")]
    a_table: Option<PathBuf>,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams, CliError> {
        match (&self.a_table, self.p) {
            (Some(path), _) => Ok(ModelParams::from_table_file(path)?),
            (None, Some(p)) => Ok(ModelParams::power_law(self.c, p)?),
            (None, None) => Err(CliError::Usage("either --p or --a-table is required".into())),
        }
    }
}

#[derive(Args, Serialize)]
struct OutputArgs {
    /// Output directory (default: $GIBBS_PART_OUT or the current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Recursive,
    Boltzmann,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Recursive => Method::Recursive,
            MethodArg::Boltzmann => Method::Boltzmann,
        }
    }
}

#[derive(Args, Serialize)]
struct RunArgs {
    #[arg(long = "N")]
    #[serde(rename = "N")]
    n: u64,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sampler (default: recursive up to N = 10⁵, Boltzmann above).
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, default_value_t = 1_000_000_000)]
    max_rejections: u64,
    /// Exit with status 1 when a statistical check fails.
    #[arg(long)]
    assert: bool,
}

impl RunArgs {
    fn config(&self, default_samples: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(self.seed, self.samples.unwrap_or(default_samples), self.n);
        if let Some(m) = self.method {
            cfg = cfg.with_method(m.into());
        }
        cfg.max_rejections = self.max_rejections;
        cfg
    }
}

#[derive(Args, Serialize)]
struct SampleArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct PmfArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    n: u64,
    /// Parts of a partition of N, e.g. 3,1,1.
    #[arg(long, value_delimiter = ',')]
    partition: Option<Vec<u64>>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct TiltArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    n: u64,
}

#[derive(Args, Serialize)]
struct LimitShapeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 0.2)]
    u_min: f64,
    #[arg(long, default_value_t = 4.0)]
    u_max: f64,
    #[arg(long, default_value_t = 0.1)]
    u_step: f64,
    /// Per-sample sup deviation counted as "within".
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Bound on the sup deviation of the mean curve.
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct FluctuationArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Stratification points u_0 = 0 < u_1 < … < u_q.
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    grid: Vec<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct SmallSizeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Coefficients c_1 < … < c_q of M_j = ⌈c_j N^γ⌉.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    coeffs: Vec<f64>,
    #[arg(long, default_value_t = 0.25)]
    gamma: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct ThresholdArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 20.0)]
    x_max: f64,
    #[arg(long, default_value_t = 0.5)]
    x_step: f64,
    /// Mass window [u_lo, u_hi] in units of r_N.
    #[arg(long, value_delimiter = ',', default_value = "0.1,10")]
    window: Vec<f64>,
    /// x with P(q_N ≤ x·r_N) ≥ 0.99 checked.
    #[arg(long, default_value_t = 10.0)]
    cap: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct CompareArgs {
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 0.1)]
    u_min: f64,
    #[arg(long, default_value_t = 4.0)]
    u_max: f64,
    #[arg(long, default_value_t = 0.1)]
    u_step: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct EnumerateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    n: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize)]
struct SelftestArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
    Failed,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Lib(e.into())
    }
}

type CliResult = Result<(), CliError>;

fn error_json(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({"error": kind, "message": message, "exit_code": code}));
    ExitCode::from(code)
}

fn out_dir(output: &OutputArgs) -> Result<PathBuf, CliError> {
    let dir = output
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// CSV text as a JSON array of row objects, numbers where cells parse.
fn csv_to_json(text: &[u8]) -> Result<Value, CliError> {
    let mut reader = csv::Reader::from_reader(text);
    let headers = reader.headers().map_err(|e| CliError::Usage(e.to_string()))?.clone();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Usage(e.to_string()))?;
        let obj: serde_json::Map<String, Value> = headers
            .iter()
            .zip(rec.iter())
            .map(|(h, v)| {
                let val = if let Ok(i) = v.parse::<i64>() {
                    json!(i)
                } else if let Ok(f) = v.parse::<f64>() {
                    serde_json::Number::from_f64(f).map_or_else(|| json!(v), Value::Number)
                } else {
                    json!(v)
                };
                (h.to_string(), val)
            })
            .collect();
        rows.push(Value::Object(obj));
    }
    Ok(Value::Array(rows))
}

/// Writes `name.csv` (or `name.json`) and `name.summary.json`, then prints
/// the summary as one line.
fn emit(name: &str, csv: Vec<u8>, mut summary: Value, config: Value, output: &OutputArgs) -> CliResult {
    let dir = out_dir(output)?;
    let data = match output.format {
        Format::Csv => {
            let path = dir.join(format!("{name}.csv"));
            fs::write(&path, &csv)?;
            path
        }
        Format::Json => {
            let path = dir.join(format!("{name}.json"));
            fs::write(&path, serde_json::to_vec(&csv_to_json(&csv)?)?)?;
            path
        }
    };
    summary["config"] = config;
    summary["output"] = json!(data.display().to_string());
    fs::write(dir.join(format!("{name}.summary.json")), serde_json::to_vec_pretty(&summary)?)?;
    println!("{summary}");
    Ok(())
}

fn emit_report(name: &str, report: &dyn Report, config: Value, output: &OutputArgs, assert: bool) -> CliResult {
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let mut summary = report.summary().clone();
    summary.config = Some(config.clone());
    let pass = summary.pass;
    emit(name, csv, serde_json::to_value(&summary)?, config, output)?;
    if assert && !pass {
        return Err(CliError::Failed);
    }
    Ok(())
}

fn linspace(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && lo <= hi && lo.is_finite() && hi.is_finite()) {
        return Err(CliError::Usage(format!("invalid grid {lo}..{hi} step {step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    // rounding keeps printed grid points free of representation noise
    Ok((0..=count).map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12).collect())
}

fn sample(args: &SampleArgs, config: Value) -> CliResult {
    let params = args.model.params()?;
    let n = args.run.n;
    let method = args.run.method.map_or_else(|| Method::default_for(n), Method::from);
    let mut cfg = SamplerConfig::new(args.run.seed, method, args.run.samples.unwrap_or(1));
    cfg.max_rejections = args.run.max_rejections;
    let samples = sample_batch(&cfg, &params, n)?;
    let mut data = Vec::new();
    match args.output.format {
        Format::Csv => {
            writeln!(data, "replica,rejections,size,count")?;
            for s in &samples {
                for (k, m) in s.partition.counts() {
                    writeln!(data, "{},{},{k},{m}", s.replica, s.rejections)?;
                }
            }
        }
        Format::Json => {
            let header = BatchHeader {
                params: params.clone(),
                n,
                seed: cfg.seed,
                method,
                replica_count: cfg.replica_count,
            };
            write_jsonl(&mut data, &header, &samples)?;
        }
    }
    let count = samples.len() as f64;
    let summary = json!({
        "command": "sample",
        "params": params,
        "N": n,
        "samples": samples.len(),
        "seed": cfg.seed,
        "method": method,
        "mean_components": samples.iter().map(|s| s.partition.num_components() as f64).sum::<f64>() / count,
        "mean_rejections": samples.iter().map(|s| s.rejections as f64).sum::<f64>() / count,
    });
    let dir = out_dir(&args.output)?;
    let path = match args.output.format {
        Format::Csv => dir.join("sample.csv"),
        Format::Json => dir.join("sample.jsonl"),
    };
    fs::write(&path, &data)?;
    let mut summary = summary;
    summary["config"] = config;
    summary["output"] = json!(path.display().to_string());
    println!("{summary}");
    Ok(())
}

fn pmf(args: &PmfArgs, config: Value) -> CliResult {
    let params = args.model.params()?;
    let table = partition_function_table(&params, args.n as i64)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    let mut summary = json!({
        "command": "pmf",
        "params": params,
        "N": args.n,
        "log_c_N": table.log_c(args.n as usize),
    });
    if let Some(parts) = &args.partition {
        let eta = Partition::from_parts(parts)?;
        if eta.total() != args.n {
            return Err(CliError::Usage(format!("partition sums to {}, not N = {}", eta.total(), args.n)));
        }
        summary["log_pmf"] = json!(log_pmf(&eta, &table)?);
    }
    emit("pmf", csv, summary, config, &args.output)
}

fn tilt(args: &TiltArgs, config: Value) -> CliResult {
    let params = args.model.params()?;
    let sol = solve_tilt(&params, args.n)?;
    let mut summary = json!({
        "command": "tilt",
        "params": params,
        "N": args.n,
        "delta": sol.delta,
        "residual": sol.residual,
        "iterations": sol.iterations,
    });
    if params.power_law_constants().is_some() {
        let s = scaling_info(&params, args.n)?;
        summary["h"] = json!(s.h);
        summary["r_N"] = json!(s.r_n);
    }
    summary["config"] = config;
    println!("{summary}");
    Ok(())
}

fn compare_shapes(args: &CompareArgs, config: Value) -> CliResult {
    let grid = linspace(args.u_min, args.u_max, args.u_step)?;
    let mut points = Vec::with_capacity(3 * grid.len());
    for &u in &grid {
        points.push(CurvePoint {
            u,
            value: limit_shape_l(args.p, u)?,
            kind: "limit".into(),
        });
    }
    let mut constants = BTreeMap::new();
    for kind in [ShapeKind::BoseEinstein, ShapeKind::FermiDirac] {
        let c = comparison_constant(kind, args.p)?;
        constants.insert(kind.tag(), c);
        for &u in &grid {
            points.push(CurvePoint {
                u,
                value: comparison_shape_with(kind, args.p, c, u)?,
                kind: kind.tag().into(),
            });
        }
    }
    let mut csv = Vec::new();
    write_curve_csv(&mut csv, &points)?;
    let summary = json!({"command": "compare-shapes", "p": args.p, "constants": constants});
    emit("compare-shapes", csv, summary, config, &args.output)
}

fn enumerate(args: &EnumerateArgs, config: Value) -> CliResult {
    let params = args.model.params()?;
    if args.n > ENUMERATION_CAP {
        return Err(CliError::Usage(format!("enumerate needs N <= {ENUMERATION_CAP}")));
    }
    let law = exact_distribution(args.n, &params, |eta| eta.parts())?;
    let mut ordered: Vec<Vec<u64>> = Vec::new();
    for_each_partition(args.n, |parts| ordered.push(parts.to_vec()))?;
    let mut csv = Vec::new();
    writeln!(csv, "partition,probability")?;
    let mut listed = Vec::with_capacity(ordered.len());
    for parts in &ordered {
        let mut key = parts.clone();
        key.sort_unstable_by(|a, b| b.cmp(a));
        let pr = law.probability(&key);
        let label = key.iter().map(u64::to_string).collect::<Vec<_>>().join("+");
        writeln!(csv, "{label},{pr}")?;
        listed.push(json!({"parts": key, "probability": pr}));
    }
    let summary = json!({
        "command": "enumerate",
        "params": params,
        "N": args.n,
        "count": listed.len(),
        "partitions": listed,
    });
    emit("enumerate", csv, summary, config, &args.output)
}

fn selftest(args: &SelftestArgs) -> CliResult {
    let mut checks = Vec::new();
    let mut worst = 0.0f64;
    for (p, c) in [(1.0, 1.0), (2.0, 1.0), (1.0, 4.0), (0.5, 1.0)] {
        let params = ModelParams::power_law(c, p)?;
        let table = partition_function_table(&params, 12)?;
        for n in 1..=12 {
            let exact = weight_sum(n, &params)?;
            worst = worst.max((table.log_c(n as usize).exp() / exact - 1.0).abs());
        }
    }
    checks.push(Check::at_most("recurrence_vs_enumeration", worst, 1e-10));

    let params = ModelParams::power_law(1.0, 2.0)?;
    let exact = exact_distribution(8, &params, |eta| eta.parts())?;
    for method in [Method::Recursive, Method::Boltzmann] {
        let sampler = PreparedSampler::new(&params, 8, method)?;
        let draws = gibbs_partitions::sampler::map_replicas(args.seed, 20_000, |_, rng| {
            Ok(sampler.draw(rng, 1_000_000)?.0.parts())
        })?;
        let mut counts = BTreeMap::new();
        for d in draws {
            *counts.entry(d).or_insert(0u64) += 1;
        }
        let chi = chi_square_gof(&counts, &exact, 5.0, 1e-3);
        checks.push(Check::at_most(format!("chi_square_{method:?}").to_lowercase(), chi.statistic, chi.critical));
    }

    let n = 1_000_000;
    let params = ModelParams::power_law(1.0, 1.0)?;
    let sol = solve_tilt(&params, n)?;
    checks.push(Check::at_most("tilt_residual", sol.residual, 1e-9 * n as f64));

    let grid = StrataGrid::equidistant(3, 0.5)?;
    let spec = gibbs_partitions::theory::cov_theta_star(&params, &grid)?;
    checks.push(Check::at_least("theta_star_min_eigenvalue", spec.min_eigenvalue(), -1e-10));

    let pass = checks.iter().all(|c| c.pass);
    println!("{}", json!({"command": "selftest", "seed": args.seed, "checks": checks, "pass": pass}));
    if pass {
        Ok(())
    } else {
        Err(CliError::Failed)
    }
}

fn run(cli: &Cli) -> CliResult {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let config = serde_json::to_value(&cli.command)?;
    match &cli.command {
        Command::Sample(a) => sample(a, config),
        Command::Pmf(a) => pmf(a, config),
        Command::Tilt(a) => tilt(a, config),
        Command::LimitShape(a) => {
            let params = a.model.params()?;
            let grid = linspace(a.u_min, a.u_max, a.u_step)?;
            let cfg = a.run.config(500);
            let rep = run_limit_shape(&params, a.run.n, &grid, a.eps, a.tolerance, &cfg)?;
            emit_report("limit-shape", &rep, config, &a.output, a.run.assert)
        }
        Command::Fluctuations(a) => {
            let params = a.model.params()?;
            let grid = StrataGrid::new(a.grid.clone())?;
            let rep = run_clt_fluctuations(&params, a.run.n, &grid, &a.run.config(20_000))?;
            emit_report("fluctuations", &rep, config, &a.output, a.run.assert)
        }
        Command::SmallSize(a) => {
            let params = a.model.params()?;
            let plan = StratificationPlan::small_size(&params, a.coeffs.clone(), a.gamma, a.run.n)?;
            let rep = run_smallsize_independence(&params, &plan, &a.run.config(20_000))?;
            emit_report("small-size", &rep, config, &a.output, a.run.assert)
        }
        Command::Threshold(a) => {
            let params = a.model.params()?;
            let [lo, hi] = a.window[..] else {
                return Err(CliError::Usage("--window takes two values".into()));
            };
            let grid = linspace(0.0, a.x_max, a.x_step)?;
            let rep = run_threshold_diag(&params, a.run.n, &grid, (lo, hi), a.cap, &a.run.config(1000))?;
            emit_report("threshold", &rep, config, &a.output, a.run.assert)
        }
        Command::CompareShapes(a) => compare_shapes(a, config),
        Command::Enumerate(a) => enumerate(a, config),
        Command::Selftest(a) => selftest(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return error_json("usage", e.render().to_string().trim(), 2),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Failed) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => error_json("usage", &msg, 2),
        Err(CliError::Lib(e)) => match e {
            Error::Argument(_) => error_json("usage", &e.to_string(), 2),
            Error::Io(_) | Error::Json(_) => error_json("io", &e.to_string(), 3),
            _ => error_json("numeric", &e.to_string(), 3),
        },
    }
}
