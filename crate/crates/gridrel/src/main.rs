//! Command-line front end: estimation runs, benchmark matrices, synthetic
//! polytope generation, and polytope export.
//!
//! Logs go to stderr, data to files; exit codes are the only other
//! out-of-band signal (2 = config error, 3 = case error, 4 = numerical
//! failure). Every run is deterministic in (config, seed).

use std::fs::{self, File};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Deserialize;

use gridrel::bench::{
    generate_polytope, polytope_rows, run_method, within_tolerance_band, BenchResult, Method,
    SyntheticKind, SyntheticSpec,
};
use gridrel::export::{
    fmt_float, write_benchmark_csv, write_estimate_csv, write_runs_csv, write_trace_csv,
    write_weights_csv, BenchmarkCell, EstimateRow,
};
use gridrel::gaussian::{HalfspaceConstraint, NominalGaussian};
use gridrel::grid::{build_matrices, build_polytope, load_case, write_polytope_csv, GridCase};
use gridrel::mixture::{union_bounds, MixtureError};
use gridrel::optimizer::{run_adaptive, run_static_mixture, AdaptiveConfig, MixtureRun, Objective};
use gridrel::quadrature;

#[derive(Parser)]
#[command(name = "gridrel", version, about = "Grid reliability failure-probability estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the failure probability of one case.
    Estimate(EstimateArgs),
    /// Run a (case x theta x method) benchmark matrix.
    Benchmark(BenchmarkArgs),
    /// Generate a synthetic polytope with its quadrature oracle.
    Generate(GenerateArgs),
    /// Export the reliability polytope of a grid case as CSV.
    PolytopeExport(ExportArgs),
}

/// Flags shared by estimate and benchmark; every one mirrors a config
/// key, flags win over the config file.
#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Case: path to a grid JSON file, or `regular:FACES:TAU`, or
    /// `degenerate:FACES:TAU:PERTURB`.
    #[arg(long)]
    case: Vec<String>,
    /// mc | aloe | md-var | md-kl
    #[arg(long)]
    method: Vec<String>,
    /// Sample budget N.
    #[arg(long)]
    samples: Option<u64>,
    /// Samples per adaptation batch.
    #[arg(long)]
    batch: Option<usize>,
    /// Uniform angle-limit override in radians (grid cases only).
    #[arg(long)]
    theta_max: Vec<f64>,
    /// Std scale c: per-generator std is c * |p_mean| (grid cases only).
    #[arg(long)]
    sigma_scale: Option<f64>,
    /// Mixture-weight floor.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Step-size prefactor (clamped to 1).
    #[arg(long)]
    eta0: Option<f64>,
    /// RNG seed; mandatory, there is no wall-clock default.
    #[arg(long)]
    seed: Option<u64>,
    /// Repetitions per benchmark cell.
    #[arg(long)]
    runs: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config file with the same keys; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// regular | degenerate
    #[arg(long)]
    kind: String,
    #[arg(long)]
    faces: usize,
    #[arg(long)]
    tau: f64,
    /// Tilt half-width for the degenerate family.
    #[arg(long)]
    perturb: Option<f64>,
    /// Rescale rows to unit normals.
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// Path to a grid case JSON file.
    #[arg(long)]
    case: String,
    #[arg(long)]
    theta_max: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Config(String),
    Case(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Case(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Case(m) | CliError::Numeric(m) => m,
        }
    }
}

fn config_err<T: std::fmt::Display>(e: T) -> CliError {
    CliError::Config(e.to_string())
}

// ---- config file -------------------------------------------------------------

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    case: Option<String>,
    method: Option<String>,
    samples: Option<u64>,
    batch: Option<usize>,
    theta_max: Option<f64>,
    sigma_scale: Option<f64>,
    epsilon: Option<f64>,
    eta0: Option<f64>,
    seed: Option<u64>,
    runs: Option<u64>,
    out: Option<PathBuf>,
}

/// Merge the config file under the flags (flags win).
fn merge_config(mut args: CommonArgs) -> Result<CommonArgs, CliError> {
    let Some(path) = &args.config else { return Ok(args) };
    let file = File::open(path)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
    let cfg: FileConfig = serde_json::from_reader(file)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
    if args.case.is_empty() {
        args.case.extend(cfg.case);
    }
    if args.method.is_empty() {
        args.method.extend(cfg.method);
    }
    if args.theta_max.is_empty() {
        args.theta_max.extend(cfg.theta_max);
    }
    args.samples = args.samples.or(cfg.samples);
    args.batch = args.batch.or(cfg.batch);
    args.sigma_scale = args.sigma_scale.or(cfg.sigma_scale);
    args.epsilon = args.epsilon.or(cfg.epsilon);
    args.eta0 = args.eta0.or(cfg.eta0);
    args.seed = args.seed.or(cfg.seed);
    args.runs = args.runs.or(cfg.runs);
    args.out = args.out.or(cfg.out);
    Ok(args)
}

fn validate_positive(name: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => {
            Err(CliError::Config(format!("--{name} must be positive and finite, got {x}")))
        }
        _ => Ok(()),
    }
}

fn require_seed(args: &CommonArgs) -> Result<u64, CliError> {
    args.seed.ok_or_else(|| CliError::Config("--seed is mandatory".into()))
}

fn require_samples(args: &CommonArgs) -> Result<u64, CliError> {
    match args.samples {
        Some(n) if n > 0 => Ok(n),
        Some(n) => Err(CliError::Config(format!("--samples must be >= 1, got {n}"))),
        None => Err(CliError::Config("--samples is mandatory".into())),
    }
}

fn out_dir(args: &CommonArgs) -> Result<PathBuf, CliError> {
    let out = args.out.clone().ok_or_else(|| CliError::Config("--out is mandatory".into()))?;
    fs::create_dir_all(&out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    Ok(out)
}

// ---- case resolution ---------------------------------------------------------

/// A loaded case: the nominal Gaussian, polytope rows as half-space
/// constraints, display labels, and an optional analytic/recorded oracle.
struct LoadedCase {
    name: String,
    g: NominalGaussian,
    constraints: Vec<HalfspaceConstraint>,
    labels: Vec<String>,
    oracle_pi: Option<f64>,
    theta_bound: Option<f64>,
}

fn parse_synthetic(desc: &str, seed: u64) -> Result<Option<SyntheticSpec>, CliError> {
    let parts: Vec<&str> = desc.split(':').collect();
    let kind = match parts[0] {
        "regular" => SyntheticKind::Regular,
        "degenerate" => SyntheticKind::Degenerate,
        _ => return Ok(None),
    };
    let bad = || CliError::Config(format!("bad synthetic case `{desc}`"));
    let need = if kind == SyntheticKind::Regular { 3 } else { 4 };
    if parts.len() != need {
        return Err(CliError::Config(format!(
            "synthetic case `{desc}`: expected {} `:`-separated fields",
            need
        )));
    }
    let faces: usize = parts[1].parse().map_err(|_| bad())?;
    let tau: f64 = parts[2].parse().map_err(|_| bad())?;
    let perturb: f64 = if kind == SyntheticKind::Degenerate {
        parts[3].parse().map_err(|_| bad())?
    } else {
        0.0
    };
    Ok(Some(SyntheticSpec { kind, faces, tau, perturb, normalize: false, seed }))
}

fn load_grid_case(path: &str, args: &CommonArgs, theta: Option<f64>) -> Result<LoadedCase, CliError> {
    let file =
        File::open(path).map_err(|e| CliError::Case(format!("cannot open {path}: {e}")))?;
    let mut case: GridCase = load_case(file).map_err(|e| CliError::Case(e.to_string()))?;
    if let Some(theta) = theta {
        case = case.with_theta_max(theta);
    }
    let scale = args.sigma_scale.unwrap_or(case.sigma_scale);
    let g = case.nominal(scale).map_err(|e| CliError::Numeric(e.to_string()))?;
    let mats = build_matrices(&case).map_err(|e| CliError::Case(e.to_string()))?;
    let poly = build_polytope(&mats, &case);
    let constraints = poly.constraints(&g).map_err(|e| CliError::Numeric(e.to_string()))?;
    let labels = poly.labels.iter().map(|l| l.to_string()).collect();
    // a recorded reference value only applies at its own settings
    let oracle_pi = case.reference.as_ref().and_then(|r| {
        let theta_matches = match theta {
            Some(t) => (t - r.theta_max).abs() <= 1e-12,
            None => false,
        };
        (theta_matches && (scale - r.sigma_scale).abs() <= 1e-12).then_some(r.pi)
    });
    Ok(LoadedCase {
        name: case.name.clone(),
        g,
        constraints,
        labels,
        oracle_pi,
        theta_bound: theta,
    })
}

fn load_any_case(desc: &str, args: &CommonArgs, theta: Option<f64>) -> Result<LoadedCase, CliError> {
    let seed = args.seed.unwrap_or(0);
    if let Some(spec) = parse_synthetic(desc, seed)? {
        if theta.is_some() || args.sigma_scale.is_some() {
            return Err(CliError::Config(
                "--theta-max / --sigma-scale only apply to grid cases".into(),
            ));
        }
        let (g, constraints) = generate_polytope(&spec).map_err(|e| match e {
            gridrel::bench::BenchError::Mixture(m) => CliError::Numeric(m.to_string()),
            other => CliError::Config(other.to_string()),
        })?;
        let oracle_pi = quadrature::failure_probability(&constraints).ok();
        let labels = (1..=spec.faces).map(|j| format!("face:{j}")).collect();
        Ok(LoadedCase {
            name: desc.to_string(),
            g,
            constraints,
            labels,
            oracle_pi,
            theta_bound: None,
        })
    } else {
        load_grid_case(desc, args, theta)
    }
}

fn parse_method(s: &str) -> Result<Method, CliError> {
    s.parse().map_err(config_err)
}

// ---- estimate ----------------------------------------------------------------

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    let args = merge_config(args.common)?;
    let seed = require_seed(&args)?;
    let samples = require_samples(&args)?;
    validate_positive("sigma-scale", args.sigma_scale)?;
    validate_positive("epsilon", args.epsilon)?;
    validate_positive("eta0", args.eta0)?;
    for &t in &args.theta_max {
        validate_positive("theta-max", Some(t))?;
    }
    if args.case.len() != 1 {
        return Err(CliError::Config("estimate needs exactly one --case".into()));
    }
    if args.theta_max.len() > 1 {
        return Err(CliError::Config("estimate takes at most one --theta-max".into()));
    }
    let method = match args.method.len() {
        0 => Method::MdVar,
        1 => parse_method(&args.method[0])?,
        _ => return Err(CliError::Config("estimate takes at most one --method".into())),
    };
    let out = out_dir(&args)?;
    let case = load_any_case(&args.case[0], &args, args.theta_max.first().copied())?;
    let (union_lower, union_upper) = union_bounds(&case.constraints);
    let batch = args.batch.unwrap_or(32);
    if batch == 0 {
        return Err(CliError::Config("--batch must be >= 1".into()));
    }

    let io_err = |e: std::io::Error| CliError::Config(format!("write {}: {e}", out.display()));
    let write_estimate = |samples, pi_hat, std_err, avg_violated, all_vacuous| {
        let row = EstimateRow {
            case: case.name.clone(),
            method,
            seed,
            samples,
            pi_hat,
            std_err,
            avg_violated,
            union_lower,
            union_upper,
            all_vacuous,
        };
        write_estimate_csv(File::create(out.join("estimate.csv")).map_err(io_err)?, &row)
            .map_err(io_err)?;
        eprintln!(
            "{} {} N={} pi_hat={} std_err={}{}",
            case.name,
            method,
            samples,
            fmt_float(pi_hat),
            fmt_float(std_err),
            if all_vacuous { " (all constraints vacuous)" } else { "" },
        );
        Ok(())
    };

    if method == Method::Mc {
        let res = gridrel::bench::run_plain_mc(&case.g, &case.constraints, samples, seed);
        return write_estimate(res.samples, res.pi_hat, res.std_err, res.avg_violated, false);
    }

    let run: Result<MixtureRun, MixtureError> = match method {
        Method::Aloe => run_static_mixture(&case.g, &case.constraints, samples, batch, seed),
        _ => {
            let objective = if method == Method::MdKl { Objective::Kl } else { Objective::Variance };
            let cfg = AdaptiveConfig {
                objective,
                samples,
                batch,
                epsilon: args.epsilon,
                eta0: args.eta0.unwrap_or(1.0),
            };
            run_adaptive(&case.g, &case.constraints, &cfg, seed)
        }
    };
    match run {
        Ok(run) => {
            write_estimate(
                run.estimator.count(),
                run.estimator.pi_hat(),
                run.estimator.std_err(),
                run.estimator.avg_violated(),
                false,
            )?;
            write_trace_csv(File::create(out.join("trace.csv")).map_err(io_err)?, &run.trace)
                .map_err(io_err)?;
            write_weights_csv(
                File::create(out.join("weights.csv")).map_err(io_err)?,
                &case.labels,
                &case.constraints,
                &run.initial_weights,
                run.weights.as_slice(),
            )
            .map_err(io_err)?;
            Ok(())
        }
        // an all-vacuous polytope has failure probability 0 analytically
        Err(MixtureError::AllVacuous) => write_estimate(0, 0.0, 0.0, 0.0, true),
        Err(e) => Err(CliError::Numeric(e.to_string())),
    }
}

// ---- benchmark ---------------------------------------------------------------

fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), CliError> {
    let args = merge_config(args.common)?;
    let seed = require_seed(&args)?;
    let samples = require_samples(&args)?;
    validate_positive("sigma-scale", args.sigma_scale)?;
    for &t in &args.theta_max {
        validate_positive("theta-max", Some(t))?;
    }
    if args.case.is_empty() {
        return Err(CliError::Config("benchmark needs at least one --case".into()));
    }
    let methods: Vec<Method> = if args.method.is_empty() {
        vec![Method::Mc, Method::Aloe, Method::MdVar, Method::MdKl]
    } else {
        args.method.iter().map(|m| parse_method(m)).collect::<Result<_, _>>()?
    };
    let runs = args.runs.unwrap_or(1).max(1);
    let batch = args.batch.unwrap_or(32);
    let out = out_dir(&args)?;

    let thetas: Vec<Option<f64>> = if args.theta_max.is_empty() {
        vec![None]
    } else {
        args.theta_max.iter().map(|&t| Some(t)).collect()
    };

    let mut cells: Vec<BenchmarkCell> = Vec::new();
    let mut run_rows: Vec<(String, Option<f64>, u64, BenchResult)> = Vec::new();
    for case_desc in &args.case {
        for &theta in &thetas {
            let case = load_any_case(case_desc, &args, theta)?;
            for &method in &methods {
                let mut results = Vec::with_capacity(runs as usize);
                let mut failed = false;
                for r in 0..runs {
                    let run_seed = seed.wrapping_add(r.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                    match run_method(
                        method,
                        &case.g,
                        &case.constraints,
                        samples,
                        batch,
                        args.epsilon,
                        args.eta0.unwrap_or(1.0),
                        run_seed,
                    ) {
                        Ok(res) => {
                            run_rows.push((case.name.clone(), case.theta_bound, r, res.clone()));
                            results.push(res);
                        }
                        Err(e) => {
                            eprintln!("{} {}: run {r} failed: {e}", case.name, method);
                            failed = true;
                            break;
                        }
                    }
                }
                let cell = if failed || results.is_empty() {
                    BenchmarkCell {
                        case: case.name.clone(),
                        method,
                        theta_bound: case.theta_bound,
                        oracle_pi: case.oracle_pi,
                        samples,
                        pi_hat: f64::NAN,
                        std_err: f64::NAN,
                        stop_pass: Some(false),
                        wall_ms: 0.0,
                    }
                } else {
                    let k = results.len() as f64;
                    let mean = results.iter().map(|r| r.pi_hat).sum::<f64>() / k;
                    let spread = if results.len() > 1 {
                        (results.iter().map(|r| (r.pi_hat - mean).powi(2)).sum::<f64>()
                            / (k - 1.0))
                            .sqrt()
                    } else {
                        results[0].std_err
                    };
                    BenchmarkCell {
                        case: case.name.clone(),
                        method,
                        theta_bound: case.theta_bound,
                        oracle_pi: case.oracle_pi,
                        samples,
                        pi_hat: mean,
                        std_err: spread,
                        stop_pass: case
                            .oracle_pi
                            .map(|pi| within_tolerance_band(mean, spread, pi)),
                        wall_ms: results.iter().map(|r| r.wall_ms).sum(),
                    }
                };
                cells.push(cell);
            }
        }
    }

    let io_err = |e: std::io::Error| CliError::Config(format!("write {}: {e}", out.display()));
    write_benchmark_csv(File::create(out.join("benchmark.csv")).map_err(io_err)?, &cells)
        .map_err(io_err)?;
    write_runs_csv(File::create(out.join("runs.csv")).map_err(io_err)?, &run_rows)
        .map_err(io_err)?;
    eprintln!("benchmark: {} cells, {} runs -> {}", cells.len(), run_rows.len(), out.display());
    Ok(())
}

// ---- generate ----------------------------------------------------------------

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let kind = match args.kind.as_str() {
        "regular" => SyntheticKind::Regular,
        "degenerate" => SyntheticKind::Degenerate,
        other => return Err(CliError::Config(format!("unknown --kind `{other}`"))),
    };
    if kind == SyntheticKind::Degenerate && args.seed.is_none() {
        return Err(CliError::Config("--seed is mandatory for the degenerate family".into()));
    }
    let spec = SyntheticSpec {
        kind,
        faces: args.faces,
        tau: args.tau,
        perturb: args.perturb.unwrap_or(0.0),
        normalize: args.normalize,
        seed: args.seed.unwrap_or(0),
    };
    let rows = polytope_rows(&spec).map_err(config_err)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", args.out.display())))?;

    let g = NominalGaussian::standard(2);
    let constraints: Result<Vec<_>, _> = rows
        .iter()
        .map(|(omega, b)| g.tail_probability(&DVector::from_vec(omega.to_vec()), *b))
        .collect();
    let oracle_pi = constraints
        .ok()
        .and_then(|cs| quadrature::failure_probability(&cs).ok());

    let path = args.out.join("polytope.csv");
    let io_err = |e: csv::Error| CliError::Config(format!("write {}: {e}", path.display()));
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(&path)
        .map_err(io_err)?;
    wtr.write_record(["row_label", "b", "w_1", "w_2"]).map_err(io_err)?;
    for (j, (omega, b)) in rows.iter().enumerate() {
        wtr.write_record([
            format!("face:{}", j + 1),
            fmt_float(*b),
            fmt_float(omega[0]),
            fmt_float(omega[1]),
        ])
        .map_err(io_err)?;
    }
    wtr.flush().map_err(|e| CliError::Config(e.to_string()))?;

    let metadata = serde_json::json!({
        "kind": args.kind,
        "faces": spec.faces,
        "tau": spec.tau,
        "perturb": if kind == SyntheticKind::Degenerate { Some(spec.perturb) } else { None },
        "normalize": spec.normalize,
        "seed": spec.seed,
        "oracle_pi": oracle_pi,
    });
    fs::write(
        args.out.join("metadata.json"),
        serde_json::to_string_pretty(&metadata).map_err(config_err)? + "\n",
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    eprintln!(
        "generated {} faces -> {} (oracle_pi {})",
        spec.faces,
        path.display(),
        oracle_pi.map(fmt_float).unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

// ---- polytope export ---------------------------------------------------------

fn cmd_polytope_export(args: ExportArgs) -> Result<(), CliError> {
    if let Some(t) = args.theta_max {
        validate_positive("theta-max", Some(t))?;
    }
    let file = File::open(&args.case)
        .map_err(|e| CliError::Case(format!("cannot open {}: {e}", args.case)))?;
    let mut case = load_case(file).map_err(|e| CliError::Case(e.to_string()))?;
    if let Some(theta) = args.theta_max {
        case = case.with_theta_max(theta);
    }
    let mats = build_matrices(&case).map_err(|e| CliError::Case(e.to_string()))?;
    let poly = build_polytope(&mats, &case);
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", args.out.display())))?;
    let path = args.out.join(format!("{}_polytope.csv", case.name));
    let file = File::create(&path)
        .map_err(|e| CliError::Config(format!("write {}: {e}", path.display())))?;
    write_polytope_csv(&poly, file).map_err(|e| CliError::Numeric(e.to_string()))?;
    eprintln!("{} rows -> {}", poly.row_count(), path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Generate(a) => cmd_generate(a),
        Command::PolytopeExport(a) => cmd_polytope_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
