//! Command-line interface: run the joint diagnostic on a dataset, run the
//! simulation experiments, or compute a Monte Carlo critical value for a
//! covariance matrix.
//!
//! Exit codes: 0 = ran (rejection decisions are data, not failures),
//! 2 = input/configuration error, 3 = estimator failure.

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rdjoint::boundary::ROT_C_DEFAULT;
use rdjoint::config::{parse_config, BandwidthSpec, CliOverrides};
use rdjoint::covariance::{CovarianceEstimate, NEIGHBORS_M_DEFAULT};
use rdjoint::dataset::parse_dataset;
use rdjoint::error::RdError;
use rdjoint::joint::{mc_critical_value, run_joint_diagnostics, Procedure, MC_DRAWS_DEFAULT};
use rdjoint::kernel::KernelKind;
use rdjoint::report::{emit_report, OutputFormat};
use rdjoint::rng::{mix, DOMAIN_CELL};
use rdjoint::simulation::{
    empirical_size, p_manip_for_density_jump, power_curve, size_adjusted_power, DgpConfig,
    ExperimentResult, SimOptions, EXPERIMENT_MC_DRAWS_DEFAULT, SIGMA_X_DEFAULT,
};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "rdjoint",
    version,
    about = "Joint manipulation and covariate-balance diagnostics at a regression discontinuity cutoff"
)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores). Results
    /// are identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the joint diagnostic on a dataset.
    Test(TestArgs),
    /// Empirical size over a grid of covariate counts and sample sizes.
    SimulateSize(SizeArgs),
    /// Power and size-adjusted power over a grid of covariate jumps.
    SimulatePower(PowerArgs),
    /// Monte Carlo critical value for a covariance matrix from a file.
    CriticalValue(CritArgs),
}

#[derive(Args)]
struct TestArgs {
    /// Dataset: delimited text with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Column holding the running variable.
    #[arg(long, default_value = "x")]
    x_col: String,
    /// Covariate columns (comma separated and/or repeated).
    #[arg(long, value_delimiter = ',')]
    z_cols: Vec<String>,
    /// Field delimiter (one character, or "tab").
    #[arg(long, default_value = ",")]
    delimiter: String,
    /// JSON config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cutoff subtracted from the running variable.
    #[arg(long)]
    cutoff: Option<f64>,
    /// Kernel: triangular or uniform.
    #[arg(long)]
    kernel: Option<KernelKind>,
    /// Polynomial order for covariate means.
    #[arg(long)]
    l: Option<usize>,
    /// Polynomial order for the density.
    #[arg(long)]
    p: Option<usize>,
    /// Covariate bandwidths: "auto", one number, or comma-separated numbers.
    #[arg(long)]
    h: Option<String>,
    /// Density bandwidth: "auto" or a number.
    #[arg(long)]
    h_f: Option<String>,
    /// Test level in (0, 1).
    #[arg(long)]
    alpha: Option<f64>,
    /// Nearest neighbors per unit in the covariance estimator.
    #[arg(long)]
    neighbors_m: Option<usize>,
    /// Monte Carlo draws for max-test critical values.
    #[arg(long)]
    mc_draws: Option<usize>,
    /// RNG seed (required here or in the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Procedures to run (comma separated): naive, bonferroni, wald, max,
    /// max_studentized.
    #[arg(long, value_delimiter = ',')]
    procedures: Option<Vec<Procedure>>,
    /// Output format: human, json, or csv.
    #[arg(long, default_value = "human")]
    format: OutputFormat,
    /// Write output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SizeArgs {
    /// Covariate counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    dims: Vec<usize>,
    /// Sample sizes to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    ns: Vec<usize>,
    /// Pairwise covariate correlation.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Replications per cell.
    #[arg(long, default_value_t = 3000)]
    reps: usize,
    /// Master seed (each cell derives its own stream).
    #[arg(long)]
    seed: u64,
    /// Test level in (0, 1].
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Monte Carlo draws per replication for max-test critical values.
    #[arg(long, default_value_t = EXPERIMENT_MC_DRAWS_DEFAULT)]
    mc_draws: usize,
    /// Procedures to run (default: all five).
    #[arg(long, value_delimiter = ',')]
    procedures: Option<Vec<Procedure>>,
    /// Scale of the truncated normal running variable.
    #[arg(long, default_value_t = SIGMA_X_DEFAULT)]
    sigma_x: f64,
    #[arg(long, default_value_t = NEIGHBORS_M_DEFAULT)]
    neighbors_m: usize,
    /// Polynomial order for covariate means.
    #[arg(long, default_value_t = 2)]
    l: usize,
    /// Polynomial order for the density.
    #[arg(long, default_value_t = 3)]
    p: usize,
    #[arg(long, default_value = "triangular")]
    kernel: KernelKind,
    /// Rule-of-thumb bandwidth constant.
    #[arg(long, default_value_t = ROT_C_DEFAULT)]
    rot_c: f64,
    /// Write the CSV table to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PowerArgs {
    /// Covariate count.
    #[arg(long, default_value_t = 5)]
    d: usize,
    /// Sample size.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Grid of jump sizes for the last covariate.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5,2")]
    a_grid: Vec<f64>,
    /// Density jump held fixed across the grid (inverted into p_manip).
    #[arg(long, default_value_t = 0.15)]
    tau_f: f64,
    /// Pairwise covariate correlation.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Replications per grid point.
    #[arg(long, default_value_t = 3000)]
    reps: usize,
    /// Master seed (grid points share draws; the matched null run for size
    /// adjustment uses an independent derived seed).
    #[arg(long)]
    seed: u64,
    /// Test level in (0, 1].
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Monte Carlo draws per replication for max-test critical values.
    #[arg(long, default_value_t = EXPERIMENT_MC_DRAWS_DEFAULT)]
    mc_draws: usize,
    /// Procedures to run (default: all five).
    #[arg(long, value_delimiter = ',')]
    procedures: Option<Vec<Procedure>>,
    /// Scale of the truncated normal running variable.
    #[arg(long, default_value_t = SIGMA_X_DEFAULT)]
    sigma_x: f64,
    #[arg(long, default_value_t = NEIGHBORS_M_DEFAULT)]
    neighbors_m: usize,
    /// Polynomial order for covariate means.
    #[arg(long, default_value_t = 2)]
    l: usize,
    /// Polynomial order for the density.
    #[arg(long, default_value_t = 3)]
    p: usize,
    #[arg(long, default_value = "triangular")]
    kernel: KernelKind,
    /// Rule-of-thumb bandwidth constant.
    #[arg(long, default_value_t = ROT_C_DEFAULT)]
    rot_c: f64,
    /// Write the CSV table to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CritArgs {
    /// JSON file holding the covariance matrix: an array of rows, or an
    /// object {"v": [[...]]}.
    #[arg(long)]
    v: PathBuf,
    /// Test level in (0, 1].
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = MC_DRAWS_DEFAULT)]
    mc_draws: usize,
    #[arg(long)]
    seed: u64,
    /// Studentize components by their variances first.
    #[arg(long)]
    studentized: bool,
    /// Output format: human, json, or csv.
    #[arg(long, default_value = "human")]
    format: OutputFormat,
    /// Write output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: could not configure the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Test(args) => run_test(args),
        Command::SimulateSize(args) => run_size(args),
        Command::SimulatePower(args) => run_power(args),
        Command::CriticalValue(args) => run_critical_value(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), RdError> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn parse_delimiter(raw: &str) -> Result<u8, RdError> {
    if raw == "tab" || raw == "\\t" || raw == "\t" {
        return Ok(b'\t');
    }
    let bytes = raw.as_bytes();
    if bytes.len() == 1 {
        Ok(bytes[0])
    } else {
        Err(RdError::InvalidConfig(format!(
            "delimiter: expected a single character or \"tab\", got {raw:?}"
        )))
    }
}

fn parse_bandwidth_flag(raw: &str, field: &str) -> Result<BandwidthSpec, RdError> {
    if raw.eq_ignore_ascii_case("auto") {
        return Ok(BandwidthSpec::Keyword("auto".to_string()));
    }
    let parse_one = |s: &str| {
        s.trim().parse::<f64>().map_err(|_| {
            RdError::InvalidConfig(format!("{field}: expected \"auto\" or numbers, got {s:?}"))
        })
    };
    if raw.contains(',') {
        let values = raw
            .split(',')
            .map(parse_one)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BandwidthSpec::Values(values))
    } else {
        Ok(BandwidthSpec::Value(parse_one(raw)?))
    }
}

fn run_test(args: &TestArgs) -> Result<(), RdError> {
    let overrides = CliOverrides {
        cutoff: args.cutoff,
        kernel: args.kernel,
        l: args.l,
        p: args.p,
        bandwidths: args
            .h
            .as_deref()
            .map(|s| parse_bandwidth_flag(s, "bandwidths"))
            .transpose()?,
        h_f: args
            .h_f
            .as_deref()
            .map(|s| parse_bandwidth_flag(s, "h_f"))
            .transpose()?,
        alpha: args.alpha,
        neighbors_m: args.neighbors_m,
        mc_draws: args.mc_draws,
        seed: args.seed,
        procedures: args.procedures.clone(),
    };
    let (config, provenance) = parse_config(args.config.as_deref(), &overrides)?;
    let delimiter = parse_delimiter(&args.delimiter)?;
    let (mut sample, dropped) = parse_dataset(&args.data, &args.x_col, &args.z_cols, delimiter)?;
    sample.shift_cutoff(config.cutoff);
    let mut report = run_joint_diagnostics(&sample, &config)?;
    let mut warnings = provenance;
    if dropped > 0 {
        warnings.push(format!(
            "dataset: dropped {dropped} rows with missing values"
        ));
    }
    warnings.append(&mut report.warnings);
    report.warnings = warnings;
    write_output(args.out.as_deref(), &emit_report(&report, args.format)?)
}

fn fmt_rate(result: &ExperimentResult, procedure: Procedure) -> String {
    result
        .rate(procedure)
        .map(|r| format!("{r:.4}"))
        .unwrap_or_default()
}

fn csv_bytes(writer: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, RdError> {
    writer
        .into_inner()
        .map_err(|e| RdError::InvalidConfig(format!("CSV buffer error: {e}")))
}

fn run_size(args: &SizeArgs) -> Result<(), RdError> {
    let procedures = args
        .procedures
        .clone()
        .unwrap_or_else(|| Procedure::ALL.to_vec());
    let opts = SimOptions {
        l: args.l,
        p: args.p,
        kernel: args.kernel,
        neighbors_m: args.neighbors_m,
        mc_draws: args.mc_draws,
        rot_c: args.rot_c,
        retain_statistics: false,
    };
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["dim", "n", "naive", "bonfe", "chisq", "max", "max_inv"])?;
    let mut cell = 0u64;
    for &n in &args.ns {
        for &d in &args.dims {
            let mut cfg =
                DgpConfig::null_config(n, d, args.rho, mix(mix(args.seed, DOMAIN_CELL), cell));
            cfg.sigma_x = args.sigma_x;
            let result = empirical_size(&cfg, &opts, args.alpha, args.reps, &procedures)?;
            if result.estimator_failures > 0 {
                eprintln!(
                    "note: d = {d}, n = {n}: {} of {} replications failed estimation \
                     and were excluded",
                    result.estimator_failures, args.reps
                );
            }
            writer.write_record([
                d.to_string(),
                n.to_string(),
                fmt_rate(&result, Procedure::Naive),
                fmt_rate(&result, Procedure::Bonferroni),
                fmt_rate(&result, Procedure::Wald),
                fmt_rate(&result, Procedure::Max),
                fmt_rate(&result, Procedure::MaxStudentized),
            ])?;
            cell += 1;
        }
    }
    write_output(args.out.as_deref(), &csv_bytes(writer)?)
}

fn run_power(args: &PowerArgs) -> Result<(), RdError> {
    let procedures = args
        .procedures
        .clone()
        .unwrap_or_else(|| Procedure::ALL.to_vec());
    let p_star = p_manip_for_density_jump(args.tau_f, args.sigma_x)?;
    let opts = SimOptions {
        l: args.l,
        p: args.p,
        kernel: args.kernel,
        neighbors_m: args.neighbors_m,
        mc_draws: args.mc_draws,
        rot_c: args.rot_c,
        retain_statistics: true,
    };
    let mut null_cfg = DgpConfig::null_config(
        args.n,
        args.d,
        args.rho,
        mix(mix(args.seed, DOMAIN_CELL), 1),
    );
    null_cfg.sigma_x = args.sigma_x;
    let null_result = empirical_size(&null_cfg, &opts, args.alpha, args.reps, &procedures)?;
    if null_result.estimator_failures > 0 {
        eprintln!(
            "note: null run: {} of {} replications failed estimation and were excluded",
            null_result.estimator_failures, args.reps
        );
    }
    let mut base = DgpConfig::null_config(
        args.n,
        args.d,
        args.rho,
        mix(mix(args.seed, DOMAIN_CELL), 0),
    );
    base.sigma_x = args.sigma_x;
    base.p_manip = p_star;
    let curve = power_curve(
        &base,
        &args.a_grid,
        &opts,
        args.alpha,
        args.reps,
        &procedures,
    )?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "a",
        "naive",
        "bonfe",
        "chisq",
        "max",
        "max_inv",
        "sa_chisq",
        "sa_max",
        "sa_max_inv",
    ])?;
    for (a, result) in &curve {
        if result.estimator_failures > 0 {
            eprintln!(
                "note: a = {a}: {} of {} replications failed estimation and were excluded",
                result.estimator_failures, args.reps
            );
        }
        let adjusted = size_adjusted_power(&null_result, result, args.alpha)?;
        if !adjusted.degenerate.is_empty() {
            let names: Vec<&str> = adjusted.degenerate.iter().map(|p| p.name()).collect();
            eprintln!(
                "note: a = {a}: null statistics tie at the critical value for {}",
                names.join(", ")
            );
        }
        let sa_rate = |p: Procedure| {
            adjusted
                .rates
                .get(&p)
                .map(|r| format!("{r:.4}"))
                .unwrap_or_default()
        };
        writer.write_record([
            a.to_string(),
            fmt_rate(result, Procedure::Naive),
            fmt_rate(result, Procedure::Bonferroni),
            fmt_rate(result, Procedure::Wald),
            fmt_rate(result, Procedure::Max),
            fmt_rate(result, Procedure::MaxStudentized),
            sa_rate(Procedure::Wald),
            sa_rate(Procedure::Max),
            sa_rate(Procedure::MaxStudentized),
        ])?;
    }
    let mut bytes = format!(
        "# p_manip = {p_star} (induces density jump tau_f = {} at the cutoff)\n",
        args.tau_f
    )
    .into_bytes();
    bytes.extend_from_slice(&csv_bytes(writer)?);
    write_output(args.out.as_deref(), &bytes)
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum VInput {
    Raw(Vec<Vec<f64>>),
    Wrapped { v: Vec<Vec<f64>> },
}

fn run_critical_value(args: &CritArgs) -> Result<(), RdError> {
    let text = std::fs::read_to_string(&args.v)?;
    let rows = match serde_json::from_str::<VInput>(&text)? {
        VInput::Raw(rows) | VInput::Wrapped { v: rows } => rows,
    };
    let dim = rows.len();
    if dim == 0 || rows.iter().any(|r| r.len() != dim) {
        return Err(RdError::InvalidConfig(
            "v: expected a non-empty square matrix".to_string(),
        ));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let v = CovarianceEstimate::from_full_matrix(DMatrix::from_row_slice(dim, dim, &flat))?;
    let critical_value =
        mc_critical_value(&v, args.alpha, args.mc_draws, args.seed, args.studentized)?;
    let bytes =
        match args.format {
            OutputFormat::Json => {
                let mut b = serde_json::to_vec_pretty(&serde_json::json!({
                    "alpha": args.alpha,
                    "mc_draws": args.mc_draws,
                    "seed": args.seed,
                    "studentized": args.studentized,
                    "critical_value": critical_value,
                }))?;
                b.push(b'\n');
                b
            }
            OutputFormat::Csv => format!(
                "alpha,mc_draws,seed,studentized,critical_value\n{},{},{},{},{critical_value}\n",
                args.alpha, args.mc_draws, args.seed, args.studentized
            )
            .into_bytes(),
            OutputFormat::Human => format!(
            "critical value = {critical_value} ({} max statistic, alpha = {}, {} draws, seed {})\n",
            if args.studentized { "studentized" } else { "unstudentized" },
            args.alpha,
            args.mc_draws,
            args.seed
        )
            .into_bytes(),
        };
    write_output(args.out.as_deref(), &bytes)
}
