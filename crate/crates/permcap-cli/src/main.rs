//! `permcap`: permutation p-value approximation for gene-set testing.
//!
//! Subcommands:
//! * `run-estimate` — per-gene-set estimates over an expression matrix;
//! * `validate`     — formula-vs-oracle check battery;
//! * `sweep`        — accuracy sweep over group sizes and correlations;
//! * `bench-sim`    — two-sample simulation benchmark with exact p-values.
//!
//! Exit codes: 0 success, 1 validation failure, 2 input error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use permcap::combinatorics::GroupSizes;
use permcap::estimators::{sweep_row, EstimatorKind, Sided};
use permcap::pipeline::{
    run_estimates, write_records_csv, write_records_json, EstimateOptions, ExpressionMatrix,
    GeneSetCollection, LabelVector, SetOutcome,
};
use permcap::simulation::{run_simulation, ResponseDist, SimConfig};
use permcap::validation::standard_battery;
use permcap::QuadratureConfig;

#[derive(Parser)]
#[command(name = "permcap", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate p-values (with optional exact RMSEs) for every gene set.
    RunEstimate(RunEstimateArgs),
    /// Run the formula-vs-oracle validation battery.
    Validate(ValidateArgs),
    /// Sweep estimator accuracy over a grid of group sizes and correlations.
    Sweep(SweepArgs),
    /// Simulate two-sample data and compare estimates to exact p-values.
    BenchSim(BenchSimArgs),
}

#[derive(Args)]
struct QuadArgs {
    /// Relative tolerance for the one-dimensional integrals
    /// [env: PERMCAP_QUAD_REL_TOL]
    #[arg(long)]
    quad_rel_tol: Option<f64>,
    /// Absolute tolerance for the one-dimensional integrals
    /// [env: PERMCAP_QUAD_ABS_TOL]
    #[arg(long)]
    quad_abs_tol: Option<f64>,
}

impl QuadArgs {
    fn resolve(&self) -> Result<QuadratureConfig, String> {
        let mut q = QuadratureConfig::default();
        let env_f64 = |name: &str| -> Result<Option<f64>, String> {
            match std::env::var(name) {
                Ok(v) => v
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|e| format!("bad {name}: {e}")),
                Err(_) => Ok(None),
            }
        };
        if let Some(v) = env_f64("PERMCAP_QUAD_REL_TOL")? {
            q.rel_tol = v;
        }
        if let Some(v) = env_f64("PERMCAP_QUAD_ABS_TOL")? {
            q.abs_tol = v;
        }
        if let Some(v) = self.quad_rel_tol {
            q.rel_tol = v;
        }
        if let Some(v) = self.quad_abs_tol {
            q.abs_tol = v;
        }
        q.validate().map_err(|e| e.to_string())?;
        Ok(q)
    }
}

#[derive(Args)]
struct RunEstimateArgs {
    /// TSV expression matrix (header: sample ids; first column: gene ids)
    #[arg(long)]
    matrix: PathBuf,
    /// CSV labels: sample_id,0|1 (matched to the matrix by id)
    #[arg(long)]
    labels: PathBuf,
    /// GMT gene-set collection
    #[arg(long)]
    genesets: PathBuf,
    /// Comma-separated estimators to run
    #[arg(long, default_value = "p1,p2,p3")]
    estimators: String,
    /// One- or two-sided p-values
    #[arg(long, default_value = "two")]
    sided: String,
    /// Compute exact RMSE/CV and the Chebychev conservative bound
    #[arg(long)]
    with_rmse: bool,
    /// Output path ('-' for stdout)
    #[arg(long, default_value = "-")]
    out: String,
    /// json (JSON lines) or csv
    #[arg(long, default_value = "json")]
    format: String,
    /// Worker threads [env: PERMCAP_THREADS]
    #[arg(long)]
    threads: Option<usize>,
    /// Attach per-set wall-clock timings (off keeps reports byte-identical)
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 3)]
    m0: usize,
    #[arg(long, default_value_t = 3)]
    m1: usize,
    /// Monte Carlo draws per check
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Grid density: full or coarse
    #[arg(long, default_value = "full")]
    grid: String,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated equal group sizes (m0 = m1 = m)
    #[arg(long, default_value = "5,10,20,50,100,200")]
    m_grid: String,
    /// Correlation grid: comma-separated values, or start:end:count
    #[arg(long, default_value = "0:0.98:25")]
    rho_grid: String,
    #[arg(long, default_value = "two")]
    sided: String,
    #[arg(long, default_value = "-")]
    out: String,
    /// json (JSON lines) or csv
    #[arg(long, default_value = "json")]
    format: String,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Args)]
struct BenchSimArgs {
    /// Control-group distribution: exp, t5, normal, uniform
    #[arg(long, default_value = "exp")]
    dist: String,
    /// Location shift added to the case group
    #[arg(long, default_value_t = 2.0)]
    shift: f64,
    #[arg(long, default_value_t = 10)]
    m0: usize,
    #[arg(long, default_value_t = 10)]
    m1: usize,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Optional per-replicate output (JSON lines)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    quad: QuadArgs,
}

fn input_error(message: &str) -> ExitCode {
    // machine-readable error record
    eprintln!(
        "{}",
        serde_json::json!({ "error": "input", "message": message })
    );
    ExitCode::from(2)
}

fn open_out(path: &str) -> std::io::Result<Box<dyn Write>> {
    if path == "-" {
        Ok(Box::new(std::io::stdout().lock()))
    } else {
        Ok(Box::new(std::io::BufWriter::new(std::fs::File::create(
            path,
        )?)))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::RunEstimate(args) => run_estimate(args),
        Command::Validate(args) => validate(args),
        Command::Sweep(args) => sweep(args),
        Command::BenchSim(args) => bench_sim(args),
    }
}

fn configure_threads(threads: Option<usize>) -> Result<(), String> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var("PERMCAP_THREADS") {
            Ok(v) => Some(
                v.parse::<usize>()
                    .map_err(|e| format!("bad PERMCAP_THREADS: {e}"))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run_estimate(args: RunEstimateArgs) -> ExitCode {
    if let Err(e) = configure_threads(args.threads) {
        return input_error(&e);
    }
    let quad = match args.quad.resolve() {
        Ok(q) => q,
        Err(e) => return input_error(&e),
    };
    let estimators: Vec<EstimatorKind> = match args
        .estimators
        .split(',')
        .map(|s| EstimatorKind::from_str(s.trim()))
        .collect()
    {
        Ok(v) => v,
        Err(e) => return input_error(&e.to_string()),
    };
    let sided = match Sided::from_str(&args.sided) {
        Ok(s) => s,
        Err(e) => return input_error(&e.to_string()),
    };
    let matrix = match ExpressionMatrix::read_tsv(&args.matrix) {
        Ok(m) => m,
        Err(e) => return input_error(&e.to_string()),
    };
    let labels =
        match LabelVector::read_csv(&args.labels).and_then(|lv| lv.reconcile(matrix.samples())) {
            Ok(l) => l,
            Err(e) => return input_error(&e.to_string()),
        };
    let collection = match GeneSetCollection::read_gmt(&args.genesets) {
        Ok(c) => c,
        Err(e) => return input_error(&e.to_string()),
    };

    let opts = EstimateOptions {
        estimators,
        sided,
        with_rmse: args.with_rmse,
        quad,
        timings: args.timings,
    };
    let outcomes = run_estimates(&matrix, &labels, &collection, &opts);

    let mut out = match open_out(&args.out) {
        Ok(w) => w,
        Err(e) => return input_error(&e.to_string()),
    };
    let write_result = match args.format.as_str() {
        "json" => write_records_json(&mut out, &outcomes),
        "csv" => {
            // failures cannot appear in the fixed-column CSV; report them
            // on stderr as JSON records
            for o in &outcomes {
                if let SetOutcome::Failed { .. } = o {
                    eprintln!("{}", serde_json::to_string(o).expect("serializable"));
                }
            }
            write_records_csv(&mut out, &outcomes)
        }
        other => return input_error(&format!("unknown format '{other}'")),
    };
    if let Err(e) = write_result.and_then(|()| out.flush().map_err(Into::into)) {
        return input_error(&e.to_string());
    }
    ExitCode::SUCCESS
}

fn validate(args: ValidateArgs) -> ExitCode {
    let quad = match args.quad.resolve() {
        Ok(q) => q,
        Err(e) => return input_error(&e),
    };
    let grid_full = match args.grid.as_str() {
        "full" => true,
        "coarse" => false,
        other => return input_error(&format!("unknown grid '{other}'")),
    };
    let results = match standard_battery(args.m0, args.m1, args.draws, args.seed, grid_full, &quad)
    {
        Ok(r) => r,
        Err(e) => return input_error(&e.to_string()),
    };
    let mut failures = 0usize;
    for r in &results {
        let status = if r.pass { "PASS" } else { "FAIL" };
        println!(
            "{status} {} formula={:.6e} oracle={:.6e} se={:.3e} margin={:.2}se",
            r.name, r.formula, r.oracle, r.std_error, r.margin_se
        );
        if !r.pass {
            failures += 1;
        }
    }
    println!(
        "{} checks, {} failed (margin {} standard errors)",
        results.len(),
        failures,
        permcap::validation::SE_MARGIN
    );
    if failures > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn parse_rho_grid(spec: &str) -> Result<Vec<f64>, String> {
    if let Some((start, rest)) = spec.split_once(':') {
        let (end, count) = rest
            .split_once(':')
            .ok_or_else(|| format!("rho grid '{spec}' must be start:end:count or a comma list"))?;
        let start: f64 = start.parse().map_err(|e| format!("bad rho start: {e}"))?;
        let end: f64 = end.parse().map_err(|e| format!("bad rho end: {e}"))?;
        let count: usize = count.parse().map_err(|e| format!("bad rho count: {e}"))?;
        if count < 2 {
            return Err("rho grid needs at least 2 points".into());
        }
        Ok((0..count)
            .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
            .collect())
    } else {
        spec.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad rho '{s}': {e}"))
            })
            .collect()
    }
}

fn sweep(args: SweepArgs) -> ExitCode {
    let quad = match args.quad.resolve() {
        Ok(q) => q,
        Err(e) => return input_error(&e),
    };
    let sided = match Sided::from_str(&args.sided) {
        Ok(s) => s,
        Err(e) => return input_error(&e.to_string()),
    };
    let ms: Vec<usize> = match args
        .m_grid
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(v) => v,
        Err(e) => return input_error(&format!("bad m grid: {e}")),
    };
    let rhos = match parse_rho_grid(&args.rho_grid) {
        Ok(v) => v,
        Err(e) => return input_error(&e),
    };
    let mut rows = Vec::new();
    for &m in &ms {
        let g = match GroupSizes::new(m, m) {
            Ok(g) => g,
            Err(e) => return input_error(&e.to_string()),
        };
        for &rho in &rhos {
            match sweep_row(&g, rho, sided, &quad) {
                Ok(r) => rows.push(r),
                Err(e) => return input_error(&e.to_string()),
            }
        }
    }

    let mut out = match open_out(&args.out) {
        Ok(w) => w,
        Err(e) => return input_error(&e.to_string()),
    };
    let written: Result<(), String> = match args.format.as_str() {
        "json" => rows.iter().try_for_each(|row| {
            serde_json::to_writer(&mut out, row)
                .map_err(|e| e.to_string())
                .and_then(|()| out.write_all(b"\n").map_err(|e| e.to_string()))
        }),
        "csv" => {
            let mut w = csv::Writer::from_writer(&mut out);
            rows.iter()
                .try_for_each(|row| w.serialize(row).map_err(|e| e.to_string()))
                .and_then(|()| w.flush().map_err(|e| e.to_string()))
        }
        other => return input_error(&format!("unknown format '{other}'")),
    };
    if let Err(e) = written.and_then(|()| out.flush().map_err(|e| e.to_string())) {
        return input_error(&e);
    }
    ExitCode::SUCCESS
}

fn bench_sim(args: BenchSimArgs) -> ExitCode {
    let quad = match args.quad.resolve() {
        Ok(q) => q,
        Err(e) => return input_error(&e),
    };
    let dist = match ResponseDist::from_str(&args.dist) {
        Ok(d) => d,
        Err(e) => return input_error(&e.to_string()),
    };
    let cfg = SimConfig {
        dist,
        shift: args.shift,
        m0: args.m0,
        m1: args.m1,
        reps: args.reps,
        seed: args.seed,
        quad,
    };
    let report = match run_simulation(&cfg) {
        Ok(r) => r,
        Err(e) => return input_error(&e.to_string()),
    };
    if let Some(path) = &args.out {
        let file = match std::fs::File::create(path) {
            Ok(f) => f,
            Err(e) => return input_error(&e.to_string()),
        };
        let mut w = std::io::BufWriter::new(file);
        for o in &report.outcomes {
            if serde_json::to_writer(&mut w, o)
                .map_err(|e| e.to_string())
                .and_then(|()| w.write_all(b"\n").map_err(|e| e.to_string()))
                .is_err()
            {
                return input_error("failed writing per-replicate output");
            }
        }
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&report.summary).expect("serializable summary")
    );
    ExitCode::SUCCESS
}
