//! Command-line front end. Exit codes: 0 success, 1 usage, 2 data, 3 numerical.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::averaging::{model_average, AveragingConfig, LambdaRule};
use crate::candidates::{build_candidates, SearchConfig};
use crate::error::{Error, ErrorClass, Result};
use crate::harness::{
    degree_summary, emit_results, export_dot, load_csv, run_simulation, run_weight_consistency, standardize,
    write_weights_csv, ExperimentConfig, Method, SweepResult,
};

#[derive(Debug, Parser)]
#[command(name = "dag-ma", about = "Model-averaged estimation of Gaussian DAGs", disable_version_flag = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo comparison of the averaged estimator with baselines.
    Simulate(SweepArgs),
    /// Weight-consistency study; only the averaged estimator is recorded.
    Consistency {
        #[command(flatten)]
        sweep: SweepArgs,
        /// Start the candidate search from the true graph.
        #[arg(long)]
        plant_true: bool,
    },
    /// Fit the averaged estimator to a CSV file.
    Fit(FitArgs),
    /// Print the version.
    Version,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "10")]
    p: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.2")]
    rho: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "50,100,200,400,800")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    /// Number of nested candidate models.
    #[arg(long, default_value_t = 11)]
    candidates: usize,
    /// `log_n`, `mallows2` or a nonnegative number.
    #[arg(long, default_value = "log_n")]
    lambda: LambdaRule,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Comma-separated baselines, or `none`.
    #[arg(long, default_value = "largest_candidate,initial_graph,oracle_true_graph")]
    baselines: String,
    /// Record wall-clock seconds (output is then no longer reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 11)]
    candidates: usize,
    #[arg(long, default_value = "log_n")]
    lambda: LambdaRule,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long)]
    out_dot: Option<PathBuf>,
    #[arg(long)]
    out_weights: Option<PathBuf>,
    /// Centre and scale every column before fitting.
    #[arg(long)]
    standardize: bool,
}

fn parse_baselines(s: &str) -> Result<Vec<Method>> {
    if s.trim() == "none" || s.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut out: Vec<Method> = s.split(',').map(str::parse).collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

impl SweepArgs {
    fn config(&self, plant_true: bool) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            p_list: self.p.clone(),
            rho_list: self.rho.clone(),
            n_list: self.n.clone(),
            reps: self.reps,
            m_candidates: self.candidates,
            lambda_rule: self.lambda,
            base_seed: self.seed,
            baselines: parse_baselines(&self.baselines)?,
            output_dir: Some(self.out.clone()),
            plant_true,
            record_timing: self.timing,
            ..ExperimentConfig::default()
        })
    }
}

fn report_sweep(res: &SweepResult, dir: &PathBuf, out: &mut dyn Write) -> Result<()> {
    if res.records.is_empty() {
        return Err(Error::InvalidInput("every replication failed".into()));
    }
    let files = emit_results(res, dir)?;
    let _ = writeln!(
        out,
        "{} records, {} failed replications, {} files in {}",
        res.records.len(),
        res.failures.len(),
        files.len(),
        dir.display()
    );
    Ok(())
}

fn fit(args: &FitArgs, out: &mut dyn Write) -> Result<()> {
    let (mut x, names) = load_csv(&args.data)?;
    if args.standardize {
        x = standardize(&x)?;
    }
    let search = SearchConfig::new(args.candidates, args.seed);
    let cs = build_candidates(&x, &search)?;
    let res = model_average(&x, &cs, &AveragingConfig::with_lambda(args.lambda))?;
    let deg = degree_summary(&res.a_hat);

    let _ = writeln!(out, "n = {}, p = {}", x.n(), x.p());
    let _ = writeln!(out, "lambda ({}) = {}", args.lambda, res.lambda);
    let _ = writeln!(out, "sigma2 = {}", res.sigma2_hat);
    let _ = writeln!(out, "candidates k = {:?}", cs.k());
    let _ = writeln!(out, "weights = {:?}", res.solution.w.as_slice());
    let _ = writeln!(out, "edges = {}, average degree = {:.3}", deg.edges, deg.average_degree);

    if let Some(path) = &args.out_dot {
        export_dot(&res.a_hat, &names, path)?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    if let Some(path) = &args.out_weights {
        write_weights_csv(&cs.k(), res.solution.w.as_slice(), path)?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let cfg = a.config(false)?;
            report_sweep(&run_simulation(&cfg)?, &a.out, out)
        }
        Command::Consistency { sweep, plant_true } => {
            let cfg = sweep.config(plant_true)?;
            report_sweep(&run_weight_consistency(&cfg)?, &sweep.out, out)
        }
        Command::Fit(a) => fit(&a, out),
        Command::Version => {
            let _ = writeln!(out, "dag-ma {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(e.class())
        }
    }
}
