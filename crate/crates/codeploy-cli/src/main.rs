use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use codeploy::coupling::{approach1_plan, approach2_preprocess, run_rng, CouplingPlan};
use codeploy::partition::{score_all, RankedPartition};
use codeploy::pipeline::{self, Method, RunOptions, RunReport};
use codeploy::scenario::{build_full_grid, build_local_grid, demand_grids};
use codeploy::solver::SolverConfig;
use codeploy::stochprog::{self, ConsistencyEncoding, CrossBlockPolicy};
use codeploy::{validate, ProblemSpec};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Lib(#[from] codeploy::Error),
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("usage: {0}")]
    Usage(String),
}

#[derive(Parser)]
#[command(name = "codeploy", version, about = "Staged co-deployment of coupled subsystems under demand uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on a problem file.
    Run {
        file: PathBuf,
        #[arg(value_enum)]
        method: MethodArg,
        #[command(flatten)]
        common: Common,
    },
    /// Run several methods across scenario counts and print a comparison table.
    Table {
        file: PathBuf,
        /// Comma-separated methods.
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Deterministic, MethodArg::Full, MethodArg::Approach1, MethodArg::Approach2])]
        method: Vec<MethodArg>,
        #[command(flatten)]
        common: Common,
    },
    /// Score every partition of the problem.
    Partitions {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Export the coupling plan of a pre-processing method as JSON.
    Plan {
        file: PathBuf,
        #[arg(value_enum)]
        method: MethodArg,
        #[command(flatten)]
        common: Common,
    },
    /// Export scenario grids as CSV (`full` or `approach1`).
    Grid {
        file: PathBuf,
        #[arg(value_enum)]
        method: MethodArg,
        /// Subsystem id whose grid is written.
        #[arg(long)]
        subsystem: String,
        #[command(flatten)]
        common: Common,
    },
    /// Dump the assembled program as JSON.
    Dump {
        file: PathBuf,
        #[arg(value_enum)]
        method: MethodArg,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario count per subsystem, comma-separated for several runs.
    #[arg(long, value_delimiter = ',')]
    scenarios: Vec<usize>,
    /// Independent Approach-2 runs averaged in the report.
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Blocks separated by `|`, members by `,`, e.g. "A,B|C".
    #[arg(long)]
    partition: Option<String>,
    /// Largest admissible block size in variables.
    #[arg(long = "ss-ub")]
    ss_ub: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the iteration trace of every solve to stderr as CSV.
    #[arg(long)]
    trace: bool,
    #[arg(long, value_enum, default_value_t = EncodingArg::Aligned)]
    encoding: EncodingArg,
    /// Freeze cross-block couplings at conservative capacities instead of dropping them.
    #[arg(long)]
    freeze_cross_block: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Deterministic,
    Full,
    Approach1,
    Approach2,
    Partition,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Deterministic => Method::Deterministic,
            MethodArg::Full => Method::Full,
            MethodArg::Approach1 => Method::Approach1,
            MethodArg::Approach2 => Method::Approach2,
            MethodArg::Partition => Method::Partition,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    /// Lower-median representative aligned with the destination scenario.
    Aligned,
    /// Lowest representative at the origin corner with equality forcing.
    Literal,
}

fn load(path: &PathBuf) -> Result<ProblemSpec, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.clone(),
        source,
    })?;
    let spec = ProblemSpec::from_json(&text)?;
    validate(&spec).into_result()?;
    Ok(spec)
}

fn options(c: &Common) -> RunOptions {
    RunOptions {
        scenarios: None,
        runs: c.runs,
        seed: c.seed,
        partition: c.partition.clone(),
        ss_ub: c.ss_ub,
        encoding: match c.encoding {
            EncodingArg::Aligned => ConsistencyEncoding::default(),
            EncodingArg::Literal => ConsistencyEncoding::literal(),
        },
        policy: if c.freeze_cross_block {
            CrossBlockPolicy::FreezeDeterministic
        } else {
            CrossBlockPolicy::Drop
        },
        solver: SolverConfig {
            trace: c.trace,
            ..SolverConfig::default()
        },
    }
}

/// Spec with `--scenarios` applied when exactly one value is given.
fn sized(spec: &ProblemSpec, c: &Common) -> Result<ProblemSpec, CliError> {
    let mut spec = match c.scenarios.as_slice() {
        [] => spec.clone(),
        [s] => spec.with_scenarios(*s),
        _ => return Err(CliError::Usage("this command takes a single --scenarios value".into())),
    };
    if let Some(seed) = c.seed {
        spec.seed = seed;
    }
    validate(&spec).into_result()?;
    Ok(spec)
}

fn emit(c: &Common, body: &[u8]) -> Result<(), CliError> {
    match &c.out {
        Some(path) => fs::write(path, body)?,
        None => io::stdout().write_all(body)?,
    }
    Ok(())
}

fn emit_reports(c: &Common, reports: &[RunReport]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    match c.format {
        Format::Csv => pipeline::write_csv(reports, &mut buf)?,
        Format::Text => pipeline::write_text(reports, &mut buf)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut buf, reports)?;
            buf.push(b'\n');
        }
    }
    emit(c, &buf)?;
    if c.trace {
        let mut err = io::stderr().lock();
        for r in reports {
            for t in &r.traces {
                t.write_trace_csv(&mut err)?;
            }
        }
    }
    Ok(())
}

fn emit_partitions(c: &Common, ranked: &[RankedPartition]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    match c.format {
        Format::Json => {
            let rows: Vec<_> = ranked
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "blocks": r.name,
                        "cs": r.score.cs,
                        "ss": r.score.ss,
                        "ss_max": r.score.ss_max,
                        "feasible": r.feasible,
                        "pareto": r.pareto,
                    })
                })
                .collect();
            serde_json::to_writer_pretty(&mut buf, &rows)?;
            buf.push(b'\n');
        }
        Format::Csv | Format::Text => {
            let sep = if c.format == Format::Csv { "," } else { "  " };
            writeln!(buf, "{}", ["blocks", "cs", "ss", "ss_max", "feasible", "pareto"].join(sep))?;
            for r in ranked {
                let ss = r.score.ss.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
                writeln!(
                    buf,
                    "{}",
                    [r.name.clone(), r.score.cs.to_string(), ss, r.score.ss_max.to_string(), r.feasible.to_string(), r.pareto.to_string()].join(sep)
                )?;
            }
        }
    }
    emit(c, &buf)
}

fn plan_for(spec: &ProblemSpec, method: Method, c: &Common) -> Result<CouplingPlan, CliError> {
    Ok(match method {
        Method::Approach1 | Method::Partition => approach1_plan(spec),
        Method::Approach2 => {
            let mut rng = run_rng(spec.seed, 0);
            approach2_preprocess(spec, &mut rng, &options(c).solver)?.plan
        }
        Method::Full => CouplingPlan::fully_coupled(spec),
        Method::Deterministic => CouplingPlan::default_plan(spec),
    })
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run { file, method, common } => {
            let spec = load(&file)?;
            let opts = options(&common);
            let scenarios: Vec<Option<usize>> = if common.scenarios.is_empty() {
                vec![None]
            } else {
                common.scenarios.iter().map(|&s| Some(s)).collect()
            };
            let mut reports = Vec::new();
            for s in scenarios {
                let o = RunOptions { scenarios: s, ..opts.clone() };
                reports.push(pipeline::run(&spec, method.into(), &o)?);
            }
            emit_reports(&common, &reports)?;
            Ok(reports.iter().all(|r| r.converged))
        }
        Command::Table { file, method, common } => {
            let spec = load(&file)?;
            let scenarios = if common.scenarios.is_empty() {
                return Err(CliError::Usage("table needs --scenarios S[,S...]".into()));
            } else {
                common.scenarios.clone()
            };
            let methods: Vec<Method> = method.into_iter().map(Method::from).collect();
            let reports = pipeline::table(&spec, &scenarios, &methods, &options(&common))?;
            emit_reports(&common, &reports)?;
            Ok(reports.iter().all(|r| r.converged))
        }
        Command::Partitions { file, common } => {
            let spec = sized(&load(&file)?, &common)?;
            let plan = approach1_plan(&spec);
            let ranked = score_all(&spec, &plan, common.ss_ub.unwrap_or(usize::MAX))?;
            emit_partitions(&common, &ranked)?;
            Ok(true)
        }
        Command::Plan { file, method, common } => {
            let spec = sized(&load(&file)?, &common)?;
            let plan = plan_for(&spec, method.into(), &common)?;
            emit(&common, format!("{}\n", plan.to_json()?).as_bytes())?;
            Ok(true)
        }
        Command::Grid { file, method, subsystem, common } => {
            let spec = sized(&load(&file)?, &common)?;
            let i = spec.index_of(&subsystem)?;
            let grid = match Method::from(method) {
                Method::Full => build_full_grid(&spec, &demand_grids(&spec)?).swap_remove(i),
                m => build_local_grid(&spec, &plan_for(&spec, m, &common)?)?.grids.swap_remove(i),
            };
            let mut buf = Vec::new();
            grid.write_csv(&spec.ids(), &mut buf)?;
            emit(&common, &buf)?;
            Ok(true)
        }
        Command::Dump { file, method, common } => {
            let spec = sized(&load(&file)?, &common)?;
            let enc = options(&common).encoding;
            let program = match Method::from(method) {
                Method::Deterministic => stochprog::build_deterministic(&spec)?.0,
                Method::Full => stochprog::fully_flexible(&spec)?,
                m => stochprog::locally_discretized(&spec, &plan_for(&spec, m, &common)?, enc)?,
            };
            emit(&common, format!("{}\n", program.to_json()?).as_bytes())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: at least one solve did not converge");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
