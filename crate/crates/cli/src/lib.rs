//! Command-line front end: plan, validate, count, encode, gen and bench.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use probplan::bench::{generate, BenchError, BenchSpec, Family};
use probplan::bn::build_belief_bn;
use probplan::cnf::{encode_bn, parse_wdimacs, write_wdimacs, CnfError};
use probplan::oracle::{plan_probability, simulate, OracleError, DEFAULT_WORLD_CAP};
use probplan::search::{plan, SearchConfig, SearchError, SearchResult, SearchStatus, Strategy};
use probplan::task::{parse_plan, parse_task, write_plan, PlanningTask, TaskError};
use probplan::wmc::{wmc, WmcOptions};

pub mod batch;

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNSOLVED: i32 = 1;
pub const EXIT_LIMIT: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Task {
        path: PathBuf,
        #[source]
        source: TaskError,
    },
    #[error("{path}: {source}")]
    Cnf {
        path: PathBuf,
        #[source]
        source: CnfError,
    },
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Oracle(OracleError::NotApplicable { .. }) => EXIT_UNSOLVED,
            CliError::Oracle(OracleError::CapExceeded { .. }) => EXIT_LIMIT,
            _ => EXIT_INPUT,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "probplan", version, about = "Conformant probabilistic planner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Search for a plan reaching the goal with probability at least θ.
    Plan(PlanArgs),
    /// Compute the success probability of a plan.
    Validate(ValidateArgs),
    /// Weighted model count of a weighted DIMACS file.
    Count(CountArgs),
    /// Write the weighted CNF of the belief reached by a plan.
    Encode(EncodeArgs),
    /// Generate a benchmark task file.
    Gen(GenArgs),
    /// Plan every task of a directory for a list of θ values.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SearchMode {
    Auto,
    Ehc,
    Bfs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ValidateMode {
    Exact,
    Mc,
}

#[derive(Args, Debug, Clone)]
pub struct Limits {
    /// Wall-clock limit per run in seconds; 0 disables it.
    #[arg(long, default_value_t = 60.0)]
    pub time_limit: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub node_limit: usize,
    #[arg(long, value_enum, default_value_t = SearchMode::Auto)]
    pub search: SearchMode,
    /// Maximum number of future layers of the relaxed planning graph.
    #[arg(long)]
    pub horizon_cap: Option<usize>,
}

impl Limits {
    pub fn config(&self) -> Result<SearchConfig, CliError> {
        if !(self.time_limit >= 0.0 && self.time_limit.is_finite()) {
            return Err(CliError::Usage(format!("bad time limit {}", self.time_limit)));
        }
        let mut cfg = SearchConfig {
            node_limit: self.node_limit,
            time_limit: (self.time_limit > 0.0).then(|| Duration::from_secs_f64(self.time_limit)),
            strategy: match self.search {
                SearchMode::Auto => Strategy::EhcThenBfs,
                SearchMode::Ehc => Strategy::Ehc,
                SearchMode::Bfs => Strategy::Bfs,
            },
            ..SearchConfig::default()
        };
        if let Some(h) = self.horizon_cap {
            cfg.horizon_cap = h;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    pub task: PathBuf,
    /// Overrides the task file's θ.
    #[arg(long)]
    pub theta: Option<f64>,
    #[command(flatten)]
    pub limits: Limits,
    /// Plan file; with it the stats row goes to standard output.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    pub task: PathBuf,
    pub plan: PathBuf,
    #[arg(long, value_enum, default_value_t = ValidateMode::Exact)]
    pub mode: ValidateMode,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub theta: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CountArgs {
    pub cnf: PathBuf,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    pub task: PathBuf,
    /// Plan whose belief is encoded; the initial belief without it.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    pub family: String,
    pub params: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    pub dir: PathBuf,
    /// θ values, comma separated; the file's θ when omitted.
    #[arg(long, value_delimiter = ',')]
    pub theta: Vec<f64>,
    #[command(flatten)]
    pub limits: Limits,
    #[arg(long, value_enum, default_value_t = ValidateMode::Exact)]
    pub mode: ValidateMode,
    /// Monte Carlo samples, also used when exact validation exceeds its cap.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parallel workers; rows keep instance order.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_task(path: &Path, theta: Option<f64>) -> Result<PlanningTask, CliError> {
    let mut task = parse_task(&read(path)?).map_err(|source| CliError::Task {
        path: path.to_path_buf(),
        source,
    })?;
    if let Some(t) = theta {
        if !(0.0..=1.0).contains(&t) {
            return Err(CliError::Usage(format!("theta {t} outside [0,1]")));
        }
        task.theta = t;
    }
    Ok(task)
}

/// Name of an instance: the file stem.
pub fn instance_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// `x` with 12 significant digits.
pub fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-5..12).contains(&mag) {
        format!("{:.*}", (11 - mag).max(0) as usize, x)
    } else {
        format!("{x:.11e}")
    }
}

pub fn status_code(s: SearchStatus) -> i32 {
    match s {
        SearchStatus::PlanFound => EXIT_OK,
        SearchStatus::ProvenUnsolvableAtRoot | SearchStatus::Exhausted => EXIT_UNSOLVED,
        SearchStatus::ResourceExhausted => EXIT_LIMIT,
    }
}

pub const PLAN_HEADER: [&str; 7] = ["instance", "theta", "status", "t", "nodes", "length", "wmc_calls"];

pub fn plan_row(instance: &str, theta: f64, r: &SearchResult) -> [String; 7] {
    [
        instance.to_string(),
        theta.to_string(),
        r.status.as_str().to_string(),
        format!("{:.3}", r.stats.wall.as_secs_f64()),
        r.stats.nodes_evaluated.to_string(),
        r.plan.len().to_string(),
        r.stats.wmc_calls.to_string(),
    ]
}

fn cmd_plan(a: &PlanArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let task = load_task(&a.task, a.theta)?;
    let cfg = a.limits.config()?;
    let r = plan(&task, &cfg)?;
    let plan_text = write_plan(&task, &r.plan);
    let mut stats = csv::Writer::from_writer(Vec::new());
    stats.write_record(PLAN_HEADER)?;
    stats.write_record(plan_row(&instance_name(&a.task), task.theta, &r))?;
    let stats = String::from_utf8(stats.into_inner().expect("in-memory writer")).expect("utf8 csv");
    let io = |source| CliError::Io {
        path: PathBuf::from("-"),
        source,
    };
    match &a.output {
        Some(p) => {
            if r.status == SearchStatus::PlanFound {
                write(p, &plan_text)?;
            }
            out.write_all(stats.as_bytes()).map_err(io)?;
        }
        None => {
            if r.status == SearchStatus::PlanFound {
                out.write_all(plan_text.as_bytes()).map_err(io)?;
            }
            err.write_all(stats.as_bytes()).map_err(io)?;
        }
    }
    Ok(status_code(r.status))
}

fn cmd_validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let task = load_task(&a.task, a.theta)?;
    let plan = parse_plan(&task, &read(&a.plan)?).map_err(|source| CliError::Task {
        path: a.plan.clone(),
        source,
    })?;
    let (line, ok) = match a.mode {
        ValidateMode::Exact => {
            let p = plan_probability(&task, &plan, DEFAULT_WORLD_CAP)?;
            (format!("probability {}", sig12(p)), p >= task.theta - 1e-9)
        }
        ValidateMode::Mc => {
            let m = simulate(&task, &plan, a.samples, a.seed)?;
            (
                format!(
                    "estimate {} ci99 {} {} samples {}",
                    sig12(m.p_hat),
                    sig12(m.lo),
                    sig12(m.hi),
                    m.samples
                ),
                m.lo >= task.theta,
            )
        }
    };
    writeln!(out, "{line}").map_err(|source| CliError::Io {
        path: PathBuf::from("-"),
        source,
    })?;
    Ok(if ok { EXIT_OK } else { EXIT_UNSOLVED })
}

fn cmd_count(a: &CountArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let cnf = parse_wdimacs(&read(&a.cnf)?).map_err(|source| CliError::Cnf {
        path: a.cnf.clone(),
        source,
    })?;
    let w = wmc(&cnf, &[], WmcOptions::planner());
    writeln!(out, "{}", sig12(w)).map_err(|source| CliError::Io {
        path: PathBuf::from("-"),
        source,
    })?;
    Ok(EXIT_OK)
}

fn cmd_encode(a: &EncodeArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let task = load_task(&a.task, None)?;
    let plan = match &a.plan {
        Some(p) => parse_plan(&task, &read(p)?).map_err(|source| CliError::Task {
            path: p.clone(),
            source,
        })?,
        None => Vec::new(),
    };
    probplan::oracle::apply_sequence(&task, &probplan::oracle::initial_belief(&task)?, &plan)?;
    let enc = encode_bn(&build_belief_bn(&task, &plan)).map_err(|source| CliError::Cnf {
        path: a.task.clone(),
        source,
    })?;
    let text = write_wdimacs(&enc.cnf);
    match &a.output {
        Some(p) => write(p, &text)?,
        None => out.write_all(text.as_bytes()).map_err(|source| CliError::Io {
            path: PathBuf::from("-"),
            source,
        })?,
    }
    Ok(EXIT_OK)
}

fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let family: Family = a.family.parse()?;
    let spec = BenchSpec {
        seed: a.seed,
        ..BenchSpec::new(family, &a.params, a.theta)
    };
    let text = generate(&spec)?;
    fs::create_dir_all(&a.output).map_err(|source| CliError::Io {
        path: a.output.clone(),
        source,
    })?;
    let path = a.output.join(format!("{}.task", spec.name()));
    write(&path, &text)?;
    writeln!(out, "{}", path.display()).map_err(|source| CliError::Io {
        path: PathBuf::from("-"),
        source,
    })?;
    Ok(EXIT_OK)
}

/// Runs one command; diagnostics go to `err`.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let r = match &cli.command {
        Command::Plan(a) => cmd_plan(a, out, err),
        Command::Validate(a) => cmd_validate(a, out),
        Command::Count(a) => cmd_count(a, out),
        Command::Encode(a) => cmd_encode(a, out),
        Command::Gen(a) => cmd_gen(a, out),
        Command::Bench(a) => batch::cmd_bench(a, out, err),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(0.791), "0.791000000000");
        assert_eq!(sig12(1.0), "1.00000000000");
        assert_eq!(sig12(123.5), "123.500000000");
        assert_eq!(sig12(2.5e-9), "2.50000000000e-9");
        assert_eq!(sig12(0.0), "0");
    }

    #[test]
    fn exit_codes_follow_status() {
        assert_eq!(status_code(SearchStatus::PlanFound), EXIT_OK);
        assert_eq!(status_code(SearchStatus::ProvenUnsolvableAtRoot), EXIT_UNSOLVED);
        assert_eq!(status_code(SearchStatus::Exhausted), EXIT_UNSOLVED);
        assert_eq!(status_code(SearchStatus::ResourceExhausted), EXIT_LIMIT);
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_INPUT);
    }

    #[test]
    fn zero_time_limit_disables_it() {
        let l = Limits {
            time_limit: 0.0,
            node_limit: 10,
            search: SearchMode::Bfs,
            horizon_cap: Some(7),
        };
        let cfg = l.config().unwrap();
        assert_eq!(cfg.time_limit, None);
        assert_eq!(cfg.strategy, Strategy::Bfs);
        assert_eq!(cfg.horizon_cap, 7);
        assert!(Limits { time_limit: -1.0, ..l }.config().is_err());
    }
}
