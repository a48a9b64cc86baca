mod commands;
mod config;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Table;
use config::ExperimentConfig;

/// Experiments on fractional Cauchy problems  D^α u + Au = f.
#[derive(Parser)]
#[command(name = "fracprop", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve on the output grid: values, residual, node count and warnings per time.
    Solve(Common),
    /// Error against a reference with more contour nodes, per node count and time.
    Converge(Common),
    /// Norm profiles of the contour integrands along the upper ray.
    Decay(Common),
    /// Pairwise differences between the solution formulas.
    Compare(Common),
    /// Mittag-Leffler function values.
    Mlval(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// CSV destination; overrides output.path, standard output when neither is set.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Refuse evaluations that are not strongly convergent instead of warning.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_name = "K")]
    threads: Option<usize>,
    /// Overrides the seed of the config.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Core(fracprop::Error),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        use fracprop::Error as E;
        match self {
            Failure::Config(_) => 2,
            Failure::Core(E::Refused(_)) => 3,
            Failure::Core(E::InvalidParameter(_) | E::DimensionMismatch { .. } | E::Unsupported(_)) => 2,
            Failure::Core(E::Numerical(_) | E::AccuracyDomain(_) | E::Singular { .. }) => 4,
            Failure::Io(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<fracprop::Error> for Failure {
    fn from(e: fracprop::Error) -> Self {
        Failure::Core(e)
    }
}

fn render(table: &Table, cfg: &ExperimentConfig, command: &str) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    writeln!(buf, "# fracprop {}", env!("CARGO_PKG_VERSION")).expect("writing to memory");
    writeln!(buf, "# command {command}").expect("writing to memory");
    writeln!(buf, "# config_sha256 {}", cfg.hash()).expect("writing to memory");
    writeln!(buf, "# seed {}", cfg.seed).expect("writing to memory");
    let mut w = csv::Writer::from_writer(buf);
    let io = |e: csv::Error| Failure::Io(e.to_string());
    w.write_record(&table.header).map_err(io)?;
    for row in &table.rows {
        w.write_record(row).map_err(io)?;
    }
    w.into_inner().map_err(|e| Failure::Io(e.to_string()))
}

type Runner = fn(&ExperimentConfig) -> Result<Table, Failure>;

fn run(cli: Cli) -> Result<(), Failure> {
    let (name, common, runner): (&str, Common, Runner) = match cli.command {
        Command::Solve(c) => ("solve", c, commands::run_solve),
        Command::Converge(c) => ("converge", c, commands::run_converge),
        Command::Decay(c) => ("decay", c, commands::run_decay),
        Command::Compare(c) => ("compare", c, commands::run_compare),
        Command::Mlval(c) => ("mlval", c, commands::run_mlval),
    };
    if let Some(k) = common.threads {
        if k == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().map_err(|e| Failure::Io(e.to_string()))?;
    }
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Failure::Config(format!("{}: {e}", common.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.solver.strict |= common.strict;
    let out = common.out.or_else(|| cfg.output.path.as_ref().map(PathBuf::from));
    let table = runner(&cfg)?;
    let bytes = render(&table, &cfg, name)?;
    match out {
        Some(path) => fs::write(&path, bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(&bytes).map_err(|e| Failure::Io(e.to_string())),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fracprop: {e}");
            ExitCode::from(e.code())
        }
    }
}
