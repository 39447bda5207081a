//! Command-line front end: argument parsing, config merging, error mapping.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use config::{BenchMode, Method, RunConfig};
use flexseg::error::{Classify, ErrorClass};
use flexseg::grid::UnitId;
use std::path::PathBuf;
use thiserror::Error;

pub const EXIT_PARSE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "parse",
            CliError::Validation(_) => "validation",
            CliError::Infeasible(_) => "infeasible",
            CliError::Internal(_) => "internal",
        }
    }

    pub fn code(&self) -> i32 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    /// Single-line JSON record for stderr.
    pub fn line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "code": self.code(),
            "message": self.to_string().replace('\n', " "),
        })
        .to_string()
    }
}

impl<E: Classify + std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        let m = e.to_string();
        match e.class() {
            ErrorClass::Parse => CliError::Parse(m),
            ErrorClass::Validation => CliError::Validation(m),
            ErrorClass::Infeasible => CliError::Infeasible(m),
            ErrorClass::Internal => CliError::Internal(m),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "flexseg",
    version,
    about = "Flexibility areas and their segmentation for radial distribution networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled network name (case33) or path to a network JSON file.
    #[arg(long)]
    network: Option<String>,
    /// Directory for result files [default: out].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    workers: Option<usize>,
    /// Random seed for sampling [default: 42].
    #[arg(long)]
    seed: Option<u64>,
    /// Reliability override `UNIT=VALUE`, repeatable.
    #[arg(long, value_name = "UNIT=VALUE")]
    reliability: Vec<String>,
}

#[derive(Debug, Args)]
struct Activation {
    /// Fixed set of active units, comma separated.
    #[arg(long, value_delimiter = ',')]
    subset: Option<Vec<UnitId>>,
    /// At most this many active units (mixed-integer search).
    #[arg(long)]
    cardinality: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one optimal power flow and write the operating point.
    Opf {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        activation: Activation,
        /// Push direction: -p (min consumption), +p, -q, +q, or raw coefficients `pi_p,pi_q` of the minimized objective.
        #[arg(long, allow_hyphen_values = true)]
        direction: Option<String>,
        /// Write the conic program as text to this file.
        #[arg(long)]
        dump_program: Option<PathBuf>,
        /// Write the branch-and-bound node log to this file (needs --cardinality).
        #[arg(long)]
        node_log: Option<PathBuf>,
    },
    /// Trace the flexibility area boundary.
    Area {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        activation: Activation,
        /// Number of ε-intervals, or half the number of rays [default: 50].
        #[arg(long)]
        k: Option<usize>,
        /// Tracing method [default: epsilon].
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Monte Carlo samples drawn for validation.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Segment by the number of active units.
    SegmentCount {
        #[command(flatten)]
        common: Common,
        /// Number of ε-intervals per level [default: 50].
        #[arg(long)]
        k: Option<usize>,
    },
    /// Segment by ranked unit subsets and their firmness.
    SegmentProb {
        #[command(flatten)]
        common: Common,
        /// Number of ε-intervals per subset [default: 50].
        #[arg(long)]
        k: Option<usize>,
        /// Ranked subsets considered, most probable first [default: 256].
        #[arg(long)]
        max_segments: Option<usize>,
        /// Firmness level of the envelope, in (0, 1].
        #[arg(long)]
        threshold: Option<f64>,
        /// Uncovered area fraction under which a subset counts as redundant [default: 1e-6].
        #[arg(long)]
        containment_tol: Option<f64>,
    },
    /// Draw the network diagram, or re-draw a saved segmentation.
    Render {
        #[command(flatten)]
        common: Common,
        /// Iteration cap of the force layout [default: 5000].
        #[arg(long)]
        layout_iterations: Option<usize>,
        /// Segmentation document written by segment-count or segment-prob.
        #[arg(long)]
        segmentation: Option<PathBuf>,
    },
    /// Time each segment of a segmentation over repeated runs.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Number of ε-intervals per segment [default: 50].
        #[arg(long)]
        k: Option<usize>,
        /// Timed runs per segment [default: 5].
        #[arg(long)]
        repeats: Option<usize>,
        /// Segmentation to time [default: count].
        #[arg(long, value_enum)]
        mode: Option<BenchMode>,
        /// Ranked subsets timed in prob mode [default: 256].
        #[arg(long)]
        max_segments: Option<usize>,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn merge_common(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.network, common.network.clone());
    set(&mut cfg.out_dir, common.out_dir.clone());
    set(&mut cfg.workers, common.workers);
    set(&mut cfg.seed, common.seed);
    for r in &common.reliability {
        let (id, value) = r.split_once('=').ok_or_else(|| {
            CliError::Parse(format!("reliability override {r:?} is not UNIT=VALUE"))
        })?;
        let value: f64 = value.trim().parse().map_err(|_| {
            CliError::Parse(format!("reliability override {r:?} has no numeric value"))
        })?;
        cfg.reliability.insert(id.trim().to_string(), value);
    }
    Ok(cfg)
}

fn merge_activation(cfg: &mut RunConfig, a: &Activation) {
    if a.subset.is_some() {
        cfg.subset = a.subset.clone();
        cfg.cardinality = None;
    }
    if a.cardinality.is_some() {
        cfg.cardinality = a.cardinality;
        cfg.subset = None;
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Opf {
            common,
            activation,
            direction,
            dump_program,
            node_log,
        } => {
            let mut cfg = merge_common(&common)?;
            merge_activation(&mut cfg, &activation);
            set(&mut cfg.direction, direction);
            cfg.validate()?;
            commands::opf(&cfg, dump_program.as_deref(), node_log.as_deref())
        }
        Command::Area {
            common,
            activation,
            k,
            method,
            samples,
        } => {
            let mut cfg = merge_common(&common)?;
            merge_activation(&mut cfg, &activation);
            set(&mut cfg.k, k);
            set(&mut cfg.method, method);
            set(&mut cfg.samples, samples);
            cfg.validate()?;
            commands::area(&cfg)
        }
        Command::SegmentCount { common, k } => {
            let mut cfg = merge_common(&common)?;
            set(&mut cfg.k, k);
            cfg.validate()?;
            commands::segment_count(&cfg)
        }
        Command::SegmentProb {
            common,
            k,
            max_segments,
            threshold,
            containment_tol,
        } => {
            let mut cfg = merge_common(&common)?;
            set(&mut cfg.k, k);
            set(&mut cfg.max_segments, max_segments);
            if threshold.is_some() {
                cfg.threshold = threshold;
            }
            set(&mut cfg.containment_tol, containment_tol);
            cfg.validate()?;
            commands::segment_prob(&cfg)
        }
        Command::Render {
            common,
            layout_iterations,
            segmentation,
        } => {
            let mut cfg = merge_common(&common)?;
            set(&mut cfg.layout_iterations, layout_iterations);
            cfg.validate()?;
            commands::render(&cfg, segmentation.as_deref())
        }
        Command::Bench {
            common,
            k,
            repeats,
            mode,
            max_segments,
        } => {
            let mut cfg = merge_common(&common)?;
            set(&mut cfg.k, k);
            set(&mut cfg.repeats, repeats);
            set(&mut cfg.bench_mode, mode);
            set(&mut cfg.max_segments, max_segments);
            cfg.validate()?;
            commands::bench(&cfg)
        }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                    EXIT_PARSE
                } else {
                    0
                };
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::Parse(first.to_string()).line());
            return EXIT_PARSE;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.code()
        }
    }
}
