use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qoe_sched::report::{self, SummaryFile};
use qoe_sched::worker::ControllerKind;
use qoe_sched::{load_config, plot, run_scenario, ClusterError, ConfigError, ReportError};

#[derive(Parser)]
#[command(
    name = "qoe-sched",
    version,
    about = "QoE-driven CPU limit controller simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write report.csv and summary.json.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the controller named in the config.
        #[arg(long, value_parser = parse_controller)]
        controller: Option<ControllerKind>,
    },
    /// Compare steady-state satisfied counts of two runs (candidate first).
    Compare {
        candidate: PathBuf,
        baseline: PathBuf,
    },
    /// Render per-container quality and share trajectories as SVG.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_controller(s: &str) -> Result<ControllerKind, String> {
    match s {
        "dqoes" => Ok(ControllerKind::Dqoes),
        "even" => Ok(ControllerKind::Even),
        other => Err(format!(
            "unknown controller {other:?} (expected dqoes or even)"
        )),
    }
}

enum Failure {
    Config(ConfigError),
    Io(String),
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Cluster(c) => Failure::Other(c.to_string()),
            other => Failure::Io(other.to_string()),
        }
    }
}

impl From<ClusterError> for Failure {
    fn from(e: ClusterError) -> Self {
        Failure::Other(e.to_string())
    }
}

fn run(
    config: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    controller: Option<ControllerKind>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(kind) = controller {
        cfg.controller = kind;
    }
    cfg.validate()?;
    let out = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| {
        let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        PathBuf::from("out").join(stem)
    });
    std::fs::create_dir_all(&out).map_err(|e| Failure::Io(format!("{}: {e}", out.display())))?;

    let outcome = run_scenario(&cfg)?;
    let csv_path = out.join("report.csv");
    report::export_csv(outcome.rows(), &csv_path)?;

    let census = outcome.summary.census_all();
    let summary = SummaryFile {
        fingerprint: outcome.summary.fingerprint.clone(),
        controller: cfg.controller,
        satisfied: census.iter().map(|(w, c)| (*w, c.satisfied)).collect(),
        total_satisfied: census.values().map(|c| c.satisfied).sum(),
    };
    report::write_summary_file(&summary, &out.join("summary.json"))?;

    println!(
        "scenario {:?} ({:?}, seed {})",
        cfg.name, cfg.controller, cfg.seed
    );
    println!("worker  G  S  B  sum|q|");
    for (w, c) in &census {
        println!(
            "{:>6} {:>2} {:>2} {:>2}  {:.2}",
            w, c.outperform, c.satisfied, c.underperform, c.abs_quality
        );
    }
    println!("satisfied: {}", summary.total_satisfied);
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            controller,
        } => run(&config, seed, out, controller),
        Command::Compare {
            candidate,
            baseline,
        } => (|| {
            let a = report::load_summary(&candidate)?;
            let b = report::load_summary(&baseline)?;
            let cmp = report::compare(&a, &b)?;
            println!("{cmp}");
            Ok(())
        })(),
        Command::Plot { csv, out } => (|| {
            let rows = report::load_csv(&csv)?;
            let dir =
                out.unwrap_or_else(|| csv.parent().map(Path::to_path_buf).unwrap_or_default());
            for path in plot::plot_trajectories(&rows, &dir)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("i/o error: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
