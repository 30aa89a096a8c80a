use clap::{Args, Parser, Subcommand};
use magnav::config::Config;
use magnav::dataset::{read_estimate, read_truth, write_estimate, Dataset};
use magnav::loopclosure::{combined_distance, distance_matrix, write_loops_csv, DistanceLabel};
use magnav::metrics::{associate, evaluate, write_nees_csv};
use magnav::pipeline::{ablate, build_keyframes, estimate, write_ablation_csv, EstimateOptions};
use magnav::simulate::simulate_dataset;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const CONFIG_DIR_VAR: &str = "MAGNAV_CONFIG_DIR";

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Data(_) => 4,
            CliError::Solver(_) => 5,
            CliError::Io(_) => 6,
        }
    }
}

impl From<magnav::Error> for CliError {
    fn from(e: magnav::Error) -> Self {
        use magnav::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) => CliError::Config(msg),
            E::SingularNormalEquations { .. }
            | E::SingularInformation { .. }
            | E::NonFiniteCost { .. }
            | E::InvalidProblem(_)
            | E::SingularRelativeCovariance { .. } => CliError::Solver(msg),
            E::Io(_) => CliError::Io(msg),
            _ => CliError::Data(msg),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Magnetic odometry: simulate, estimate, score and ablate.
#[derive(Parser, Debug)]
#[command(name = "magnav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// Config file. Bare names are looked up in the config directory.
    #[arg(long, short, default_value = "demo.toml")]
    config: PathBuf,
    /// Directory searched for bare config names.
    #[arg(long, env = CONFIG_DIR_VAR, default_value = "configs")]
    config_dir: PathBuf,
}

impl ConfigArg {
    fn load(&self) -> CliResult<Config> {
        let path = if self.config.exists() || self.config.is_absolute() {
            self.config.clone()
        } else {
            self.config_dir.join(&self.config)
        };
        Ok(Config::load(&path)?)
    }
}

#[derive(Args, Debug)]
struct TermFlags {
    /// Leave out the forward-difference magnetic term.
    #[arg(long)]
    drop_fd: bool,
    /// Leave out the central-difference magnetic term.
    #[arg(long)]
    drop_cd: bool,
    /// Leave out the wheel-slip term.
    #[arg(long)]
    drop_slip: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dataset into a directory of CSV files.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Disable every noise source.
        #[arg(long)]
        noise_free: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Estimate the trajectory of a dataset.
    Estimate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, short)]
        data: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Skip loop-closure detection.
        #[arg(long, conflicts_with = "with_loops")]
        no_loops: bool,
        /// Run loop-closure detection even if the config disables it.
        #[arg(long)]
        with_loops: bool,
        #[command(flatten)]
        terms: TermFlags,
    },
    /// Score an estimate against ground truth.
    Metrics {
        #[arg(long, short)]
        estimate: PathBuf,
        #[arg(long, short)]
        truth: PathBuf,
        /// Association tolerance, s.
        #[arg(long, default_value_t = 0.1)]
        tolerance: f64,
        /// Significance level of the NEES bounds.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Write the NEES series here.
        #[arg(long)]
        nees: Option<PathBuf>,
    },
    /// Baseline and drop-one ablation table.
    Ablate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, short)]
        data: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Distance matrices and gated loop candidates.
    DetectLoops {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, short)]
        data: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn read_dataset(dir: &Path) -> CliResult<Dataset> {
    Dataset::read_dir(dir).map_err(|e| match e {
        magnav::Error::Io(_) => CliError::Io(format!("{}: {e}", dir.display())),
        other => CliError::Data(format!("{}: {other}", dir.display())),
    })
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            noise_free,
            out,
        } => {
            let mut cfg = config.load()?;
            cfg.sensors.noise_free |= noise_free;
            let sim = simulate_dataset(&cfg, seed.unwrap_or(cfg.seed), None)?;
            sim.dataset.write_dir(&out)?;
            log::info!("wrote {} s of data to {}", sim.trajectory.duration(), out.display());
        }
        Command::Estimate {
            config,
            data,
            out,
            no_loops,
            with_loops,
            terms,
        } => {
            let cfg = config.load()?;
            let dataset = read_dataset(&data)?;
            let mut opts = EstimateOptions::from_config(&cfg);
            opts.loops = (opts.loops || with_loops) && !no_loops;
            opts.use_fd &= !terms.drop_fd;
            opts.use_cd &= !terms.drop_cd;
            opts.use_slip &= !terms.drop_slip;
            let e = estimate(&dataset, &cfg, &opts)?;
            std::fs::create_dir_all(&out).map_err(io(&out))?;
            write_estimate(&out.join("estimate.csv"), &e.stamped())?;
            let report = out.join("report.toml");
            std::fs::write(&report, e.report.to_toml()).map_err(io(&report))?;
            write_loops_csv(&out.join("loops.csv"), &e.accepted_loops())?;
            println!("{}", e.report.to_toml());
        }
        Command::Metrics {
            estimate: est_path,
            truth,
            tolerance,
            alpha,
            nees,
        } => {
            let est = read_estimate(&est_path)?;
            let truth: Vec<_> = read_truth(&truth)?.iter().map(|r| r.stamped()).collect();
            let report = evaluate(&est, &truth, tolerance, alpha)?;
            if let Some(path) = nees {
                let times: Vec<f64> = associate(&est, &truth, tolerance).iter().map(|&(k, _)| est[k].t).collect();
                write_nees_csv(&path, &times, &report)?;
            }
            print!("{}", report.to_toml());
        }
        Command::Ablate { config, data, out } => {
            let cfg = config.load()?;
            let rows = ablate(&read_dataset(&data)?, &cfg)?;
            write_ablation_csv(&out, &rows)?;
            for r in &rows {
                println!(
                    "{:<10} position {:.4} m ({:+.1}%)  attitude {:.4} rad ({:+.1}%)",
                    r.variant, r.position_rmse, r.position_change_pct, r.attitude_rmse, r.attitude_change_pct
                );
            }
        }
        Command::DetectLoops { config, data, out } => {
            let cfg = config.load()?;
            let dataset = read_dataset(&data)?;
            std::fs::create_dir_all(&out).map_err(io(&out))?;
            let kf = build_keyframes(&dataset, &cfg.estimator)?;
            let stream = kf.invariants();
            for label in [DistanceLabel::I1, DistanceLabel::I2, DistanceLabel::I3] {
                let d = distance_matrix(&stream, label);
                d.write_csv(&out.join(format!("distance_{}.csv", label.name())), false)?;
            }
            let combined = combined_distance(&stream)?;
            combined.write_csv(&out.join("distance_combined.csv"), false)?;
            combined.write_csv(&out.join("distance_combined_log.csv"), true)?;
            let opts = EstimateOptions {
                loops: true,
                covariances: false,
                ..EstimateOptions::from_config(&cfg)
            };
            let e = estimate(&dataset, &cfg, &opts)?;
            write_loops_csv(&out.join("loops.csv"), &e.candidates)?;
            println!("{} candidates, {} accepted", e.candidates.len(), e.accepted_loops().len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
