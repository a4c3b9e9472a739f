use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gridraid::commands::{self, SparseArgs, SynthArgs};
use gridraid::exit::{code_for, InputError};
use gridraid::experiments::{default_delta_grid, Experiment, ExperimentConfig};
use gridraid::manifest::{read_manifest, rerun, run_and_record};
use gridraid_core::impact::DEFAULT_SEARCH_CEILING;

/// Stealthy data attacks on DC state estimation: synthesis, detection and
/// impact analysis. Measurement indices are one-based.
#[derive(Parser)]
#[command(name = "gridraid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Case file utilities.
    Case {
        #[command(subcommand)]
        action: CaseAction,
    },
    /// Minimum-cardinality stealth attack biasing one measurement.
    Synth {
        #[arg(long)]
        case: PathBuf,
        /// Targeted measurement.
        #[arg(long)]
        target: usize,
        #[arg(long, allow_hyphen_values = true)]
        mu: f64,
        /// Plan on a model whose line parameters are off by up to this
        /// relative error.
        #[arg(long)]
        knowledge: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Measurements of the attack to block instead of falsify.
        #[arg(long, default_value_t = 0)]
        kd: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Write the attack vector as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detection probability and impact of an attack file.
    Detect {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        attack: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Also estimate the probability by simulation.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Most damaging (k_a, k_d) attack within a detection budget.
    Sparse {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        ka: usize,
        #[arg(long, default_value_t = 0)]
        kd: usize,
        #[arg(long)]
        delta_bar: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Refuse searches over more support combinations than this.
        #[arg(long, default_value_t = DEFAULT_SEARCH_CEILING)]
        ceiling: u128,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment and record CSVs plus a manifest.
    Exp {
        experiment: Experiment,
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 100)]
        draws: usize,
        /// Targeted measurement for the model-error experiments.
        #[arg(long, default_value_t = 9)]
        target: usize,
    },
    /// Repeat a recorded run and compare output digests.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum CaseAction {
    /// Parse a case, build the model and list the measurement indices.
    Validate { file: PathBuf },
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("GRIDRAID_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| InputError(format!("GRIDRAID_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(InputError("GRIDRAID_THREADS must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<String> {
    configure_threads()?;
    match cli.command {
        Command::Case {
            action: CaseAction::Validate { file },
        } => commands::case_validate(&file),
        Command::Synth {
            case,
            target,
            mu,
            knowledge,
            seed,
            kd,
            alpha,
            out,
        } => commands::synth(&SynthArgs {
            case: &case,
            target,
            mu,
            knowledge,
            seed,
            blocked: kd,
            alpha,
            out: out.as_deref(),
        }),
        Command::Detect {
            case,
            attack,
            alpha,
            trials,
            seed,
        } => commands::detect(&case, &attack, alpha, trials, seed),
        Command::Sparse {
            case,
            ka,
            kd,
            delta_bar,
            alpha,
            ceiling,
            out,
        } => commands::sparse(&SparseArgs {
            case: &case,
            ka,
            kd,
            delta_bar,
            alpha,
            ceiling,
            out: out.as_deref(),
        }),
        Command::Exp {
            experiment,
            case,
            out,
            seed,
            alpha,
            draws,
            target,
        } => {
            let mut cfg = ExperimentConfig::new(case, out);
            cfg.seed = seed;
            cfg.alpha = alpha;
            cfg.draws = draws;
            cfg.target = target;
            cfg.delta_grid = default_delta_grid(alpha);
            cfg.validate().map_err(|e| InputError(e.to_string()))?;
            let (manifest, output) = run_and_record(experiment, &cfg)?;
            let mut text = output.summary;
            for rec in &manifest.outputs {
                text.push_str(&format!("wrote {} ({} rows)\n", cfg.out.join(&rec.file).display(), rec.rows));
            }
            Ok(text)
        }
        Command::Rerun { manifest, out } => {
            let m = read_manifest(&manifest).map_err(|e| InputError(format!("{e:#}")))?;
            let checks = rerun(&m, &out)?;
            let mut text = String::new();
            let mut all = true;
            for c in &checks {
                all &= c.matches();
                text.push_str(&format!(
                    "{} {}\n",
                    if c.matches() { "identical" } else { "DIFFERS" },
                    c.file
                ));
            }
            if !all {
                anyhow::bail!("{text}rerun did not reproduce the recorded outputs");
            }
            Ok(text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if matches!(
                e.downcast_ref::<gridraid_core::Error>(),
                Some(gridraid_core::Error::SearchBudget { .. })
            ) {
                eprintln!("hint: narrow the candidate set, lower k_a/k_d, or raise --ceiling");
            }
            ExitCode::from(code_for(&e) as u8)
        }
    }
}
