//! Argument parsing and dispatch. Exit codes: 0 success, 1 usage error,
//! 2 runtime failure.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serec_core::EvalTarget;

use crate::commands::{self, UsageError};
use crate::config::RunConfig;
use crate::model::ModelKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "serec", version, about = "Collaborative filtering with social exposure priors")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.k=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single-threaded, bit-reproducible run.
    #[arg(long, global = true)]
    deterministic: bool,
    /// More logging on stderr (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dataset statistics as JSON.
    Stats {
        #[arg(long)]
        interactions: Option<PathBuf>,
        #[arg(long)]
        social: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random train/validation/test split of an interaction file.
    Split {
        #[arg(long)]
        interactions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a model on a split's training part.
    Train {
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        social: Option<PathBuf>,
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Top-N metrics of a trained model as TSV (JSON with --out).
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, value_parser = parse_target)]
        target: Option<EvalTarget>,
        #[arg(long, value_delimiter = ',')]
        cutoffs: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recall per friend-count bucket.
    FriendGroups {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        social: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// A user's exposure prior and posterior binned by item popularity.
    ExposureCurve {
        #[arg(long)]
        user: String,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        bin_width: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrain and evaluate with randomly pruned trust links.
    Robustness {
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        social: Option<PathBuf>,
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        #[arg(long, value_delimiter = ',')]
        keep_probs: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a synthetic dataset with known parameters.
    Generate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_target(s: &str) -> std::result::Result<EvalTarget, String> {
    match s {
        "test" => Ok(EvalTarget::Test),
        "validation" => Ok(EvalTarget::Validation),
        other => Err(format!("expected `test` or `validation`, got {other:?}")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

/// Folds subcommand flags into the config; they take precedence over
/// `--set`, which takes precedence over the file.
fn apply_flags(cfg: &mut RunConfig, command: &Command) {
    let a = command.clone_args();
    set_path(&mut cfg.interactions, a.interactions);
    set_path(&mut cfg.social, a.social);
    set_path(&mut cfg.output, a.out);
    set_path(&mut cfg.split_dir, a.split);
    set_path(&mut cfg.model_dir, a.model_dir);
    set(&mut cfg.model, a.model);
    set(&mut cfg.repeats, a.repeats);
    set(&mut cfg.eval_target, a.target);
    set(&mut cfg.cutoffs, a.cutoffs);
    set(&mut cfg.bin_width, a.bin_width);
    set(&mut cfg.keep_probs, a.keep_probs);
    if let Some(s) = a.seed {
        match command {
            Command::Split { .. } => cfg.split_seed = s,
            Command::Robustness { .. } => cfg.prune_seed = s,
            Command::Generate { .. } => cfg.synthetic.seed = s,
            _ => {}
        }
    }
}

#[derive(Default)]
struct Args {
    interactions: Option<PathBuf>,
    social: Option<PathBuf>,
    out: Option<PathBuf>,
    split: Option<PathBuf>,
    model_dir: Option<PathBuf>,
    model: Option<ModelKind>,
    seed: Option<u64>,
    repeats: Option<usize>,
    target: Option<EvalTarget>,
    cutoffs: Option<Vec<usize>>,
    bin_width: Option<usize>,
    keep_probs: Option<Vec<f64>>,
}

impl Command {
    fn clone_args(&self) -> Args {
        match self {
            Command::Stats { interactions, social, out } => Args {
                interactions: interactions.clone(),
                social: social.clone(),
                out: out.clone(),
                ..Args::default()
            },
            Command::Split { interactions, out, seed } => Args {
                interactions: interactions.clone(),
                out: out.clone(),
                seed: *seed,
                ..Args::default()
            },
            Command::Train { split, social, model, out, repeats } => Args {
                split: split.clone(),
                social: social.clone(),
                model: *model,
                out: out.clone(),
                repeats: *repeats,
                ..Args::default()
            },
            Command::Evaluate { model, split, target, cutoffs, out } => Args {
                model_dir: model.clone(),
                split: split.clone(),
                target: *target,
                cutoffs: cutoffs.clone(),
                out: out.clone(),
                ..Args::default()
            },
            Command::FriendGroups { model, split, social, out } => Args {
                model_dir: model.clone(),
                split: split.clone(),
                social: social.clone(),
                out: out.clone(),
                ..Args::default()
            },
            Command::ExposureCurve { model, split, bin_width, out, .. } => Args {
                model_dir: model.clone(),
                split: split.clone(),
                bin_width: *bin_width,
                out: out.clone(),
                ..Args::default()
            },
            Command::Robustness { split, social, model, keep_probs, seed, out } => Args {
                split: split.clone(),
                social: social.clone(),
                model: *model,
                keep_probs: keep_probs.clone(),
                seed: *seed,
                out: out.clone(),
                ..Args::default()
            },
            Command::Generate { out, seed } => Args {
                out: out.clone(),
                seed: *seed,
                ..Args::default()
            },
        }
    }
}

fn execute(cfg: &RunConfig, command: &Command) -> Result<String> {
    Ok(match command {
        Command::Stats { .. } => serde_json::to_string_pretty(&commands::stats(cfg)?)? + "\n",
        Command::Split { .. } => serde_json::to_string_pretty(&commands::split(cfg)?)? + "\n",
        Command::Train { .. } => serde_json::to_string_pretty(&commands::train(cfg)?)? + "\n",
        Command::Evaluate { .. } => {
            let report = commands::evaluate(cfg)?;
            let mut out = commands::format_report(cfg.model_dir.as_deref().map_or("model".into(), |p| p.display().to_string()).as_str(), &report);
            out.push_str(&format!("n_users_evaluated\t{}\n", report.n_users_evaluated));
            out
        }
        Command::FriendGroups { .. } => commands::format_groups(&commands::friend_groups(cfg)?),
        Command::ExposureCurve { user, .. } => commands::format_curve(&commands::exposure_curve(cfg, user)?),
        Command::Robustness { .. } => commands::format_robustness(&commands::robustness(cfg)?),
        Command::Generate { .. } => {
            let (clicks, edges) = commands::generate(cfg)?;
            format!("clicks\t{clicks}\nedges\t{edges}\n")
        }
    })
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| e.is::<UsageError>())
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();

    let mut cfg = match RunConfig::load(cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    };
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    apply_flags(&mut cfg, &cli.command);
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e:#}");
        return EXIT_USAGE;
    }
    let threads = commands::thread_count(&cfg, cli.deterministic);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return EXIT_FAILURE;
        }
    };
    match pool.install(|| execute(&cfg, &cli.command)) {
        Ok(out) => {
            print!("{out}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage(&e) {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}
