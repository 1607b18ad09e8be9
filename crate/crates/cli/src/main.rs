//! Sequential driver for the authentication pipeline. Every subcommand
//! reads and writes plain directories, so stages can be rerun, inspected,
//! or swapped out individually. Flags beat the config file, the config
//! file beats built-in defaults, and anything randomized demands a seed.

mod config;
mod layout;
mod reporting;
mod stages;
mod training;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use imu_auth::pipeline::{BaselineTrainConfig, FineTuneConfig, PatternTrainConfig};
use imu_auth::types::UserId;

use config::{CliError, FileConfig};
use reporting::{OutputFormat, PlanArgs, Rate};

#[derive(Parser)]
#[command(name = "imu-auth", version, about = "Two-stage IMU authentication pipeline")]
struct Cli {
    /// Flat `key = value` file consulted for any flag left unset.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled sensor dataset.
    Synth(SynthCmd),
    /// Cut raw recordings into model-ready windows.
    #[command(subcommand)]
    Preprocess(PreprocessCmd),
    /// Expand clustered attempts into per-attempt feature tensors.
    Features(FeaturesCmd),
    /// Train the shared models.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Adapt the baseline to one held-out user.
    Finetune(FinetuneCmd),
    /// Pick the fine-tune epoch with the lowest validation FAR.
    SelectEpoch(SelectEpochCmd),
    /// Bootstrap the false-accept rate of one fine-tuned user.
    FinalTest(FinalTestCmd),
    /// Tabulate final-test results across users.
    Report(ReportCmd),
    /// Size a verification study by the rule of 30.
    Plan(PlanCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKindArg {
    /// Scripted lift-and-unlock sessions at six body positions.
    Specific,
    /// Free-living days with idle, carrying, and unlock episodes.
    AllMotions,
}

#[derive(Args)]
struct SynthCmd {
    /// Which collection protocol to imitate.
    kind: SynthKindArg,
    /// Dataset directory to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Raw sampling rate in Hz.
    #[arg(long)]
    rate_hz: Option<f64>,
    /// Specific protocol: lifts recorded at each body position.
    #[arg(long)]
    lifts_per_location: Option<usize>,
    /// All-motions protocol: days of wear per user.
    #[arg(long)]
    days: Option<usize>,
    /// All-motions protocol: unlock episodes per day.
    #[arg(long)]
    unlocks_per_day: Option<usize>,
}

#[derive(Subcommand)]
enum PreprocessCmd {
    /// 3 s screen-off windows for the pattern model.
    Patterns {
        /// Dataset directory holding manifest.json.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clustered 1.5 s pre-unlock attempts for verification.
    Verify {
        /// Dataset directory holding manifest.json.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct FeaturesCmd {
    /// Directory written by `preprocess verify`.
    #[arg(long)]
    attempts: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum TrainCmd {
    /// Screen-off pattern classifier; keeps the best-AUC epoch.
    Patterns(TrainPatternsCmd),
    /// Multi-loss verification baseline over the enrolled users.
    Baseline(TrainBaselineCmd),
}

#[derive(Args)]
struct TrainPatternsCmd {
    /// Directory written by `preprocess patterns`.
    #[arg(long)]
    windows: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainBaselineCmd {
    /// Directory written by `features`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Users trained as classifier classes.
    #[arg(long)]
    base: Option<usize>,
    /// Users reserved as validation impostors.
    #[arg(long)]
    val_add: Option<usize>,
    /// Per-user share of attempts used for training.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Per-user share of attempts used for validation.
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    #[arg(long)]
    users_per_batch: Option<usize>,
    #[arg(long)]
    attempts_per_user: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Weight of the triplet-margin term in the total loss.
    #[arg(long)]
    alpha_tm: Option<f64>,
    #[arg(long)]
    triplet_margin: Option<f64>,
    /// Norm degree for triplet distances.
    #[arg(long)]
    triplet_p: Option<f64>,
    /// Temperature of the contrastive term.
    #[arg(long)]
    tau: Option<f64>,
    /// Share of timesteps hit by augmentation noise.
    #[arg(long)]
    noise_fraction: Option<f64>,
    /// Timesteps per training crop.
    #[arg(long)]
    crop_len: Option<usize>,
    /// True-accept rate anchoring the FAR metrics.
    #[arg(long)]
    tar: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FinetuneCmd {
    /// Directory written by `train baseline`.
    #[arg(long)]
    baseline: PathBuf,
    /// Directory written by `features`; must cover the target user.
    #[arg(long)]
    features: PathBuf,
    /// Held-out user to adapt to.
    #[arg(long)]
    target: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Classifier learning rate; must stay below the baseline rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Target-user share of attempts used for training.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Target-user share of attempts used for validation.
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SelectEpochCmd {
    /// Directory written by `finetune`.
    #[arg(long)]
    finetune: PathBuf,
}

#[derive(Args)]
struct FinalTestCmd {
    /// Directory written by `finetune`.
    #[arg(long)]
    finetune: PathBuf,
    /// Epoch checkpoint to test (1-based); defaults to the selected one.
    #[arg(long)]
    epoch: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Impostor attempts resampled per iteration, and the number of
    /// genuine attempts fixing the threshold.
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the result record; defaults into the fine-tune dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportCmd {
    /// Final-test record files, or directories containing them.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Also write the table as CSV to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanCmd {
    /// Target false-accept rate, e.g. 1/50000 or 0.00002.
    #[arg(long)]
    target_far: Option<Rate>,
    /// Target true-accept rate.
    #[arg(long)]
    tar: Option<f64>,
    /// Enrolled users available for cross-comparison.
    #[arg(long)]
    users: Option<u64>,
    /// Test attempts per user.
    #[arg(long)]
    attempts: Option<u64>,
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Also write the table as CSV to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let threads = config::thread_count()?;
    match cli.command {
        Command::Synth(a) => {
            let users = file.resolve(a.users, "users", 12)?;
            let rate = file.resolve(a.rate_hz, "rate-hz", 50.0)?;
            let seed = file.resolve_seed(a.seed)?;
            let kind = match a.kind {
                SynthKindArg::Specific => stages::SynthKind::Specific {
                    lifts_per_location: file.resolve(a.lifts_per_location, "lifts-per-location", 50)?,
                },
                SynthKindArg::AllMotions => stages::SynthKind::AllMotions {
                    days: file.resolve(a.days, "days", 1)?,
                    unlocks_per_day: file.resolve(a.unlocks_per_day, "unlocks-per-day", 30)?,
                },
            };
            stages::synth(&a.out, kind, users, rate, seed)
        }
        Command::Preprocess(PreprocessCmd::Patterns { data, out }) => {
            stages::preprocess_patterns(&data, &out, threads)
        }
        Command::Preprocess(PreprocessCmd::Verify { data, out }) => {
            stages::preprocess_verify(&data, &out, threads)
        }
        Command::Features(a) => stages::features(&a.attempts, &a.out, threads),
        Command::Train(TrainCmd::Patterns(a)) => {
            let seed = file.resolve_seed(a.seed)?;
            let mut cfg = PatternTrainConfig::new(seed);
            cfg.epochs = file.resolve(a.epochs, "epochs", cfg.epochs)?;
            cfg.lr = file.resolve(a.lr, "lr", cfg.lr)?;
            training::train_patterns(&a.windows, &a.out, cfg)
        }
        Command::Train(TrainCmd::Baseline(a)) => {
            let seed = file.resolve_seed(a.seed)?;
            let mut cfg = BaselineTrainConfig::new(seed);
            cfg.epochs = file.resolve(a.epochs, "epochs", cfg.epochs)?;
            cfg.steps_per_epoch = file.resolve(a.steps_per_epoch, "steps-per-epoch", cfg.steps_per_epoch)?;
            cfg.users_per_batch = file.resolve(a.users_per_batch, "users-per-batch", cfg.users_per_batch)?;
            cfg.attempts_per_user = file.resolve(a.attempts_per_user, "attempts-per-user", cfg.attempts_per_user)?;
            cfg.lr = file.resolve(a.lr, "lr", cfg.lr)?;
            cfg.loss.alpha_tm = file.resolve(a.alpha_tm, "alpha-tm", cfg.loss.alpha_tm)?;
            cfg.loss.triplet_margin = file.resolve(a.triplet_margin, "triplet-margin", cfg.loss.triplet_margin)?;
            cfg.loss.triplet_p = file.resolve(a.triplet_p, "triplet-p", cfg.loss.triplet_p)?;
            cfg.loss.supcon_tau = file.resolve(a.tau, "tau", cfg.loss.supcon_tau)?;
            cfg.noise_fraction = file.resolve(a.noise_fraction, "noise-fraction", cfg.noise_fraction)?;
            cfg.crop_len = file.resolve(a.crop_len, "crop-len", cfg.crop_len)?;
            cfg.tar = file.resolve(a.tar, "tar", cfg.tar)?;
            let plan_args = training::BaselinePlanArgs {
                base: file.resolve(a.base, "base", 8)?,
                val_add: file.resolve(a.val_add, "val-add", 2)?,
                train_fraction: file.resolve(a.train_fraction, "train-fraction", 0.6)?,
                val_fraction: file.resolve(a.val_fraction, "val-fraction", 0.2)?,
            };
            training::run_train_baseline(&a.features, &a.out, &plan_args, cfg)
        }
        Command::Finetune(a) => {
            let seed = file.resolve_seed(a.seed)?;
            let mut cfg = FineTuneConfig::new(seed);
            cfg.epochs = file.resolve(a.epochs, "epochs", cfg.epochs)?;
            cfg.steps_per_epoch = file.resolve(a.steps_per_epoch, "steps-per-epoch", cfg.steps_per_epoch)?;
            cfg.batch_size = file.resolve(a.batch_size, "batch-size", cfg.batch_size)?;
            cfg.lr = file.resolve(a.lr, "lr", cfg.lr)?;
            cfg.train_fraction = file.resolve(a.train_fraction, "train-fraction", cfg.train_fraction)?;
            cfg.val_fraction = file.resolve(a.val_fraction, "val-fraction", cfg.val_fraction)?;
            let target = UserId::from(a.target.as_str());
            training::run_finetune(&a.baseline, &a.features, &target, &a.out, cfg)
        }
        Command::SelectEpoch(a) => training::run_select_epoch(&a.finetune).map(|_| ()),
        Command::FinalTest(a) => {
            let seed = file.resolve_seed(a.seed)?;
            let iterations = file.resolve(a.iterations, "iterations", 5000)?;
            let draws = file.resolve(a.draws, "draws", 90)?;
            training::run_final_test(&a.finetune, a.epoch, seed, iterations, draws, a.out)
                .map(|_| ())
        }
        Command::Report(a) => {
            let format = file.resolve(a.format, "format", OutputFormat::Text)?;
            reporting::run_report(&a.inputs, format, a.out.as_deref())
        }
        Command::Plan(a) => {
            let target_far =
                file.resolve_required(a.target_far, "target-far", "target false-accept rate")?;
            let plan = PlanArgs {
                target_far,
                tar: file.resolve(a.tar, "tar", 0.9)?,
                users: match a.users {
                    Some(u) => Some(u),
                    None => file.optional("users")?,
                },
                attempts: match a.attempts {
                    Some(m) => Some(m),
                    None => file.optional("attempts")?,
                },
            };
            let table = reporting::plan_table(&plan)?;
            if let Some(path) = &a.out {
                std::fs::write(path, table.to_csv())?;
            }
            let format = file.resolve(a.format, "format", OutputFormat::Text)?;
            reporting::emit(&table, format);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 1,
                CliError::Data(_) => 2,
            })
        }
    }
}
