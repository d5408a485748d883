//! Command-line front end: `train`, `analyze`, `separate`, `evaluate` and
//! `synth-data`.
//!
//! Exit status is 0 on success, 2 when training finds no separation window,
//! and 1 on any error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use unmix::pipeline::{
    cmd_analyze, cmd_evaluate, cmd_separate, cmd_synth_data, cmd_train, PipelineConfig, Profile,
    SeparateOptions, SynthConfig,
};

#[derive(Parser)]
#[command(name = "unmix", version, about = "Separate speech from background music")]
struct Cli {
    /// JSON configuration; fields left out take the profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in configuration profile (`paper` or `desk`), used without --config.
    #[arg(long, global = true)]
    profile: Option<Profile>,

    #[command(flatten)]
    overrides: Overrides,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    lambda_scale: Option<f64>,
    #[arg(long, global = true)]
    mask_gain: Option<f64>,
    #[arg(long, global = true)]
    mask_alpha: Option<f64>,
    #[arg(long, global = true)]
    rpca_tol: Option<f64>,
    #[arg(long, global = true)]
    rpca_max_iter: Option<usize>,
    /// Number of latent nodes.
    #[arg(long, global = true)]
    nodes: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Seed for shuffling, sampling and model initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a directory of WAV files, writing checkpoints and loss reports.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Disable the KL term (plain autoencoder).
        #[arg(long)]
        no_kl: bool,
    },
    /// Estimate the number of latent nodes from the data distribution.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Separate speech from one WAV file.
    Separate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        stages: Stages,
        /// Write intermediate spectrograms to this directory.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Score separation of `<name>_mix.wav` against `<name>_speech.wav` pairs.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        test_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        stages: Stages,
    },
    /// Generate a synthetic speech/music corpus.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        clip_seconds: f64,
        #[arg(long, default_value_t = 10)]
        train_speech: usize,
        #[arg(long, default_value_t = 10)]
        train_mixed: usize,
        #[arg(long, default_value_t = 10)]
        test_clips: usize,
        #[arg(long, default_value_t = 0.0)]
        snr_db: f64,
        #[arg(long, default_value_t = 10.0)]
        train_snr_db: f64,
    },
}

#[derive(Args)]
struct Stages {
    /// Feed the mixture magnitude straight to the enhancement stage.
    #[arg(long)]
    bypass_vae: bool,
    /// Use an all-ones mask instead of the RPCA soft mask.
    #[arg(long)]
    mask_ones: bool,
    /// Output the model reconstruction without RPCA enhancement.
    #[arg(long)]
    skip_rpca: bool,
}

impl Stages {
    fn options(&self) -> SeparateOptions {
        SeparateOptions {
            bypass_vae: self.bypass_vae,
            mask_ones: self.mask_ones,
            skip_rpca: self.skip_rpca,
        }
    }
}

fn build_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match (&cli.config, cli.profile) {
        (Some(path), _) => PipelineConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        (None, profile) => PipelineConfig::for_profile(profile.unwrap_or(Profile::Paper)),
    };
    let o = &cli.overrides;
    if let Some(v) = o.lambda_scale {
        cfg.rpca.lambda_scale = v;
    }
    if let Some(v) = o.mask_gain {
        cfg.mask.gain = v;
    }
    if let Some(v) = o.mask_alpha {
        cfg.mask.alpha = v;
    }
    if let Some(v) = o.rpca_tol {
        cfg.rpca.tol = v;
    }
    if let Some(v) = o.rpca_max_iter {
        cfg.rpca.max_iter = v;
    }
    if let Some(v) = o.nodes {
        cfg.model.num_nodes = v;
    }
    if let Some(v) = o.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = o.seed {
        cfg.train.seed = v;
        cfg.model_seed = v;
        cfg.analyze.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let mut cfg = build_config(cli)?;
    match &cli.command {
        Command::Train { data, out, no_kl } => {
            if *no_kl {
                cfg.train = cfg.train.without_kl();
            }
            let summary = cmd_train(&cfg, data, out)?;
            match summary.window.selected_epoch {
                Some(e) => {
                    println!("separation window {:?}, selected epoch {e}", summary.window.spans);
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    println!("no separation window found; see {}", out.join("window.csv").display());
                    Ok(ExitCode::from(2))
                }
            }
        }
        Command::Analyze { data, out } => {
            let report = cmd_analyze(&cfg, data, out)?;
            println!(
                "clusters {} -> K = {} (K_safe = {})",
                report.estimate.clusters, report.estimate.k, report.estimate.k_safe
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Separate {
            checkpoint,
            input,
            output,
            stages,
            dump,
        } => {
            cmd_separate(
                &cfg,
                checkpoint.as_deref(),
                input,
                output,
                stages.options(),
                dump.as_deref(),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate {
            checkpoint,
            test_dir,
            out,
            stages,
        } => {
            let report = cmd_evaluate(&cfg, checkpoint.as_deref(), test_dir, out, stages.options())?;
            println!(
                "mean SI-SDR: mixture {:.2} dB, separated {:.2} dB, improvement {:.2} dB",
                report.mean_mixture(),
                report.mean_separated(),
                report.mean_improvement()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::SynthData {
            out,
            clip_seconds,
            train_speech,
            train_mixed,
            test_clips,
            snr_db,
            train_snr_db,
        } => {
            let synth = SynthConfig {
                clip_seconds: *clip_seconds,
                train_speech: *train_speech,
                train_mixed: *train_mixed,
                test_clips: *test_clips,
                snr_db: *snr_db,
                train_snr_db: *train_snr_db,
                seed: cli.overrides.seed.unwrap_or(0),
                ..SynthConfig::default()
            };
            cmd_synth_data(&synth, out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

