use std::path::PathBuf;
use std::process::ExitCode;

use altisr_core::harness::{self, Profile, RunConfig};
use altisr_core::srnet::TrainMode;
use altisr_core::{par, Result};
use clap::{Args, Parser, Subcommand};

/// Altitude-aware super-resolution experiments on synthetic drone imagery.
#[derive(Parser)]
#[command(name = "altisr", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Default parameter set.
    #[arg(long, global = true)]
    profile: Option<Profile>,
    /// TOML file overriding profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a single key, e.g. `--set channels=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
    #[arg(long, global = true)]
    pairs_root: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    report_dir: Option<PathBuf>,
    /// Worker threads (also read from ALTISR_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic multi-altitude dataset.
    Gen,
    /// Register LR/HR samples into aligned patch pairs.
    Preprocess,
    /// Score bicubic upsampling on the test split.
    EvalBaseline,
    /// Train the plain network.
    Train {
        #[arg(long, default_value = "pretrain")]
        mode: TrainMode,
        /// Altitude for `finetune-alt`, meters.
        #[arg(long)]
        alt: Option<f64>,
    },
    /// Train the altitude-aware network.
    TrainAal,
    /// Meta-train from the pretrained checkpoint.
    MetaTrain {
        /// Altitudes held out for testing; defaults to the configured ones.
        #[arg(long, value_delimiter = ',')]
        exclude_alts: Option<Vec<f64>>,
    },
    /// One-shot adaptation of the meta-trained model at one altitude.
    Adapt {
        #[arg(long)]
        alt: f64,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Assemble result tables and PSD summaries.
    Report,
}

fn resolve(c: &Common) -> Result<RunConfig> {
    let mut set = Vec::new();
    if let Some(s) = c.seed {
        set.push(format!("seed={s}"));
    }
    for (key, path) in [
        ("data_root", &c.data_root),
        ("pairs_root", &c.pairs_root),
        ("checkpoint_dir", &c.checkpoint_dir),
        ("report_dir", &c.report_dir),
    ] {
        if let Some(p) = path {
            set.push(format!("{key}={:?}", p.display().to_string()));
        }
    }
    set.extend(c.set.iter().cloned());
    RunConfig::resolve(c.profile, c.config.as_deref(), &set)
}

fn print_rows(rows: &[harness::ResultRow]) {
    for r in rows {
        println!(
            "{:<16} {:>6} m  {:<12} PSNR {:>8.3} dB  SSIM {:.4}  GMSD {:.4}",
            r.method, r.altitude_m, r.scene, r.psnr_db, r.ssim, r.gmsd
        );
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.common.threads {
        par::set_threads(n);
    }
    let cfg = resolve(&cli.common)?;
    match &cli.command {
        Command::Gen => {
            let s = harness::cmd_generate(&cfg)?;
            println!(
                "{} samples, {} files, manifest {}",
                s.samples,
                s.files,
                s.manifest.display()
            );
        }
        Command::Preprocess => {
            let s = harness::cmd_preprocess(&cfg)?;
            println!("altitude_m patches kept dropped_ncc failures mean_ncc");
            for a in &s.altitudes {
                println!(
                    "{:>10} {:>7} {:>4} {:>11} {:>8} {:.4}",
                    a.altitude_m,
                    a.patches,
                    a.kept,
                    a.dropped_ncc,
                    a.registration_failures,
                    a.mean_ncc
                );
            }
            println!(
                "{} pairs written under {}",
                s.pairs,
                cfg.pairs_root.display()
            );
        }
        Command::EvalBaseline => print_rows(&harness::cmd_eval_baseline(&cfg)?),
        Command::Train { mode, alt } => print_rows(&harness::cmd_train(&cfg, *mode, *alt)?),
        Command::TrainAal => print_rows(&harness::cmd_train_aal(&cfg)?),
        Command::MetaTrain { exclude_alts } => {
            let exclude = exclude_alts
                .clone()
                .unwrap_or_else(|| cfg.meta_test_alts.clone());
            let s = harness::cmd_meta_train(&cfg, &exclude)?;
            println!(
                "meta-trained on {:?} m for {} iterations (best {:?})",
                s.train_altitudes, s.iterations, s.best_iteration
            );
        }
        Command::Adapt { alt, steps } => print_rows(&harness::cmd_adapt(&cfg, *alt, *steps)?),
        Command::Report => {
            let s = harness::cmd_report(&cfg)?;
            for f in &s.files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code(&e) as u8)
        }
    }
}
