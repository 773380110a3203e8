//! Command-line front end: config handling, exit codes and the experiment
//! drivers behind every subcommand.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Train a generator and write checkpoints plus a metrics log.
    Train,
    /// Test-set PSNR table and image grids.
    Reconstruct,
    /// Corrupt test images, reconstruct them, report SSIM per noise level.
    Denoise,
    /// Vary single active latent coordinates and render the results.
    Traverse,
    /// Per-class mean activation of latent coordinates.
    Heatmap,
    /// Accuracy of a classifier trained on inferred latent codes.
    ClassifyLatent,
    /// Accuracy of an image classifier on reconstructions of noisy images.
    ClassifyNoisy,
    /// Test-set latent codes as CSV.
    ExportLatents,
    /// Numerical self-checks of the prior and network gradients.
    VerifyMath,
    /// List every configuration key with its default.
    Keys,
}

#[derive(Debug, Parser)]
#[command(name = "ssgen", version, about = "Sparse latent generator: training and experiments")]
pub struct Cli {
    pub command: Command,
    /// Config file of key=value lines.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Overrides as `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    pub overrides: Vec<String>,
}

/// Merges the config file and overrides, in that order.
pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.merge_file(path)?;
    }
    cfg.merge_flags(&cli.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<(), CliError> {
    use commands as c;
    match command {
        Command::Train => {
            let s = c::train(cfg)?;
            println!("trained {} epochs; checkpoint {}", s.epochs.len(), s.checkpoint.display());
        }
        Command::Reconstruct => {
            let s = c::reconstruct(cfg)?;
            println!(
                "{} images: mean PSNR {:.3} dB, MSE {:.5}, active fraction {:.4}",
                s.images, s.mean_psnr, s.mean_mse, s.active_fraction
            );
        }
        Command::Denoise => {
            for r in c::denoise(cfg)? {
                println!(
                    "sigma {:.2}: SSIM(noisy, recon) {:.4}  SSIM(clean, recon) {:.4}  PSNR(clean, recon) {:.2}",
                    r.sigma, r.ssim_noisy, r.ssim_clean, r.psnr_clean
                );
            }
        }
        Command::Traverse => {
            for p in c::traverse(cfg)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Heatmap => {
            let m = c::heatmap(cfg)?;
            println!("classes present: {}", m.rows.iter().filter(|r| r.is_some()).count());
        }
        Command::ClassifyLatent => {
            let a = c::classify_latent(cfg)?;
            println!("K={} accuracy {:.4}", a.latent_dim, a.accuracy);
        }
        Command::ClassifyNoisy => {
            let s = c::classify_noisy(cfg)?;
            println!("clean accuracy {:.4}", s.clean);
            for r in s.rows {
                println!(
                    "sigma {:.2}: reconstructed {:.4}  noisy {:.4}",
                    r.sigma, r.reconstructed, r.direct
                );
            }
        }
        Command::ExportLatents => {
            println!("wrote {}", c::export_latents(cfg)?.display());
        }
        Command::VerifyMath => {
            let r = c::verify_math()?;
            for line in r.lines() {
                println!("{line}");
            }
            if !r.passes() {
                return Err(CliError::Other("a numerical self-check exceeded its limit".into()));
            }
        }
        Command::Keys => {
            for (k, v, doc) in config::SCHEMA {
                println!("{k:<20} {v:<14} {doc}");
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = load_config(&cli).and_then(|cfg| execute(cli.command, &cfg));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
