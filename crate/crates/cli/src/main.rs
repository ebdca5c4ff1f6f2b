//! `speakgen`: corpus synthesis, GAN training, direction fitting, latent
//! editing, probe sweeps and privacy audits as reproducible runs.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "speakgen", version, about = "Controllable artificial speaker embeddings")]
struct Cli {
    /// JSON run configuration; omitted sections use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed for every section without its own.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory for outputs, `config.json` and `manifest.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// One direction offset given as `k=value`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Offset {
    pub direction: usize,
    pub value: f32,
}

fn parse_offset(s: &str) -> Result<Offset, String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected k=value, got {s:?}"))?;
    let direction = k.trim().parse().map_err(|_| format!("bad direction index {k:?}"))?;
    let value: f32 = v.trim().parse().map_err(|_| format!("bad offset value {v:?}"))?;
    if !value.is_finite() {
        return Err(format!("offset {v:?} is not finite"));
    }
    Ok(Offset { direction, value })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Flip points of a binary probe.
    Flip,
    /// Min, max and range of a scalar probe.
    Range,
}

#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Command {
    /// Generate the synthetic corpus with planted attribute directions.
    SynthCorpus,
    /// Train the GAN on a corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Fit principal directions of a checkpoint's generator.
    Directions {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Generate one embedding from the seed's latent, moved along directions.
    Edit {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        /// Direction offset `k=value`; repeatable.
        #[arg(long = "offset", value_parser = parse_offset)]
        offsets: Vec<Offset>,
    },
    /// Sweep seeds along one direction and score them with a probe.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long, value_enum)]
        kind: SweepKind,
        /// Probe JSON; otherwise a probe is fitted on `--corpus`.
        #[arg(long)]
        probe: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Direction index; otherwise the one most correlated with the probe.
        #[arg(long)]
        direction: Option<usize>,
        /// Record this label for the swept direction in `registry.tsv`.
        #[arg(long)]
        label: Option<String>,
        /// Existing registry to extend.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Compare generated embeddings with a training corpus.
    Audit {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Similarity threshold; overrides the config and skips calibration.
        #[arg(long)]
        threshold: Option<f64>,
        /// Number of generated embeddings.
        #[arg(long)]
        generated: Option<usize>,
    },
    /// Re-execute a run from its manifest and verify every output hash.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out = cli
        .out
        .ok_or_else(|| CliError::Usage("--out <dir> is required".into()))?;
    if let Command::Replay { manifest } = &cli.command {
        if cli.config.is_some() || cli.seed.is_some() {
            return Err(CliError::Usage("replay takes its config and seed from the manifest".into()));
        }
        return commands::replay(manifest, &out);
    }
    let config = RunConfig::load(cli.config.as_deref(), cli.seed)?;
    let command = commands::absolutize(cli.command)?;
    commands::execute(&command, &config, &out).map(|_| ())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("speakgen: {e}");
            e.exit_code()
        }
    }
}
