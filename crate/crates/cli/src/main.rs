use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use corrkd::autodiff::OpKind;
use corrkd::dsp::NoiseKind;
use corrkd::verify::SuiteConfig;
use corrkd_cli::{AugmentArgs, ConfigFlags, CorpusSource, ProbeTarget};

#[derive(Parser)]
#[command(name = "corrkd", version, about = "Correlation-based distillation of noise-robust speech encoders")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct CorpusArgs {
    /// directory of 16-bit mono WAV files
    #[arg(long, value_name = "DIR", conflicts_with = "synthetic")]
    corpus: Option<PathBuf>,
    /// use the built-in seeded synthetic corpus
    #[arg(long)]
    synthetic: bool,
}

impl CorpusArgs {
    fn source(&self) -> Result<CorpusSource> {
        match (&self.corpus, self.synthetic) {
            (Some(dir), _) => Ok(CorpusSource::WavDir(dir.clone())),
            (None, true) => Ok(CorpusSource::Synthetic),
            (None, false) => bail!("pass --corpus DIR or --synthetic"),
        }
    }
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected CENTER_HZ:Q")?;
    Ok((
        a.parse().map_err(|e| format!("{a}: {e}"))?,
        b.parse().map_err(|e| format!("{b}: {e}"))?,
    ))
}

#[derive(Subcommand)]
enum Cmd {
    /// Distort one WAV file and report the resulting SNR
    Augment {
        #[arg(long = "in", value_name = "WAV")]
        input: PathBuf,
        #[arg(long = "out", value_name = "WAV")]
        output: PathBuf,
        /// additive noise: gaussian | white | pink | babble
        #[arg(long, requires = "snr")]
        kind: Option<NoiseKind>,
        /// target SNR of the additive noise, in [10, 20) dB
        #[arg(long, requires = "kind")]
        snr: Option<f64>,
        /// reverberation time of a synthetic room, seconds
        #[arg(long, value_name = "RT60_S")]
        reverb: Option<f64>,
        /// pitch shift in semitones
        #[arg(long, value_name = "SEMITONES", allow_hyphen_values = true)]
        pitch: Option<f64>,
        /// notch filter as CENTER_HZ:Q
        #[arg(long, value_name = "CENTER_HZ:Q", value_parser = parse_pair)]
        band_reject: Option<(f64, f64)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a student against the frozen teacher
    Distill {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// output directory for the run log and checkpoints
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigFlags,
    },
    /// Measure how well distortion type can be read off a model's embeddings
    Probe {
        /// student checkpoint (stem, .manifest or .bin)
        #[arg(long, value_name = "PATH", required_unless_present = "teacher")]
        checkpoint: Option<PathBuf>,
        /// probe the configured teacher instead of a checkpoint
        #[arg(long, conflicts_with = "checkpoint")]
        teacher: bool,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        config: ConfigFlags,
    },
    /// Finite-difference check of every loss gradient and the student forward pass
    Gradcheck {
        /// random batches per loss
        #[arg(long, default_value_t = 20)]
        cases: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, hide = true, value_name = "OP")]
        inject_sign_flip: Option<OpKind>,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Augment {
            input,
            output,
            kind,
            snr,
            reverb,
            pitch,
            band_reject,
            seed,
        } => {
            let args = AugmentArgs {
                noise: kind.zip(snr),
                reverb_rt60_s: reverb,
                pitch_semitones: pitch,
                band_reject,
                seed,
            };
            print_json(&corrkd_cli::augment(&input, &output, &args)?)
        }
        Cmd::Distill { corpus, out, config } => {
            let cfg = config.resolve()?;
            print_json(&corrkd_cli::distill(&cfg, &corpus.source()?, &out)?)
        }
        Cmd::Probe {
            checkpoint,
            teacher,
            corpus,
            config,
        } => {
            let cfg = config.resolve()?;
            let target = match (&checkpoint, teacher) {
                (Some(p), false) => ProbeTarget::Checkpoint(p),
                _ => ProbeTarget::Teacher,
            };
            print_json(&corrkd_cli::probe(&cfg, target, &corpus.source()?)?)
        }
        Cmd::Gradcheck {
            cases,
            tol,
            inject_sign_flip,
        } => {
            let report = corrkd_cli::gradcheck(&SuiteConfig {
                cases,
                tol,
                sign_fault: inject_sign_flip,
                ..SuiteConfig::default()
            })?;
            for o in &report.objectives {
                print_json(o)?;
            }
            if !report.passed() {
                let bad: Vec<String> = report
                    .objectives
                    .iter()
                    .flat_map(|o| o.failures.iter().map(move |f| format!("{}: {f}", o.objective)))
                    .collect();
                bail!("gradient check failed at tol {tol}:\n  {}", bad.join("\n  "));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
