use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser, Debug)]
#[command(
    name = "glitchvit",
    version,
    about = "Gravitational-wave glitch classification with a ViT-B/32 backbone"
)]
struct Cli {
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a constant-Q glitch image from a strain file.
    Qscan {
        #[arg(long)]
        strain: PathBuf,
        #[arg(long = "event-gps")]
        event_gps: f64,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a manifest from a `<root>/<label>/<image>` tree.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign unassigned manifest entries to train/val/test.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output manifest (default: rewrite the input).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cap a class before splitting, as LABEL:COUNT. Repeatable.
        #[arg(long, value_name = "LABEL:CAP")]
        balance: Vec<String>,
    },
    /// Train the classifier head on a frozen encoder.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long = "learning-rate")]
        learning_rate: Option<f64>,
        #[arg(long = "batch-size")]
        batch_size: Option<usize>,
    },
    /// Evaluate a trained head on the test split.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        head: PathBuf,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Print the five most probable classes for one image.
    Predict {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        head: PathBuf,
    },
    /// Write a synthetic strain file with one injected glitch.
    Synth {
        /// Blip, Chirp, Line or No_Glitch.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render a synthetic labeled image tree.
    SynthDataset {
        #[arg(long)]
        root: PathBuf,
        #[arg(long = "per-class")]
        per_class: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write randomly initialized encoder weights.
    InitWeights {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare the forward pass against exported reference activations.
    CheckGoldens {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        goldens: PathBuf,
        #[arg(long)]
        head: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli.command, cli.config.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already embed their source in the message.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
