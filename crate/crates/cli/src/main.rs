use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "dgcvc", version, about = "Zero-shot voice conversion pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic toy corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        speakers: usize,
        #[arg(long, default_value_t = 20)]
        utts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pretrain the speaker-verification model.
    TrainAsv {
        config: PathBuf,
    },
    /// Train a conversion system.
    TrainVc {
        config: PathBuf,
        #[arg(long)]
        variant: String,
        #[arg(long)]
        asv: Option<PathBuf>,
        /// Accept an ASV checkpoint produced under a different configuration.
        #[arg(long)]
        force: bool,
    },
    /// Convert one utterance to the voice of a reference utterance.
    Convert {
        #[arg(long)]
        src: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Output WAV; the mel frames go next to it as `<stem>.mel.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a manifest of conversion pairs.
    Evaluate {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Configuration expected to match the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Proceed despite differing configuration hashes.
        #[arg(long)]
        force: bool,
        /// Allow source or target speakers seen during training.
        #[arg(long)]
        allow_seen: bool,
    },
    /// Export D-vectors for a manifest of utterances.
    Embed {
        #[arg(long)]
        utts: PathBuf,
        #[arg(long)]
        asv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project an embedding table to 2-D.
    Project {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "pca")]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return commands::report(&commands::CliError::Usage(first.to_owned()));
        }
    };
    let result = match cli.command {
        Command::Synth { out, speakers, utts, seed } => commands::synth(&out, speakers, utts, seed),
        Command::TrainAsv { config } => commands::train_asv(&config),
        Command::TrainVc { config, variant, asv, force } => commands::train_vc(&config, &variant, asv.as_deref(), force),
        Command::Convert { src, reference, ckpt, out } => commands::convert(&src, &reference, &ckpt, &out),
        Command::Evaluate { pairs, ckpt, out, config, force, allow_seen } => {
            commands::evaluate(&pairs, &ckpt, &out, config.as_deref(), force, allow_seen)
        }
        Command::Embed { utts, asv, out } => commands::embed(&utts, &asv, &out),
        Command::Project { input, method, out } => commands::project(&input, &method, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => commands::report(&e),
    }
}
