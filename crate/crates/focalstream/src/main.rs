use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use focalstream::commands::{self, AuditOptions, DistillOptions, StageSelect};
use focalstream::error::exit;
use focalstream::{CliError, RunConfig};

/// Streaming speech codec: encode, decode, audit and distill.
#[derive(Parser)]
#[command(name = "focalstream", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// key=value file with codec and run settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides a single key (repeatable); beats the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a randomly initialized model.
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// WAV to token file.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Feed the streaming session instead of encoding in one pass.
        #[arg(long)]
        stream: bool,
        #[arg(long, default_value_t = 20.0)]
        chunk_ms: f64,
    },
    /// Token file to WAV at the decoder output rate.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stream: bool,
    },
    /// Prints the latency table; optionally measures streaming throughput.
    Audit {
        /// Codec config (key=value); defaults to the desk config.
        #[arg(long)]
        model_config: Option<PathBuf>,
        /// Use trained weights for the benchmark.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        bench: bool,
        #[arg(long, default_value_t = 10.0)]
        bench_seconds: f64,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Runs distillation stages at desk scale.
    Distill {
        #[arg(long, default_value = "all")]
        stage: StageSelect,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_refiner: bool,
        #[arg(long)]
        no_stage4: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Codebook statistics of a token file.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn pairs(set: &[String], seed: Option<u64>) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for s in set {
        let (k, v) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = seed {
        out.push(("seed".into(), seed.to_string()));
    }
    Ok(out)
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Init { out: path, seed, cfg } => {
            let run = RunConfig::load(cfg.config.as_deref(), &pairs(&cfg.set, seed)?)?;
            commands::init(&run, &path, out)
        }
        Command::Encode { model, input, out: path, stream, chunk_ms } => {
            commands::encode(&model, &input, &path, stream.then_some(chunk_ms), out)
        }
        Command::Decode { model, input, out: path, stream } => commands::decode(&model, &input, &path, stream, out),
        Command::Audit { model_config, model, bench, bench_seconds, set } => {
            let run = RunConfig::load(model_config.as_deref(), &pairs(&set, None)?)?;
            let opts = AuditOptions { model: model.as_deref(), bench_seconds: bench.then_some(bench_seconds) };
            commands::audit(&run, &opts, out)
        }
        Command::Distill { stage, seed, no_refiner, no_stage4, out: dir, cfg } => {
            let run = RunConfig::load(cfg.config.as_deref(), &pairs(&cfg.set, seed)?)?;
            let opts = DistillOptions { stage, refiner: !no_refiner, stage4: !no_stage4, out_dir: &dir };
            commands::distill(&run, &opts, out).map(|_| ())
        }
        Command::Stats { input } => commands::stats(&input, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(exit::USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
