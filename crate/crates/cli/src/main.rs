use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mabc_relay::experiment::{self, ExperimentSpec, Format};

#[derive(Parser)]
#[command(name = "mabc-relay", version, about = "Relay beamforming Monte Carlo sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a JSON experiment file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output file; defaults to `outputs.path` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutFormat>,
        #[arg(long, env = "MABC_RELAY_THREADS")]
        threads: Option<usize>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            format,
            threads,
            seed,
        } => run(config, out, format, threads, seed),
    }
}

fn run(
    config: PathBuf,
    out: Option<PathBuf>,
    format: Option<OutFormat>,
    threads: Option<usize>,
    seed: Option<u64>,
) -> ExitCode {
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(EXIT_IO);
        }
    };
    let mut spec = match ExperimentSpec::from_json(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let Some(path) = out.or_else(|| spec.outputs.as_ref().map(|o| PathBuf::from(&o.path))) else {
        eprintln!("error: no output path (use --out or outputs.path)");
        return ExitCode::from(EXIT_CONFIG);
    };
    let format = match format {
        Some(OutFormat::Csv) => Format::Csv,
        Some(OutFormat::Json) => Format::Json,
        None => spec.outputs.as_ref().map_or(Format::Csv, |o| o.format),
    };
    let table = match experiment::run(&spec, threads) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let written = File::create(&path).map_err(mabc_relay::Error::from).and_then(|f| {
        let mut w = BufWriter::new(f);
        experiment::write(&table, format, &mut w)?;
        w.flush()?;
        Ok(())
    });
    if let Err(e) = written {
        eprintln!("error: cannot write {}: {e}", path.display());
        return ExitCode::from(EXIT_IO);
    }
    ExitCode::SUCCESS
}
