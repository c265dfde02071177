use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use dma_uplink::channel_file::ChannelFormat;
use dma_uplink::config::ExperimentConfig;
use dma_uplink::geometry::ArchitectureKind;
use dma_uplink::harness::{export_channels, run_experiment, write_results};
use dma_uplink::summary::{pretty_table, read_summary_inputs, summarize, summarize_rows, summary_csv};
use dma_uplink::{Error, Result};

#[derive(Parser)]
#[command(name = "dma-uplink", version, about = "Uplink sum-rate and energy-efficiency simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment configuration; defaults apply to missing keys.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set users=2 --set dma.quality=12`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Binary,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo experiment and write per-trial results.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Results CSV; a `.config.toml` snapshot is written next to it.
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the grouped summary table here.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Group a results CSV by front end and transmit power.
    Summarize {
        input: PathBuf,
        /// Write the summary as CSV instead of printing a table.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Sample the configured channels for one architecture and save them.
    ExportChannels {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long, value_parser = parse_architecture)]
        architecture: ArchitectureKind,
        #[arg(short, long)]
        output: PathBuf,
        /// File format; inferred from the extension when omitted.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Check a configuration and print it with defaults filled in.
    ValidateConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn parse_architecture(s: &str) -> std::result::Result<ArchitectureKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            output,
            summary,
            threads,
        } => {
            let cfg = config.load()?;
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            }
            let results = run_experiment(&cfg)?;
            for p in write_results(&output, &cfg, &results)? {
                info!("wrote {}", p.display());
            }
            if !results.aborts.is_empty() {
                error!("{} front-end trials aborted; see the .aborts.csv sidecar", results.aborts.len());
            }
            let table = summarize_rows(&results.rows);
            if let Some(path) = summary {
                write_file(&path, &summary_csv(&table)?)?;
            }
            print!("{}", pretty_table(&table));
        }
        Command::Summarize { input, output } => {
            let data = std::fs::read(&input).map_err(|e| Error::Io { path: input.clone(), source: e })?;
            let table = summarize(&read_summary_inputs(&data)?);
            match output {
                Some(path) => write_file(&path, &summary_csv(&table)?)?,
                None => print!("{}", pretty_table(&table)),
            }
        }
        Command::ExportChannels {
            config,
            architecture,
            output,
            format,
        } => {
            let cfg = config.load()?;
            let format = match format {
                Some(Format::Binary) => ChannelFormat::Binary,
                Some(Format::Csv) => ChannelFormat::Csv,
                None => ChannelFormat::from_path(&output),
            };
            let n = export_channels(&cfg, architecture, &output, format)?;
            info!("wrote {n} channel matrices to {}", output.display());
        }
        Command::ValidateConfig { config } => {
            let cfg = config.load()?;
            print!("{}", cfg.to_toml()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
