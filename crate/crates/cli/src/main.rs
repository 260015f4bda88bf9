use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gabo_cli::{exit, grid, log_level, tools, train, CliResult};
use gabo_core::graph_data::{LabelRule, SynthConfig};

/// Learned graph augmentation trained by bilevel optimization.
#[derive(Debug, Parser)]
#[command(name = "gabo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model from an experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a generation × transform grid and write a CSV matrix.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run a single seed instead of the grid's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Runs in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Split a dataset into train / pseudo-val / val / test index lists.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        /// Split config JSON (`scheme`, `fractions`).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic motif dataset.
    Synth {
        /// Synth config JSON; the size flags are ignored when given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 2000)]
        n_graphs: usize,
        #[arg(long, default_value_t = 10)]
        min_nodes: usize,
        #[arg(long, default_value_t = 24)]
        max_nodes: usize,
        #[arg(long, default_value_t = 0.1)]
        noise_rate: f64,
    },
    /// Dump per-node centrality features as JSON lines.
    Features {
        #[arg(long)]
        dataset: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check gradients and hypergradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random instances per op.
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
}

fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Train { config, out, seed } => {
            let summary = train::cmd_train(&config, seed, out.as_deref())?;
            println!(
                "{}",
                serde_json::to_string(&summary).map_err(gabo_cli::CliError::failure)?
            );
        }
        Command::Grid {
            config,
            out,
            seed,
            jobs,
        } => {
            let cells = grid::cmd_grid(&config, &out, seed, jobs)?;
            print!("{}", grid::render_csv(&cells));
        }
        Command::Split {
            dataset,
            config,
            seed,
            out,
        } => {
            let s = tools::cmd_split(&dataset, config.as_deref(), seed, &out)?;
            println!("split sizes {:?} written to {}", s.sizes(), out.display());
        }
        Command::Synth {
            config,
            out,
            seed,
            n_graphs,
            min_nodes,
            max_nodes,
            noise_rate,
        } => {
            let fallback = SynthConfig {
                n_graphs,
                nodes_range: (min_nodes, max_nodes),
                label_rule: LabelRule::default(),
                noise_rate,
                seed: 0,
            };
            let n = tools::cmd_synth(config.as_deref(), fallback, seed, &out)?;
            println!("{n} graphs written to {}", out.display());
        }
        Command::Features { dataset, out } => {
            let n = match out {
                Some(path) => {
                    let file = std::fs::File::create(&path).map_err(|e| {
                        gabo_cli::CliError::failure(
                            anyhow::Error::from(e).context(path.display().to_string()),
                        )
                    })?;
                    let mut w = std::io::BufWriter::new(file);
                    let n = tools::cmd_features(&dataset, &mut w)?;
                    w.flush().map_err(gabo_cli::CliError::failure)?;
                    n
                }
                None => tools::cmd_features(&dataset, std::io::stdout().lock())?,
            };
            log::info!("{n} node rows");
        }
        Command::Gradcheck { seed, instances } => {
            let lines = tools::cmd_gradcheck(seed, instances)?;
            for l in &lines {
                println!("{}", tools::render_check(l));
            }
            if lines.iter().any(|l| !l.passed) {
                return Ok(exit::FAILURE);
            }
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let level = match log_level(std::env::var("GABO_LOG").ok().as_deref()) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.code);
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
