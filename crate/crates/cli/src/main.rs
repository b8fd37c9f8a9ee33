use std::path::PathBuf;
use std::process::ExitCode;

use ath_cli::commands::{self, EvalArgs, GraphWhich, SynthArgs};
use ath_cli::config::{parse_override, read_config_file, Setting};
use ath_cli::{init_threads, CliResult, RunConfig};
use ath_core::data::MatrixFormat;
use ath_core::{Direction, SynthSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ath", version, about = "Asymmetric transfer hashing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration sources, applied in order: file, `--set`, then the
/// dedicated flags.
#[derive(Args, Clone, Debug, Default)]
struct ConfigArgs {
    /// key=value config file (a run manifest works too)
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set lambda=0.5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    target: Option<String>,
    /// U, M, S or K
    #[arg(long)]
    variant: Option<String>,
    #[arg(long, short = 'r')]
    code_length: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, short)]
    output: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut settings: Vec<Setting> = match &self.config {
            Some(p) => read_config_file(p)?,
            None => Vec::new(),
        };
        for s in &self.set {
            settings.push(parse_override(s)?);
        }
        let flags = [
            ("source", self.source.clone()),
            ("target", self.target.clone()),
            ("variant", self.variant.clone()),
            ("code_length", self.code_length.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("output", self.output.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                settings.push(parse_override(&format!("{key}={v}"))?);
            }
        }
        RunConfig::resolve(&settings)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Text,
    Binary,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DirectionArg {
    CrossDomain,
    WithinTarget,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WhichArg {
    Source,
    Target,
    Bipartite,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-domain task
    GenSynth {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 500)]
        n_source: usize,
        #[arg(long, default_value_t = 300)]
        n_target: usize,
        #[arg(long, default_value_t = 10)]
        latent_dim: usize,
        #[arg(long, default_value_t = 40)]
        source_dim: usize,
        #[arg(long, default_value_t = 25)]
        target_dim: usize,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        query_count: Option<usize>,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
    },
    /// Train a model and write it with its manifest and trace
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Rank held-out target queries and report MAP
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short)]
        model: PathBuf,
        #[arg(long, value_enum)]
        direction: Option<DirectionArg>,
        /// Write the precision-recall curve here
        #[arg(long)]
        pr: Option<PathBuf>,
        /// Write per-query average precision here
        #[arg(long)]
        per_query: Option<PathBuf>,
    },
    /// Track 1-NN pseudo-label accuracy across training iterations
    Diagnose {
        #[command(flatten)]
        config: ConfigArgs,
        /// CSV destination (default: <output>/diagnose.csv)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a graph as "i j w" lines
    DumpGraph {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum)]
        which: WhichArg,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match cli.command {
        Command::GenSynth {
            out,
            classes,
            n_source,
            n_target,
            latent_dim,
            source_dim,
            target_dim,
            noise,
            seed,
            query_count,
            format,
        } => commands::gen_synth(&SynthArgs {
            spec: SynthSpec {
                class_count: classes,
                n_source,
                n_target,
                latent_dim,
                source_dim,
                target_dim,
                noise_sigma: noise,
                seed,
                query_count,
            },
            format: match format {
                FormatArg::Text => MatrixFormat::Text,
                FormatArg::Binary => MatrixFormat::Binary,
            },
            out,
        }),
        Command::Train { config } => commands::train(&config.resolve()?),
        Command::Eval {
            config,
            model,
            direction,
            pr,
            per_query,
        } => commands::eval(
            &config.resolve()?,
            &EvalArgs {
                model,
                direction: direction.map(|d| match d {
                    DirectionArg::CrossDomain => Direction::CrossDomain,
                    DirectionArg::WithinTarget => Direction::WithinTarget,
                }),
                pr_csv: pr,
                per_query_csv: per_query,
            },
        ),
        Command::Diagnose { config, out } => commands::diagnose(&config.resolve()?, out.as_deref()),
        Command::DumpGraph { config, which, out } => {
            let which = match which {
                WhichArg::Source => GraphWhich::Source,
                WhichArg::Target => GraphWhich::Target,
                WhichArg::Bipartite => GraphWhich::Bipartite,
            };
            commands::dump_graph(&config.resolve()?, which, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code())
        }
    }
}
