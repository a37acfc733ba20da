use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use usvsthem_cli::config::OUT_ENV;
use usvsthem_cli::{run, CliError, Command, Context, PipelineConfig};
use usvsthem_model::{MainTask, Setup};

#[derive(Parser, Debug)]
#[command(name = "usvsthem", version, about = "Us-vs-Them rhetoric pipeline")]
struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides USVSTHEM_OUT and `out_dir`.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated training seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Concurrent training jobs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Download comments from the archive (or a local response directory).
    Ingest,
    /// Keyword, length and bias filtering plus stratified sampling.
    Filter {
        #[arg(long)]
        per_cell: Option<usize>,
        #[arg(long)]
        sample_seed: Option<u64>,
    },
    /// Annotation quality scores and worker/unit removal.
    Quality {
        #[arg(long)]
        wqs_min: Option<f64>,
        #[arg(long)]
        uqs_min: Option<f64>,
    },
    /// Build the labelled dataset and its splits.
    Aggregate {
        #[arg(long)]
        split_seed: Option<u64>,
    },
    /// Statistical report over the labelled dataset.
    Analyze,
    /// Train every main task × setup × seed.
    Train(TrainArgs),
    /// Significance of each setup against the baseline.
    Compare {
        #[arg(long)]
        permutations: Option<usize>,
    },
    /// Hidden-layer t-SNE figures.
    Embed {
        #[arg(long, value_delimiter = ',')]
        setups: Option<Vec<Setup>>,
        #[arg(long)]
        model_seed: Option<u64>,
        #[arg(long)]
        max_points: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_delimiter = ',')]
    mains: Option<Vec<MainTask>>,
    #[arg(long, value_delimiter = ',')]
    setups: Option<Vec<Setup>>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Train on the built-in synthetic corpus instead of the dataset.
    #[arg(long)]
    synthetic: bool,
}

fn apply(cli: Cli) -> Result<(Command, PipelineConfig, PathBuf), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seeds {
        cfg.seeds = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    let cmd = match cli.command {
        Cmd::Ingest => Command::Ingest,
        Cmd::Filter { per_cell, sample_seed } => {
            cfg.filter.per_cell = per_cell.unwrap_or(cfg.filter.per_cell);
            cfg.filter.seed = sample_seed.unwrap_or(cfg.filter.seed);
            Command::Filter
        }
        Cmd::Quality { wqs_min, uqs_min } => {
            cfg.quality.wqs_min = wqs_min.unwrap_or(cfg.quality.wqs_min);
            cfg.quality.uqs_min = uqs_min.unwrap_or(cfg.quality.uqs_min);
            Command::Quality
        }
        Cmd::Aggregate { split_seed } => {
            cfg.aggregate.split_seed = split_seed.unwrap_or(cfg.aggregate.split_seed);
            Command::Aggregate
        }
        Cmd::Analyze => Command::Analyze,
        Cmd::Train(a) => {
            if let Some(m) = a.mains {
                cfg.train.mains = m;
            }
            if let Some(s) = a.setups {
                cfg.train.setups = s;
            }
            if a.epochs.is_some() {
                cfg.train.epochs = a.epochs;
            }
            if a.synthetic {
                cfg.train.source = usvsthem_cli::config::TrainSource::Synthetic;
            }
            Command::Train
        }
        Cmd::Compare { permutations } => {
            cfg.compare.permutations = permutations.unwrap_or(cfg.compare.permutations);
            Command::Compare
        }
        Cmd::Embed { setups, model_seed, max_points, iterations } => {
            if let Some(s) = setups {
                cfg.embed.setups = s;
            }
            if model_seed.is_some() {
                cfg.embed.model_seed = model_seed;
            }
            if max_points.is_some() {
                cfg.embed.max_points = max_points;
            }
            cfg.embed.tsne.iterations = iterations.unwrap_or(cfg.embed.tsne.iterations);
            Command::Embed
        }
    };
    let out = match (cli.out, std::env::var_os(OUT_ENV)) {
        (Some(o), _) => o,
        (None, Some(env)) => PathBuf::from(env),
        (None, None) => cfg.resolve(&cfg.out_dir),
    };
    Ok((cmd, cfg, out))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(CliError::EXIT_USAGE as u8) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    let result = apply(cli).and_then(|(cmd, cfg, out)| run(cmd, &Context::new(cfg, out)));
    match result {
        Ok(manifest) => {
            log::info!("manifest written to {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
