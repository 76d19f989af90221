use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use stconv_cli::{
    configure_threads, exit_code, run_bench, run_eval, run_stip, run_synth, run_train, BenchSize, RunConfig, Side, UsageError,
    THREADS_ENV,
};
use stconv_core::dataio::DirectorySource;
use stconv_core::metrics::ReportFormat;

/// Spatiotemporal video classification: a factorized 3D CNN fused with Harris-3D interest-point features.
#[derive(Debug, Parser)]
#[command(name = "stconv", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file with flat dotted keys, e.g. {"model.lr": 0.001}; flags override it
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed for data generation, vocabulary fitting, initialization and shuffling [default: 0]
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Report format [default: json]
    #[arg(long, global = true, value_parser = ["json", "csv"])]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset directory or manifest file [default: data]
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Train/test split id [default: 1]
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    split: Option<u8>,
    /// Fraction of each class placed on the test side [default: 0.2]
    #[arg(long, value_name = "F")]
    test_fraction: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic motion dataset (RVID clips plus manifest.json) in --out
    Synth {
        /// Number of motion classes [default: 5]
        #[arg(long)]
        classes: Option<usize>,
        /// Clips per class [default: 40]
        #[arg(long)]
        clips_per_class: Option<usize>,
        /// Clip extents TxHxW [default: 8x32x32]
        #[arg(long, value_parser = parse_dims)]
        dims: Option<[usize; 3]>,
        /// Half-width of the uniform background noise [default: 0.05]
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Detect interest points and write stips.jsonl to --out
    Stip {
        #[command(flatten)]
        data: DataArgs,
        /// Only this clip id
        #[arg(long)]
        clip: Option<String>,
        /// Include the 96-value descriptors
        #[arg(long)]
        descriptors: bool,
    },
    /// Fit the vocabulary and train the hybrid model on the training side of a split
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Training epochs [default: 30]
        #[arg(long)]
        epochs: Option<usize>,
        /// Adam learning rate [default: 0.001]
        #[arg(long)]
        lr: Option<f64>,
        /// Clips per batch [default: 5]
        #[arg(long)]
        batch_size: Option<usize>,
        /// Vocabulary size K [default: 64]
        #[arg(long)]
        bow_dim: Option<usize>,
    },
    /// Evaluate a trained model and print the per-class report
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// Directory holding model.stcv and codebook.json [default: the --out directory]
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
        /// Which side of the split to score [default: test]
        #[arg(long, value_parser = ["test", "train"])]
        side: Option<String>,
    },
    /// Compare dense and factorized convolution: analytic FLOPs and median wall time
    Bench {
        /// Timed runs per measurement [default: 5]
        #[arg(long)]
        repeats: Option<usize>,
        /// Layer size N,CIN,COUT,T,H,W,K; repeatable [default: 1,16,16,16,64,64,3]
        #[arg(long = "size", value_parser = parse_size)]
        sizes: Vec<BenchSize>,
    },
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|_| format!("expected TxHxW, got `{s}`"))
}

fn parse_size(s: &str) -> Result<BenchSize, String> {
    s.parse::<BenchSize>().map_err(|e| e.0)
}

fn config_keys_help() -> String {
    let mut text = String::from("Config keys (flat dotted JSON keys) and defaults:\n");
    for (key, value) in RunConfig::flat_defaults() {
        text.push_str(&format!("  {key} = {value}\n"));
    }
    text.push_str(&format!(
        "\nEnvironment:\n  {THREADS_ENV}  worker threads for per-clip work [default: available cores]\n  RUST_LOG        log filter [default: info]\n\nExit codes: 0 success, 2 usage, 3 data/format, 4 non-finite training"
    ));
    text
}

fn apply_data(cfg: &mut RunConfig, d: DataArgs) {
    if let Some(v) = d.data {
        cfg.data.dir = v;
    }
    if let Some(v) = d.split {
        cfg.data.split = v;
    }
    if let Some(v) = d.test_fraction {
        cfg.data.test_fraction = v;
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = cli.common.out {
        cfg.out = out;
    }
    if let Some(f) = &cli.common.format {
        cfg.format = f.parse::<ReportFormat>().map_err(|e| UsageError(e.to_string()))?;
    }
    let threads = configure_threads()?;
    log::debug!("{threads} worker threads");

    let stdout = &mut std::io::stdout().lock();
    match cli.command {
        Command::Synth {
            classes,
            clips_per_class,
            dims,
            noise,
        } => {
            let s = &mut cfg.synth;
            s.classes = classes.unwrap_or(s.classes);
            s.clips_per_class = clips_per_class.unwrap_or(s.clips_per_class);
            s.dims = dims.unwrap_or(s.dims);
            s.noise = noise.unwrap_or(s.noise);
            let outcome = run_synth(&cfg)?;
            writeln!(stdout, "{}", outcome.manifest_path.display())?;
        }
        Command::Stip { data, clip, descriptors } => {
            apply_data(&mut cfg, data);
            let source = open(&cfg)?;
            let (path, total) = run_stip(&cfg, &source, clip.as_deref(), descriptors)?;
            writeln!(stdout, "{total} interest points -> {}", path.display())?;
        }
        Command::Train {
            data,
            epochs,
            lr,
            batch_size,
            bow_dim,
        } => {
            apply_data(&mut cfg, data);
            let m = &mut cfg.model;
            m.epochs = epochs.unwrap_or(m.epochs);
            m.lr = lr.unwrap_or(m.lr);
            m.batch_size = batch_size.unwrap_or(m.batch_size);
            m.bow_dim = bow_dim.unwrap_or(m.bow_dim);
            let source = open(&cfg)?;
            let outcome = run_train(&cfg, &source)?;
            let last = outcome.log.last().map_or(f64::NAN, |l| l.mean_loss);
            writeln!(
                stdout,
                "trained on {} clips ({} test clips held out); final loss {last:.4} -> {}",
                outcome.train_ids.len(),
                outcome.test_ids.len(),
                outcome.checkpoint.display()
            )?;
        }
        Command::Eval { data, model, side } => {
            apply_data(&mut cfg, data);
            if let Some(side) = side {
                cfg.data.side = if side == "train" { Side::Train } else { Side::Test };
            }
            let model_dir = model.unwrap_or_else(|| cfg.out.clone());
            let source = open(&cfg)?;
            let outcome = run_eval(&cfg, &source, &model_dir)?;
            write!(stdout, "{}", outcome.report)?;
            eprintln!("accuracy {:.4} ({} clips)", outcome.accuracy, outcome.ids.len());
        }
        Command::Bench { repeats, sizes } => {
            cfg.bench.repeats = repeats.unwrap_or(cfg.bench.repeats);
            if !sizes.is_empty() {
                cfg.bench.sizes = sizes;
            }
            let report = run_bench(&cfg)?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?;
        }
    }
    Ok(())
}

fn open(cfg: &RunConfig) -> Result<DirectorySource> {
    DirectorySource::open(&cfg.data.dir).with_context(|| format!("opening dataset {}", cfg.data.dir.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let matches = Cli::command().after_long_help(config_keys_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
