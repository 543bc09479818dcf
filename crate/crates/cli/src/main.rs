use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use chromatic::dataset::write_libsvm;
use chromatic::encoders::{CollisionPolicy, EncoderKind};
use chromatic::synthetic::{generate, SyntheticConfig};
use chromatic_cli::config::ColoringMode;
use chromatic_cli::{Outcome, Pipeline, PipelineConfig};

#[derive(Parser)]
#[command(name = "chromatic", version, about = "Chromatic compression of sparse binary features")]
struct Cli {
    #[command(flatten)]
    opts: Options,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Options {
    /// JSON pipeline config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "artifacts")]
    out: PathBuf,
    /// libsvm input file.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Use the planted-structure generator (parameters from data.synthetic).
    #[arg(long, global = true)]
    synthetic: bool,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Co-occurrence threshold of the colored graph.
    #[arg(long, global = true)]
    k: Option<u32>,
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(long, global = true, value_enum)]
    encoder: Option<EncoderArg>,
    #[arg(long, global = true, value_enum)]
    policy: Option<PolicyArg>,
    #[arg(long, global = true, value_enum)]
    coloring: Option<ColoringArg>,
    /// Report budgets, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    /// Recompute the requested stages even if their artifacts exist.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Clsm,
    Clte,
    Clft,
    Ft,
    Ht,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    /// Drop the more popular of two colliding features.
    Popular,
    /// Keep the lowest feature id.
    Lowest,
}

#[derive(Clone, Copy, ValueEnum)]
enum ColoringArg {
    Greedy,
    Uniform,
}

#[derive(Subcommand)]
enum Command {
    /// Read (or generate) the dataset, split it and cache both halves.
    Ingest,
    /// Build the thresholded co-occurrence graph.
    Graph,
    /// Color the graph.
    Color,
    /// Good-Turing estimates, color budgets and collision diagnostics.
    Fidelity,
    /// Fit the configured encoder.
    Encode,
    /// Train and evaluate logistic regression on encoded data.
    Train,
    /// Loss, objective and fidelity series over the report budgets.
    Report,
    /// All stages in order.
    Run,
    /// Write a synthetic dataset as libsvm.
    Synth {
        #[arg(long)]
        output: PathBuf,
    },
    /// Print the resolved config.
    Config,
}

fn resolve(opts: &Options) -> Result<PipelineConfig> {
    let mut cfg = match &opts.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(input) = &opts.input {
        cfg.data.input = Some(input.clone());
        cfg.data.synthetic = None;
    }
    if opts.synthetic {
        cfg.data.input = None;
        cfg.data.synthetic.get_or_insert_with(SyntheticConfig::default);
    }
    if let Some(w) = opts.workers {
        cfg.workers = w;
    }
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(k) = opts.k {
        cfg.graph.k = k;
    }
    if let Some(b) = opts.budget {
        cfg.encoder.budget = b;
    }
    if let Some(e) = opts.encoder {
        cfg.encoder.kind = match e {
            EncoderArg::Clsm => EncoderKind::Clsm,
            EncoderArg::Clte => EncoderKind::Clte,
            EncoderArg::Clft => EncoderKind::Clft,
            EncoderArg::Ft => EncoderKind::Ft,
            EncoderArg::Ht => EncoderKind::Ht,
        };
    }
    if let Some(p) = opts.policy {
        cfg.encoder.policy = match p {
            PolicyArg::Popular => CollisionPolicy::DropMorePopular,
            PolicyArg::Lowest => CollisionPolicy::KeepLowestIndex,
        };
    }
    if let Some(c) = opts.coloring {
        cfg.coloring.mode = match c {
            ColoringArg::Greedy => ColoringMode::Greedy,
            ColoringArg::Uniform => ColoringMode::Uniform,
        };
    }
    if let Some(b) = &opts.budgets {
        cfg.report.budgets = b.clone();
    }
    Ok(cfg.resolve())
}

fn print(o: &Outcome) {
    let state = if o.reused { "up to date" } else { "written" };
    println!("{:<8} {} ({state})", o.stage.name(), o.path.display());
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = resolve(&cli.opts)?;

    match &cli.command {
        Command::Config => {
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            return Ok(());
        }
        Command::Synth { output } => {
            let s = cfg.data.synthetic.clone().unwrap_or_default();
            s.validate().map_err(anyhow::Error::msg)?;
            let file = std::fs::File::create(output).with_context(|| format!("creating {}", output.display()))?;
            write_libsvm(&generate(&s), std::io::BufWriter::new(file))?;
            println!("wrote {}", output.display());
            return Ok(());
        }
        _ => {}
    }

    let pl = Pipeline::new(cfg, &cli.opts.out, cli.opts.force)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(pl.cfg.workers)
        .build_global()
        .context("starting worker pool")?;
    let outcomes = match cli.command {
        Command::Ingest => vec![pl.ingest()?],
        Command::Graph => vec![pl.graph()?],
        Command::Color => vec![pl.color()?],
        Command::Fidelity => vec![pl.fidelity()?],
        Command::Encode => vec![pl.encode()?],
        Command::Train => vec![pl.train()?],
        Command::Report => vec![pl.report()?],
        Command::Run => pl.run_all()?,
        Command::Synth { .. } | Command::Config => unreachable!("handled above"),
    };
    for o in &outcomes {
        print(o);
        if o.stage == chromatic_cli::artifact::Stage::Report {
            println!("series   {}", pl.store.dir(o.stage, &o.digest).display());
        }
    }
    Ok(())
}
