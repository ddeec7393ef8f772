mod config;

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hyperdiff::checkpoint::Checkpoint;
use hyperdiff::graph::{read_graph_set, write_graph_set, GraphData, GraphSet};
use hyperdiff::graphgen::{gen_ba, gen_community, gen_ego, gen_fractal, gen_grid, gen_sbm};
use hyperdiff::metrics::evaluate;
use hyperdiff::pipeline::{denoiser_seed, fit_autoencoder_stage, AutoencoderStage, TrainedModel};
use hyperdiff::sampler::Conditioning;

use config::Settings;

/// Hyperbolic latent diffusion for graph generation.
#[derive(Debug, Parser)]
#[command(name = "hyperdiff", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", short = 's', value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker thread cap (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic graph set as JSONL.
    GenData {
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the autoencoder and cluster the embeddings.
    TrainAe {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the denoiser on top of an autoencoder checkpoint.
    TrainDiff {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample graphs from a trained model.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Condition every sample on the first graph of this JSONL file.
        #[arg(long)]
        scaffold: Option<PathBuf>,
    },
    /// Compare two graph sets; prints the report as JSON.
    Evaluate {
        reference: PathBuf,
        generated: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-step SNR of angular and white noise on embedded graphs, as CSV.
    Snr {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut settings = match &cli.common.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    settings.apply(&cli.common.overrides)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.common.threads.unwrap_or(0)).build()?;
    pool.install(|| dispatch(cli.command, &settings, cli.common.seed))
}

fn load_graphs(path: &Path) -> Result<GraphSet> {
    read_graph_set(path).with_context(|| format!("reading graph set {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn non_empty(graphs: GraphSet, path: &Path) -> Result<GraphSet> {
    if graphs.is_empty() {
        bail!("{} contains no graphs", path.display());
    }
    Ok(graphs)
}

fn dispatch(command: Command, s: &Settings, seed: u64) -> Result<()> {
    match command {
        Command::GenData { kind, count, out } => {
            let kind = kind.or(s.get("kind")?).unwrap_or_else(|| "community".into());
            let count = count.map_or_else(|| s.get_or("count", 100), Ok)?;
            let graphs = gen_data(&kind, count, s, seed)?;
            write_graph_set(&out, &graphs)?;
            log::info!("wrote {} {kind} graphs to {}", graphs.len(), out.display());
        }
        Command::TrainAe { data, out } => {
            let graphs = non_empty(load_graphs(&data)?, &data)?;
            let cfg = s.pipeline()?;
            let (stage, report) = fit_autoencoder_stage(&graphs, &cfg, seed)?;
            if let (Some(first), Some(last)) = (report.loss_trace.first(), report.loss_trace.last()) {
                log::info!("autoencoder loss {first:.4} -> {last:.4}");
            }
            stage.to_checkpoint()?.save(&out)?;
        }
        Command::TrainDiff { data, ae, out } => {
            let graphs = non_empty(load_graphs(&data)?, &data)?;
            let stage = AutoencoderStage::from_checkpoint(&load_checkpoint(&ae)?)?;
            let cfg = s.pipeline()?;
            let (model, report) = stage.fit_denoiser(&graphs, &cfg, denoiser_seed(seed))?;
            if let (Some(first), Some(last)) = (report.loss_trace.first(), report.loss_trace.last()) {
                log::info!("denoiser loss {first:.4} -> {last:.4}");
            }
            model.to_checkpoint()?.save(&out)?;
        }
        Command::Generate { model, n, out, scaffold } => {
            let model = TrainedModel::from_checkpoint(&load_checkpoint(&model)?)?;
            let mut options = model.default_options();
            if let Some(path) = scaffold {
                let g =
                    load_graphs(&path)?.into_iter().next().with_context(|| format!("{} is empty", path.display()))?;
                options.conditioning = Conditioning::Scaffold(g);
            }
            let options = s.sampler(options)?;
            let graphs = model.generate(n, options, seed)?;
            write_graph_set(&out, &graphs)?;
        }
        Command::Evaluate { reference, generated, out } => {
            let a = non_empty(load_graphs(&reference)?, &reference)?;
            let b = non_empty(load_graphs(&generated)?, &generated)?;
            let report = evaluate(&a, &b, &s.metrics()?)?;
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(p) => std::fs::write(p, json + "\n")?,
                None => println!("{json}"),
            }
        }
        Command::Snr { data, ae, out } => {
            let graphs = non_empty(load_graphs(&data)?, &data)?;
            let stage = AutoencoderStage::from_checkpoint(&load_checkpoint(&ae)?)?;
            let schedule = s.pipeline()?.schedule.build(stage.clusters.config.c)?;
            let (angular, white) = stage.snr(&graphs, &schedule, s.get_or("trials", 200)?, seed)?;
            let mut f = std::io::BufWriter::new(File::create(&out)?);
            writeln!(f, "t,snr_angular,snr_white")?;
            for t in 1..=schedule.steps {
                writeln!(f, "{t},{:e},{:e}", angular[t], white[t])?;
            }
            f.flush()?;
        }
    }
    Ok(())
}

fn gen_data(kind: &str, count: usize, s: &Settings, seed: u64) -> Result<Vec<GraphData>> {
    let per_graph = |f: &dyn Fn(u64) -> hyperdiff::Result<GraphData>| -> Result<Vec<GraphData>> {
        (0..count as u64).map(|i| f(seed.wrapping_add(i)).map_err(Into::into)).collect()
    };
    match kind {
        "community" => Ok(gen_community(
            count,
            s.get_or("n_min", 12)?..=s.get_or("n_max", 20)?,
            s.get_or("p", 0.3)?,
            s.get_or("inter_frac", 0.05)?,
            seed,
        )?),
        "sbm" => {
            let blocks = s.list("blocks")?.unwrap_or_else(|| vec![20; 5]);
            let n = blocks.iter().sum();
            let (p, q) = (s.get_or("p", 0.21)?, s.get_or("q", 0.01)?);
            per_graph(&|sd| gen_sbm(n, &blocks, p, q, sd))
        }
        "ba" => {
            let n = s.get_or("nodes", 100)?;
            let m = s.get_or("m_min", 1)?..=s.get_or("m_max", 3)?;
            per_graph(&|sd| gen_ba(n, m.clone(), sd))
        }
        "ego" => {
            let (n, r) = (s.get_or("nodes", 1000)?, s.get_or("radius", 2)?);
            per_graph(&|sd| gen_ego(n, r, sd))
        }
        "grid" => {
            let g = gen_grid(s.get_or("rows", 10)?, s.get_or("cols", 10)?)?;
            Ok(vec![g; count])
        }
        "fractal" => {
            let g = gen_fractal(s.get_or("depth", 4)?)?;
            Ok(vec![g; count])
        }
        other => bail!("unknown graph kind `{other}` (community, sbm, ba, ego, grid, fractal)"),
    }
}
