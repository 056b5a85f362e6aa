use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use vne_core::embedders::{build_embedder, train_agent, Algorithm, EmbedderConfig, FeatureSource, LinkStrategy};
use vne_core::learn::ParamSet;
use vne_core::metrics::{acceptance_rate, long_term_rc};
use vne_core::net::{read_requests, read_substrate, write_requests, write_substrate};
use vne_core::sim::{generate_requests, generate_substrate, report_files, run_simulation, ExperimentConfig};

#[derive(Parser)]
#[command(name = "vne", version, about = "Virtual network embedding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a substrate and a request trace from a config file.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_substrate: PathBuf,
        #[arg(long)]
        out_requests: PathBuf,
    },
    /// Train a learning agent on the config's training scenario.
    Train {
        #[arg(long)]
        algo: Algorithm,
        #[arg(long, default_value = "raw")]
        features: FeatureSource,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_params: PathBuf,
        /// Also write the per-epoch mean reward, one value per line.
        #[arg(long)]
        out_curve: Option<PathBuf>,
    },
    /// Replay a request trace on a substrate and write the results CSV.
    Run {
        #[arg(long)]
        substrate: PathBuf,
        #[arg(long)]
        requests: PathBuf,
        #[arg(long)]
        algo: Algorithm,
        /// Agent checkpoint; learning agents without one run untrained.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value = "raw")]
        features: FeatureSource,
        /// Defaults to bfs for rl and shortest otherwise.
        #[arg(long)]
        link: Option<LinkStrategy>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Agent hyperparameters; must match the ones used for training.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Align the R/C and acceptance curves of several results files.
    Report {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Generate {
            config,
            out_substrate,
            out_requests,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let net = generate_substrate(&cfg.scenario)?;
            let reqs = generate_requests(&cfg.scenario)?;
            write_text(&out_substrate, &write_substrate(&net))?;
            write_text(&out_requests, &write_requests(&reqs))?;
            log::info!(
                "{} nodes, {} links, {} requests",
                net.node_count(),
                net.link_count(),
                reqs.len()
            );
        }
        Command::Train {
            algo,
            features,
            config,
            out_params,
            out_curve,
        } => {
            if !matches!(algo, Algorithm::Policy | Algorithm::Pointer) {
                bail!("`{}` is not a learning agent; use rl or pointer", algo.tag());
            }
            let cfg = ExperimentConfig::load(&config)?;
            let scenario = cfg.training_scenario()?;
            let net = generate_substrate(&scenario)?;
            let reqs = generate_requests(&scenario)?;
            let ec = embedder_config(&cfg, algo, features, None, scenario.seed);
            let out = train_agent(&net, &reqs, &ec, None)?;
            out.params.save(&out_params)?;
            if let Some(path) = out_curve {
                let text: String = out.curve.iter().map(|r| format!("{r}\n")).collect();
                write_text(&path, &text)?;
            }
            if let (Some(first), Some(last)) = (out.curve.first(), out.curve.last()) {
                log::info!("{} epochs, mean reward {first:.4} -> {last:.4}", out.curve.len());
            }
        }
        Command::Run {
            substrate,
            requests,
            algo,
            params,
            features,
            link,
            seed,
            out,
            config,
        } => {
            let cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::default(),
            };
            let mut net = read_substrate(&substrate)?;
            let reqs = read_requests(&requests)?;
            let ec = embedder_config(&cfg, algo, features, link, seed);
            let params = params.map(ParamSet::load).transpose()?;
            if params.is_none() && matches!(algo, Algorithm::Policy | Algorithm::Pointer) {
                log::warn!("no --params given; running the untrained {} agent", algo.tag());
            }
            let mut embedder = build_embedder(&ec, params)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = BufWriter::new(file);
            let outcome = run_simulation(&mut net, &reqs, embedder.as_mut(), Some(&mut w))?;
            w.flush().with_context(|| format!("writing {}", out.display()))?;
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            log::info!(
                "{}: long-term R/C {}, acceptance {}",
                embedder.name(),
                fmt(long_term_rc(&outcome.totals)),
                fmt(acceptance_rate(&outcome.totals))
            );
        }
        Command::Report { inputs, out } => {
            let report = report_files(&inputs, &out)?;
            log::info!("{} aligned rows", report.rows.len());
        }
    }
    Ok(())
}

fn embedder_config(
    cfg: &ExperimentConfig,
    algo: Algorithm,
    features: FeatureSource,
    link: Option<LinkStrategy>,
    seed: u64,
) -> EmbedderConfig {
    let default_link = if cfg.split_links {
        LinkStrategy::Split
    } else {
        algo.default_link()
    };
    EmbedderConfig {
        algorithm: algo,
        link: link.unwrap_or(default_link),
        features,
        agent: cfg.agent.clone(),
        seed,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
