use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use aspectrag::synth::{write_fixture, SynthSpec};
use aspectrag::{Ablation, AspectMode, Pipeline, RunConfig, Stage, StageStats};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "aspectrag", version, about = "Multi-aspect retrieval, ranking and evaluation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the BM25 index from the corpus.
    Index(RunArgs),
    /// Predict or copy sub-aspects for every record.
    Aspects(RunArgs),
    /// Retrieve documents for every (query, aspect) pair.
    Retrieve(RunArgs),
    /// Merge per-aspect lists into candidate pools.
    Pool(RunArgs),
    /// Build greedy silver target lists.
    Silver(RunArgs),
    /// Rank each pool with the configured backend.
    Rank(RunArgs),
    /// Build preference pairs from rewarded rankings.
    Pairs(RunArgs),
    /// Evaluate the ranker and the baselines.
    Eval(RunArgs),
    /// Run every stage in order.
    Pipeline(RunArgs),
    /// Write the synthetic corpus and dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthSpec::default().seed)]
        seed: u64,
    },
    /// Print the effective configuration and its fingerprint.
    Config(ConfigArgs),
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// JSON configuration file; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset (default, wikipassageqa, wikiasp) used when no file is given.
    #[arg(long, conflicts_with = "config")]
    profile: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    aspect_mode: Option<AspectModeArg>,
    #[arg(long)]
    allow_repetition: bool,
    #[arg(long, value_enum)]
    ablation: Option<AblationArg>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum AspectModeArg {
    Predicted,
    Gold,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum AblationArg {
    None,
    NoSa,
    RandomPairs,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match (&self.config, &self.profile) {
            (Some(path), _) => {
                RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))?
            }
            (None, Some(name)) => RunConfig::profile(name)?,
            (None, None) => RunConfig::default(),
        };
        if let Some(k) = self.k {
            config.k = k;
        }
        if let Some(mu) = self.mu {
            config.mu = mu;
        }
        if let Some(tau) = self.tau {
            config.tau = tau;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(mode) = self.aspect_mode {
            config.aspect_mode = match mode {
                AspectModeArg::Predicted => AspectMode::Predicted,
                AspectModeArg::Gold => AspectMode::Gold,
            };
        }
        if self.allow_repetition {
            config.allow_repetition = true;
        }
        if let Some(ablation) = self.ablation {
            config.ablation = match ablation {
                AblationArg::None => Ablation::None,
                AblationArg::NoSa => Ablation::NoSa,
                AblationArg::RandomPairs => Ablation::RandomPairs,
            };
        }
        if let Some(workers) = self.workers {
            config.workers = workers;
        }
        config.validate()?;
        Ok(config)
    }
}

fn pipeline(args: &RunArgs) -> Result<Pipeline> {
    let config = args.config.resolve()?;
    Ok(Pipeline::new(config, &args.dataset, &args.corpus, &args.out)?)
}

fn print_stats(stats: &StageStats) -> Result<()> {
    println!("{}", serde_json::to_string(stats)?);
    Ok(())
}

fn run_stage(stage: Stage, args: &RunArgs) -> Result<bool> {
    let stats = pipeline(args)?.run_stage(stage)?;
    print_stats(&stats)?;
    Ok(stats.failures.is_empty())
}

fn run(cli: Cli) -> Result<bool> {
    let stage = match &cli.command {
        Command::Index(a) => Some((Stage::Index, a)),
        Command::Aspects(a) => Some((Stage::Aspects, a)),
        Command::Retrieve(a) => Some((Stage::Retrieve, a)),
        Command::Pool(a) => Some((Stage::Pool, a)),
        Command::Silver(a) => Some((Stage::Silver, a)),
        Command::Rank(a) => Some((Stage::Rank, a)),
        Command::Pairs(a) => Some((Stage::Pairs, a)),
        Command::Eval(a) => Some((Stage::Eval, a)),
        _ => None,
    };
    if let Some((stage, args)) = stage {
        return run_stage(stage, args);
    }
    match cli.command {
        Command::Pipeline(args) => {
            let (report, stats) = pipeline(&args)?.run_all()?;
            for s in &stats {
                print_stats(s)?;
            }
            print!("{}", report.to_tsv());
            Ok(true)
        }
        Command::Synth { out, seed } => {
            write_fixture(&SynthSpec { seed, ..SynthSpec::default() }, &out)?;
            println!("wrote {}", display(&out));
            Ok(true)
        }
        Command::Config(args) => {
            let config = args.resolve()?;
            println!("{}", serde_json::to_string_pretty(&config)?);
            println!("fingerprint {}", config.fingerprint());
            Ok(true)
        }
        _ => bail!("unreachable command"),
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some records failed; see the stats above");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
