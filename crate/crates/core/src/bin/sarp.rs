use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use sarp::agent::AgentKind;
use sarp::corpus::{label_histogram, CorpusGeneratorSpec};
use sarp::experiment::{run_demo, run_experiment, run_scalability_sweep, ExperimentConfig};
use sarp::simworld::Environment;

#[derive(Parser)]
#[command(name = "sarp", version, about = "Scene-graph-guided target search experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides shared by the batch subcommands.
#[derive(clap::Args)]
struct Overrides {
    /// Base seed; trial i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Per-trial CSV path.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            config.base_seed = s;
        }
        if let Some(t) = self.trials {
            config.trials = t;
        }
        if let Some(o) = &self.output {
            config.output = Some(o.clone());
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured agent over paired seeds.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated agent list, e.g. sarp,uniform.
        #[arg(long, value_delimiter = ',')]
        agents: Option<Vec<AgentKind>>,
    },
    /// Compare SARP with the joint-state planner as distractors are added.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6")]
        distractors: Vec<usize>,
    },
    /// Print the per-step belief table of one SARP episode.
    Demo {
        /// Experiment config supplying corpus, perception and solver settings.
        #[arg(long)]
        config: PathBuf,
        /// Environment file replacing the config's.
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long)]
        query: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the episode as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Generate a synthetic NDJSON corpus from a generator spec.
    GenCorpus {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            overrides,
            agents,
        } => {
            let mut config = ExperimentConfig::load(&config)?;
            overrides.apply(&mut config);
            if let Some(a) = agents {
                config.agents = a;
            }
            let outcome = run_experiment(config)?;
            print!("{}", outcome.report);
        }
        Command::Sweep {
            config,
            overrides,
            distractors,
        } => {
            let mut config = ExperimentConfig::load(&config)?;
            overrides.apply(&mut config);
            let outcome = run_scalability_sweep(config, &distractors)?;
            println!("{}", outcome.report);
        }
        Command::Demo {
            config,
            env,
            query,
            seed,
            json,
        } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(env) = env {
                Environment::load(&env).with_context(|| format!("loading {}", env.display()))?;
                config.environment = env;
            }
            if query.is_some() {
                config.query = query;
            }
            let outcome = run_demo(config, seed)?;
            println!("{}", outcome.table);
            if let Some(path) = json {
                std::fs::write(&path, outcome.episode.to_json()?)?;
            }
        }
        Command::GenCorpus { spec, seed, out } => {
            let text = std::fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec: CorpusGeneratorSpec = serde_json::from_str(&text)?;
            let corpus = spec.generate(seed)?;
            corpus.write_ndjson(BufWriter::new(File::create(&out)?))?;
            println!("{} images written to {}", corpus.len(), out.display());
            for (label, count) in label_histogram(&corpus) {
                println!("  {label:<16} {count}");
            }
        }
    }
    Ok(())
}
