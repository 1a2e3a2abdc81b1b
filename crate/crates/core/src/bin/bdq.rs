use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bdq_core::agents::{AgentConfig, AgentKind};
use bdq_core::envs::EnvConfig;
use bdq_core::harness::{
    aggregate_seeds, build, emit, evaluate, read_seed_csv, seed_csv_name, train_seed,
    write_aggregate_csv, ExperimentConfig, HarnessError, Manifest, SeedCurve,
};
use bdq_core::nn::ParamDump;

// glibc malloc fragments badly under the per-call aligned packing buffers of
// the matrix kernels, so long training runs would keep growing.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "bdq", version, about = "Branching dueling Q-network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write CSV curves plus a manifest.
    Train {
        #[command(flatten)]
        common: Common,
        /// Also write a parameter checkpoint per seed.
        #[arg(long)]
        save_checkpoint: bool,
    },
    /// Greedy evaluation of a saved checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Recompute the aggregated, smoothed curve of a finished run directory.
    PlotData {
        /// Run directory containing manifest.toml and the per-seed CSVs.
        #[arg(long)]
        out: PathBuf,
        /// Smoothing window in evaluation points (defaults to the manifest's).
        #[arg(long)]
        window: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Environment id, e.g. reacher3 or pointmass-5.
    #[arg(long)]
    env: Option<String>,
    /// Agent kind: bdq, dueling_ddqn or idq.
    #[arg(long)]
    agent: Option<String>,
    /// Sub-actions per dimension when no configuration file is given.
    #[arg(long, default_value_t = 9)]
    bins: usize,
    /// Override the number of training episodes.
    #[arg(long)]
    episodes: Option<u32>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let kind = match &self.agent {
            Some(a) => Some(AgentKind::parse(a).ok_or_else(|| {
                HarnessError::InvalidConfig(format!(
                    "unknown agent `{a}` (expected bdq, dueling_ddqn or idq)"
                ))
            })?),
            None => None,
        };
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                let (Some(env), Some(kind)) = (&self.env, kind) else {
                    return Err(HarnessError::InvalidConfig(
                        "either --config or both --env and --agent are required".into(),
                    ));
                };
                ExperimentConfig::new(EnvConfig::new(env.as_str()), AgentConfig::new(kind, self.bins))
            }
        };
        if let Some(env) = &self.env {
            config.env.id = env.clone();
        }
        if let Some(kind) = kind {
            config.agent.kind = kind;
        }
        if let Some(seed) = self.seed {
            config.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(n) = self.episodes {
            config.total_episodes = n;
        }
        config.validate()?;
        Ok(config)
    }
}

fn train(common: &Common, save_checkpoint: bool) -> Result<(), HarnessError> {
    let config = common.resolve()?;
    let mut records = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let trained = train_seed(&config, seed)?;
        let rec = &trained.record;
        if let Some(last) = rec.evals.last() {
            eprintln!(
                "seed {seed}: {} episodes, {} steps, final eval return {:.3} (success {:.2}) in {:.1}s",
                rec.episodes.len(),
                rec.total_steps,
                last.summary.mean_return,
                last.summary.success_rate,
                rec.wall_clock_secs
            );
        }
        if save_checkpoint {
            fs::create_dir_all(&config.output_dir).map_err(|e| HarnessError::io(&config.output_dir, e))?;
            let path = config.output_dir.join(format!("checkpoint_seed_{seed}.params"));
            let file = fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            trained
                .checkpoint()
                .write_to(std::io::BufWriter::new(file))
                .map_err(|e| HarnessError::io(&path, e))?;
        }
        records.push(trained.record);
    }
    for path in emit(&records, &config, &config.output_dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn eval(common: &Common, checkpoint: &Path) -> Result<(), HarnessError> {
    let config = common.resolve()?.resolved()?;
    let file = fs::File::open(checkpoint).map_err(|e| HarnessError::io(checkpoint, e))?;
    let dump = ParamDump::read_from(BufReader::new(file)).map_err(|e| HarnessError::Parse {
        path: checkpoint.to_path_buf(),
        message: e.to_string(),
    })?;
    let (mut env, mut agent) = build(&config, config.seeds[0])?;
    agent.restore(dump)?;
    let s = evaluate(&agent, &mut env, config.eval_episodes, config.eval_seed)?;
    println!("mean_return,std_return,success_rate");
    println!("{},{},{}", s.mean_return, s.std_return, s.success_rate);
    Ok(())
}

fn plot_data(dir: &Path, window: Option<usize>) -> Result<(), HarnessError> {
    let manifest = Manifest::load(&dir.join("manifest.toml"))?;
    let curves = manifest
        .config
        .seeds
        .iter()
        .map(|&seed| read_seed_csv(&dir.join(seed_csv_name(seed)), seed))
        .collect::<Result<Vec<SeedCurve>, _>>()?;
    let points = aggregate_seeds(&curves, window.unwrap_or(manifest.config.smoothing_window))?;
    let path = dir.join("plot.csv");
    write_aggregate_csv(&path, &points)?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train {
            common,
            save_checkpoint,
        } => train(common, *save_checkpoint),
        Command::Eval { common, checkpoint } => eval(common, checkpoint),
        Command::PlotData { out, window } => plot_data(out, *window),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
