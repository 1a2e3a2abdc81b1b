use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ExperimentConfig, HarnessError};
use crate::agents::Agent;
use crate::envs::{DiscretizedActionSpace, Env};
use crate::learning::train_step;
use crate::nn::ParamDump;
use crate::replay::{Replay, Transition};

const STREAM_INIT: u64 = 0;
const STREAM_EXPLORE: u64 = 1;
const STREAM_ENV: u64 = 2;
const STREAM_REPLAY: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based episode number.
    pub episode: u32,
    pub train_return: f64,
    pub steps: u32,
    /// Mean loss of the training steps taken during the episode.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub mean_return: f64,
    /// Population standard deviation over evaluation episodes.
    pub std_return: f64,
    /// Fraction of episodes that reached the target.
    pub success_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub episode: u32,
    pub summary: EvalSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub config_hash: String,
    pub episodes: Vec<EpisodeRecord>,
    pub evals: Vec<EvalPoint>,
    pub step_losses: Vec<f64>,
    /// Environment steps at which the target networks were synchronized.
    pub sync_steps: Vec<u64>,
    pub total_steps: u64,
    /// Seconds spent in the run; never written to output files.
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn eval_returns(&self) -> Vec<f64> {
        self.evals.iter().map(|e| e.summary.mean_return).collect()
    }
}

/// Greedy rollouts of `agent` from the fixed start states drawn by
/// `eval_seed`. Nothing is stored and no training counter advances.
pub fn evaluate(
    agent: &Agent,
    env: &mut Env,
    episodes: u32,
    eval_seed: u64,
) -> Result<EvalSummary, HarnessError> {
    let space = agent.space();
    evaluate_policy(env, episodes, eval_seed, |_, obs| {
        Ok(space.decode(&agent.act_eval(obs)?)?)
    })
}

/// Rollouts of an arbitrary continuous-action policy from the same fixed
/// start states as [`evaluate`]. The policy sees the environment and the
/// current observation.
pub fn evaluate_policy<F>(
    env: &mut Env,
    episodes: u32,
    eval_seed: u64,
    mut policy: F,
) -> Result<EvalSummary, HarnessError>
where
    F: FnMut(&Env, &[f64]) -> Result<Vec<f64>, HarnessError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
    let mut returns = Vec::with_capacity(episodes as usize);
    let mut successes = 0u32;
    for _ in 0..episodes {
        let mut obs = env.reset(&mut rng);
        let mut total = 0.0;
        loop {
            let action = policy(env, &obs)?;
            let (next, out) = env.step(&action)?;
            total += out.reward;
            obs = next;
            if out.done() {
                successes += out.terminated as u32;
                break;
            }
        }
        returns.push(total);
    }
    Ok(summarize(&returns, successes))
}

fn summarize(returns: &[f64], successes: u32) -> EvalSummary {
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    EvalSummary {
        mean_return: mean,
        std_return: var.sqrt(),
        success_rate: successes as f64 / n,
    }
}

/// Builds the environment, action grid and freshly initialized agent for one seed.
pub fn build(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(Env, Agent), HarnessError> {
    let env = config.env.build()?;
    let space = DiscretizedActionSpace::build_grid(env.action_spec(), config.agent.bins)?;
    let agent = Agent::new(
        &config.agent,
        env.observation_dim(),
        space,
        config.step_budget()?,
        &mut stream(seed, STREAM_INIT),
    )?;
    Ok((env, agent))
}

/// One full training run: every environment step is stored, one training
/// step follows each environment step once warm-up is over, and greedy
/// evaluations run every `eval_every` episodes.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<RunRecord, HarnessError> {
    Ok(train_seed(config, seed)?.record)
}

/// Everything left at the end of a training run.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub record: RunRecord,
    pub agent: Agent,
    pub replay: Replay,
}

impl TrainedRun {
    /// Agent checkpoint annotated with the replay cursor and step counters.
    pub fn checkpoint(&self) -> ParamDump {
        let mut dump = self.agent.checkpoint();
        let meta = [
            ("seed", self.record.seed.to_string()),
            ("config_hash", self.record.config_hash.clone()),
            ("env_steps", self.record.total_steps.to_string()),
            ("episodes", self.record.episodes.len().to_string()),
            ("replay_len", self.replay.len().to_string()),
            ("replay_cursor", self.replay.write_cursor().to_string()),
        ];
        for (k, v) in meta {
            dump.meta.insert(k.into(), v);
        }
        dump
    }
}

/// Like [`run_seed`], also returning the trained agent and its replay buffer.
pub fn train_seed(config: &ExperimentConfig, seed: u64) -> Result<TrainedRun, HarnessError> {
    let started = Instant::now();
    let config = config.resolved()?;
    let config_hash = config.config_hash()?;
    let (mut env, mut agent) = build(&config, seed)?;
    let mut eval_env = env.clone();
    let mut explore_rng = stream(seed, STREAM_EXPLORE);
    let mut env_rng = stream(seed, STREAM_ENV);
    let mut replay_rng = stream(seed, STREAM_REPLAY);
    let replay_cfg = config.agent.replay;
    let mut replay = Replay::new(replay_cfg.kind, replay_cfg.priority)?;
    let schedule = config.agent.schedule;

    let mut record = RunRecord {
        seed,
        config_hash,
        episodes: Vec::with_capacity(config.total_episodes as usize),
        evals: Vec::new(),
        step_losses: Vec::new(),
        sync_steps: Vec::new(),
        total_steps: 0,
        wall_clock_secs: 0.0,
    };
    let mut step: u64 = 0;
    for episode in 1..=config.total_episodes {
        let mut obs = env.reset(&mut env_rng);
        let mut total = 0.0;
        let mut steps = 0u32;
        let (mut loss_sum, mut loss_count) = (0.0, 0u32);
        loop {
            let action = agent.act_train(&obs, &mut explore_rng, step)?;
            let (next, out) = env.step(&agent.space().decode(&action)?)?;
            total += out.reward;
            steps += 1;
            replay.add(Transition {
                state: obs,
                action,
                reward: out.reward,
                next_state: next.clone(),
                done: out.terminated,
            });
            step += 1;
            if schedule.ready(step, replay.len()) {
                let stats = train_step(
                    &mut agent,
                    &mut replay,
                    &schedule,
                    &replay_cfg.priority,
                    step,
                    &mut replay_rng,
                )?;
                record.step_losses.push(stats.loss);
                loss_sum += stats.loss;
                loss_count += 1;
                if stats.synced {
                    record.sync_steps.push(step);
                }
            }
            obs = next;
            if out.done() {
                break;
            }
        }
        record.episodes.push(EpisodeRecord {
            episode,
            train_return: total,
            steps,
            loss: (loss_count > 0).then(|| loss_sum / loss_count as f64),
        });
        if episode % config.eval_every == 0 {
            let summary = evaluate(&agent, &mut eval_env, config.eval_episodes, config.eval_seed)?;
            record.evals.push(EvalPoint { episode, summary });
        }
    }
    record.total_steps = step;
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(TrainedRun {
        record,
        agent,
        replay,
    })
}

/// Runs every configured seed in order.
pub fn run(config: &ExperimentConfig) -> Result<Vec<RunRecord>, HarnessError> {
    config.seeds.iter().map(|&s| run_seed(config, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentConfig, AgentKind, NetworkConfig};
    use crate::envs::EnvConfig;

    pub(crate) fn tiny_config() -> ExperimentConfig {
        let mut agent = AgentConfig::new(AgentKind::Bdq, 3);
        agent.network = NetworkConfig {
            shared_sizes: vec![8],
            branch_hidden: 4,
            ..NetworkConfig::default()
        };
        agent.schedule.warmup_steps = 30;
        agent.schedule.batch_size = 8;
        agent.learner.sync.period = 25;
        let env = EnvConfig {
            horizon: Some(20),
            ..EnvConfig::new("pointmass-2")
        };
        ExperimentConfig {
            total_episodes: 6,
            seeds: vec![3],
            eval_every: 2,
            eval_episodes: 3,
            smoothing_window: 2,
            ..ExperimentConfig::new(env, agent)
        }
    }

    #[test]
    fn cadence_and_counts() {
        let cfg = tiny_config();
        let rec = run_seed(&cfg, 3).unwrap();
        assert_eq!(rec.episodes.len(), 6);
        let eps: Vec<u32> = rec.evals.iter().map(|e| e.episode).collect();
        assert_eq!(eps, vec![2, 4, 6]);
        let steps: u64 = rec.episodes.iter().map(|e| e.steps as u64).sum();
        assert_eq!(steps, rec.total_steps);
        assert_eq!(rec.step_losses.len() as u64, rec.total_steps - 29);
        assert!(rec.sync_steps.iter().all(|s| s % 25 == 0));
    }

    #[test]
    fn same_seed_same_record() {
        let cfg = tiny_config();
        let mut a = run_seed(&cfg, 3).unwrap();
        let mut b = run_seed(&cfg, 3).unwrap();
        a.wall_clock_secs = 0.0;
        b.wall_clock_secs = 0.0;
        assert_eq!(a, b);
        let mut c = run_seed(&cfg, 4).unwrap();
        c.wall_clock_secs = 0.0;
        assert_ne!(a.episodes, c.episodes);
    }

    #[test]
    fn evaluation_leaves_agent_untouched() {
        let cfg = tiny_config().resolved().unwrap();
        let (mut env, agent) = build(&cfg, 1).unwrap();
        let before = agent.checkpoint();
        let a = evaluate(&agent, &mut env, 4, 9).unwrap();
        let b = evaluate(&agent, &mut env, 4, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(agent.checkpoint(), before);
    }

    #[test]
    fn summary_statistics() {
        let s = summarize(&[1.0, 3.0], 1);
        assert_eq!((s.mean_return, s.std_return, s.success_rate), (2.0, 1.0, 0.5));
    }
}
