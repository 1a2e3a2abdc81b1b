//! C ABI over `bdq-core`.
//!
//! Environments and agents are opaque heap handles created by `*_new` and
//! released by `*_free`. Every fallible call returns a [`BdqStatus`]; on
//! failure, [`bdq_last_error`] describes the most recent error on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bdq_core::agents::{Agent, AgentConfig, AgentError};
use bdq_core::envs::{DiscretizedActionSpace, Env, EnvConfig, EnvError};
use bdq_core::harness::{emit, run, ExperimentConfig, HarnessError};
use bdq_core::learning::{train_step, LearnError};
use bdq_core::nn::ParamDump;
use bdq_core::replay::{Replay, Transition};

// Keeps long training runs from fragmenting the host's malloc heap.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BdqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    ResourceCap = 4,
    EnvError = 5,
    LearnError = 6,
    Io = 7,
    Panic = 8,
}

/// Reward and episode flags of one environment step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BdqStepResult {
    pub reward: f64,
    /// The episode reached a terminal state.
    pub terminated: bool,
    /// The episode hit its step limit.
    pub truncated: bool,
}

/// Opaque environment handle.
pub struct BdqEnv {
    env: Env,
    rng: ChaCha8Rng,
}

/// Opaque agent handle: agent, replay buffer, exploration and replay RNGs,
/// and the environment-step counter.
pub struct BdqAgent {
    agent: Agent,
    replay: Replay,
    explore_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    steps: u64,
    last_loss: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(BdqStatus, String);

impl From<EnvError> for Failure {
    fn from(e: EnvError) -> Self {
        Failure(BdqStatus::EnvError, e.to_string())
    }
}

impl From<AgentError> for Failure {
    fn from(e: AgentError) -> Self {
        let status = match e {
            AgentError::ResourceCap { .. } => BdqStatus::ResourceCap,
            AgentError::Env(_) => BdqStatus::EnvError,
            _ => BdqStatus::InvalidConfig,
        };
        Failure(status, e.to_string())
    }
}

impl From<LearnError> for Failure {
    fn from(e: LearnError) -> Self {
        Failure(BdqStatus::LearnError, e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let status = match &e {
            HarnessError::Agent(AgentError::ResourceCap { .. }) => BdqStatus::ResourceCap,
            HarnessError::Env(_) => BdqStatus::EnvError,
            HarnessError::Learn(_) | HarnessError::Replay(_) => BdqStatus::LearnError,
            HarnessError::Io { .. } => BdqStatus::Io,
            _ => BdqStatus::InvalidConfig,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

/// Runs `body`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), Failure>>(body: F) -> BdqStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => BdqStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            BdqStatus::Panic
        }
    }
}

fn null() -> Failure {
    Failure(BdqStatus::NullPointer, "null pointer argument".into())
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(BdqStatus::InvalidArgument, "string is not valid UTF-8".into()))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn copy_exact(dst: &mut [f64], src: &[f64], what: &str) -> Result<(), Failure> {
    if dst.len() != src.len() {
        return Err(Failure(
            BdqStatus::InvalidArgument,
            format!("{what} buffer holds {} values, need {}", dst.len(), src.len()),
        ));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Message of the last failed call on this thread (empty if none). The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bdq_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bdq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an environment from a registry id (`reacher3`, `pointmass-5`, ...)
/// whose episode starts are drawn from `seed`.
///
/// # Safety
/// `id` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bdq_env_new(id: *const c_char, seed: u64, out: *mut *mut BdqEnv) -> BdqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let env = EnvConfig::new(str_arg(id)?).build()?;
        let handle = Box::new(BdqEnv {
            env,
            rng: ChaCha8Rng::seed_from_u64(seed),
        });
        *out = Box::into_raw(handle);
        Ok(())
    })
}

/// # Safety
/// `env` must come from [`bdq_env_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bdq_env_free(env: *mut BdqEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Observation length (0 for a null handle).
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bdq_env_observation_dim(env: *const BdqEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.observation_dim())
}

/// Number of action dimensions (0 for a null handle).
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bdq_env_action_dims(env: *const BdqEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.action_dims())
}

/// Starts an episode and writes the first observation into `obs`, which must
/// hold exactly `bdq_env_observation_dim` values.
///
/// # Safety
/// `env` must be a live handle and `obs` valid for `obs_len` writes.
#[no_mangle]
pub unsafe extern "C" fn bdq_env_reset(env: *mut BdqEnv, obs: *mut f64, obs_len: usize) -> BdqStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(null)?;
        let first = e.env.reset(&mut e.rng);
        copy_exact(slice_out(obs, obs_len)?, &first, "observation")
    })
}

/// Applies a continuous action and writes the next observation and outcome.
///
/// # Safety
/// `env` must be a live handle; `action` valid for `action_len` reads; `obs`
/// valid for `obs_len` writes; `result` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bdq_env_step(
    env: *mut BdqEnv,
    action: *const f64,
    action_len: usize,
    obs: *mut f64,
    obs_len: usize,
    result: *mut BdqStepResult,
) -> BdqStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(null)?;
        let result = result.as_mut().ok_or_else(null)?;
        let (next, outcome) = e.env.step(slice_arg(action, action_len)?)?;
        copy_exact(slice_out(obs, obs_len)?, &next, "observation")?;
        *result = BdqStepResult {
            reward: outcome.reward,
            terminated: outcome.terminated,
            truncated: outcome.truncated,
        };
        Ok(())
    })
}

/// Creates an agent for `env` from an agent configuration in TOML (the
/// `[agent]` table of an experiment file, without the header). `step_budget`
/// sizes the default ε anneal.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string, `env` a live handle and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bdq_agent_new(
    config_toml: *const c_char,
    env: *const BdqEnv,
    seed: u64,
    step_budget: u64,
    out: *mut *mut BdqAgent,
) -> BdqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let e = env.as_ref().ok_or_else(null)?;
        let config: AgentConfig = toml::from_str(str_arg(config_toml)?)
            .map_err(|err| Failure(BdqStatus::InvalidConfig, err.to_string()))?;
        config.validate()?;
        let space = DiscretizedActionSpace::build_grid(e.env.action_spec(), config.bins)?;
        let mut init = ChaCha8Rng::seed_from_u64(seed);
        let agent = Agent::new(&config, e.env.observation_dim(), space, step_budget, &mut init)?;
        let replay = Replay::new(config.replay.kind, config.replay.priority)
            .map_err(|err| Failure(BdqStatus::InvalidConfig, err.to_string()))?;
        let stream = |id| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(id);
            r
        };
        *out = Box::into_raw(Box::new(BdqAgent {
            agent,
            replay,
            explore_rng: stream(1),
            replay_rng: stream(3),
            steps: 0,
            last_loss: f64::NAN,
        }));
        Ok(())
    })
}

/// # Safety
/// `agent` must come from [`bdq_agent_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bdq_agent_free(agent: *mut BdqAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// Output units across all network heads, value outputs included.
///
/// # Safety
/// `agent` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bdq_agent_output_count(agent: *const BdqAgent, out: *mut usize) -> BdqStatus {
    guard(|| {
        let a = agent.as_ref().ok_or_else(null)?;
        *out.as_mut().ok_or_else(null)? = a.agent.output_count();
        Ok(())
    })
}

/// Picks sub-action indices for `obs`: exploratory if `explore`, greedy
/// otherwise. `action_out` must hold one index per action dimension.
///
/// # Safety
/// `agent` must be a live handle; `obs` valid for `obs_len` reads and
/// `action_out` for `action_len` writes.
#[no_mangle]
pub unsafe extern "C" fn bdq_agent_act(
    agent: *mut BdqAgent,
    obs: *const f64,
    obs_len: usize,
    explore: bool,
    action_out: *mut usize,
    action_len: usize,
) -> BdqStatus {
    guard(|| {
        let a = agent.as_mut().ok_or_else(null)?;
        let obs = slice_arg(obs, obs_len)?;
        let chosen = if explore {
            a.agent.act_train(obs, &mut a.explore_rng, a.steps)?
        } else {
            a.agent.act_eval(obs)?
        };
        let out = slice_out(action_out, action_len)?;
        if out.len() != chosen.len() {
            return Err(Failure(
                BdqStatus::InvalidArgument,
                format!("action buffer holds {} slots, need {}", out.len(), chosen.len()),
            ));
        }
        out.copy_from_slice(&chosen);
        Ok(())
    })
}

/// Maps sub-action indices to actuator values.
///
/// # Safety
/// `agent` must be a live handle; `indices` valid for `len` reads and
/// `values_out` for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn bdq_agent_decode(
    agent: *const BdqAgent,
    indices: *const usize,
    len: usize,
    values_out: *mut f64,
) -> BdqStatus {
    guard(|| {
        let a = agent.as_ref().ok_or_else(null)?;
        let values = a.agent.space().decode(slice_arg(indices, len)?)?;
        copy_exact(slice_out(values_out, len)?, &values, "action")
    })
}

/// Stores one transition, advances the step counter and runs a training
/// step once warm-up is over. `trained` reports whether an update ran.
///
/// # Safety
/// `agent` must be a live handle; `obs` and `next_obs` valid for `obs_len`
/// reads; `action` for `action_len` reads; `trained` null or valid.
#[no_mangle]
pub unsafe extern "C" fn bdq_agent_observe(
    agent: *mut BdqAgent,
    obs: *const f64,
    action: *const usize,
    action_len: usize,
    reward: f64,
    next_obs: *const f64,
    obs_len: usize,
    terminated: bool,
    trained: *mut bool,
) -> BdqStatus {
    guard(|| {
        let a = agent.as_mut().ok_or_else(null)?;
        let action = slice_arg(action, action_len)?.to_vec();
        a.agent.space().decode(&action)?;
        a.replay.add(Transition {
            state: slice_arg(obs, obs_len)?.to_vec(),
            action,
            reward,
            next_state: slice_arg(next_obs, obs_len)?.to_vec(),
            done: terminated,
        });
        a.steps += 1;
        let config = a.agent.config().clone();
        let ran = if config.schedule.ready(a.steps, a.replay.len()) {
            let stats = train_step(
                &mut a.agent,
                &mut a.replay,
                &config.schedule,
                &config.replay.priority,
                a.steps,
                &mut a.replay_rng,
            )?;
            a.last_loss = stats.loss;
            true
        } else {
            false
        };
        if let Some(t) = trained.as_mut() {
            *t = ran;
        }
        Ok(())
    })
}

/// Loss of the most recent training step (NaN before the first one).
///
/// # Safety
/// `agent` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bdq_agent_last_loss(agent: *const BdqAgent) -> f64 {
    agent.as_ref().map_or(f64::NAN, |a| a.last_loss)
}

/// Writes parameters, optimizer state and counters to `path`.
///
/// # Safety
/// `agent` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bdq_agent_save(agent: *const BdqAgent, path: *const c_char) -> BdqStatus {
    guard(|| {
        let a = agent.as_ref().ok_or_else(null)?;
        let path = str_arg(path)?;
        let mut dump = a.agent.checkpoint();
        dump.meta.insert("env_steps".into(), a.steps.to_string());
        let io = |e: std::io::Error| Failure(BdqStatus::Io, format!("{path}: {e}"));
        let file = std::fs::File::create(path).map_err(io)?;
        dump.write_to(std::io::BufWriter::new(file)).map_err(io)
    })
}

/// Restores a checkpoint written by [`bdq_agent_save`] into a compatible agent.
///
/// # Safety
/// `agent` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bdq_agent_load(agent: *mut BdqAgent, path: *const c_char) -> BdqStatus {
    guard(|| {
        let a = agent.as_mut().ok_or_else(null)?;
        let path = str_arg(path)?;
        let file = std::fs::File::open(path).map_err(|e| Failure(BdqStatus::Io, format!("{path}: {e}")))?;
        let dump = ParamDump::read_from(std::io::BufReader::new(file))
            .map_err(|e| Failure(BdqStatus::InvalidConfig, format!("{path}: {e}")))?;
        let steps = dump
            .meta
            .get("env_steps")
            .and_then(|s| s.parse().ok())
            .unwrap_or(0);
        a.agent.restore(dump)?;
        a.steps = steps;
        Ok(())
    })
}

/// Runs a full experiment described by TOML text and writes its CSV files
/// and manifest into `out_dir`.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn bdq_run_experiment(config_toml: *const c_char, out_dir: *const c_char) -> BdqStatus {
    guard(|| {
        let config = ExperimentConfig::from_toml_str(str_arg(config_toml)?)
            .map_err(|e| Failure(BdqStatus::InvalidConfig, e))?;
        let records = run(&config)?;
        emit(&records, &config, Path::new(str_arg(out_dir)?))?;
        Ok(())
    })
}
