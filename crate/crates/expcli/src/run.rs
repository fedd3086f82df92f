//! Training and evaluation loops, checkpoints and metrics rows.

use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rismec_core::env::{MecEnv, SlotRecord};
use rismec_learn::ppo::{gae, Rollout};
use rismec_learn::{Heuristic, HeuristicKind, Policy, PpoAgent, ReplayBuffer, SacAgent};
use serde::{Deserialize, Serialize};

use crate::config::{AgentKind, ExperimentConfig};
use crate::error::CliError;

/// Version of every CSV/JSON layout written by this crate.
pub const SCHEMA_VERSION: u32 = 1;
pub const CHECKPOINT_FORMAT: &str = "rismec-checkpoint";

const TRAIN_ENV_STREAM: u64 = 1;
const AGENT_STREAM: u64 = 2;
const EVAL_ENV_STREAM: u64 = 3;
const EVAL_POLICY_STREAM: u64 = 4;

/// Independent generator for one purpose of one seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TrainedAgent {
    Sac(Box<SacAgent>),
    Ppo(Box<PpoAgent>),
    LocalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub agent_kind: AgentKind,
    pub seed: u64,
    pub steps: usize,
    pub agent: TrainedAgent,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| CliError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != SCHEMA_VERSION {
            return Err(CliError::Checkpoint(format!("unsupported format {} v{}", ck.format, ck.version)));
        }
        Ok(ck)
    }

    /// Refuse to pair a checkpoint with a config it was not trained under.
    pub fn check_config(&self, cfg: &ExperimentConfig) -> Result<(), CliError> {
        let got = cfg.hash();
        if got != self.config_hash {
            return Err(CliError::HashMismatch { expected: self.config_hash.clone(), got });
        }
        Ok(())
    }
}

/// One metrics row, averaged over `episodes` consecutive training episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub schema_version: u32,
    pub run_id: String,
    pub agent: String,
    pub seed: u64,
    /// Environment steps taken when the window closed.
    pub step: usize,
    pub episodes: usize,
    pub episode_return: f64,
    pub energy_j: f64,
    pub energy_per_ue_j: f64,
    pub violations: usize,
    pub orientation_penalties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub env_seed: u64,
    pub episode_return: f64,
    /// Offloading plus local energy, penalties excluded.
    pub energy_j: f64,
    /// UE-slot constraint violations plus one for edge oversubscription.
    pub violations: usize,
    pub orientation_penalties: usize,
    pub records: Vec<SlotRecord>,
}

impl EpisodeResult {
    pub fn penalty_free(&self) -> bool {
        self.violations == 0 && self.orientation_penalties == 0
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRow>,
    pub wall_seconds: f64,
}

pub fn run_id(cfg: &ExperimentConfig, seed: u64) -> String {
    format!("{}-{}-n{}-k{}-s{}", cfg.name, cfg.agent.kind.as_str(), cfg.scenario.num_elements, cfg.scenario.num_ues, seed)
}

/// Play one episode from `env_seed`; `explore` selects stochastic actions.
pub fn run_episode(
    env: &mut MecEnv,
    policy: &mut dyn Policy,
    env_seed: u64,
    rng: &mut dyn RngCore,
    explore: bool,
) -> Result<EpisodeResult, CliError> {
    let mut state = env.reset(env_seed)?;
    let mut out = EpisodeResult {
        env_seed,
        episode_return: 0.0,
        energy_j: 0.0,
        violations: 0,
        orientation_penalties: 0,
        records: Vec::with_capacity(env.config().episode_len()),
    };
    while !env.is_done() {
        let obs = env.observe(&state);
        let raw = policy.act(&obs, rng, explore)?;
        let step = env.step(&env.decode_action(&raw)?)?;
        tally(&mut out, &step.reward, step.done);
        out.records.push(step.record);
        state = step.state;
    }
    Ok(out)
}

fn tally(out: &mut EpisodeResult, r: &rismec_core::env::RewardBreakdown, done: bool) {
    out.episode_return += r.total;
    out.energy_j += r.energy();
    out.violations += r.violations;
    if done && r.p2 > r.p1 {
        out.violations += 1;
    }
    if r.p_theta > 0.0 {
        out.orientation_penalties += 1;
    }
}

struct MetricsWindow {
    rows: Vec<MetricsRow>,
    pending: Vec<(f64, f64, usize, usize)>,
    every: usize,
    run_id: String,
    agent: String,
    seed: u64,
    num_ues: usize,
}

impl MetricsWindow {
    fn new(cfg: &ExperimentConfig, seed: u64) -> Self {
        Self {
            rows: Vec::new(),
            pending: Vec::new(),
            every: cfg.train.log_every_episodes,
            run_id: run_id(cfg, seed),
            agent: cfg.agent.kind.as_str().into(),
            seed,
            num_ues: cfg.scenario.num_ues,
        }
    }

    fn push(&mut self, step: usize, ep: &EpisodeResult) {
        self.pending.push((ep.episode_return, ep.energy_j, ep.violations, ep.orientation_penalties));
        if self.pending.len() == self.every {
            self.flush(step);
        }
    }

    fn flush(&mut self, step: usize) {
        if self.pending.is_empty() {
            return;
        }
        let n = self.pending.len() as f64;
        let energy = self.pending.iter().map(|p| p.1).sum::<f64>() / n;
        self.rows.push(MetricsRow {
            schema_version: SCHEMA_VERSION,
            run_id: self.run_id.clone(),
            agent: self.agent.clone(),
            seed: self.seed,
            step,
            episodes: self.pending.len(),
            episode_return: self.pending.iter().map(|p| p.0).sum::<f64>() / n,
            energy_j: energy,
            energy_per_ue_j: energy / self.num_ues as f64,
            violations: self.pending.iter().map(|p| p.2).sum(),
            orientation_penalties: self.pending.iter().map(|p| p.3).sum(),
        });
        self.pending.clear();
    }
}

/// Train the configured agent for `cfg.train.steps` environment steps.
pub fn train(cfg: &ExperimentConfig, seed: u64) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut env = MecEnv::new(cfg.env_config()?)?;
    let mut env_seeds = stream_rng(seed, TRAIN_ENV_STREAM);
    let mut rng = stream_rng(seed, AGENT_STREAM);
    let mut window = MetricsWindow::new(cfg, seed);
    let steps = cfg.train.steps;

    let agent = match cfg.agent.kind {
        AgentKind::Local => {
            let mut policy = Heuristic::for_env(HeuristicKind::LocalOnly, &env);
            let mut taken = 0;
            while taken < steps {
                let ep = run_episode(&mut env, &mut policy, env_seeds.next_u64(), &mut rng, true)?;
                taken += ep.records.len();
                window.push(taken, &ep);
            }
            window.flush(taken);
            TrainedAgent::LocalOnly
        }
        AgentKind::Ppo => TrainedAgent::Ppo(Box::new(train_ppo(cfg, &mut env, &mut env_seeds, &mut rng, &mut window)?)),
        AgentKind::Sac | AgentKind::Fixed | AgentKind::Random => {
            TrainedAgent::Sac(Box::new(train_sac(cfg, &mut env, &mut env_seeds, &mut rng, &mut window)?))
        }
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: SCHEMA_VERSION,
            config_hash: cfg.hash(),
            agent_kind: cfg.agent.kind,
            seed,
            steps,
            agent,
        },
        metrics: window.rows,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn train_sac(
    cfg: &ExperimentConfig,
    env: &mut MecEnv,
    env_seeds: &mut ChaCha8Rng,
    rng: &mut ChaCha8Rng,
    window: &mut MetricsWindow,
) -> Result<SacAgent, CliError> {
    let sc = &cfg.agent.sac;
    let obs_dim = env.config().observation_dim();
    let act_dim = env.config().action_dim();
    let mut agent = SacAgent::new(sc.clone(), obs_dim, act_dim, rng)?;
    let mut buffer = ReplayBuffer::new(sc.buffer_capacity, obs_dim, act_dim);
    let mut state = env.reset(env_seeds.next_u64())?;
    let mut ep = EpisodeResult::empty(0);
    for step in 0..cfg.train.steps {
        let obs = env.observe(&state);
        let raw: Vec<f64> = if step < sc.warmup_steps {
            (0..act_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
        } else {
            agent.sample_action(&obs, rng)?.0
        };
        let out = env.step(&env.decode_action(&raw)?)?;
        tally(&mut ep, &out.reward, out.done);
        ep.records.push(out.record);
        let next_obs = env.observe(&out.state);
        buffer.push(&obs, &raw, out.reward.total * cfg.train.reward_scale, &next_obs, out.done);
        state = out.state;
        if out.done {
            window.push(step + 1, &ep);
            ep = EpisodeResult::empty(0);
            state = env.reset(env_seeds.next_u64())?;
        }
        if step >= sc.warmup_steps && buffer.len() >= sc.batch_size.min(buffer.capacity()) && (step + 1) % sc.update_every == 0 {
            let batch = buffer.sample(sc.batch_size, rng);
            agent.update(&batch, rng)?;
        }
    }
    window.flush(cfg.train.steps);
    if !agent.is_finite() {
        return Err(CliError::Learn(rismec_learn::LearnError::Config("training diverged to non-finite parameters".into())));
    }
    Ok(agent)
}

fn train_ppo(
    cfg: &ExperimentConfig,
    env: &mut MecEnv,
    env_seeds: &mut ChaCha8Rng,
    rng: &mut ChaCha8Rng,
    window: &mut MetricsWindow,
) -> Result<PpoAgent, CliError> {
    let pc = &cfg.agent.ppo;
    let obs_dim = env.config().observation_dim();
    let act_dim = env.config().action_dim();
    let mut agent = PpoAgent::new(pc.clone(), obs_dim, act_dim, rng)?;
    let mut state = env.reset(env_seeds.next_u64())?;
    let mut ep = EpisodeResult::empty(0);
    let mut step = 0;
    while step < cfg.train.steps {
        let len = pc.rollout_len.min(cfg.train.steps - step);
        let mut obs_rows = Vec::with_capacity(len * obs_dim);
        let mut pre_rows = Vec::with_capacity(len * act_dim);
        let (mut logp, mut rewards, mut values, mut dones) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for _ in 0..len {
            let obs = env.observe(&state);
            let (action, pre, lp) = agent.sample(&obs, rng)?;
            values.push(agent.value_of(&obs)?);
            let out = env.step(&env.decode_action(&action)?)?;
            tally(&mut ep, &out.reward, out.done);
            ep.records.push(out.record);
            obs_rows.extend_from_slice(&obs);
            pre_rows.extend_from_slice(&pre);
            logp.push(lp);
            rewards.push(out.reward.total * cfg.train.reward_scale);
            dones.push(out.done);
            state = out.state;
            step += 1;
            if out.done {
                window.push(step, &ep);
                ep = EpisodeResult::empty(0);
                state = env.reset(env_seeds.next_u64())?;
            }
        }
        let last_value = agent.value_of(&env.observe(&state))?;
        let (adv, ret) = gae(&rewards, &values, &dones, last_value, pc.gamma, pc.gae_lambda);
        let n = rewards.len();
        let rollout = Rollout {
            obs: ndarray::Array2::from_shape_vec((n, obs_dim), obs_rows).expect("rows match"),
            pre_squash: ndarray::Array2::from_shape_vec((n, act_dim), pre_rows).expect("rows match"),
            old_log_prob: logp.into(),
            advantages: adv.into(),
            returns: ret.into(),
        };
        agent.update(&rollout, rng)?;
    }
    window.flush(cfg.train.steps);
    Ok(agent)
}

impl EpisodeResult {
    fn empty(env_seed: u64) -> Self {
        Self { env_seed, episode_return: 0.0, energy_j: 0.0, violations: 0, orientation_penalties: 0, records: Vec::new() }
    }
}

/// Acting policy restored from a checkpoint, evaluated deterministically.
pub fn policy_from(ck: &Checkpoint, env: &MecEnv) -> Box<dyn Policy> {
    match &ck.agent {
        TrainedAgent::Sac(a) => Box::new(a.as_ref().clone()),
        TrainedAgent::Ppo(a) => Box::new(a.as_ref().clone()),
        TrainedAgent::LocalOnly => Box::new(Heuristic::for_env(HeuristicKind::LocalOnly, env)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub schema_version: u32,
    pub run_id: String,
    pub agent: String,
    pub seed: u64,
    pub config_hash: String,
    pub episodes: usize,
    pub energy_mean_j: f64,
    pub energy_std_j: f64,
    pub return_mean: f64,
    pub violation_episodes: usize,
    pub violation_rate: f64,
    pub orientation_penalty_episodes: usize,
    pub local_only_energy_j: f64,
}

/// Deterministic evaluation over `episodes` episodes whose start states depend only on `seed`.
pub fn evaluate(cfg: &ExperimentConfig, ck: &Checkpoint, episodes: usize, seed: u64) -> Result<(EvalSummary, Vec<EpisodeResult>), CliError> {
    ck.check_config(cfg)?;
    let mut env = MecEnv::new(cfg.env_config()?)?;
    let mut policy = policy_from(ck, &env);
    let mut env_seeds = stream_rng(seed, EVAL_ENV_STREAM);
    let mut rng = stream_rng(seed, EVAL_POLICY_STREAM);
    let mut results = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        results.push(run_episode(&mut env, policy.as_mut(), env_seeds.next_u64(), &mut rng, false)?);
    }
    let n = episodes.max(1) as f64;
    let mean = results.iter().map(|r| r.energy_j).sum::<f64>() / n;
    // Shifted by the first sample so identical episodes give exactly zero spread.
    let shift = results.first().map_or(0.0, |r| r.energy_j);
    let d_mean = results.iter().map(|r| r.energy_j - shift).sum::<f64>() / n;
    let var = (results.iter().map(|r| (r.energy_j - shift - d_mean).powi(2)).sum::<f64>() / n).max(0.0);
    let violation_episodes = results.iter().filter(|r| r.violations > 0).count();
    let summary = EvalSummary {
        schema_version: SCHEMA_VERSION,
        run_id: run_id(cfg, ck.seed),
        agent: cfg.agent.kind.as_str().into(),
        seed,
        config_hash: ck.config_hash.clone(),
        episodes,
        energy_mean_j: mean,
        energy_std_j: var.sqrt(),
        return_mean: results.iter().map(|r| r.episode_return).sum::<f64>() / n,
        violation_episodes,
        violation_rate: violation_episodes as f64 / n,
        orientation_penalty_episodes: results.iter().filter(|r| r.orientation_penalties > 0).count(),
        local_only_energy_j: env.config().local_only_energy(),
    };
    Ok((summary, results))
}
