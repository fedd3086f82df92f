//! Sweeps, trajectory dumps, the power-control batch oracle and the self-test.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rismec_core::compute::{optimal_edge_alloc, optimal_local_freq, TaskSpec};
use rismec_core::env::{MecEnv, SlotRecord};
use rismec_core::powerctl::{dinkelbach_solve, min_feasible_power, DinkelbachSettings, PowerInstance};
use rismec_core::scenario::{angles_from_geometry, rotation_bounds, Position};
use serde::{Deserialize, Serialize};

use crate::config::{AgentKind, ExperimentConfig};
use crate::error::CliError;
use crate::run::{evaluate, train, Checkpoint, TrainedAgent, CHECKPOINT_FORMAT, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Number of surface elements.
    N,
    /// Number of UEs.
    K,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::K => "k",
        }
    }
}

/// One evaluated cell of a sweep, in long form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub schema_version: u32,
    pub axis: String,
    pub value: usize,
    pub scheme: String,
    pub seed: u64,
    pub num_elements: usize,
    pub num_ues: usize,
    pub energy_mean_j: f64,
    pub energy_std_j: f64,
    pub energy_per_ue_j: f64,
    pub violation_rate: f64,
    pub orientation_penalty_episodes: usize,
    pub local_only_energy_j: f64,
    pub config_hash: String,
}

/// Checkpoint for the local-only rule, which has nothing to train.
pub fn local_checkpoint(cfg: &ExperimentConfig, seed: u64) -> Checkpoint {
    Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        agent_kind: AgentKind::Local,
        seed,
        steps: 0,
        agent: TrainedAgent::LocalOnly,
    }
}

/// Train (where needed) and evaluate one configuration for one seed.
pub fn train_and_evaluate(cfg: &ExperimentConfig, seed: u64) -> Result<(Checkpoint, crate::run::EvalSummary), CliError> {
    let ck = if cfg.agent.kind.is_trained() { train(cfg, seed)?.checkpoint } else { local_checkpoint(cfg, seed) };
    let (summary, _) = evaluate(cfg, &ck, cfg.train.eval_episodes, seed)?;
    Ok((ck, summary))
}

/// Every (axis value, scheme, seed) cell, trained and evaluated on `jobs` workers.
/// Rows come back in axis, scheme, seed order regardless of scheduling.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, jobs: usize) -> Result<Vec<SweepRow>, CliError> {
    cfg.validate()?;
    let values = match axis {
        SweepAxis::N => &cfg.sweep.elements,
        SweepAxis::K => &cfg.sweep.ues,
    };
    let mut cells = Vec::new();
    for &value in values {
        for &scheme in &cfg.sweep.schemes {
            for &seed in &cfg.seeds {
                let base = cfg.clone().with_agent(scheme);
                let cell = match axis {
                    SweepAxis::N => base.with_elements(value),
                    SweepAxis::K => base.with_ues(value),
                };
                cells.push((value, scheme, seed, cell));
            }
        }
    }
    let results: Mutex<Vec<Option<Result<SweepRow, CliError>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(cells.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((value, scheme, seed, cell)) = cells.get(i) else { break };
                let row = train_and_evaluate(cell, *seed).map(|(_, s)| SweepRow {
                    schema_version: SCHEMA_VERSION,
                    axis: axis.as_str().into(),
                    value: *value,
                    scheme: scheme.as_str().into(),
                    seed: *seed,
                    num_elements: cell.scenario.num_elements,
                    num_ues: cell.scenario.num_ues,
                    energy_mean_j: s.energy_mean_j,
                    energy_std_j: s.energy_std_j,
                    energy_per_ue_j: s.energy_mean_j / cell.scenario.num_ues as f64,
                    violation_rate: s.violation_rate,
                    orientation_penalty_episodes: s.orientation_penalty_episodes,
                    local_only_energy_j: s.local_only_energy_j,
                    config_hash: s.config_hash,
                });
                results.lock().expect("no worker panics while holding the lock")[i] = Some(row);
            });
        }
    });
    results.into_inner().expect("workers joined").into_iter().map(|r| r.expect("every cell ran")).collect()
}

/// One JSON line of a trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub schema_version: u32,
    pub episode: usize,
    pub env_seed: u64,
    #[serde(flatten)]
    pub record: SlotRecord,
}

/// Deterministic rollouts of a checkpoint, one line per slot.
pub fn trace(cfg: &ExperimentConfig, ck: &Checkpoint, episodes: usize, seed: u64) -> Result<Vec<TraceLine>, CliError> {
    let (_, results) = evaluate(cfg, ck, episodes, seed)?;
    Ok(results
        .into_iter()
        .enumerate()
        .flat_map(|(episode, r)| {
            let env_seed = r.env_seed;
            r.records.into_iter().map(move |record| TraceLine { schema_version: SCHEMA_VERSION, episode, env_seed, record })
        })
        .collect())
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("plain data serialises"));
        out.push('\n');
    }
    out
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| CliError::io("<csv>", e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io("<csv>", e))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One power-control instance in the batch file layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    #[serde(rename = "alpha_D")]
    pub alpha_d: f64,
    #[serde(rename = "B_k")]
    pub bandwidth: f64,
    pub gain: f64,
    pub noise: f64,
    pub p_max: f64,
    pub tau: f64,
}

impl From<PowerRow> for PowerInstance {
    fn from(r: PowerRow) -> Self {
        PowerInstance {
            alpha_d: r.alpha_d,
            bandwidth: r.bandwidth,
            channel_gain: r.gain,
            noise: r.noise,
            p_max: r.p_max,
            slot_tau: r.tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub schema_version: u32,
    #[serde(rename = "alpha_D")]
    pub alpha_d: f64,
    #[serde(rename = "B_k")]
    pub bandwidth: f64,
    pub gain: f64,
    pub noise: f64,
    pub p_max: f64,
    pub tau: f64,
    pub p_hat: f64,
    pub exceeds_pmax: bool,
    pub p_star: f64,
    /// Offloading energy at `p_star`, the minimised ratio.
    pub y_star: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Parse a power batch: CSV with an `alpha_D,B_k,gain,noise,p_max,tau` header.
pub fn read_power_csv(text: &str, origin: &str) -> Result<Vec<PowerInstance>, CliError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize::<PowerRow>()
        .enumerate()
        .map(|(i, row)| {
            row.map(PowerInstance::from).map_err(|e| CliError::Parse { path: format!("{origin}:{}", i + 2), message: e.to_string() })
        })
        .collect()
}

/// Random but well-conditioned power-control instances.
pub fn random_power_instances(count: usize, seed: u64) -> Vec<PowerInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| PowerInstance {
            alpha_d: rng.random_range(0.01..0.5) * 1e7,
            bandwidth: rng.random_range(1e6..12e6),
            channel_gain: 10f64.powf(rng.random_range(-13.0..-9.0)),
            noise: 1e-14,
            p_max: 0.1,
            slot_tau: 2.0,
        })
        .collect()
}

pub fn power_batch(instances: &[PowerInstance], settings: &DinkelbachSettings) -> Result<Vec<PowerResult>, CliError> {
    instances
        .iter()
        .map(|inst| {
            let bound = min_feasible_power(inst).map_err(|e| CliError::Usage(e.to_string()))?;
            let out = dinkelbach_solve(inst, settings).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(PowerResult {
                schema_version: SCHEMA_VERSION,
                alpha_d: inst.alpha_d,
                bandwidth: inst.bandwidth,
                gain: inst.channel_gain,
                noise: inst.noise,
                p_max: inst.p_max,
                tau: inst.slot_tau,
                p_hat: bound.p_hat,
                exceeds_pmax: bound.exceeds_pmax,
                p_star: out.p_star,
                y_star: out.y_star,
                iterations: out.iterations,
                converged: out.converged,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult { check: name.into(), passed, detail }
}

/// Fast invariant checks on the given configuration; none of them trains a network.
pub fn selftest(cfg: &ExperimentConfig) -> Result<Vec<CheckResult>, CliError> {
    cfg.validate()?;
    let env_cfg = cfg.env_config()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = Vec::new();

    let local = local_checkpoint(&cfg.clone().with_agent(AgentKind::Local), 0);
    let local_cfg = cfg.clone().with_agent(AgentKind::Local);
    let (summary, _) = evaluate(&local_cfg, &local, 5, 0)?;
    let expected = env_cfg.local_only_energy();
    out.push(check(
        "local_only_energy",
        (summary.energy_mean_j - expected).abs() <= 1e-9 * expected.max(1.0) && summary.energy_std_j <= 1e-12,
        format!("{:.12} J against closed form {:.12} J", summary.energy_mean_j, expected),
    ));

    let settings = DinkelbachSettings { tol: cfg.env.dinkelbach_tol, max_iter: cfg.env.dinkelbach_max_iter };
    let mut worst = 0.0f64;
    let mut monotone = true;
    for inst in random_power_instances(50, 1) {
        let sol = dinkelbach_solve(&inst, &settings).map_err(|e| CliError::SelfTest(e.to_string()))?;
        monotone &= sol.y_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        let lo = min_feasible_power(&inst).map_err(|e| CliError::SelfTest(e.to_string()))?.p_hat.min(inst.p_max);
        let grid = (0..=20_000)
            .map(|i| inst.energy(lo + (inst.p_max - lo) * i as f64 / 20_000.0))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max((inst.energy(sol.p_star) - grid) / grid);
    }
    out.push(check("dinkelbach_vs_grid", worst <= 1e-6 && monotone, format!("worst excess {worst:.3e}, monotone {monotone}")));

    let task = env_cfg.task;
    let mut tight = 0.0f64;
    for _ in 0..1000 {
        let t = TaskSpec { size_bits: rng.random_range(1e6..5e7), cycles_per_bit: rng.random_range(100.0..2000.0), ..task };
        let eta = rng.random_range(0.0..1.0);
        let f = optimal_local_freq(&t, eta).hz;
        let fe = optimal_edge_alloc(&t, eta).map_err(|e| CliError::SelfTest(e.to_string()))?;
        let local_time = t.total_cycles() * (1.0 - eta) / f;
        let edge_time = t.total_cycles() * eta / fe;
        tight = tight.max((local_time - t.cycle_t).abs()).max((edge_time - (t.slots_q - 1) as f64 * t.slot_tau()).abs());
    }
    out.push(check("deadline_tightness", tight <= 1e-12 * task.cycle_t.max(1.0), format!("max deviation {tight:.3e} s")));

    let mut theta_ok = true;
    for _ in 0..1000 {
        let ue = Position::planar(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        let probe = angles_from_geometry(&env_cfg.ris, &env_cfg.bs, &[ue]).map_err(|e| CliError::SelfTest(e.to_string()))?;
        let b = rotation_bounds(probe.theta0_b);
        let delta = b.lerp(rng.random_range(0.0..=1.0));
        let a = angles_from_geometry(&env_cfg.ris.with_rotation(delta), &env_cfg.bs, &[ue]).map_err(|e| CliError::SelfTest(e.to_string()))?;
        theta_ok &= (-1e-9..=std::f64::consts::PI + 1e-9).contains(&a.theta_b);
    }
    out.push(check("theta_b_in_front", theta_ok, "1000 random geometries".into()));

    let mut env = MecEnv::new(env_cfg.clone())?;
    let mut worst_gap = 0.0f64;
    for seed in 0..20 {
        env.reset(seed)?;
        let (mut ret, mut energy, mut penalty) = (0.0, 0.0, 0.0);
        while !env.is_done() {
            let raw: Vec<f64> = (0..env_cfg.action_dim()).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let step = env.step(&env.decode_action(&raw)?)?;
            ret += step.reward.total;
            energy += step.reward.energy();
            penalty += step.reward.penalty();
        }
        worst_gap = worst_gap.max((ret + energy + penalty).abs());
    }
    out.push(check("reward_decomposition", worst_gap <= 1e-9, format!("max |return + energy + penalty| {worst_gap:.3e}")));

    let text = cfg.to_toml();
    let again = ExperimentConfig::from_toml(&text)?;
    out.push(check("config_round_trip", &again == cfg, "parse(serialise(config)) == config".into()));
    Ok(out)
}
