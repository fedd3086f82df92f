//! Episodic slot environment.
//!
//! One episode is one task cycle with `Q − 1` offloading decisions. Each step
//! applies the RIS rotation and phases, draws the slot channels, sizes every
//! offloading UE's transmit power at the deadline bound and charges offloading
//! energy. The last step also charges local computation at the optimal clock
//! and the edge-capacity penalty.
//!
//! Observed angles are reported against the unrotated surface (`θ⁰`): the
//! agent picks the rotation for the slot after seeing them.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    self, compose_channels, effective_channels, ChannelError, ChannelParams, FadingSample, PhaseConfig,
    RadiationParams,
};
use crate::compute::{self, ComputeError, TaskSpec};
use crate::powerctl::{self, DinkelbachSettings, PowerError, PowerInstance};
use crate::scenario::{
    self, angles_from_geometry, link_geometry, rotation_bounds, GeometryError, MobilityParams, Position, RisPose,
    RotationBounds, UeMotion,
};

/// Relative slack on the slot deadline before an offload counts as late.
const DEADLINE_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("raw action has length {got}, expected {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("episode is finished; call reset first")]
    EpisodeDone,
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Compute(#[from] ComputeError),
    #[error(transparent)]
    Power(#[from] PowerError),
}

/// Who sets the RIS rotation each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationMode {
    /// The action's rotation is applied.
    Agent,
    /// One rotation maximising the expected pattern gain over the UE region is held.
    Fixed,
    /// A uniformly random admissible rotation is drawn every slot.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerSolver {
    /// Transmit at the deadline bound `p̂`, the minimiser of the offloading energy.
    ClosedForm,
    /// Run the Dinkelbach iteration for every offloading UE.
    Dinkelbach,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    /// Penalty weight W in joules.
    pub weight: f64,
    /// Charge W when a random orientation/phase draw beats the chosen one.
    pub orientation_check: bool,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        Self { weight: 1.0, orientation_check: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub num_ues: usize,
    pub num_elements: usize,
    pub phase_bits: u32,
    pub bs: Position,
    /// RIS position and unrotated surface direction; the rotation field is ignored.
    pub ris: RisPose,
    pub mobility: MobilityParams,
    pub channel: ChannelParams,
    pub radiation: RadiationParams,
    pub task: TaskSpec,
    pub p_max: f64,
    pub f_edge_total: f64,
    pub penalty: PenaltyParams,
    pub orientation: OrientationMode,
    pub power_solver: PowerSolver,
    pub dinkelbach: DinkelbachSettings,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_ues: 12,
            num_elements: 16,
            phase_bits: 2,
            bs: Position::planar(0.0, 0.0),
            ris: RisPose { position: Position::planar(30.0, 0.0), plane_direction: [0.0, -1.0], rotation: 0.0 },
            mobility: MobilityParams::default(),
            channel: ChannelParams::default(),
            radiation: RadiationParams::default(),
            task: TaskSpec::default(),
            p_max: 0.1,
            f_edge_total: 1e10,
            penalty: PenaltyParams::default(),
            orientation: OrientationMode::Agent,
            power_solver: PowerSolver::ClosedForm,
            dinkelbach: DinkelbachSettings::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: &str| Err(EnvError::InvalidConfig(msg.to_string()));
        if self.num_ues == 0 || self.num_elements == 0 {
            return bad("num_ues and num_elements must be positive");
        }
        if self.channel.num_ues != self.num_ues {
            return bad("channel.num_ues must equal num_ues");
        }
        if self.phase_bits == 0 || self.phase_bits > 16 {
            return bad("phase_bits must be in 1..=16");
        }
        if self.task.slots_q < 2 {
            return bad("a cycle needs at least two slots");
        }
        if !(self.p_max > 0.0 && self.f_edge_total > 0.0 && self.penalty.weight > 0.0) {
            return bad("p_max, f_edge_total and the penalty weight must be positive");
        }
        if !(0.0..=1.0).contains(&self.mobility.memory) || self.mobility.region_radius <= 0.0 {
            return bad("mobility memory must be in [0, 1] and the region radius positive");
        }
        let c = &self.channel;
        if [c.rho0, c.alpha1, c.alpha2, c.wavelength, c.noise_power, c.total_bandwidth]
            .iter()
            .any(|v| !(*v > 0.0))
            || c.k1 < 0.0
            || c.k2 < 0.0
        {
            return bad("channel parameters must be positive");
        }
        let ris_to_center = self.ris.position.distance(&self.mobility.region_center);
        if ris_to_center <= self.mobility.region_radius {
            return bad("the UE region must not contain the RIS");
        }
        angles_from_geometry(&self.ris, &self.bs, &[])?;
        Ok(())
    }

    pub fn action_dim(&self) -> usize {
        1 + self.num_elements + self.num_ues
    }

    pub fn observation_dim(&self) -> usize {
        3 * self.num_ues + 1
    }

    /// Number of decision steps per episode (`Q − 1`).
    pub fn episode_len(&self) -> usize {
        self.task.slots_q - 1
    }

    pub fn rotation_bounds(&self) -> Result<RotationBounds, EnvError> {
        let theta0_b = angles_from_geometry(&self.ris, &self.bs, &[])?.theta0_b;
        Ok(rotation_bounds(theta0_b))
    }

    /// Deterministic sample of the UE region: the centre plus three rings of eight points.
    pub fn region_samples(&self) -> Vec<Position> {
        let c = self.mobility.region_center;
        let r = self.mobility.region_radius;
        let mut points = vec![c];
        for ring in 1..=3 {
            let radius = r * ring as f64 / 3.0;
            for j in 0..8 {
                let a = j as f64 * PI / 4.0;
                points.push(Position::new(c.x + radius * a.cos(), c.y + radius * a.sin(), c.z));
            }
        }
        points
    }

    /// Energy of processing every task locally at the optimal clock.
    pub fn local_only_energy(&self) -> f64 {
        self.num_ues as f64 * compute::optimal_local_energy(&self.task, 0.0)
    }
}

/// Mean pattern product `i_k·sin^z(θ_k)·sin^z(θ_B)` over `points` at rotation `delta`.
pub fn mean_pattern_gain(cfg: &EnvConfig, points: &[Position], delta: f64) -> Result<f64, EnvError> {
    let set = angles_from_geometry(&cfg.ris.with_rotation(delta), &cfg.bs, points)?;
    let rad = RadiationParams { max_directivity: 1.0, ..cfg.radiation };
    let total: f64 = (0..points.len()).map(|k| channel::pattern_factor(&rad, &set, k)).sum();
    Ok(total / points.len() as f64)
}

/// Rotation maximising [`mean_pattern_gain`]: a 721-point scan of the admissible
/// interval followed by golden-section refinement around the best cell.
pub fn best_fixed_rotation(cfg: &EnvConfig, points: &[Position]) -> Result<f64, EnvError> {
    let bounds = cfg.rotation_bounds()?;
    let cells = 720;
    let step = bounds.width() / cells as f64;
    let mut best = (bounds.lo, f64::NEG_INFINITY);
    for i in 0..=cells {
        let delta = bounds.lerp(i as f64 / cells as f64);
        let g = mean_pattern_gain(cfg, points, delta)?;
        if g > best.1 {
            best = (delta, g);
        }
    }
    let (mut a, mut b) = (bounds.clamp(best.0 - step), bounds.clamp(best.0 + step));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if mean_pattern_gain(cfg, points, c)? >= mean_pattern_gain(cfg, points, d)? {
            b = d;
        } else {
            a = c;
        }
    }
    let refined = (a + b) / 2.0;
    Ok(if mean_pattern_gain(cfg, points, refined)? >= best.1 { refined } else { best.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// `d_{k,R}` in metres.
    pub distances: Vec<f64>,
    /// `θ⁰_k` in radians, against the unrotated surface.
    pub angles: Vec<f64>,
    /// Offloaded share so far, `Σ_{i<q} α_k[i]`.
    pub cum_alpha: Vec<f64>,
    /// 1-based slot index of the next decision.
    pub slot_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvAction {
    pub rotation: f64,
    pub phases: PhaseConfig,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub offload_energy: f64,
    /// Only charged on the final step.
    pub local_energy: f64,
    /// Number of UEs breaking a share, power or deadline constraint this step.
    pub violations: usize,
    pub p_theta: f64,
    pub p1: f64,
    /// Only charged on the final step; includes `p1`.
    pub p2: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn energy(&self) -> f64 {
        self.offload_energy + self.local_energy
    }

    pub fn penalty(&self) -> f64 {
        -self.total - self.energy()
    }
}

/// Everything that happened in one slot, one line of the trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub positions: Vec<Position>,
    pub rotation: f64,
    pub theta_k: Vec<f64>,
    pub theta_b: f64,
    pub indicator: Vec<bool>,
    pub phases: Vec<f64>,
    pub alphas: Vec<f64>,
    pub channel_gain: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub power: Vec<f64>,
    pub offload_time: Vec<f64>,
    pub offload_energy: Vec<f64>,
    pub local_energy: Vec<f64>,
    pub f_loc: Vec<f64>,
    pub f_edge: Vec<f64>,
    pub violated: Vec<bool>,
    pub orientation_beaten: bool,
    pub reward: RewardBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub record: SlotRecord,
}

pub struct MecEnv {
    cfg: EnvConfig,
    bounds: RotationBounds,
    fixed_rotation: f64,
    distance_range: (f64, f64),
    codebook_step: f64,
    rng: ChaCha8Rng,
    ues: Vec<UeMotion>,
    cum_alpha: Vec<f64>,
    slot: usize,
    done: bool,
}

impl MecEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let bounds = cfg.rotation_bounds()?;
        let fixed_rotation = best_fixed_rotation(&cfg, &cfg.region_samples())?;
        let center = cfg.ris.position.distance(&cfg.mobility.region_center);
        let r = cfg.mobility.region_radius;
        let codebook_step = 2.0 * PI / (1u64 << cfg.phase_bits) as f64;
        Ok(Self {
            bounds,
            fixed_rotation,
            distance_range: ((center - r).max(0.0), center + r),
            codebook_step,
            rng: ChaCha8Rng::seed_from_u64(0),
            ues: Vec::new(),
            cum_alpha: vec![0.0; cfg.num_ues],
            slot: 1,
            done: true,
            cfg,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn bounds(&self) -> RotationBounds {
        self.bounds
    }

    pub fn fixed_rotation(&self) -> f64 {
        self.fixed_rotation
    }

    pub fn ues(&self) -> &[UeMotion] {
        &self.ues
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset(&mut self, seed: u64) -> Result<EnvState, EnvError> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.ues = scenario::spawn_ues(self.cfg.num_ues, &self.cfg.mobility, &mut self.rng);
        self.cum_alpha = vec![0.0; self.cfg.num_ues];
        self.slot = 1;
        self.done = false;
        self.state()
    }

    fn positions(&self) -> Vec<Position> {
        self.ues.iter().map(|u| u.position).collect()
    }

    pub fn state(&self) -> Result<EnvState, EnvError> {
        let positions = self.positions();
        let (distances, _) = scenario::distances(&self.cfg.ris, &self.cfg.bs, &positions)?;
        let angles = angles_from_geometry(&self.cfg.ris.with_rotation(0.0), &self.cfg.bs, &positions)?.theta0_k;
        Ok(EnvState { distances, angles, cum_alpha: self.cum_alpha.clone(), slot_index: self.slot })
    }

    /// Agent-facing features in roughly `[0, 1]`: distances scaled by the region
    /// bounds, angles by `2π`, the raw cumulative shares, and slot progress.
    pub fn observe(&self, state: &EnvState) -> Vec<f64> {
        let (lo, hi) = self.distance_range;
        let mut obs = Vec::with_capacity(self.cfg.observation_dim());
        obs.extend(state.distances.iter().map(|d| ((d - lo) / (hi - lo)).clamp(0.0, 1.0)));
        obs.extend(state.angles.iter().map(|a| a / (2.0 * PI)));
        obs.extend(state.cum_alpha.iter().copied());
        let steps = self.cfg.episode_len().max(2) - 1;
        obs.push((state.slot_index.saturating_sub(1)) as f64 / steps as f64);
        obs
    }

    /// Map a raw action in `[−1, 1]^{1+N+K}` onto rotation, codebook phases and shares.
    ///
    /// Rotation and phases are affine in the raw value. Shares are rectified,
    /// `α = max(0, x)`, so that the whole negative half means "keep local".
    pub fn decode_action(&self, raw: &[f64]) -> Result<EnvAction, EnvError> {
        let expected = self.cfg.action_dim();
        if raw.len() != expected {
            return Err(EnvError::ActionLength { expected, got: raw.len() });
        }
        let unit = |x: f64| (x.clamp(-1.0, 1.0) + 1.0) / 2.0;
        let n = self.cfg.num_elements;
        let levels = 1usize << self.cfg.phase_bits;
        let span = 2.0 * PI - self.codebook_step;
        let phases = raw[1..=n]
            .iter()
            .map(|&x| {
                let idx = (unit(x) * span / self.codebook_step).round() as usize;
                idx.min(levels - 1) as f64 * self.codebook_step
            })
            .collect();
        Ok(EnvAction {
            rotation: self.bounds.lerp(unit(raw[0])),
            phases: PhaseConfig { bits: self.cfg.phase_bits, phases },
            alphas: raw[1 + n..].iter().map(|&x| x.clamp(0.0, 1.0)).collect(),
        })
    }

    /// Inverse of the rotation part of [`decode_action`].
    pub fn encode_rotation(&self, rotation: f64) -> f64 {
        (2.0 * (self.bounds.clamp(rotation) - self.bounds.lo) / self.bounds.width() - 1.0).clamp(-1.0, 1.0)
    }

    fn check_action(&self, action: &EnvAction) -> Result<(), EnvError> {
        if action.phases.phases.len() != self.cfg.num_elements || action.alphas.len() != self.cfg.num_ues {
            return Err(EnvError::InvalidAction("phase or share vector has the wrong length".into()));
        }
        if action.phases.bits != self.cfg.phase_bits {
            return Err(EnvError::InvalidAction("phase resolution does not match the environment".into()));
        }
        action.phases.validate()?;
        if action.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(EnvError::InvalidAction("offloading shares must lie in [0, 1]".into()));
        }
        if self.cfg.orientation == OrientationMode::Agent && !self.bounds.contains(action.rotation) {
            return Err(EnvError::InvalidAction(format!(
                "rotation {} outside [{}, {}]",
                action.rotation, self.bounds.lo, self.bounds.hi
            )));
        }
        Ok(())
    }

    fn random_phases(&mut self) -> PhaseConfig {
        let levels = 1usize << self.cfg.phase_bits;
        let phases = (0..self.cfg.num_elements)
            .map(|_| self.rng.random_range(0..levels) as f64 * self.codebook_step)
            .collect();
        PhaseConfig { bits: self.cfg.phase_bits, phases }
    }

    fn channels_at(
        &self,
        positions: &[Position],
        rotation: f64,
        phases: &PhaseConfig,
        fading: &FadingSample,
    ) -> Result<(Vec<Complex64>, scenario::AngleSet), EnvError> {
        let ris = self.cfg.ris.with_rotation(rotation);
        let angles = angles_from_geometry(&ris, &self.cfg.bs, positions)?;
        let geo = link_geometry(&ris, &self.cfg.bs, positions, self.cfg.num_elements, self.cfg.channel.wavelength)?;
        let draw = compose_channels(&self.cfg.channel, &geo, fading);
        Ok((effective_channels(&draw, &self.cfg.radiation, &angles, phases)?, angles))
    }

    pub fn step(&mut self, action: &EnvAction) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        self.check_action(action)?;
        let cfg = self.cfg.clone();
        let k_count = cfg.num_ues;
        let positions = self.positions();
        let final_step = self.slot == cfg.episode_len();

        let fading = FadingSample::draw(k_count, cfg.num_elements, &mut self.rng);
        let rotation = match cfg.orientation {
            OrientationMode::Agent => action.rotation,
            OrientationMode::Fixed => self.fixed_rotation,
            OrientationMode::Random => self.rng.random_range(self.bounds.lo..=self.bounds.hi),
        };
        let (h, angles) = self.channels_at(&positions, rotation, &action.phases, &fading)?;
        let gains: Vec<f64> = h.iter().map(|c| c.norm_sqr()).collect();

        let tau = cfg.task.slot_tau();
        let bandwidth = cfg.channel.per_ue_bandwidth();
        let mut record = SlotRecord {
            slot: self.slot,
            positions: positions.clone(),
            rotation,
            theta_k: angles.theta_k.clone(),
            theta_b: angles.theta_b,
            indicator: angles.indicator_k.clone(),
            phases: action.phases.phases.clone(),
            alphas: action.alphas.clone(),
            channel_gain: gains.clone(),
            p_hat: vec![0.0; k_count],
            power: vec![0.0; k_count],
            offload_time: vec![0.0; k_count],
            offload_energy: vec![0.0; k_count],
            local_energy: vec![0.0; k_count],
            f_loc: vec![0.0; k_count],
            f_edge: vec![0.0; k_count],
            violated: vec![false; k_count],
            orientation_beaten: false,
            reward: RewardBreakdown::default(),
        };

        for k in 0..k_count {
            let alpha = action.alphas[k];
            let mut violated = self.cum_alpha[k] + alpha > 1.0;
            if alpha > 0.0 {
                let inst = PowerInstance {
                    alpha_d: alpha * cfg.task.size_bits,
                    bandwidth,
                    channel_gain: gains[k],
                    noise: cfg.channel.noise_power,
                    p_max: cfg.p_max,
                    slot_tau: tau,
                };
                match powerctl::min_feasible_power(&inst) {
                    Ok(bound) => {
                        record.p_hat[k] = bound.p_hat;
                        let power = if bound.exceeds_pmax {
                            violated = true;
                            cfg.p_max
                        } else {
                            match cfg.power_solver {
                                PowerSolver::ClosedForm => bound.p_hat,
                                PowerSolver::Dinkelbach => powerctl::dinkelbach_solve(&inst, &cfg.dinkelbach)?.p_star,
                            }
                        };
                        let t_off = compute::offload_time(alpha, &cfg.task, inst.rate(power))?;
                        violated |= t_off > tau * (1.0 + DEADLINE_SLACK);
                        record.power[k] = power;
                        record.offload_time[k] = t_off;
                        record.offload_energy[k] = compute::offload_energy(t_off, power);
                    }
                    Err(PowerError::ZeroGain(_)) => violated = true,
                }
            }
            record.violated[k] = violated;
            self.cum_alpha[k] += alpha;
        }

        let weight = cfg.penalty.weight;
        let offloading: Vec<usize> = (0..k_count).filter(|&k| action.alphas[k] > 0.0).collect();
        if cfg.penalty.orientation_check && !offloading.is_empty() {
            let probe_rotation = match cfg.orientation {
                OrientationMode::Agent => self.rng.random_range(self.bounds.lo..=self.bounds.hi),
                _ => rotation,
            };
            let probe_phases = self.random_phases();
            let (probe, _) = self.channels_at(&positions, probe_rotation, &probe_phases, &fading)?;
            let chosen: f64 = offloading.iter().map(|&k| gains[k]).sum();
            let random: f64 = offloading.iter().map(|&k| probe[k].norm_sqr()).sum();
            record.orientation_beaten = random > chosen;
        }

        let mut reward = RewardBreakdown {
            offload_energy: record.offload_energy.iter().sum(),
            p_theta: if record.orientation_beaten { weight } else { 0.0 },
            ..Default::default()
        };

        if final_step {
            let alloc = compute::allocate(&cfg.task, &self.cum_alpha, cfg.f_edge_total)?;
            for k in 0..k_count {
                let eta = self.cum_alpha[k].clamp(0.0, 1.0);
                let f = compute::optimal_local_freq(&cfg.task, eta);
                if f.exceeds_cap {
                    record.violated[k] = true;
                }
                record.local_energy[k] = compute::local_time_energy(&cfg.task, eta, f.hz)?.1;
            }
            record.f_loc = alloc.f_loc.clone();
            record.f_edge = alloc.f_edge.clone();
            reward.local_energy = record.local_energy.iter().sum();
            reward.violations = record.violated.iter().filter(|&&v| v).count();
            reward.p1 = reward.violations as f64 * weight + reward.p_theta;
            // Oversubscription is measured in GHz so the term is on the joule scale of W.
            reward.p2 = alloc.edge_oversubscription() / 1e9 * weight + reward.p1;
            reward.total = -(reward.offload_energy + reward.local_energy) - reward.p2;
        } else {
            reward.violations = record.violated.iter().filter(|&&v| v).count();
            reward.p1 = reward.violations as f64 * weight + reward.p_theta;
            reward.total = -reward.offload_energy - reward.p1;
        }
        record.reward = reward;

        self.ues = scenario::step_mobility(&self.ues, &cfg.mobility, tau, &mut self.rng);
        self.done = final_step;
        if !final_step {
            self.slot += 1;
        }
        Ok(StepOutcome { state: self.state()?, reward, done: self.done, record })
    }
}
