//! Experiment configuration in human units (dBm, MHz, Mbit, GHz) with defaults
//! equal to the reference parameter set, and its conversion into the SI
//! structures used by the simulator.

use rismec_core::channel::{ChannelParams, RadiationParams};
use rismec_core::compute::TaskSpec;
use rismec_core::env::{EnvConfig, OrientationMode, PenaltyParams, PowerSolver};
use rismec_core::powerctl::DinkelbachSettings;
use rismec_core::scenario::{MobilityParams, Position, RisPose};
use rismec_core::{db_to_linear, dbm_to_watts};
use rismec_learn::{PpoConfig, SacConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    /// Soft actor-critic choosing rotation, phases and shares.
    Sac,
    /// PPO with the same action decoder.
    Ppo,
    /// Every UE computes locally.
    Local,
    /// SAC with the RIS held at the best fixed orientation.
    Fixed,
    /// SAC with a uniformly random orientation every slot.
    Random,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Sac => "sac",
            AgentKind::Ppo => "ppo",
            AgentKind::Local => "local",
            AgentKind::Fixed => "fixed",
            AgentKind::Random => "random",
        }
    }

    pub fn orientation(self) -> OrientationMode {
        match self {
            AgentKind::Fixed => OrientationMode::Fixed,
            AgentKind::Random => OrientationMode::Random,
            _ => OrientationMode::Agent,
        }
    }

    pub fn is_trained(self) -> bool {
        !matches!(self, AgentKind::Local)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub num_ues: usize,
    pub num_elements: usize,
    pub bs_m: [f64; 2],
    pub ris_m: [f64; 2],
    /// Unrotated surface direction (unit vector).
    pub plane_direction: [f64; 2],
    pub region_center_m: [f64; 2],
    pub region_radius_m: f64,
    pub mobility_memory: f64,
    pub mean_speed_mps: f64,
    pub speed_std_mps: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            num_ues: 12,
            num_elements: 16,
            bs_m: [0.0, 0.0],
            ris_m: [30.0, 0.0],
            plane_direction: [0.0, -1.0],
            region_center_m: [30.0, 10.0],
            region_radius_m: 5.0,
            mobility_memory: 0.8,
            mean_speed_mps: 1.0,
            speed_std_mps: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub path_loss_at_1m_db: f64,
    pub wavelength_m: f64,
    pub exponent_ue_ris: f64,
    pub exponent_ris_bs: f64,
    pub rician_ue_ris_db: f64,
    pub rician_ris_bs_db: f64,
    pub noise_dbm: f64,
    pub bandwidth_mhz: f64,
    pub direct_exponent: f64,
    /// Extra attenuation of the direct UE→BS link.
    pub direct_blockage_db: f64,
    pub phase_bits: u32,
    pub lambertian_order: f64,
    pub max_directivity: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            path_loss_at_1m_db: -30.0,
            wavelength_m: 0.125,
            exponent_ue_ris: 2.0,
            exponent_ris_bs: 2.0,
            rician_ue_ris_db: 10.0,
            rician_ris_bs_db: 10.0,
            noise_dbm: -110.0,
            bandwidth_mhz: 12.0,
            direct_exponent: 3.5,
            direct_blockage_db: 20.0,
            phase_bits: 2,
            lambertian_order: 2.0,
            max_directivity: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComputeSection {
    pub task_mbit: f64,
    pub cycles_per_bit: f64,
    pub capacitance: f64,
    pub local_max_ghz: f64,
    pub edge_total_ghz: f64,
    pub cycle_s: f64,
    pub slots: usize,
    pub p_max_dbm: f64,
}

impl Default for ComputeSection {
    fn default() -> Self {
        Self {
            task_mbit: 10.0,
            cycles_per_bit: 600.0,
            capacitance: 1e-27,
            local_max_ghz: 0.6,
            edge_total_ghz: 10.0,
            cycle_s: 10.0,
            slots: 5,
            p_max_dbm: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltySection {
    pub weight_j: f64,
    pub orientation_check: bool,
}

impl Default for PenaltySection {
    fn default() -> Self {
        Self { weight_j: 1.0, orientation_check: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub power_solver: PowerSolver,
    pub dinkelbach_tol: f64,
    pub dinkelbach_max_iter: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self { power_solver: PowerSolver::ClosedForm, dinkelbach_tol: 1e-8, dinkelbach_max_iter: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub kind: AgentKind,
    pub sac: SacConfig,
    pub ppo: PpoConfig,
}

impl Default for AgentSection {
    fn default() -> Self {
        Self { kind: AgentKind::Sac, sac: SacConfig::default(), ppo: PpoConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    /// Training episodes averaged into one metrics row.
    pub log_every_episodes: usize,
    pub eval_episodes: usize,
    /// Multiplier applied to rewards before they reach the learner.
    pub reward_scale: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { steps: 50_000, log_every_episodes: 50, eval_episodes: 20, reward_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub elements: Vec<usize>,
    pub ues: Vec<usize>,
    pub schemes: Vec<AgentKind>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            elements: vec![8, 16, 24],
            ues: vec![1, 3, 5],
            schemes: vec![AgentKind::Sac, AgentKind::Fixed, AgentKind::Random, AgentKind::Local],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub scenario: ScenarioSection,
    pub channel: ChannelSection,
    pub compute: ComputeSection,
    pub penalty: PenaltySection,
    pub env: EnvSection,
    pub agent: AgentSection,
    pub train: TrainSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seeds: vec![0, 1, 2, 3, 4],
            scenario: ScenarioSection::default(),
            channel: ChannelSection::default(),
            compute: ComputeSection::default(),
            penalty: PenaltySection::default(),
            env: EnvSection::default(),
            agent: AgentSection::default(),
            train: TrainSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

fn planar(p: [f64; 2]) -> Position {
    Position::planar(p[0], p[1])
}

impl ExperimentConfig {
    /// Parse TOML; unknown or mistyped keys are reported with their path.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Parse { path: String::new(), message: e.to_string() })?;
        serde_path_to_error::deserialize(de).map_err(|e| CliError::Parse {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable in TOML")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn with_agent(mut self, kind: AgentKind) -> Self {
        self.agent.kind = kind;
        self
    }

    pub fn with_elements(mut self, n: usize) -> Self {
        self.scenario.num_elements = n;
        self
    }

    pub fn with_ues(mut self, k: usize) -> Self {
        self.scenario.num_ues = k;
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |path: &str, message: &str| Err(CliError::Invalid { path: path.into(), message: message.into() });
        if self.seeds.is_empty() {
            return bad("seeds", "at least one seed is required");
        }
        if self.train.log_every_episodes == 0 {
            return bad("train.log_every_episodes", "must be positive");
        }
        if !(self.train.reward_scale > 0.0) {
            return bad("train.reward_scale", "must be positive");
        }
        if self.sweep.elements.contains(&0) || self.sweep.ues.contains(&0) {
            return bad("sweep", "axis values must be positive");
        }
        if self.compute.slots < 2 {
            return bad("compute.slots", "a cycle needs at least two slots");
        }
        let [dx, dy] = self.scenario.plane_direction;
        if ((dx * dx + dy * dy).sqrt() - 1.0).abs() > 1e-9 {
            return bad("scenario.plane_direction", "must be a unit vector");
        }
        self.agent.sac.validate().map_err(|e| CliError::Invalid { path: "agent.sac".into(), message: e.to_string() })?;
        self.agent.ppo.validate().map_err(|e| CliError::Invalid { path: "agent.ppo".into(), message: e.to_string() })?;
        self.env_config()?.validate().map_err(|e| CliError::Invalid { path: "scenario".into(), message: e.to_string() })
    }

    /// SI environment configuration; the orientation mode follows the agent kind.
    pub fn env_config(&self) -> Result<EnvConfig, CliError> {
        let s = &self.scenario;
        let c = &self.channel;
        let m = &self.compute;
        let cfg = EnvConfig {
            num_ues: s.num_ues,
            num_elements: s.num_elements,
            phase_bits: c.phase_bits,
            bs: planar(s.bs_m),
            ris: RisPose { position: planar(s.ris_m), plane_direction: s.plane_direction, rotation: 0.0 },
            mobility: MobilityParams {
                memory: s.mobility_memory,
                mean_speed: s.mean_speed_mps,
                speed_std: s.speed_std_mps,
                region_center: planar(s.region_center_m),
                region_radius: s.region_radius_m,
            },
            channel: ChannelParams {
                rho0: db_to_linear(c.path_loss_at_1m_db),
                alpha1: c.exponent_ue_ris,
                alpha2: c.exponent_ris_bs,
                k1: db_to_linear(c.rician_ue_ris_db),
                k2: db_to_linear(c.rician_ris_bs_db),
                wavelength: c.wavelength_m,
                noise_power: dbm_to_watts(c.noise_dbm),
                total_bandwidth: c.bandwidth_mhz * 1e6,
                num_ues: s.num_ues,
                direct_exponent: c.direct_exponent,
                direct_blockage: db_to_linear(-c.direct_blockage_db),
            },
            radiation: RadiationParams { z: c.lambertian_order, max_directivity: c.max_directivity },
            task: TaskSpec {
                size_bits: m.task_mbit * 1e6,
                cycles_per_bit: m.cycles_per_bit,
                capacitance: m.capacitance,
                f_loc_max: m.local_max_ghz * 1e9,
                cycle_t: m.cycle_s,
                slots_q: m.slots,
            },
            p_max: dbm_to_watts(m.p_max_dbm),
            f_edge_total: m.edge_total_ghz * 1e9,
            penalty: PenaltyParams { weight: self.penalty.weight_j, orientation_check: self.penalty.orientation_check },
            orientation: self.agent.kind.orientation(),
            power_solver: self.env.power_solver,
            dinkelbach: DinkelbachSettings { tol: self.env.dinkelbach_tol, max_iter: self.env.dinkelbach_max_iter },
        };
        Ok(cfg)
    }
}
