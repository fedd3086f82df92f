//! Partial-offloading task model: offload, edge and local latency/energy, and
//! the closed-form CPU frequency allocations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComputeError {
    #[error("cannot offload a positive share over a zero-rate link")]
    ZeroRateOffload,
    #[error("edge share {eta} needs a positive edge frequency")]
    ZeroEdgeFrequency { eta: f64 },
    #[error("local share {local} needs a positive local frequency")]
    ZeroLocalFrequency { local: f64 },
    #[error("the edge schedule needs at least two slots, got {0}")]
    TooFewSlots(usize),
}

/// Per-UE task and cycle timing, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// Task size D in bits.
    pub size_bits: f64,
    /// CPU cycles per bit C.
    pub cycles_per_bit: f64,
    /// Effective switched capacitance c (energy = c·f²·cycles).
    pub capacitance: f64,
    pub f_loc_max: f64,
    /// Cycle length T in seconds.
    pub cycle_t: f64,
    /// Number of slots Q per cycle.
    pub slots_q: usize,
}

impl TaskSpec {
    pub fn slot_tau(&self) -> f64 {
        self.cycle_t / self.slots_q as f64
    }

    pub fn total_cycles(&self) -> f64 {
        self.size_bits * self.cycles_per_bit
    }
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            size_bits: 1e7,
            cycles_per_bit: 600.0,
            capacitance: 1e-27,
            f_loc_max: 6e8,
            cycle_t: 10.0,
            slots_q: 5,
        }
    }
}

/// Per-slot offloading ratios of every UE.
///
/// Ratios that push the cumulative share above one are kept as-is; callers count
/// them as violations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OffloadPlan {
    /// `alpha[k][q]` for the offloading slots `q = 1..Q−1`.
    pub alpha: Vec<Vec<f64>>,
}

impl OffloadPlan {
    pub fn new(num_ues: usize) -> Self {
        Self { alpha: vec![Vec::new(); num_ues] }
    }

    pub fn push_slot(&mut self, ratios: &[f64]) {
        for (row, &a) in self.alpha.iter_mut().zip(ratios) {
            row.push(a);
        }
    }

    pub fn eta(&self) -> Vec<f64> {
        self.alpha.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn infeasible_ues(&self) -> usize {
        self.eta().iter().filter(|&&e| e > 1.0).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceAllocation {
    pub f_loc: Vec<f64>,
    pub f_edge: Vec<f64>,
    pub f_edge_total: f64,
}

impl ResourceAllocation {
    pub fn edge_demand(&self) -> f64 {
        self.f_edge.iter().sum()
    }

    /// Edge frequency requested beyond the server capacity, zero when it fits.
    pub fn edge_oversubscription(&self) -> f64 {
        (self.edge_demand() - self.f_edge_total).max(0.0)
    }
}

/// `t = α·D / R`.
pub fn offload_time(alpha: f64, task: &TaskSpec, rate: f64) -> Result<f64, ComputeError> {
    if alpha == 0.0 {
        return Ok(0.0);
    }
    if rate <= 0.0 {
        return Err(ComputeError::ZeroRateOffload);
    }
    Ok(alpha * task.size_bits / rate)
}

pub fn offload_energy(t_off: f64, power: f64) -> f64 {
    t_off * power
}

/// `t = D·C·η / f_e`.
pub fn edge_time(task: &TaskSpec, eta: f64, f_edge: f64) -> Result<f64, ComputeError> {
    if eta == 0.0 {
        return Ok(0.0);
    }
    if f_edge <= 0.0 {
        return Err(ComputeError::ZeroEdgeFrequency { eta });
    }
    Ok(task.total_cycles() * eta / f_edge)
}

/// Local latency `D·C·(1−η)/f` and energy `c·f²·D·C·(1−η)`.
pub fn local_time_energy(task: &TaskSpec, eta: f64, f_loc: f64) -> Result<(f64, f64), ComputeError> {
    let local = 1.0 - eta;
    if local == 0.0 {
        return Ok((0.0, 0.0));
    }
    if f_loc <= 0.0 {
        return Err(ComputeError::ZeroLocalFrequency { local });
    }
    let cycles = task.total_cycles() * local;
    Ok((cycles / f_loc, task.capacitance * f_loc * f_loc * cycles))
}

/// Result of a closed-form frequency rule; `exceeds_cap` reports a breached hardware limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyChoice {
    pub hz: f64,
    pub exceeds_cap: bool,
}

/// Slowest local clock finishing the local share exactly at `T`: `D·C·(1−η)/T`.
pub fn optimal_local_freq(task: &TaskSpec, eta: f64) -> FrequencyChoice {
    let hz = task.total_cycles() * (1.0 - eta) / task.cycle_t;
    FrequencyChoice { hz, exceeds_cap: hz > task.f_loc_max }
}

/// Edge clock finishing the offloaded share within the last `Q−1` slots: `D·C·η/((Q−1)τ)`.
pub fn optimal_edge_alloc(task: &TaskSpec, eta: f64) -> Result<f64, ComputeError> {
    if task.slots_q < 2 {
        return Err(ComputeError::TooFewSlots(task.slots_q));
    }
    Ok(task.total_cycles() * eta / ((task.slots_q - 1) as f64 * task.slot_tau()))
}

/// Local energy at the optimal local clock.
pub fn optimal_local_energy(task: &TaskSpec, eta: f64) -> f64 {
    let f = optimal_local_freq(task, eta).hz;
    task.capacitance * f * f * task.total_cycles() * (1.0 - eta)
}

/// Closed-form allocation for a whole population given each UE's offloaded share.
///
/// Shares are clipped into `[0, 1]` before sizing the clocks; an over-offloaded
/// UE cannot run a negative local workload.
pub fn allocate(task: &TaskSpec, etas: &[f64], f_edge_total: f64) -> Result<ResourceAllocation, ComputeError> {
    let mut alloc = ResourceAllocation { f_edge_total, ..Default::default() };
    for &eta in etas {
        let eta = eta.clamp(0.0, 1.0);
        alloc.f_loc.push(optimal_local_freq(task, eta).hz);
        alloc.f_edge.push(optimal_edge_alloc(task, eta)?);
    }
    Ok(alloc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_task() -> TaskSpec {
        TaskSpec::default()
    }

    #[test]
    fn offload_time_examples() {
        let task = reference_task();
        assert_eq!(offload_time(0.0, &task, 0.0).unwrap(), 0.0);
        assert_eq!(offload_time(0.2, &task, 1e6).unwrap(), 2.0);
        assert_eq!(offload_time(0.2, &task, 0.0), Err(ComputeError::ZeroRateOffload));
        for &(a, r) in &[(0.13, 3.3e6), (0.9, 1.7e5), (1e-4, 9.1e7)] {
            let t = offload_time(a, &task, r).unwrap();
            assert!((t * r / task.size_bits - a).abs() < 1e-12);
        }
    }

    #[test]
    fn offload_energy_examples() {
        assert!((offload_energy(2.0, 0.1) - 0.2).abs() < 1e-15);
        assert_eq!(offload_energy(2.0, 0.0), 0.0);
    }

    #[test]
    fn edge_time_examples() {
        let task = reference_task();
        assert_eq!(edge_time(&task, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(edge_time(&task, 0.5, 3.75e8).unwrap(), 8.0);
        assert!(matches!(edge_time(&task, 0.5, 0.0), Err(ComputeError::ZeroEdgeFrequency { .. })));
    }

    #[test]
    fn local_examples() {
        let task = reference_task();
        assert_eq!(local_time_energy(&task, 1.0, 0.0).unwrap(), (0.0, 0.0));
        let (t, e) = local_time_energy(&task, 0.0, 6e8).unwrap();
        assert_eq!(t, 10.0);
        assert!((e - 2.16).abs() < 1e-12);
        assert!(local_time_energy(&task, 0.3, 0.0).is_err());
    }

    #[test]
    fn local_energy_is_quadratic_in_frequency() {
        let task = reference_task();
        let e = |f| local_time_energy(&task, 0.4, f).unwrap().1;
        let base = e(1e8);
        assert!((e(2e8) / base - 4.0).abs() < 1e-12);
        assert!((e(3e8) / base - 9.0).abs() < 1e-12);
    }

    #[test]
    fn optimal_local_examples() {
        let task = reference_task();
        assert_eq!(optimal_local_freq(&task, 1.0).hz, 0.0);
        let f = optimal_local_freq(&task, 0.0);
        assert_eq!(f.hz, 6e8);
        assert!(!f.exceeds_cap);
        let tight = TaskSpec { f_loc_max: 5e8, ..task };
        assert!(optimal_local_freq(&tight, 0.0).exceeds_cap);
    }

    #[test]
    fn optimal_local_minimises_energy_over_feasible_clocks() {
        let task = reference_task();
        for i in 0..20 {
            let eta = i as f64 / 20.0;
            let fstar = optimal_local_freq(&task, eta).hz;
            let estar = local_time_energy(&task, eta, fstar).unwrap().1;
            for scale in [1.0001, 1.1, 2.0] {
                assert!(local_time_energy(&task, eta, fstar * scale).unwrap().1 >= estar);
            }
        }
    }

    #[test]
    fn optimal_edge_examples() {
        let task = reference_task();
        assert_eq!(optimal_edge_alloc(&task, 0.0).unwrap(), 0.0);
        assert_eq!(optimal_edge_alloc(&task, 0.5).unwrap(), 3.75e8);
        let alloc = allocate(&task, &[1.0; 12], 1e10).unwrap();
        assert_eq!(alloc.edge_demand(), 9e9);
        assert_eq!(alloc.edge_oversubscription(), 0.0);
        let single = TaskSpec { slots_q: 1, ..task };
        assert_eq!(optimal_edge_alloc(&single, 0.5), Err(ComputeError::TooFewSlots(1)));
    }

    #[test]
    fn edge_time_at_optimum_fills_the_schedule() {
        let task = reference_task();
        let f = optimal_edge_alloc(&task, 0.5).unwrap();
        assert_eq!(edge_time(&task, 0.5, f).unwrap(), 8.0);
    }

    #[test]
    fn local_energy_at_optimum_is_cubic_in_share() {
        let task = reference_task();
        let k = task.capacitance * (task.total_cycles() / task.cycle_t).powi(2) * task.total_cycles();
        for i in 0..=10 {
            let eta = i as f64 / 10.0;
            let composed = optimal_local_energy(&task, eta);
            assert!((composed - k * (1.0 - eta).powi(3)).abs() < 1e-12);
        }
    }

    #[test]
    fn plan_tracks_cumulative_share() {
        let mut plan = OffloadPlan::new(2);
        plan.push_slot(&[0.4, 0.9]);
        plan.push_slot(&[0.4, 0.2]);
        let eta = plan.eta();
        assert!((eta[0] - 0.8).abs() < 1e-15 && (eta[1] - 1.1).abs() < 1e-15);
        assert_eq!(plan.infeasible_ues(), 1);
    }
}
