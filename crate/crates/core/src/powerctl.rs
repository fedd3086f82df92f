//! Per-slot transmit power: the deadline-driven lower bound and a Dinkelbach
//! solver for the energy-per-offload ratio.
//!
//! The offloading energy `E(p) = αD·p / (B·log2(1 + p·g/σ²))` is minimised over
//! `[p̂, p_max]`. Dinkelbach's method replaces the ratio by the parametric
//! problem `min αD·p − y·B·log2(1 + p·g/σ²)`, whose stationary point is
//! `p = y·B/(ln2·αD) − σ²/g`, and updates `y` to the ratio at the new point.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("a zero channel gain cannot carry {0} bits")]
    ZeroGain(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerInstance {
    /// Bits offloaded this slot, `α·D`.
    pub alpha_d: f64,
    /// Per-UE bandwidth in Hz.
    pub bandwidth: f64,
    /// `|h|²`.
    pub channel_gain: f64,
    pub noise: f64,
    pub p_max: f64,
    pub slot_tau: f64,
}

impl PowerInstance {
    pub fn rate(&self, power: f64) -> f64 {
        self.bandwidth * (power * self.channel_gain / self.noise).ln_1p() / LN_2
    }

    /// Offloading energy at `power`, continuous at `p = 0`.
    pub fn energy(&self, power: f64) -> f64 {
        if self.alpha_d == 0.0 {
            return 0.0;
        }
        let snr = power * self.channel_gain / self.noise;
        if snr == 0.0 {
            return self.alpha_d * self.noise * LN_2 / (self.bandwidth * self.channel_gain);
        }
        self.alpha_d * power * LN_2 / (self.bandwidth * snr.ln_1p())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DinkelbachSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DinkelbachSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBound {
    pub p_hat: f64,
    /// `p̂ > p_max`: the slot deadline cannot be met.
    pub exceeds_pmax: bool,
}

/// Minimum power finishing `α·D` bits within one slot:
/// `p̂ = σ²·(2^{αD/(τB)} − 1)/|h|²`.
pub fn min_feasible_power(inst: &PowerInstance) -> Result<PowerBound, PowerError> {
    if inst.alpha_d == 0.0 {
        return Ok(PowerBound { p_hat: 0.0, exceeds_pmax: false });
    }
    if inst.channel_gain <= 0.0 {
        return Err(PowerError::ZeroGain(inst.alpha_d));
    }
    let spectral = inst.alpha_d / (inst.slot_tau * inst.bandwidth);
    let p_hat = inst.noise * (spectral * LN_2).exp_m1() / inst.channel_gain;
    Ok(PowerBound { p_hat, exceeds_pmax: p_hat > inst.p_max })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DinkelbachOutcome {
    pub p_star: f64,
    pub y_star: f64,
    pub iterations: usize,
    /// False when `max_iter` was reached before the tolerance test passed.
    pub converged: bool,
    /// Every `y` iterate, starting with the value at `p_max`.
    pub y_trace: Vec<f64>,
}

/// Dinkelbach iteration for `min E(p)` on `[p̂, p_max]`, started from `p_max`.
///
/// Callers are expected to have handled the `p̂ > p_max` case; if it occurs the
/// interval collapses onto `p_max`.
pub fn dinkelbach_solve(inst: &PowerInstance, settings: &DinkelbachSettings) -> Result<DinkelbachOutcome, PowerError> {
    let bound = min_feasible_power(inst)?;
    if inst.alpha_d == 0.0 {
        return Ok(DinkelbachOutcome { p_star: 0.0, y_star: 0.0, iterations: 0, converged: true, y_trace: vec![0.0] });
    }
    let lo = bound.p_hat.min(inst.p_max);
    let hi = inst.p_max;
    let noise_over_gain = inst.noise / inst.channel_gain;

    let mut p = hi;
    let mut y = inst.energy(p);
    let mut best = (p, y);
    let mut y_trace = vec![y];
    for iteration in 1..=settings.max_iter.max(1) {
        p = (y * inst.bandwidth / (LN_2 * inst.alpha_d) - noise_over_gain).clamp(lo, hi);
        let next = inst.energy(p);
        y_trace.push(next);
        if next < best.1 {
            best = (p, next);
        }
        if (next - y).abs() <= settings.tol * y {
            return Ok(DinkelbachOutcome { p_star: best.0, y_star: best.1, iterations: iteration, converged: true, y_trace });
        }
        y = next;
    }
    Ok(DinkelbachOutcome {
        p_star: best.0,
        y_star: best.1,
        iterations: settings.max_iter.max(1),
        converged: false,
        y_trace,
    })
}
