//! Rician cascaded channel through the RIS, orientation-dependent element gain
//! and achievable rate.
//!
//! Small-scale fading is kept separate from geometry: a [`FadingSample`] holds
//! the unit-variance scattered components and can be recombined with any RIS
//! pose. The orientation penalty in the environment relies on this to compare
//! two orientations under the same fading realisation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{AngleSet, LinkGeometry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("phase resolution must be at least one bit")]
    ZeroBits,
    #[error("phase {phase} is not in the {bits}-bit codebook")]
    OffCodebook { phase: f64, bits: u32 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("UE index {0} out of range")]
    UeIndex(usize),
    #[error("exhaustive phase search over {0} elements is too large")]
    SearchTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Linear path gain at 1 m.
    pub rho0: f64,
    /// Path-loss exponent UE→RIS.
    pub alpha1: f64,
    /// Path-loss exponent RIS→BS.
    pub alpha2: f64,
    /// Linear Rician factor UE→RIS.
    pub k1: f64,
    /// Linear Rician factor RIS→BS.
    pub k2: f64,
    pub wavelength: f64,
    /// Noise power σ² in watts.
    pub noise_power: f64,
    /// Total bandwidth B in Hz, split evenly across the UEs.
    pub total_bandwidth: f64,
    pub num_ues: usize,
    /// Path-loss exponent of the blocked direct UE→BS link.
    pub direct_exponent: f64,
    /// Extra linear power attenuation on the direct link.
    pub direct_blockage: f64,
}

impl ChannelParams {
    pub fn per_ue_bandwidth(&self) -> f64 {
        self.total_bandwidth / self.num_ues as f64
    }
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            rho0: 1e-3,
            alpha1: 2.0,
            alpha2: 2.0,
            k1: 10.0,
            k2: 10.0,
            wavelength: 0.125,
            noise_power: 1e-14,
            total_bandwidth: 12e6,
            num_ues: 12,
            direct_exponent: 3.5,
            direct_blockage: 1e-2,
        }
    }
}

/// Exponential-Lambertian element pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiationParams {
    pub z: f64,
    pub max_directivity: f64,
}

impl Default for RadiationParams {
    fn default() -> Self {
        Self { z: 2.0, max_directivity: 6.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub bits: u32,
    pub phases: Vec<f64>,
}

impl PhaseConfig {
    pub fn zeros(bits: u32, n: usize) -> Self {
        Self { bits, phases: vec![0.0; n] }
    }

    pub fn from_indices(bits: u32, indices: &[usize]) -> Result<Self, ChannelError> {
        let step = codebook_step(bits)?;
        Ok(Self { bits, phases: indices.iter().map(|&i| i as f64 * step).collect() })
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let step = codebook_step(self.bits)?;
        let levels = 1usize << self.bits;
        for &phase in &self.phases {
            let idx = (phase / step).round();
            if !(0.0..levels as f64).contains(&idx) || (phase - idx * step).abs() > 1e-9 {
                return Err(ChannelError::OffCodebook { phase, bits: self.bits });
            }
        }
        Ok(())
    }
}

fn codebook_step(bits: u32) -> Result<f64, ChannelError> {
    if bits == 0 {
        return Err(ChannelError::ZeroBits);
    }
    Ok(2.0 * PI / (1u64 << bits) as f64)
}

/// The `2^bits` phases `{0, 2^{1−b}π, …, (2 − 2^{1−b})π}`.
pub fn phase_codebook(bits: u32) -> Result<Vec<f64>, ChannelError> {
    let step = codebook_step(bits)?;
    Ok((0..1usize << bits).map(|i| i as f64 * step).collect())
}

/// Nearest codebook phase (circularly) to an arbitrary angle.
pub fn quantize_phase(phase: f64, bits: u32) -> Result<f64, ChannelError> {
    let step = codebook_step(bits)?;
    let levels = 1usize << bits;
    let idx = (phase.rem_euclid(2.0 * PI) / step).round() as usize % levels;
    Ok(idx as f64 * step)
}

/// Unit-variance scattered components for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingSample {
    /// `ue_ris[k][n]` ~ CN(0, 1).
    pub ue_ris: Vec<Vec<Complex64>>,
    pub ris_bs: Vec<Complex64>,
    pub direct: Vec<Complex64>,
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

impl FadingSample {
    pub fn draw<R: Rng + ?Sized>(num_ues: usize, num_elements: usize, rng: &mut R) -> Self {
        let ue_ris = (0..num_ues)
            .map(|_| (0..num_elements).map(|_| complex_normal(rng)).collect())
            .collect();
        let ris_bs = (0..num_elements).map(|_| complex_normal(rng)).collect();
        let direct = (0..num_ues).map(|_| complex_normal(rng)).collect();
        Self { ue_ris, ris_bs, direct }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDraw {
    /// `h_kR[k][n]`.
    pub h_kr: Vec<Vec<Complex64>>,
    pub v_rb: Vec<Complex64>,
    pub h_kb: Vec<Complex64>,
}

impl ChannelDraw {
    pub fn num_elements(&self) -> usize {
        self.v_rb.len()
    }
}

/// Unit-modulus LoS phasor `exp(−j·2π·d/λ)`.
pub fn los_phasor(distance: f64, wavelength: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * distance / wavelength)
}

fn rician(amplitude: f64, k: f64, los: Complex64, scatter: Complex64) -> Complex64 {
    let los_w = (k / (1.0 + k)).sqrt();
    let nlos_w = (1.0 / (1.0 + k)).sqrt();
    (los * los_w + scatter * nlos_w) * amplitude
}

/// Combine geometry with a fading sample into the per-slot channels.
pub fn compose_channels(params: &ChannelParams, geo: &LinkGeometry, fading: &FadingSample) -> ChannelDraw {
    let h_kr = geo
        .element_d_ue
        .iter()
        .zip(&geo.d_ue_ris)
        .zip(&fading.ue_ris)
        .map(|((elem_d, &d), scatter)| {
            let amp = (params.rho0 / d.powf(params.alpha1)).sqrt();
            elem_d
                .iter()
                .zip(scatter)
                .map(|(&dn, &s)| rician(amp, params.k1, los_phasor(dn, params.wavelength), s))
                .collect()
        })
        .collect();
    let amp_rb = (params.rho0 / geo.d_ris_bs.powf(params.alpha2)).sqrt();
    let v_rb = geo
        .element_d_bs
        .iter()
        .zip(&fading.ris_bs)
        .map(|(&dn, &s)| rician(amp_rb, params.k2, los_phasor(dn, params.wavelength), s))
        .collect();
    let h_kb = geo
        .d_ue_bs
        .iter()
        .zip(&fading.direct)
        .map(|(&d, &s)| s * (params.direct_blockage * params.rho0 / d.powf(params.direct_exponent)).sqrt())
        .collect();
    ChannelDraw { h_kr, v_rb, h_kb }
}

pub fn draw_channels<R: Rng + ?Sized>(params: &ChannelParams, geo: &LinkGeometry, rng: &mut R) -> ChannelDraw {
    let fading = FadingSample::draw(geo.d_ue_ris.len(), geo.element_d_bs.len(), rng);
    compose_channels(params, geo, &fading)
}

/// `sin^z(θ)` clipped at zero so that float noise outside `[0, π]` cannot go negative.
fn lobe(theta: f64, z: f64) -> f64 {
    theta.sin().max(0.0).powf(z)
}

/// Amplitude pattern factor `i_k·D_m²·sin^z(θ_k)·sin^z(θ_B)` for UE `k`.
pub fn pattern_factor(rad: &RadiationParams, angles: &AngleSet, k: usize) -> f64 {
    if !angles.indicator_k[k] {
        return 0.0;
    }
    rad.max_directivity.powi(2) * lobe(angles.theta_k[k], rad.z) * lobe(angles.theta_b, rad.z)
}

/// Per-element reflection gain `ξ_k` for UE `k`.
pub fn ris_gain(
    rad: &RadiationParams,
    angles: &AngleSet,
    phases: &PhaseConfig,
    k: usize,
) -> Result<Vec<Complex64>, ChannelError> {
    if k >= angles.theta_k.len() {
        return Err(ChannelError::UeIndex(k));
    }
    phases.validate()?;
    let g = pattern_factor(rad, angles, k);
    Ok(phases.phases.iter().map(|&phi| Complex64::from_polar(g, phi)).collect())
}

/// `h_k = Σ_n conj(v_n)·ξ_n·h_kn + h_kB`.
pub fn effective_channel(draw: &ChannelDraw, gain: &[Complex64], k: usize) -> Result<Complex64, ChannelError> {
    let h = draw.h_kr.get(k).ok_or(ChannelError::UeIndex(k))?;
    if gain.len() != draw.v_rb.len() || h.len() != draw.v_rb.len() {
        return Err(ChannelError::DimensionMismatch { expected: draw.v_rb.len(), got: gain.len() });
    }
    let reflected: Complex64 = draw
        .v_rb
        .iter()
        .zip(gain)
        .zip(h)
        .map(|((v, g), h)| v.conj() * g * h)
        .sum();
    Ok(reflected + draw.h_kb[k])
}

/// Effective channels of all UEs for one pose/phase configuration.
pub fn effective_channels(
    draw: &ChannelDraw,
    rad: &RadiationParams,
    angles: &AngleSet,
    phases: &PhaseConfig,
) -> Result<Vec<Complex64>, ChannelError> {
    (0..draw.h_kr.len())
        .map(|k| effective_channel(draw, &ris_gain(rad, angles, phases, k)?, k))
        .collect()
}

/// `R = (B/K)·log2(1 + p·|h|²/σ²)` in bit/s.
pub fn achievable_rate(h: Complex64, power: f64, params: &ChannelParams) -> f64 {
    rate_from_gain(h.norm_sqr(), power, params.per_ue_bandwidth(), params.noise_power)
}

pub fn rate_from_gain(gain: f64, power: f64, bandwidth: f64, noise: f64) -> f64 {
    bandwidth * (power * gain / noise).ln_1p() / std::f64::consts::LN_2
}

/// Brute-force search over every `2^{bN}` phase vector for the one maximising `|h_k|`.
///
/// Exponential in `N`; meant for small arrays and as a reference for faster rules.
pub fn exhaustive_phase_search(
    draw: &ChannelDraw,
    rad: &RadiationParams,
    angles: &AngleSet,
    bits: u32,
    k: usize,
) -> Result<(PhaseConfig, f64), ChannelError> {
    let n = draw.num_elements();
    let levels = 1usize << bits;
    let total = levels
        .checked_pow(n as u32)
        .filter(|&t| t <= 1 << 24)
        .ok_or(ChannelError::SearchTooLarge(n))?;
    let mut best = (PhaseConfig::zeros(bits, n), f64::NEG_INFINITY);
    let mut digits = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for d in digits.iter_mut() {
            *d = c % levels;
            c /= levels;
        }
        let phases = PhaseConfig::from_indices(bits, &digits)?;
        let mag = effective_channel(draw, &ris_gain(rad, angles, &phases, k)?, k)?.norm();
        if mag > best.1 {
            best = (phases, mag);
        }
    }
    Ok(best)
}

/// Co-phase every reflected term with the direct link for UE `k`, then quantize.
pub fn cophase_quantized(draw: &ChannelDraw, bits: u32, k: usize) -> Result<PhaseConfig, ChannelError> {
    let h = draw.h_kr.get(k).ok_or(ChannelError::UeIndex(k))?;
    let reference = draw.h_kb[k].arg();
    let phases = draw
        .v_rb
        .iter()
        .zip(h)
        .map(|(v, h)| quantize_phase(reference - (v.conj() * h).arg(), bits))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PhaseConfig { bits, phases })
}
