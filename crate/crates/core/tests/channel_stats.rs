use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rismec_core::channel::{
    compose_channels, effective_channels, los_phasor, pattern_factor, phase_codebook, rate_from_gain, ChannelParams,
    FadingSample, PhaseConfig, RadiationParams,
};
use rismec_core::scenario::{AngleSet, LinkGeometry};

const SAMPLES: usize = 100_000;

fn one_element_geometry(d_ue: f64, d_bs: f64, d_direct: f64) -> LinkGeometry {
    LinkGeometry {
        d_ue_ris: vec![d_ue],
        d_ris_bs: d_bs,
        d_ue_bs: vec![d_direct],
        element_d_ue: vec![vec![d_ue + 0.03]],
        element_d_bs: vec![d_bs + 0.07],
    }
}

struct Moments {
    mean: Complex64,
    power: f64,
}

fn moments(values: impl Iterator<Item = Complex64>) -> Moments {
    let (mut sum, mut power, mut n) = (Complex64::new(0.0, 0.0), 0.0, 0usize);
    for v in values {
        sum += v;
        power += v.norm_sqr();
        n += 1;
    }
    Moments { mean: sum / n as f64, power: power / n as f64 }
}

fn check_rician(k_db: f64, seed: u64) {
    let k = 10f64.powf(k_db / 10.0);
    let params = ChannelParams { k1: k, k2: k, ..ChannelParams::default() };
    let geo = one_element_geometry(25.0, 40.0, 60.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<_> = (0..SAMPLES)
        .map(|_| compose_channels(&params, &geo, &FadingSample::draw(1, 1, &mut rng)))
        .collect();

    let links = [
        (params.rho0 / 25f64.powf(params.alpha1), los_phasor(25.03, params.wavelength), 0usize),
        (params.rho0 / 40f64.powf(params.alpha2), los_phasor(40.07, params.wavelength), 1usize),
    ];
    for (power, los, which) in links {
        let m = moments(draws.iter().map(|d| if which == 0 { d.h_kr[0][0] } else { d.v_rb[0] }));
        let expected_mean = los * (power * k / (1.0 + k)).sqrt();
        assert!(
            (m.power - power).abs() <= 0.02 * power,
            "K = {k_db} dB link {which}: E|h|² = {} vs {power}",
            m.power
        );
        assert!(
            (m.mean - expected_mean).norm() <= 0.02 * power.sqrt(),
            "K = {k_db} dB link {which}: E[h] = {} vs {expected_mean}",
            m.mean
        );
    }

    let direct_power = params.direct_blockage * params.rho0 / 60f64.powf(params.direct_exponent);
    let m = moments(draws.iter().map(|d| d.h_kb[0]));
    assert!((m.power - direct_power).abs() <= 0.02 * direct_power);
    assert!(m.mean.norm() <= 0.02 * direct_power.sqrt());
}

#[test]
fn rayleigh_moments_match_closed_form() {
    check_rician(f64::NEG_INFINITY, 1);
}

#[test]
fn rician_zero_db_moments_match_closed_form() {
    check_rician(0.0, 2);
}

#[test]
fn rician_ten_db_moments_match_closed_form() {
    check_rician(10.0, 3);
}

fn angle_set(theta_k: Vec<f64>, theta_b: f64) -> AngleSet {
    let indicator_k = theta_k.iter().map(|t| (0.0..=PI).contains(t)).collect();
    AngleSet { theta0_k: theta_k.clone(), theta0_b: theta_b, theta_k, theta_b, indicator_k }
}

fn random_draw(params: &ChannelParams, n: usize, k: usize, seed: u64) -> rismec_core::channel::ChannelDraw {
    let geo = LinkGeometry {
        d_ue_ris: (0..k).map(|i| 20.0 + i as f64).collect(),
        d_ris_bs: 35.0,
        d_ue_bs: (0..k).map(|i| 50.0 + i as f64).collect(),
        element_d_ue: (0..k).map(|i| (0..n).map(|e| 20.0 + i as f64 + 0.01 * e as f64).collect()).collect(),
        element_d_bs: (0..n).map(|e| 35.0 + 0.02 * e as f64).collect(),
    };
    compose_channels(params, &geo, &FadingSample::draw(k, n, &mut ChaCha8Rng::seed_from_u64(seed)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn los_phasor_has_unit_modulus(d in 0.1..1e4f64, lambda in 1e-3..1.0f64) {
        prop_assert!((los_phasor(d, lambda).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pattern_factor_is_bounded(theta_k in 0.0..TAU, theta_b in 0.0..=PI, z in 0.0..6.0f64, dm in 0.1..10.0f64) {
        let rad = RadiationParams { z, max_directivity: dm };
        let g = pattern_factor(&rad, &angle_set(vec![theta_k], theta_b), 0);
        prop_assert!((0.0..=dm * dm * (1.0 + 1e-12)).contains(&g));
        if theta_k > PI {
            prop_assert_eq!(g, 0.0);
        }
    }

    #[test]
    fn ue_behind_the_surface_sees_only_the_direct_link(
        seed in any::<u64>(),
        n in 1usize..12,
        theta_k in (PI + 1e-6)..(TAU - 1e-6),
        theta_b in 0.0..=PI,
        idx in prop::collection::vec(0usize..4, 12),
    ) {
        let params = ChannelParams::default();
        let draw = random_draw(&params, n, 1, seed);
        let phases = PhaseConfig::from_indices(2, &idx[..n]).unwrap();
        let h = effective_channels(&draw, &RadiationParams::default(), &angle_set(vec![theta_k], theta_b), &phases).unwrap();
        prop_assert_eq!(h[0], draw.h_kb[0]);
    }

    #[test]
    fn common_phase_offset_keeps_the_reflected_magnitude(
        seed in any::<u64>(),
        n in 1usize..12,
        shift in 0usize..4,
        idx in prop::collection::vec(0usize..4, 12),
        theta_k in 0.1..3.0f64,
    ) {
        let params = ChannelParams { direct_blockage: 0.0, ..ChannelParams::default() };
        let draw = random_draw(&params, n, 1, seed);
        let angles = angle_set(vec![theta_k], 1.2);
        let rad = RadiationParams::default();
        let base = PhaseConfig::from_indices(2, &idx[..n]).unwrap();
        let shifted: Vec<usize> = idx[..n].iter().map(|i| (i + shift) % 4).collect();
        let shifted = PhaseConfig::from_indices(2, &shifted).unwrap();
        let a = effective_channels(&draw, &rad, &angles, &base).unwrap()[0].norm();
        let b = effective_channels(&draw, &rad, &angles, &shifted).unwrap()[0].norm();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
    }

    #[test]
    fn rate_grows_with_power_and_gain(
        gain in 1e-16..1e-6f64,
        p in 1e-6..1.0f64,
        factor in 1.001..10.0f64,
        bw in 1e5..2e7f64,
    ) {
        let r = rate_from_gain(gain, p, bw, 1e-14);
        prop_assert!(rate_from_gain(gain, p * factor, bw, 1e-14) > r);
        prop_assert!(rate_from_gain(gain * factor, p, bw, 1e-14) > r);
        prop_assert!(r > 0.0);
    }
}

#[test]
fn codebook_has_two_to_the_b_uniform_levels() {
    for bits in 1..=4u32 {
        let book = phase_codebook(bits).unwrap();
        assert_eq!(book.len(), 1 << bits);
        for (i, phi) in book.iter().enumerate() {
            assert!((phi - TAU * i as f64 / book.len() as f64).abs() < 1e-12);
        }
    }
}
