use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rismec_core::scenario::{
    angles_from_geometry, in_front_half_space, rotation_bounds, spawn_ues, step_mobility, MobilityParams, Position,
    RisPose,
};

fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn rotate(p: Position, g: f64) -> Position {
    let (s, c) = g.sin_cos();
    Position::planar(c * p.x - s * p.y, s * p.x + c * p.y)
}

fn point() -> impl Strategy<Value = Position> {
    (-60.0..60.0f64, -60.0..60.0f64).prop_map(|(x, y)| Position::planar(x, y))
}

fn pose() -> impl Strategy<Value = RisPose> {
    (point(), 0.0..TAU).prop_map(|(position, a)| RisPose { position, plane_direction: [a.cos(), a.sin()], rotation: 0.0 })
}

fn far_from(p: Position, q: Position) -> bool {
    p.distance(&q) > 1e-3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn any_rotation_in_bounds_keeps_the_bs_in_front(ris in pose(), bs in point(), u in 0.0..=1.0f64) {
        prop_assume!(far_from(ris.position, bs));
        let probe = angles_from_geometry(&ris, &bs, &[]).unwrap();
        let bounds = rotation_bounds(probe.theta0_b);
        let delta = bounds.lerp(u);
        let a = angles_from_geometry(&ris.with_rotation(delta), &bs, &[]).unwrap();
        prop_assert!((-1e-12..=PI + 1e-12).contains(&a.theta_b) || a.theta_b > TAU - 1e-12, "θ_B = {}", a.theta_b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn angles_are_rotation_equivariant(
        ris in pose(),
        bs in point(),
        ues in prop::collection::vec(point(), 1..6),
        delta in -PI..PI,
        g in 0.0..TAU,
    ) {
        prop_assume!(far_from(ris.position, bs) && ues.iter().all(|u| far_from(ris.position, *u)));
        let a = angles_from_geometry(&ris.with_rotation(delta), &bs, &ues).unwrap();
        let [dx, dy] = ris.plane_direction;
        let (s, c) = g.sin_cos();
        let turned = RisPose {
            position: rotate(ris.position, g),
            plane_direction: [c * dx - s * dy, s * dx + c * dy],
            rotation: delta,
        };
        let moved: Vec<Position> = ues.iter().map(|u| rotate(*u, g)).collect();
        let b = angles_from_geometry(&turned, &rotate(bs, g), &moved).unwrap();
        prop_assert!(circ_dist(a.theta_b, b.theta_b) < 1e-9);
        prop_assert!(circ_dist(a.theta0_b, b.theta0_b) < 1e-9);
        for k in 0..ues.len() {
            prop_assert!(circ_dist(a.theta_k[k], b.theta_k[k]) < 1e-9);
            prop_assert!(circ_dist(a.theta0_k[k], b.theta0_k[k]) < 1e-9);
        }
    }

    #[test]
    fn indicators_follow_the_angles(
        ris in pose(),
        bs in point(),
        ues in prop::collection::vec(point(), 1..8),
        delta in -PI..PI,
    ) {
        prop_assume!(far_from(ris.position, bs) && ues.iter().all(|u| far_from(ris.position, *u)));
        let a = angles_from_geometry(&ris.with_rotation(delta), &bs, &ues).unwrap();
        for k in 0..ues.len() {
            prop_assert_eq!(a.indicator_k[k], in_front_half_space(a.theta_k[k]));
            prop_assert_eq!(a.indicator_k[k], (0.0..=PI).contains(&a.theta_k[k]));
            prop_assert!(circ_dist(a.theta_k[k], a.theta0_k[k] - delta) < 1e-12);
        }
        // Recomputing from the same pose is idempotent.
        let again = angles_from_geometry(&ris.with_rotation(delta), &bs, &ues).unwrap();
        prop_assert_eq!(a, again);
    }

    #[test]
    fn mobility_never_leaves_the_disc(
        seed in any::<u64>(),
        memory in 0.0..=1.0f64,
        speed in 0.0..5.0f64,
        std in 0.0..2.0f64,
        radius in 0.5..20.0f64,
    ) {
        let params = MobilityParams {
            memory,
            mean_speed: speed,
            speed_std: std,
            region_center: Position::planar(30.0, 10.0),
            region_radius: radius,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ues = spawn_ues(4, &params, &mut rng);
        for _ in 0..200 {
            ues = step_mobility(&ues, &params, 2.0, &mut rng);
            for u in &ues {
                prop_assert!(u.position.distance(&params.region_center) <= radius * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn interval_endpoints_put_the_bs_on_the_surface_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ris = RisPose { position: Position::planar(30.0, 0.0), plane_direction: [0.0, -1.0], rotation: 0.0 };
    for _ in 0..1000 {
        let bs = Position::planar(rand::Rng::random_range(&mut rng, -50.0..50.0), rand::Rng::random_range(&mut rng, -50.0..50.0));
        let probe = angles_from_geometry(&ris, &bs, &[]).unwrap();
        let b = rotation_bounds(probe.theta0_b);
        let lo = angles_from_geometry(&ris.with_rotation(b.lo), &bs, &[]).unwrap().theta_b;
        let hi = angles_from_geometry(&ris.with_rotation(b.hi), &bs, &[]).unwrap().theta_b;
        assert!(circ_dist(lo, PI) < 1e-9, "{lo}");
        assert!(circ_dist(hi, 0.0) < 1e-9, "{hi}");
    }
}

#[test]
fn ues_stay_in_the_reference_region_for_ten_thousand_steps() {
    let params = MobilityParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ues = spawn_ues(12, &params, &mut rng);
    for _ in 0..10_000 {
        ues = step_mobility(&ues, &params, 2.0, &mut rng);
        assert!(ues.iter().all(|u| u.position.distance(&params.region_center) <= params.region_radius * (1.0 + 1e-12)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5_000))]

    #[test]
    fn unrotated_angles_match_a_polar_oracle(ris in pose(), target in point()) {
        prop_assume!(far_from(ris.position, target));
        let a = angles_from_geometry(&ris, &target, &[target]).unwrap();
        let n0 = ris.plane_direction[1].atan2(ris.plane_direction[0]);
        let to = (target.y - ris.position.y).atan2(target.x - ris.position.x);
        let expected = (to - n0).rem_euclid(TAU);
        prop_assert!(circ_dist(a.theta0_b, expected) < 1e-9);
        prop_assert!(circ_dist(a.theta0_k[0], expected) < 1e-9);
        prop_assert!((0.0..TAU).contains(&a.theta0_b));
    }
}
