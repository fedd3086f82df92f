//! Planar geometry of the BS, the rotatable RIS and the moving UEs.
//!
//! All entities live in the `z = 0` plane. The RIS plane is described by a unit
//! direction vector lying along the surface (`plane_direction`) and a rotation
//! `δ` applied counterclockwise on top of it. Angles to an entity are measured
//! counterclockwise from the rotated plane direction, so the reflecting
//! half-space is the set of angles in `[0, π]`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Angles closer than this to the `0`, `π` or `2π` boundaries are snapped onto them.
pub const ANGLE_SNAP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("entity {index} coincides with the RIS position")]
    CoincidentWithRis { index: usize },
    #[error("plane direction must be a unit vector, got norm {0}")]
    NonUnitDirection(f64),
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn planar(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Gauss–Markov mobility parameters for the UE population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityParams {
    /// Velocity memory in `[0, 1]`; 1 keeps the velocity, 0 redraws it every slot.
    pub memory: f64,
    pub mean_speed: f64,
    pub speed_std: f64,
    pub region_center: Position,
    pub region_radius: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        Self {
            memory: 0.8,
            mean_speed: 1.0,
            speed_std: 0.3,
            region_center: Position::planar(30.0, 10.0),
            region_radius: 5.0,
        }
    }
}

/// Kinematic state of one UE. `mean_velocity` is the long-run drift the
/// Gauss–Markov process reverts to; it is reflected together with the
/// velocity when the UE bounces off the region boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeMotion {
    pub position: Position,
    pub velocity: [f64; 2],
    pub mean_velocity: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RisPose {
    pub position: Position,
    /// Unit vector along the RIS surface at zero rotation.
    pub plane_direction: [f64; 2],
    /// Counterclockwise rotation `δ` in radians.
    pub rotation: f64,
}

impl RisPose {
    pub fn with_rotation(&self, rotation: f64) -> Self {
        Self { rotation, ..*self }
    }

    /// Unit vector along the surface after applying `rotation`.
    pub fn rotated_direction(&self) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        let [x, y] = self.plane_direction;
        [c * x - s * y, s * x + c * y]
    }

    fn validate(&self) -> Result<(), GeometryError> {
        if !self.position.is_finite() || !self.rotation.is_finite() {
            return Err(GeometryError::NonFinite("ris pose"));
        }
        let [x, y] = self.plane_direction;
        let norm = x.hypot(y);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(GeometryError::NonUnitDirection(norm));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSet {
    /// Angle from the unrotated plane direction to each UE, in `[0, 2π)`.
    pub theta0_k: Vec<f64>,
    /// Angle from the unrotated plane direction to the BS, in `[0, 2π)`.
    pub theta0_b: f64,
    /// `theta0_k − δ` reduced into `[0, 2π)`.
    pub theta_k: Vec<f64>,
    pub theta_b: f64,
    /// True when the UE sits in the reflecting half-space (`theta_k ∈ [0, π]`).
    pub indicator_k: Vec<bool>,
}

/// Reduce an angle into `[0, 2π)`, snapping float noise at the `0`/`2π` seam and
/// just above `π` onto the boundary.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r >= TAU - ANGLE_SNAP || r < ANGLE_SNAP && r > 0.0 {
        0.0
    } else if r > PI && r <= PI + ANGLE_SNAP {
        PI
    } else {
        r
    }
}

pub fn in_front_half_space(theta: f64) -> bool {
    (0.0..=PI).contains(&theta)
}

fn planar_angle(from: [f64; 2], to: [f64; 2]) -> f64 {
    let cross = from[0] * to[1] - from[1] * to[0];
    let dot = from[0] * to[0] + from[1] * to[1];
    wrap_angle(cross.atan2(dot))
}

fn direction_from_ris(ris: &RisPose, target: &Position, index: usize) -> Result<[f64; 2], GeometryError> {
    if !target.is_finite() {
        return Err(GeometryError::NonFinite("entity position"));
    }
    let d = [target.x - ris.position.x, target.y - ris.position.y];
    if d[0] == 0.0 && d[1] == 0.0 {
        return Err(GeometryError::CoincidentWithRis { index });
    }
    Ok(d)
}

/// Angles of the BS and every UE relative to the RIS surface at the pose's rotation.
///
/// The BS is reported with index `usize::MAX` in geometry errors.
pub fn angles_from_geometry(
    ris: &RisPose,
    bs: &Position,
    ues: &[Position],
) -> Result<AngleSet, GeometryError> {
    ris.validate()?;
    let n0 = ris.plane_direction;
    let theta0_b = planar_angle(n0, direction_from_ris(ris, bs, usize::MAX)?);
    let theta0_k = ues
        .iter()
        .enumerate()
        .map(|(i, ue)| direction_from_ris(ris, ue, i).map(|d| planar_angle(n0, d)))
        .collect::<Result<Vec<_>, _>>()?;
    let theta_k: Vec<f64> = theta0_k.iter().map(|t| wrap_angle(t - ris.rotation)).collect();
    let indicator_k = theta_k.iter().map(|&t| in_front_half_space(t)).collect();
    Ok(AngleSet {
        theta_b: wrap_angle(theta0_b - ris.rotation),
        theta0_b,
        theta0_k,
        theta_k,
        indicator_k,
    })
}

/// Admissible rotations keeping the BS in the reflecting half-space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationBounds {
    pub lo: f64,
    pub hi: f64,
}

impl RotationBounds {
    pub fn contains(&self, delta: f64) -> bool {
        (self.lo..=self.hi).contains(&delta)
    }

    pub fn clamp(&self, delta: f64) -> f64 {
        delta.clamp(self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Affine map of `u ∈ [0, 1]` onto the interval.
    pub fn lerp(&self, u: f64) -> f64 {
        self.clamp(self.lo + u * (self.hi - self.lo))
    }
}

pub fn rotation_bounds(theta0_b: f64) -> RotationBounds {
    RotationBounds { lo: theta0_b - PI, hi: theta0_b }
}

/// Advance every UE by one slot of length `tau`.
///
/// `v' = m·v + (1 − m)·v̄ + sqrt(1 − m²)·σ·w` with `w ~ N(0, I₂)`, followed by
/// `p' = p + v'·τ` and reflection at the region boundary.
pub fn step_mobility<R: Rng + ?Sized>(
    ues: &[UeMotion],
    params: &MobilityParams,
    tau: f64,
    rng: &mut R,
) -> Vec<UeMotion> {
    let m = params.memory.clamp(0.0, 1.0);
    let noise_scale = (1.0 - m * m).max(0.0).sqrt() * params.speed_std;
    ues.iter()
        .map(|ue| {
            let mut velocity = [0.0; 2];
            for (axis, v) in velocity.iter_mut().enumerate() {
                let w: f64 = rng.sample(StandardNormal);
                *v = m * ue.velocity[axis] + (1.0 - m) * ue.mean_velocity[axis] + noise_scale * w;
            }
            let moved = Position::new(
                ue.position.x + velocity[0] * tau,
                ue.position.y + velocity[1] * tau,
                ue.position.z,
            );
            reflect_into_region(moved, velocity, ue.mean_velocity, params)
        })
        .collect()
}

fn reflect_into_region(
    position: Position,
    velocity: [f64; 2],
    mean_velocity: [f64; 2],
    params: &MobilityParams,
) -> UeMotion {
    let c = params.region_center;
    let r = params.region_radius;
    let (dx, dy) = (position.x - c.x, position.y - c.y);
    let dist = dx.hypot(dy);
    if dist <= r {
        return UeMotion { position, velocity, mean_velocity };
    }
    let u = [dx / dist, dy / dist];
    // Mirror the overshoot back inside; huge overshoots land on the boundary.
    let back = (2.0 * r - dist).clamp(0.0, r);
    let reflect = |v: [f64; 2]| {
        let along = v[0] * u[0] + v[1] * u[1];
        [v[0] - 2.0 * along * u[0], v[1] - 2.0 * along * u[1]]
    };
    UeMotion {
        position: Position::new(c.x + back * u[0], c.y + back * u[1], position.z),
        velocity: reflect(velocity),
        mean_velocity: reflect(mean_velocity),
    }
}

/// Draw UEs uniformly in the mobility disc with a uniformly random drift heading.
pub fn spawn_ues<R: Rng + ?Sized>(count: usize, params: &MobilityParams, rng: &mut R) -> Vec<UeMotion> {
    (0..count)
        .map(|_| {
            let radius = params.region_radius * rng.random::<f64>().sqrt();
            let angle = rng.random::<f64>() * TAU;
            let heading = rng.random::<f64>() * TAU;
            let mean_velocity = [params.mean_speed * heading.cos(), params.mean_speed * heading.sin()];
            let mut velocity = mean_velocity;
            for v in velocity.iter_mut() {
                let w: f64 = rng.sample(StandardNormal);
                *v += params.speed_std * w;
            }
            UeMotion {
                position: Position::new(
                    params.region_center.x + radius * angle.cos(),
                    params.region_center.y + radius * angle.sin(),
                    params.region_center.z,
                ),
                velocity,
                mean_velocity,
            }
        })
        .collect()
}

/// Far-field distances from the RIS centre to every UE and to the BS.
pub fn distances(ris: &RisPose, bs: &Position, ues: &[Position]) -> Result<(Vec<f64>, f64), GeometryError> {
    let check = |p: &Position, index: usize| {
        let d = ris.position.distance(p);
        if !d.is_finite() {
            Err(GeometryError::NonFinite("entity position"))
        } else if d == 0.0 {
            Err(GeometryError::CoincidentWithRis { index })
        } else {
            Ok(d)
        }
    };
    let d_rb = check(bs, usize::MAX)?;
    let d_kr = ues.iter().enumerate().map(|(i, p)| check(p, i)).collect::<Result<Vec<_>, _>>()?;
    Ok((d_kr, d_rb))
}

/// Centre positions of a half-wavelength uniform linear array laid along the
/// rotated surface direction.
pub fn element_positions(ris: &RisPose, num_elements: usize, wavelength: f64) -> Vec<Position> {
    let dir = ris.rotated_direction();
    let spacing = wavelength / 2.0;
    let mid = (num_elements as f64 - 1.0) / 2.0;
    (0..num_elements)
        .map(|n| {
            let offset = (n as f64 - mid) * spacing;
            Position::new(
                ris.position.x + offset * dir[0],
                ris.position.y + offset * dir[1],
                ris.position.z,
            )
        })
        .collect()
}

/// Every distance the channel model needs for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGeometry {
    pub d_ue_ris: Vec<f64>,
    pub d_ris_bs: f64,
    pub d_ue_bs: Vec<f64>,
    /// `element_d_ue[k][n]`: distance from UE `k` to element `n`.
    pub element_d_ue: Vec<Vec<f64>>,
    pub element_d_bs: Vec<f64>,
}

pub fn link_geometry(
    ris: &RisPose,
    bs: &Position,
    ues: &[Position],
    num_elements: usize,
    wavelength: f64,
) -> Result<LinkGeometry, GeometryError> {
    let (d_ue_ris, d_ris_bs) = distances(ris, bs, ues)?;
    let elements = element_positions(ris, num_elements, wavelength);
    Ok(LinkGeometry {
        d_ue_ris,
        d_ris_bs,
        d_ue_bs: ues.iter().map(|ue| ue.distance(bs)).collect(),
        element_d_ue: ues
            .iter()
            .map(|ue| elements.iter().map(|e| e.distance(ue)).collect())
            .collect(),
        element_d_bs: elements.iter().map(|e| e.distance(bs)).collect(),
    })
}
