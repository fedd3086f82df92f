//! System model of a rotatable-RIS-assisted mobile edge computing cell.
//!
//! * [`scenario`]: planar geometry, RIS rotation bounds and UE mobility.
//! * [`channel`]: Rician cascaded channels, element pattern and rates.
//! * [`compute`]: task latency/energy and the closed-form clock allocation.
//! * [`powerctl`]: deadline power bound and the Dinkelbach power solver.
//! * [`env`]: the per-slot decision process built from the pieces above.

pub mod channel;
pub mod compute;
pub mod env;
pub mod powerctl;
pub mod scenario;

pub use num_complex::Complex64;

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// dB to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
