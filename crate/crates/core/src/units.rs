//! User-facing unit conventions.
//!
//! Frequencies given in THz are read as angular frequencies in rad/ps, so
//! `w [rad/fs] = value [THz] * 1e-3`. Times are in femtoseconds.

pub fn thz_to_rad_per_fs(thz: f64) -> f64 {
    thz * 1e-3
}

pub fn rad_per_fs_to_thz(w: f64) -> f64 {
    w * 1e3
}

/// Splitting `2 pi / tau_c` for an excited-state period in fs.
pub fn splitting_from_period(tau_c_fs: f64) -> f64 {
    std::f64::consts::TAU / tau_c_fs
}
