//! Ensemble-averaged dynamics of the V system under two uncorrelated
//! white-noise fields.
//!
//! Averaging over delta-correlated fields leaves closed rate equations for
//! the populations and a homogeneous, decoupled equation for the excited-state
//! coherence:
//!
//! ```text
//! d rho_gg = G1 rho_11 + G2 rho_22 - (G1 + G2) rho_gg
//! d rho_11 = G1 (rho_gg - rho_11)
//! d rho_22 = G2 (rho_gg - rho_22)
//! d rho_12 = -i w12 rho_12 - (G1 + G2) / 2 rho_12
//! ```
//!
//! A coherence that starts at zero therefore stays at zero.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::observables::{coherence_fraction, ObservableRow, ObservableSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpRates {
    /// Incoherent pump rate of `g <-> 1`, 1/fs.
    pub gamma_1: f64,
    /// Incoherent pump rate of `g <-> 2`, 1/fs.
    pub gamma_2: f64,
    /// Excited-state splitting, rad/fs.
    pub omega_12: f64,
}

impl PumpRates {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma_1", self.gamma_1), ("gamma_2", self.gamma_2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !self.omega_12.is_finite() {
            return Err(Error::param("omega_12", "must be finite"));
        }
        Ok(())
    }

    fn population_generator(&self) -> Matrix3<f64> {
        let (g1, g2) = (self.gamma_1, self.gamma_2);
        Matrix3::new(-(g1 + g2), g1, g2, g1, -g1, 0.0, g2, 0.0, -g2)
    }

    fn coherence_rate(&self) -> Complex64 {
        Complex64::new(-0.5 * (self.gamma_1 + self.gamma_2), -self.omega_12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhiteNoiseState {
    pub rho_gg: f64,
    pub rho_11: f64,
    pub rho_22: f64,
    pub rho_12: Complex64,
}

impl WhiteNoiseState {
    pub fn ground() -> Self {
        WhiteNoiseState {
            rho_gg: 1.0,
            rho_11: 0.0,
            rho_22: 0.0,
            rho_12: Complex64::new(0.0, 0.0),
        }
    }

    pub fn uniform() -> Self {
        let third = 1.0 / 3.0;
        WhiteNoiseState {
            rho_gg: third,
            rho_11: third,
            rho_22: third,
            rho_12: Complex64::new(0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pops = [self.rho_gg, self.rho_11, self.rho_22];
        if pops.iter().any(|p| !(*p >= -1e-9)) {
            return Err(Error::InvalidDensityMatrix(format!("negative population in {pops:?}")));
        }
        let trace: f64 = pops.iter().sum();
        if (trace - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDensityMatrix(format!("populations sum to {trace}")));
        }
        if self.rho_12.norm_sqr() > self.rho_11 * self.rho_22 + 1e-9 {
            return Err(Error::InvalidDensityMatrix("|rho_12|^2 exceeds rho_11 rho_22".into()));
        }
        Ok(())
    }

    pub fn trace(&self) -> f64 {
        self.rho_gg + self.rho_11 + self.rho_22
    }

    /// `Tr[rho^2]`; ground-excited coherences are identically zero here.
    pub fn purity(&self) -> f64 {
        self.rho_gg.powi(2) + self.rho_11.powi(2) + self.rho_22.powi(2) + 2.0 * self.rho_12.norm_sqr()
    }

    pub fn coherence_fraction(&self) -> f64 {
        coherence_fraction(self.rho_11, self.rho_22, self.rho_12)
    }

    fn row(&self, t: f64) -> ObservableRow {
        ObservableRow {
            t,
            rho_gg: self.rho_gg,
            rho_11: self.rho_11,
            rho_22: self.rho_22,
            rho_12: self.rho_12,
            coherence_fraction: self.coherence_fraction(),
            purity: self.purity(),
        }
    }

    fn to_array(self) -> [f64; 5] {
        [self.rho_gg, self.rho_11, self.rho_22, self.rho_12.re, self.rho_12.im]
    }

    fn from_array(y: [f64; 5]) -> Self {
        WhiteNoiseState {
            rho_gg: y[0],
            rho_11: y[1],
            rho_22: y[2],
            rho_12: Complex64::new(y[3], y[4]),
        }
    }
}

/// Time derivative of the averaged state.
pub fn rate_rhs(state: &WhiteNoiseState, rates: &PumpRates) -> WhiteNoiseState {
    let (g1, g2) = (rates.gamma_1, rates.gamma_2);
    WhiteNoiseState {
        rho_gg: g1 * state.rho_11 + g2 * state.rho_22 - (g1 + g2) * state.rho_gg,
        rho_11: g1 * (state.rho_gg - state.rho_11),
        rho_22: g2 * (state.rho_gg - state.rho_22),
        rho_12: rates.coherence_rate() * state.rho_12,
    }
}

/// Closed-form solution on `grid` (relative to `grid.start()`).
pub fn solve_white_noise(rates: &PumpRates, initial: &WhiteNoiseState, grid: &TimeGrid) -> Result<ObservableSeries> {
    rates.validate()?;
    initial.validate()?;
    let eig = SymmetricEigen::new(rates.population_generator());
    let p0 = Vector3::new(initial.rho_gg, initial.rho_11, initial.rho_22);
    let modes = eig.eigenvectors.transpose() * p0;
    let mut out = ObservableSeries::with_capacity(grid.len());
    for t in grid.times() {
        let s = t - grid.start();
        // p0 + V (e^{ls} - 1) V^T p0 reproduces p0 exactly at s = 0
        let change = Vector3::from_fn(|i, _| modes[i] * (eig.eigenvalues[i] * s).exp_m1());
        let p = p0 + eig.eigenvectors * change;
        let state = WhiteNoiseState {
            rho_gg: p[0],
            rho_11: p[1],
            rho_22: p[2],
            rho_12: initial.rho_12 * (rates.coherence_rate() * s).exp(),
        };
        out.push(state.row(t));
    }
    Ok(out)
}

/// Tolerances of the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct OdeTolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for OdeTolerance {
    fn default() -> Self {
        OdeTolerance {
            rtol: 1e-12,
            atol: 1e-14,
        }
    }
}

/// Adaptive Dormand-Prince integration of [`rate_rhs`], reported on `grid`.
pub fn solve_white_noise_ode(
    rates: &PumpRates,
    initial: &WhiteNoiseState,
    grid: &TimeGrid,
    tol: OdeTolerance,
) -> Result<ObservableSeries> {
    rates.validate()?;
    initial.validate()?;
    let f = |y: &[f64; 5]| rate_rhs(&WhiteNoiseState::from_array(*y), rates).to_array();
    let mut y = initial.to_array();
    let mut out = ObservableSeries::with_capacity(grid.len());
    out.push(initial.row(grid.start()));
    let rate_scale = (rates.gamma_1 + rates.gamma_2 + rates.omega_12.abs()).max(1e-300);
    let mut h = (0.01 / rate_scale).min(grid.dt());
    for k in 1..grid.len() {
        let target = grid.time(k);
        let mut t = grid.time(k - 1);
        while t < target {
            let step = h.min(target - t);
            let (next, err) = dopri5_step(&f, &y, step);
            let scale = y
                .iter()
                .zip(&next)
                .map(|(a, b)| tol.atol + tol.rtol * a.abs().max(b.abs()));
            let err_norm = err.iter().zip(scale).map(|(e, s)| (e / s).powi(2)).sum::<f64>().sqrt() / (5f64).sqrt();
            if err_norm <= 1.0 {
                t = if step == target - t { target } else { t + step };
                y = next;
            }
            let factor = if err_norm == 0.0 {
                5.0
            } else {
                (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = step * factor;
        }
        out.push(WhiteNoiseState::from_array(y).row(target));
    }
    Ok(out)
}

fn dopri5_step<F: Fn(&[f64; 5]) -> [f64; 5]>(f: &F, y: &[f64; 5], h: f64) -> ([f64; 5], [f64; 5]) {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    // 5th-order weights are the last row of A; these are the 4th-order ones.
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut k = [[0.0; 5]; 7];
    k[0] = f(y);
    for stage in 0..6 {
        let mut yi = *y;
        for (j, kj) in k.iter().enumerate().take(stage + 1) {
            for d in 0..5 {
                yi[d] += h * A[stage][j] * kj[d];
            }
        }
        k[stage + 1] = f(&yi);
        if stage == 5 {
            let mut err = [0.0; 5];
            for d in 0..5 {
                let y4 = y[d] + h * (0..7).map(|j| B4[j] * k[j][d]).sum::<f64>();
                err[d] = yi[d] - y4;
            }
            return (yi, err);
        }
    }
    unreachable!()
}

/// Fixed point of the rate equations; unique only when both pumps are active.
pub fn steady_state(rates: &PumpRates) -> Result<WhiteNoiseState> {
    rates.validate()?;
    if rates.gamma_1 <= 0.0 || rates.gamma_2 <= 0.0 {
        return Err(Error::NonUniqueSteadyState(format!(
            "pump rates ({}, {}) leave an excited level decoupled",
            rates.gamma_1, rates.gamma_2
        )));
    }
    Ok(WhiteNoiseState::uniform())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(g1: f64, g2: f64) -> PumpRates {
        PumpRates {
            gamma_1: g1,
            gamma_2: g2,
            omega_12: 0.0157,
        }
    }

    /// Right-hand side written from the dipole/power form: each pump enters
    /// as `2 mu^2 R / hbar^2`, the coherence decays at `(mu1^2 R1 + mu2^2 R2) / hbar^2`.
    fn rhs_from_dipoles(s: &WhiteNoiseState, mu: [f64; 2], power: [f64; 2], w12: f64) -> WhiteNoiseState {
        let hbar = 1.0;
        let a1 = mu[0] * mu[0] * power[0] / (hbar * hbar);
        let a2 = mu[1] * mu[1] * power[1] / (hbar * hbar);
        WhiteNoiseState {
            rho_gg: 2.0 * a1 * s.rho_11 + 2.0 * a2 * s.rho_22 - 2.0 * s.rho_gg * (a1 + a2),
            rho_11: 2.0 * a1 * (s.rho_gg - s.rho_11),
            rho_22: 2.0 * a2 * (s.rho_gg - s.rho_22),
            rho_12: Complex64::new(0.0, -w12 / hbar) * s.rho_12 - (a1 + a2) * s.rho_12,
        }
    }

    #[test]
    fn uniform_state_is_a_fixed_point() {
        let d = rate_rhs(&WhiteNoiseState::uniform(), &rates(0.1, 0.3));
        assert!(d.rho_gg.abs() < 1e-16 && d.rho_11.abs() < 1e-16 && d.rho_22.abs() < 1e-16);
        assert_eq!(d.rho_12, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn ground_state_derivative() {
        let d = rate_rhs(&WhiteNoiseState::ground(), &rates(0.25, 0.25));
        assert_eq!(d.rho_11, 0.25);
        assert_eq!(d.rho_22, 0.25);
        assert_eq!(d.rho_gg, -0.5);
        assert_eq!(d.rho_12, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn rhs_matches_dipole_form() {
        let mu = [1.3, 0.7];
        let power = [0.05, 0.2];
        let r = PumpRates {
            gamma_1: 2.0 * mu[0] * mu[0] * power[0],
            gamma_2: 2.0 * mu[1] * mu[1] * power[1],
            omega_12: 0.04,
        };
        let s = WhiteNoiseState {
            rho_gg: 0.5,
            rho_11: 0.3,
            rho_22: 0.2,
            rho_12: Complex64::new(0.1, -0.05),
        };
        let a = rate_rhs(&s, &r);
        let b = rhs_from_dipoles(&s, mu, power, r.omega_12);
        assert!((a.rho_gg - b.rho_gg).abs() < 1e-15);
        assert!((a.rho_11 - b.rho_11).abs() < 1e-15);
        assert!((a.rho_22 - b.rho_22).abs() < 1e-15);
        assert!((a.rho_12 - b.rho_12).norm() < 1e-15);
    }

    #[test]
    fn ground_start_never_builds_coherence() {
        let g = TimeGrid::with_duration(200.0, 0.5).unwrap();
        let sol = solve_white_noise(&rates(0.25, 0.1), &WhiteNoiseState::ground(), &g).unwrap();
        assert!(sol.rho_12.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        assert!(sol.coherence_fraction.iter().all(|c| *c == 0.0));
        let ode = solve_white_noise_ode(&rates(0.25, 0.1), &WhiteNoiseState::ground(), &g, Default::default()).unwrap();
        assert!(ode.rho_12.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn equilibrates_to_one_third() {
        let r = rates(0.25, 0.25);
        let g = TimeGrid::with_duration(100.0, 0.1).unwrap();
        let sol = solve_white_noise(&r, &WhiteNoiseState::ground(), &g).unwrap();
        let last = sol.last().unwrap();
        for p in [last.rho_gg, last.rho_11, last.rho_22] {
            assert!((p - 1.0 / 3.0).abs() < 1e-6);
        }
        assert!((last.purity - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn symmetric_case_equilibrates_monotonically() {
        let g = TimeGrid::with_duration(60.0, 0.05).unwrap();
        let sol = solve_white_noise(&rates(0.25, 0.25), &WhiteNoiseState::ground(), &g).unwrap();
        let dist: Vec<f64> = sol.rho_gg.iter().map(|p| (p - 1.0 / 3.0).abs()).collect();
        assert!(dist.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        // Closed form for equal pumps: rho_gg = 1/3 + 2/3 exp(-3 G t).
        for (t, p) in sol.t.iter().zip(&sol.rho_gg) {
            assert!((p - (1.0 / 3.0 + 2.0 / 3.0 * (-0.75 * t).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_matches_ode() {
        let r = PumpRates {
            gamma_1: 0.1,
            gamma_2: 0.3,
            omega_12: 0.05,
        };
        let init = WhiteNoiseState {
            rho_gg: 0.6,
            rho_11: 0.3,
            rho_22: 0.1,
            rho_12: Complex64::new(0.1, 0.05),
        };
        let g = TimeGrid::with_duration(10.0 / 0.1, 0.5).unwrap();
        let a = solve_white_noise(&r, &init, &g).unwrap();
        let b = solve_white_noise_ode(&r, &init, &g, Default::default()).unwrap();
        for k in 0..g.len() {
            let (x, y) = (a.row(k), b.row(k));
            let diff = [
                x.rho_gg - y.rho_gg,
                x.rho_11 - y.rho_11,
                x.rho_22 - y.rho_22,
                (x.rho_12 - y.rho_12).norm(),
            ];
            assert!(diff.iter().all(|d| d.abs() < 1e-8), "t = {}: {diff:?}", x.t);
            assert!((x.rho_gg + x.rho_11 + x.rho_22 - 1.0).abs() < 1e-9);
            assert!((y.rho_gg + y.rho_11 + y.rho_22 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn steady_state_with_unequal_pumps() {
        let r = rates(0.1, 0.3);
        let s = steady_state(&r).unwrap();
        // Independent check: null vector of the generator, normalized.
        let m = r.population_generator();
        let v = Vector3::new(s.rho_gg, s.rho_11, s.rho_22);
        assert!((m * v).norm() < 1e-15);
        assert!((v.sum() - 1.0).abs() < 1e-15);
        assert!(steady_state(&rates(0.25, 0.25)).unwrap() == WhiteNoiseState::uniform());
    }

    #[test]
    fn zero_pump_has_no_unique_steady_state() {
        assert!(matches!(
            steady_state(&rates(0.2, 0.0)),
            Err(Error::NonUniqueSteadyState(_))
        ));
    }
}
