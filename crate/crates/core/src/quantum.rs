//! Density matrix of the V system and its unitary propagation.
//!
//! Basis order is `(|g>, |1>, |2>)` and `hbar = 1`, so Hamiltonians are in
//! rad/fs. Hamiltonians are written in the interaction picture of the bare
//! level energies: the diagonal vanishes and each coupling carries the phase
//! `e^{i (nu - w_j) t}` of the driving carrier `nu` relative to the transition
//! frequency `w_j`.

use nalgebra::{Matrix3, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::observables::{self, ObservableRow};

pub type CMatrix3 = Matrix3<Complex64>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Tolerances for [`DensityMatrix::validate`].
pub const HERMITICITY_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = 1e-9;

/// Tolerance on `|env| - 1` for envelope samples.
pub const ENVELOPE_TOL: f64 = 1e-9;

/// Largest accepted `dt * |H|` for one propagation step.
pub const MAX_STEP_PHASE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(CMatrix3);

impl DensityMatrix {
    pub fn ground() -> Self {
        Self::pure(&[Complex64::new(1.0, 0.0), ZERO, ZERO])
    }

    /// `|psi><psi|` for a normalized `psi`.
    pub fn pure(psi: &[Complex64; 3]) -> Self {
        DensityMatrix(CMatrix3::from_fn(|i, j| psi[i] * psi[j].conj()))
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(CMatrix3::identity() / Complex64::new(3.0, 0.0))
    }

    pub fn diagonal(p: [f64; 3]) -> Self {
        DensityMatrix(CMatrix3::from_diagonal(&nalgebra::Vector3::from_fn(|i, _| {
            Complex64::new(p[i], 0.0)
        })))
    }

    /// Wraps a matrix after checking the density-matrix invariants.
    pub fn new(m: CMatrix3) -> Result<Self> {
        let rho = DensityMatrix(m);
        rho.validate()?;
        Ok(rho)
    }

    /// Wraps a matrix without validation; for accumulators and propagated
    /// states whose invariants hold by construction.
    pub fn from_matrix_unchecked(m: CMatrix3) -> Self {
        DensityMatrix(m)
    }

    pub fn matrix(&self) -> &CMatrix3 {
        &self.0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn rho_gg(&self) -> f64 {
        self.0[(0, 0)].re
    }

    pub fn rho_11(&self) -> f64 {
        self.0[(1, 1)].re
    }

    pub fn rho_22(&self) -> f64 {
        self.0[(2, 2)].re
    }

    pub fn rho_12(&self) -> Complex64 {
        self.0[(1, 2)]
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.0 - self.0.adjoint();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> [f64; 3] {
        let herm = (self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
        let ev = herm.symmetric_eigenvalues();
        let mut out = [ev[0], ev[1], ev[2]];
        out.sort_by(|a, b| a.total_cmp(b));
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidDensityMatrix("non-finite element".into()));
        }
        let herm = self.hermiticity_error();
        if herm >= HERMITICITY_TOL {
            return Err(Error::InvalidDensityMatrix(format!("not Hermitian (error {herm:e})")));
        }
        let tr = self.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() >= TRACE_TOL {
            return Err(Error::InvalidDensityMatrix(format!("trace is {tr}")));
        }
        let min_ev = self.eigenvalues()[0];
        if min_ev < -POSITIVITY_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "eigenvalue {min_ev:e} is negative"
            )));
        }
        Ok(())
    }

    /// `Tr[rho^2]`.
    pub fn purity(&self) -> f64 {
        // Tr[rho^2] = sum_ij rho_ij rho_ji = sum_ij |rho_ij|^2 for Hermitian rho.
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `|rho_12| / (rho_11 + rho_22)`, zero for an empty excited manifold.
    pub fn coherence_fraction(&self) -> f64 {
        observables::coherence_fraction(self.rho_11(), self.rho_22(), self.rho_12())
    }

    pub fn observables(&self, t: f64) -> ObservableRow {
        ObservableRow {
            t,
            rho_gg: self.rho_gg(),
            rho_11: self.rho_11(),
            rho_22: self.rho_22(),
            rho_12: self.rho_12(),
            coherence_fraction: self.coherence_fraction(),
            purity: self.purity(),
        }
    }
}

pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.purity()
}

pub fn coherence_fraction(rho: &DensityMatrix) -> f64 {
    rho.coherence_fraction()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VSystemParams {
    /// `w_2 - w_1`, rad/fs.
    pub omega_21: f64,
    /// Coupling `mu_1 eps0 / hbar` of the `g <-> 1` transition, rad/fs.
    pub rabi_1: f64,
    /// Coupling `mu_2 eps0 / hbar` of the `g <-> 2` transition, rad/fs.
    pub rabi_2: f64,
}

impl VSystemParams {
    /// Splitting from the characteristic excited-state period `2 pi / w21`.
    pub fn from_period(tau_c: f64, rabi_1: f64, rabi_2: f64) -> Self {
        VSystemParams {
            omega_21: std::f64::consts::TAU / tau_c,
            rabi_1,
            rabi_2,
        }
    }

    pub fn excited_period(&self) -> f64 {
        std::f64::consts::TAU / self.omega_21
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega_21", self.omega_21),
            ("rabi_1", self.rabi_1),
            ("rabi_2", self.rabi_2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which transitions each field drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CouplingScheme {
    /// Field `i` drives only `g <-> i`.
    #[default]
    Exclusive,
    /// Each field drives both transitions.
    CrossCoupled,
}

/// Where the two carriers sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CarrierScheme {
    /// Carrier `i` resonant with transition `i`.
    #[default]
    PerTransition,
    /// Both carriers at the midpoint of the two transitions.
    CommonCarrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DriveConfig {
    pub coupling: CouplingScheme,
    pub carrier: CarrierScheme,
}

impl DriveConfig {
    pub const ALL: [DriveConfig; 4] = [
        DriveConfig::new(CouplingScheme::Exclusive, CarrierScheme::PerTransition),
        DriveConfig::new(CouplingScheme::Exclusive, CarrierScheme::CommonCarrier),
        DriveConfig::new(CouplingScheme::CrossCoupled, CarrierScheme::PerTransition),
        DriveConfig::new(CouplingScheme::CrossCoupled, CarrierScheme::CommonCarrier),
    ];

    pub const fn new(coupling: CouplingScheme, carrier: CarrierScheme) -> Self {
        DriveConfig { coupling, carrier }
    }

    /// Carrier of field `field` minus frequency of transition `transition`
    /// (both 0-based), in rad/fs.
    pub fn detuning(&self, field: usize, transition: usize, omega_21: f64) -> f64 {
        // Level energies: w_g = 0, w_2 - w_1 = omega_21.
        let level = |j: usize| if j == 0 { -0.5 * omega_21 } else { 0.5 * omega_21 };
        let carrier = match self.carrier {
            CarrierScheme::PerTransition => level(field),
            CarrierScheme::CommonCarrier => 0.0,
        };
        carrier - level(transition)
    }

    pub fn drives(&self, field: usize, transition: usize) -> bool {
        match self.coupling {
            CouplingScheme::Exclusive => field == transition,
            CouplingScheme::CrossCoupled => true,
        }
    }

    pub fn label(&self) -> &'static str {
        match (self.coupling, self.carrier) {
            (CouplingScheme::Exclusive, CarrierScheme::PerTransition) => "exclusive/per_transition",
            (CouplingScheme::Exclusive, CarrierScheme::CommonCarrier) => "exclusive/common_carrier",
            (CouplingScheme::CrossCoupled, CarrierScheme::PerTransition) => "cross_coupled/per_transition",
            (CouplingScheme::CrossCoupled, CarrierScheme::CommonCarrier) => "cross_coupled/common_carrier",
        }
    }
}

fn check_envelope(env: Complex64) -> Result<()> {
    let modulus = env.norm();
    if (modulus - 1.0).abs() > ENVELOPE_TOL {
        return Err(Error::InvalidEnvelope { modulus });
    }
    Ok(())
}

/// Interaction-picture Hamiltonian at time `t` for envelope samples
/// `env = [e1, e2]`.
pub fn build_hamiltonian(t: f64, sys: &VSystemParams, env: [Complex64; 2], cfg: &DriveConfig) -> Result<CMatrix3> {
    check_envelope(env[0])?;
    check_envelope(env[1])?;
    Ok(hamiltonian_unchecked(t, sys, env, cfg))
}

#[inline]
pub(crate) fn hamiltonian_unchecked(t: f64, sys: &VSystemParams, env: [Complex64; 2], cfg: &DriveConfig) -> CMatrix3 {
    let rabi = [sys.rabi_1, sys.rabi_2];
    let mut h = CMatrix3::zeros();
    for transition in 0..2 {
        let mut coupling = ZERO;
        for (field, e) in env.iter().enumerate() {
            if cfg.drives(field, transition) {
                let delta = cfg.detuning(field, transition, sys.omega_21);
                coupling += e * Complex64::from_polar(1.0, delta * t);
            }
        }
        let element = -rabi[transition] * coupling;
        h[(0, transition + 1)] = element;
        h[(transition + 1, 0)] = element.conj();
    }
    h
}

/// Largest eigenvalue magnitude of a Hermitian matrix.
pub fn spectral_norm(h: &CMatrix3) -> f64 {
    if is_v_coupling(h) {
        return (h[(0, 1)].norm_sqr() + h[(0, 2)].norm_sqr()).sqrt();
    }
    h.symmetric_eigenvalues().iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn is_v_coupling(h: &CMatrix3) -> bool {
    h[(0, 0)] == ZERO && h[(1, 1)] == ZERO && h[(2, 2)] == ZERO && h[(1, 2)] == ZERO && h[(2, 1)] == ZERO
}

/// `exp(-i H dt)` for Hermitian `H`.
///
/// Pure ground-excited couplings `H = |g><w| + |w><g|` satisfy `H^3 = |w|^2 H`,
/// which gives a closed form; anything else goes through an eigendecomposition.
pub fn unitary_step(h: &CMatrix3, dt: f64) -> CMatrix3 {
    if is_v_coupling(h) {
        v_coupling_exp(h, dt)
    } else {
        eigen_exp(h, dt)
    }
}

fn v_coupling_exp(h: &CMatrix3, dt: f64) -> CMatrix3 {
    let a = h[(0, 1)];
    let b = h[(0, 2)];
    let w2 = a.norm_sqr() + b.norm_sqr();
    if w2 == 0.0 {
        return CMatrix3::identity();
    }
    let w = w2.sqrt();
    let (s, c) = (w * dt).sin_cos();
    // Projector onto span{|g>, |w>} with |w> = a*|1> + b*|2>.
    let (wa, wb) = (a.conj() / w, b.conj() / w);
    let mut p = CMatrix3::zeros();
    p[(0, 0)] = Complex64::new(1.0, 0.0);
    p[(1, 1)] = wa * wa.conj();
    p[(1, 2)] = wa * wb.conj();
    p[(2, 1)] = wb * wa.conj();
    p[(2, 2)] = wb * wb.conj();
    CMatrix3::identity() + p * Complex64::new(c - 1.0, 0.0) - h * (I * (s / w))
}

/// Matrix exponential through the Hermitian eigendecomposition.
pub fn eigen_exp(h: &CMatrix3, dt: f64) -> CMatrix3 {
    let eig = SymmetricEigen::new(*h);
    let phases = CMatrix3::from_diagonal(&nalgebra::Vector3::from_fn(|i, _| {
        Complex64::from_polar(1.0, -eig.eigenvalues[i] * dt)
    }));
    eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagator {
    /// Exact `U rho U^dagger` per step with `U = exp(-i H dt)`.
    PiecewiseExp,
    /// Classical fourth-order Runge-Kutta on `d rho / dt = -i [H, rho]`,
    /// with `substeps` RK steps per grid step.
    Rk4 { substeps: usize },
}

fn check_step(h: &CMatrix3, dt: f64) -> Result<f64> {
    let norm = spectral_norm(h);
    let product = dt * norm;
    if product > MAX_STEP_PHASE {
        return Err(Error::StepTooLarge { dt, norm, product });
    }
    Ok(norm)
}

/// One grid step of `rho` under the constant Hamiltonian `h`.
pub fn step(rho: &CMatrix3, h: &CMatrix3, dt: f64, method: Propagator) -> Result<CMatrix3> {
    check_step(h, dt)?;
    Ok(match method {
        Propagator::PiecewiseExp => {
            let u = unitary_step(h, dt);
            u * rho * u.adjoint()
        }
        Propagator::Rk4 { substeps } => rk4(rho, h, dt, substeps.max(1)),
    })
}

fn liouville_rhs(h: &CMatrix3, rho: &CMatrix3) -> CMatrix3 {
    (h * rho - rho * h) * (-I)
}

fn rk4(rho: &CMatrix3, h: &CMatrix3, dt: f64, substeps: usize) -> CMatrix3 {
    let hs = dt / substeps as f64;
    let half = Complex64::new(0.5 * hs, 0.0);
    let full = Complex64::new(hs, 0.0);
    let sixth = Complex64::new(hs / 6.0, 0.0);
    let two = Complex64::new(2.0, 0.0);
    let mut r = *rho;
    for _ in 0..substeps {
        let k1 = liouville_rhs(h, &r);
        let k2 = liouville_rhs(h, &(r + k1 * half));
        let k3 = liouville_rhs(h, &(r + k2 * half));
        let k4 = liouville_rhs(h, &(r + k3 * full));
        r += (k1 + k2 * two + k3 * two + k4) * sixth;
    }
    r
}

/// Propagates `rho0` across `grid`; `hamiltonians[k]` acts on
/// `[t_k, t_{k+1})`. Returns one state per grid point.
pub fn propagate(
    rho0: &DensityMatrix,
    hamiltonians: &[CMatrix3],
    grid: &TimeGrid,
    method: Propagator,
) -> Result<Vec<DensityMatrix>> {
    rho0.validate()?;
    if hamiltonians.len() != grid.steps() {
        return Err(Error::param(
            "hamiltonians",
            format!("expected {} steps, got {}", grid.steps(), hamiltonians.len()),
        ));
    }
    let mut out = Vec::with_capacity(grid.len());
    let mut rho = *rho0.matrix();
    out.push(*rho0);
    for h in hamiltonians {
        rho = step(&rho, h, grid.dt(), method)?;
        out.push(DensityMatrix(rho));
    }
    Ok(out)
}

/// Piecewise-constant Hamiltonian path for two sampled envelopes: step `k`
/// uses the envelopes at `t_k` and the carrier phases at the step midpoint.
pub fn hamiltonian_path(
    sys: &VSystemParams,
    env1: &[Complex64],
    env2: &[Complex64],
    grid: &TimeGrid,
    cfg: &DriveConfig,
) -> Result<Vec<CMatrix3>> {
    if env1.len() != grid.len() || env2.len() != grid.len() {
        return Err(Error::EnsembleMismatch("envelope length differs from the grid".into()));
    }
    (0..grid.steps())
        .map(|k| {
            let t_mid = grid.time(k) + 0.5 * grid.dt();
            build_hamiltonian(t_mid, sys, [env1[k], env2[k]], cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_diff(a: &CMatrix3, b: &CMatrix3) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Lab-frame coupling `-mu eps` written out before the frame change, then
    /// transformed by hand: `H_I(g, j) = H(g, j) exp(i (w_g - w_j) t)`.
    fn transcribed_hamiltonian(t: f64, sys: &VSystemParams, env: [Complex64; 2], cfg: &DriveConfig) -> CMatrix3 {
        let w = [0.0, -0.5 * sys.omega_21, 0.5 * sys.omega_21];
        let nu = match cfg.carrier {
            CarrierScheme::PerTransition => [w[1], w[2]],
            CarrierScheme::CommonCarrier => [0.0, 0.0],
        };
        let rabi = [sys.rabi_1, sys.rabi_2];
        let mut h = CMatrix3::zeros();
        for j in 1..3 {
            let mut lab = c(0.0, 0.0);
            for i in 0..2 {
                let couples = cfg.coupling == CouplingScheme::CrossCoupled || i + 1 == j;
                if couples {
                    lab += -rabi[j - 1] * env[i] * Complex64::from_polar(1.0, nu[i] * t);
                }
            }
            h[(0, j)] = lab * Complex64::from_polar(1.0, (w[0] - w[j]) * t);
            h[(j, 0)] = h[(0, j)].conj();
        }
        h
    }

    #[test]
    fn noiseless_resonant_hamiltonian() {
        let sys = VSystemParams {
            omega_21: 0.05,
            rabi_1: 0.01,
            rabi_2: 0.02,
        };
        let one = c(1.0, 0.0);
        for t in [0.0, 13.0, 400.0] {
            let h = build_hamiltonian(t, &sys, [one, one], &DriveConfig::default()).unwrap();
            assert_eq!(h[(0, 1)], c(-0.01, 0.0));
            assert_eq!(h[(0, 2)], c(-0.02, 0.0));
            assert_eq!(h[(1, 2)], c(0.0, 0.0));
            assert_eq!(h.diagonal(), nalgebra::Vector3::zeros());
        }
    }

    #[test]
    fn common_carrier_detunings() {
        let cfg = DriveConfig::new(CouplingScheme::Exclusive, CarrierScheme::CommonCarrier);
        assert_eq!(cfg.detuning(0, 0, 0.2), 0.1);
        assert_eq!(cfg.detuning(1, 1, 0.2), -0.1);
        let cross = DriveConfig::new(CouplingScheme::CrossCoupled, CarrierScheme::PerTransition);
        assert_eq!(cross.detuning(0, 1, 0.2), -0.2);
        assert_eq!(cross.detuning(1, 0, 0.2), 0.2);
    }

    #[test]
    fn hamiltonian_matches_transcription() {
        let sys = VSystemParams {
            omega_21: 0.0314,
            rabi_1: 0.01,
            rabi_2: 0.013,
        };
        let mut rng = crate::rng::stream(1, 0);
        use rand::Rng;
        for cfg in DriveConfig::ALL {
            for _ in 0..100 {
                let t = rng.gen_range(0.0..2000.0);
                let env = [
                    Complex64::from_polar(1.0, rng.gen_range(0.0..6.3)),
                    Complex64::from_polar(1.0, rng.gen_range(0.0..6.3)),
                ];
                let h = build_hamiltonian(t, &sys, env, &cfg).unwrap();
                assert!(max_diff(&h, &h.adjoint()) == 0.0);
                assert!(max_diff(&h, &transcribed_hamiltonian(t, &sys, env, &cfg)) < 1e-15);
            }
        }
    }

    #[test]
    fn invalid_envelope_rejected() {
        let sys = VSystemParams {
            omega_21: 0.0,
            rabi_1: 0.01,
            rabi_2: 0.01,
        };
        let err = build_hamiltonian(0.0, &sys, [c(1.1, 0.0), c(1.0, 0.0)], &DriveConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidEnvelope { .. }));
    }

    #[test]
    fn closed_form_exponential_matches_eigendecomposition() {
        let mut h = CMatrix3::zeros();
        h[(0, 1)] = c(-0.3, 0.2);
        h[(0, 2)] = c(0.1, -0.4);
        h[(1, 0)] = h[(0, 1)].conj();
        h[(2, 0)] = h[(0, 2)].conj();
        for dt in [0.01, 0.5, 3.0] {
            assert!(max_diff(&v_coupling_exp(&h, dt), &eigen_exp(&h, dt)) < 1e-13);
        }
        assert_eq!(unitary_step(&CMatrix3::zeros(), 1.0), CMatrix3::identity());
    }

    #[test]
    fn free_evolution_is_trivial() {
        let grid = TimeGrid::with_duration(100.0, 1.0).unwrap();
        let rho0 = DensityMatrix::pure(&[c(0.6, 0.0), c(0.0, 0.48), c(0.64, 0.0)]);
        let hs = vec![CMatrix3::zeros(); grid.steps()];
        let path = propagate(&rho0, &hs, &grid, Propagator::PiecewiseExp).unwrap();
        assert!(path.iter().all(|r| *r == rho0));
    }

    #[test]
    fn rabi_oscillation_matches_closed_form() {
        let rabi = 0.05;
        let period = std::f64::consts::PI / rabi;
        let grid = TimeGrid::with_duration(10.0 * period, period / 200.0).unwrap();
        let sys = VSystemParams {
            omega_21: 0.02,
            rabi_1: rabi,
            rabi_2: 0.0,
        };
        let one = vec![c(1.0, 0.0); grid.len()];
        let hs = hamiltonian_path(&sys, &one, &one, &grid, &DriveConfig::default()).unwrap();
        let path = propagate(&DensityMatrix::ground(), &hs, &grid, Propagator::PiecewiseExp).unwrap();
        for (t, rho) in grid.times().zip(&path) {
            assert!((rho.rho_11() - (rabi * t).sin().powi(2)).abs() < 1e-8);
            assert_eq!(rho.rho_22(), 0.0);
            assert_eq!(rho.rho_12(), c(0.0, 0.0));
        }
    }

    #[test]
    fn step_size_guard() {
        let mut h = CMatrix3::zeros();
        h[(0, 1)] = c(1.0, 0.0);
        h[(1, 0)] = c(1.0, 0.0);
        let rho = *DensityMatrix::ground().matrix();
        assert!(step(&rho, &h, 0.4, Propagator::PiecewiseExp).is_ok());
        assert!(matches!(
            step(&rho, &h, 0.6, Propagator::PiecewiseExp),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn observable_examples() {
        assert!((DensityMatrix::ground().purity() - 1.0).abs() < 1e-15);
        assert!((DensityMatrix::maximally_mixed().purity() - 1.0 / 3.0).abs() < 1e-15);
        assert!((DensityMatrix::diagonal([0.5, 0.5, 0.0]).purity() - 0.5).abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bright = DensityMatrix::pure(&[c(0.0, 0.0), c(s, 0.0), c(s, 0.0)]);
        assert!((bright.coherence_fraction() - 0.5).abs() < 1e-15);
        assert_eq!(DensityMatrix::ground().coherence_fraction(), 0.0);
        let third = 1.0 / 3.0;
        assert_eq!(DensityMatrix::diagonal([third; 3]).coherence_fraction(), 0.0);
    }

    #[test]
    fn validation_catches_broken_states() {
        assert!(DensityMatrix::new(CMatrix3::identity()).is_err());
        let mut m = *DensityMatrix::ground().matrix();
        m[(0, 1)] = c(0.1, 0.0);
        assert!(DensityMatrix::new(m).is_err());
        m[(1, 0)] = c(0.1, 0.0);
        assert!(DensityMatrix::new(m).is_err(), "negative eigenvalue");
        assert!(DensityMatrix::new(*DensityMatrix::maximally_mixed().matrix()).is_ok());
    }

    fn arb_state() -> impl Strategy<Value = DensityMatrix> {
        // Convex mixture of three random pure states.
        prop::collection::vec(-1.0f64..1.0, 18)
            .prop_flat_map(|v| (Just(v), prop::array::uniform3(0.0f64..1.0)))
            .prop_map(|(v, w)| {
                let mut m = CMatrix3::zeros();
                let total: f64 = w.iter().sum::<f64>() + 1e-9;
                for k in 0..3 {
                    let psi: Vec<Complex64> = (0..3).map(|i| c(v[6 * k + 2 * i], v[6 * k + 2 * i + 1])).collect();
                    let n = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-9);
                    let psi = [psi[0] / n, psi[1] / n, psi[2] / n];
                    m += DensityMatrix::pure(&psi).matrix() * c(w[k] / total, 0.0);
                }
                let tr = m.trace();
                DensityMatrix::from_matrix_unchecked(m / tr)
            })
    }

    proptest! {
        #[test]
        fn coherence_fraction_is_bounded(rho in arb_state()) {
            let cf = rho.coherence_fraction();
            prop_assert!((0.0..=0.5 + 1e-12).contains(&cf));
            let p = rho.purity();
            prop_assert!((1.0 / 3.0 - 1e-12..=1.0 + 1e-12).contains(&p));
        }

        #[test]
        fn unitary_step_preserves_spectrum(
            rho in arb_state(),
            a in (-0.3f64..0.3, -0.3f64..0.3),
            b in (-0.3f64..0.3, -0.3f64..0.3),
            dt in 0.01f64..0.8,
        ) {
            let mut h = CMatrix3::zeros();
            h[(0, 1)] = c(a.0, a.1);
            h[(0, 2)] = c(b.0, b.1);
            h[(1, 0)] = h[(0, 1)].conj();
            h[(2, 0)] = h[(0, 2)].conj();
            let next = DensityMatrix(step(rho.matrix(), &h, dt, Propagator::PiecewiseExp).unwrap());
            prop_assert!((next.trace() - rho.trace()).norm() < 1e-12);
            prop_assert!((next.purity() - rho.purity()).abs() < 1e-12);
            let (e0, e1) = (rho.eigenvalues(), next.eigenvalues());
            for k in 0..3 {
                prop_assert!((e0[k] - e1[k]).abs() < 1e-12);
            }
            prop_assert!(next.hermiticity_error() < 1e-12);
        }
    }
}
