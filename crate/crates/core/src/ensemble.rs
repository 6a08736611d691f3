//! Monte Carlo ensemble over independent field realizations.
//!
//! Trajectory `k` draws field 1 from stream `2k` and field 2 from stream
//! `2k + 1` of the master seed, propagates the state exactly, and is added to
//! the running sum of a fixed group of trajectories. Groups are contiguous
//! index ranges summed in order with compensated arithmetic, and group sums
//! are merged in group order, so the result does not depend on how many
//! workers ran the groups. The groups double as jackknife blocks for the
//! standard errors.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{sample_field, FieldParams};
use crate::grid::TimeGrid;
use crate::observables::{coherence_fraction, ObservableSeries};
use crate::parallel::map_units;
pub use crate::parallel::Execution;
use crate::quantum::{self, CMatrix3, DensityMatrix, DriveConfig, Propagator, VSystemParams};
use crate::rng;
use crate::stats::{jackknife_stderr, CompensatedSum};

/// Upper bound on the number of jackknife groups.
pub const MAX_GROUPS: usize = 32;

/// Physical setup shared by every trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Excited-state splitting `w2 - w1`, rad/fs.
    pub omega_21: f64,
    pub fields: [FieldParams; 2],
    pub drive: DriveConfig,
}

impl Scenario {
    /// Transition `j` couples with the Rabi amplitude of field `j`.
    pub fn system(&self) -> VSystemParams {
        VSystemParams {
            omega_21: self.omega_21,
            rabi_1: self.fields[0].rabi_amplitude,
            rabi_2: self.fields[1].rabi_amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system().validate()?;
        for f in &self.fields {
            f.validate()?;
        }
        Ok(())
    }

    /// `min(tau_d, tau_c, 2 pi / rabi) / 100`, ignoring infinite scales.
    pub fn default_dt(&self) -> f64 {
        let tau = std::f64::consts::TAU;
        let mut scales = vec![self.fields[0].coherence_time, self.fields[1].coherence_time];
        if self.omega_21 > 0.0 {
            scales.push(tau / self.omega_21);
        }
        for f in &self.fields {
            if f.rabi_amplitude > 0.0 {
                scales.push(tau / f.rabi_amplitude);
            }
        }
        let finite = scales
            .into_iter()
            .filter(|s| s.is_finite())
            .fold(f64::INFINITY, f64::min);
        if finite.is_finite() {
            finite / 100.0
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub grid: TimeGrid,
    pub scenario: Scenario,
    pub propagator: Propagator,
}

impl EnsembleConfig {
    pub fn new(scenario: Scenario, grid: TimeGrid, n_trajectories: usize, master_seed: u64) -> Self {
        EnsembleConfig {
            n_trajectories,
            master_seed,
            grid,
            scenario,
            propagator: Propagator::PiecewiseExp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trajectories < 2 {
            return Err(Error::param(
                "n_trajectories",
                format!("need at least 2 trajectories, got {}", self.n_trajectories),
            ));
        }
        self.scenario.validate()
    }

    fn n_groups(&self) -> usize {
        self.n_trajectories.min(MAX_GROUPS)
    }

    fn group_range(&self, g: usize) -> std::ops::Range<usize> {
        let (n, groups) = (self.n_trajectories, self.n_groups());
        (g * n / groups)..((g + 1) * n / groups)
    }
}

// Upper triangle of a Hermitian 3x3: (0,0) (1,1) (2,2) re, then (0,1) (0,2) (1,2) re/im.
const PACKED: usize = 9;

fn pack(m: &CMatrix3) -> [f64; PACKED] {
    [
        m[(0, 0)].re,
        m[(1, 1)].re,
        m[(2, 2)].re,
        m[(0, 1)].re,
        m[(0, 1)].im,
        m[(0, 2)].re,
        m[(0, 2)].im,
        m[(1, 2)].re,
        m[(1, 2)].im,
    ]
}

fn unpack(p: &[f64; PACKED]) -> CMatrix3 {
    let c = Complex64::new;
    let (g1, g2, e12) = (c(p[3], p[4]), c(p[5], p[6]), c(p[7], p[8]));
    CMatrix3::new(
        c(p[0], 0.0),
        g1,
        g2,
        g1.conj(),
        c(p[1], 0.0),
        e12,
        g2.conj(),
        e12.conj(),
        c(p[2], 0.0),
    )
}

/// Compensated running sum of the density matrices of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSum {
    count: usize,
    sums: Vec<[CompensatedSum; PACKED]>,
}

impl GroupSum {
    pub fn new(n_times: usize) -> Self {
        GroupSum {
            count: 0,
            sums: vec![[CompensatedSum::default(); PACKED]; n_times],
        }
    }

    #[inline]
    fn add_at(&mut self, k: usize, m: &CMatrix3) {
        for (acc, x) in self.sums[k].iter_mut().zip(pack(m)) {
            acc.add(x);
        }
    }

    pub fn add_trajectory(&mut self, path: &[DensityMatrix]) -> Result<()> {
        if path.len() != self.sums.len() {
            return Err(Error::EnsembleMismatch(format!(
                "trajectory has {} samples, expected {}",
                path.len(),
                self.sums.len()
            )));
        }
        for (k, rho) in path.iter().enumerate() {
            self.add_at(k, rho.matrix());
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    fn totals(&self, k: usize) -> [f64; PACKED] {
        let mut out = [0.0; PACKED];
        for (o, s) in out.iter_mut().zip(&self.sums[k]) {
            *o = s.value();
        }
        out
    }
}

/// Standard errors of the reported observables, one entry per output time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservableErrors {
    pub rho_gg: Vec<f64>,
    pub rho_11: Vec<f64>,
    pub rho_22: Vec<f64>,
    pub abs_rho_12: Vec<f64>,
    pub coherence_fraction: Vec<f64>,
    pub purity: Vec<f64>,
}

/// Observable names in the order used by [`ObservableErrors::series`].
pub const OBSERVABLE_NAMES: [&str; 6] = [
    "rho_gg",
    "rho_11",
    "rho_22",
    "abs_rho12",
    "coherence_fraction",
    "purity",
];

impl ObservableErrors {
    pub fn series(&self) -> [&Vec<f64>; 6] {
        [
            &self.rho_gg,
            &self.rho_11,
            &self.rho_22,
            &self.abs_rho_12,
            &self.coherence_fraction,
            &self.purity,
        ]
    }
}

fn observables_of(p: &[f64; PACKED]) -> [f64; 6] {
    let m = unpack(p);
    let rho = DensityMatrix::from_matrix_unchecked(m);
    let rho_12 = m[(1, 2)];
    [
        p[0],
        p[1],
        p[2],
        rho_12.norm(),
        coherence_fraction(p[1], p[2], rho_12),
        rho.purity(),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub grid: TimeGrid,
    pub master_seed: u64,
    /// Ensemble-mean state at every grid time.
    pub mean_rho: Vec<DensityMatrix>,
    /// Observables of the mean state (purity is that of `mean_rho`).
    pub observables: ObservableSeries,
    pub std_errors: ObservableErrors,
    pub n_effective: usize,
    groups: Vec<GroupSum>,
}

impl EnsembleResult {
    /// Builds the result from per-group sums, merged in slice order.
    pub fn from_groups(grid: TimeGrid, master_seed: u64, groups: Vec<GroupSum>) -> Result<Self> {
        let n: usize = groups.iter().map(|g| g.count).sum();
        if n < 2 {
            return Err(Error::TooFewRealizations { got: n, min: 2 });
        }
        if groups.iter().any(|g| g.sums.len() != grid.len()) {
            return Err(Error::EnsembleMismatch("group length differs from the grid".into()));
        }
        let mut mean_rho = Vec::with_capacity(grid.len());
        let mut observables = ObservableSeries::with_capacity(grid.len());
        let mut errors: [Vec<f64>; 6] = Default::default();
        let active: Vec<&GroupSum> = groups.iter().filter(|g| g.count > 0).collect();
        for k in 0..grid.len() {
            let mut total = [CompensatedSum::default(); PACKED];
            for g in &groups {
                for (t, s) in total.iter_mut().zip(&g.sums[k]) {
                    t.merge(s);
                }
            }
            let total: [f64; PACKED] = std::array::from_fn(|i| total[i].value());
            let mean: [f64; PACKED] = std::array::from_fn(|i| total[i] / n as f64);
            let rho = DensityMatrix::from_matrix_unchecked(unpack(&mean));
            observables.push(rho.observables(grid.time(k)));
            mean_rho.push(rho);

            if active.len() >= 2 {
                let loo: Vec<[f64; 6]> = active
                    .iter()
                    .map(|g| {
                        let part = g.totals(k);
                        let rest = (n - g.count) as f64;
                        observables_of(&std::array::from_fn(|i| (total[i] - part[i]) / rest))
                    })
                    .collect();
                for (obs, err) in errors.iter_mut().enumerate() {
                    let column: Vec<f64> = loo.iter().map(|v| v[obs]).collect();
                    err.push(jackknife_stderr(&column));
                }
            } else {
                for err in errors.iter_mut() {
                    err.push(f64::NAN);
                }
            }
        }
        let [rho_gg, rho_11, rho_22, abs_rho_12, coherence_fraction, purity] = errors;
        Ok(EnsembleResult {
            grid,
            master_seed,
            mean_rho,
            observables,
            std_errors: ObservableErrors {
                rho_gg,
                rho_11,
                rho_22,
                abs_rho_12,
                coherence_fraction,
                purity,
            },
            n_effective: n,
            groups,
        })
    }

    /// Ensemble of explicit trajectories, split into contiguous groups.
    pub fn from_trajectories(grid: TimeGrid, master_seed: u64, trajectories: &[Vec<DensityMatrix>]) -> Result<Self> {
        let n = trajectories.len();
        let n_groups = n.clamp(1, MAX_GROUPS);
        let mut groups = Vec::with_capacity(n_groups);
        for g in 0..n_groups {
            let mut sum = GroupSum::new(grid.len());
            for path in &trajectories[g * n / n_groups..(g + 1) * n / n_groups] {
                sum.add_trajectory(path)?;
            }
            groups.push(sum);
        }
        Self::from_groups(grid, master_seed, groups)
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    fn mean_of_groups(&self, idx: &[usize]) -> Vec<[f64; 6]> {
        let n: usize = idx.iter().map(|&g| self.groups[g].count).sum();
        (0..self.grid.len())
            .map(|k| {
                let mut total = [CompensatedSum::default(); PACKED];
                for &g in idx {
                    for (t, s) in total.iter_mut().zip(&self.groups[g].sums[k]) {
                        t.merge(s);
                    }
                }
                observables_of(&std::array::from_fn(|i| total[i].value() / n as f64))
            })
            .collect()
    }

    fn jackknife_of_groups(&self, idx: &[usize]) -> Vec<[f64; 6]> {
        let n: usize = idx.iter().map(|&g| self.groups[g].count).sum();
        (0..self.grid.len())
            .map(|k| {
                let total: [f64; PACKED] = std::array::from_fn(|i| {
                    let mut s = CompensatedSum::default();
                    for &g in idx {
                        s.merge(&self.groups[g].sums[k][i]);
                    }
                    s.value()
                });
                let loo: Vec<[f64; 6]> = idx
                    .iter()
                    .map(|&g| {
                        let part = self.groups[g].totals(k);
                        let rest = (n - self.groups[g].count) as f64;
                        observables_of(&std::array::from_fn(|i| (total[i] - part[i]) / rest))
                    })
                    .collect();
                std::array::from_fn(|obs| jackknife_stderr(&loo.iter().map(|v| v[obs]).collect::<Vec<_>>()))
            })
            .collect()
    }
}

/// Maximum standard error over time for one observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSummary {
    pub name: String,
    pub max_std_error: f64,
    /// Fraction of output times at which the two half-samples agree within
    /// three combined standard errors.
    pub half_sample_coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub n_effective: usize,
    pub n_groups: usize,
    pub observables: Vec<ObservableSummary>,
    /// `None` when there are too few groups to split.
    pub half_sample_passed: Option<bool>,
}

/// Minimum fraction of times that must agree in the half-sample check.
pub const HALF_SAMPLE_MIN_COVERAGE: f64 = 0.95;

pub fn convergence_report(result: &EnsembleResult) -> ConvergenceReport {
    let max_se = |v: &Vec<f64>| v.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max);
    let mut coverage: [Option<f64>; 6] = [None; 6];
    let mut passed = None;
    let g = result.groups.len();
    if g >= 4 {
        let mut order: Vec<usize> = (0..g).collect();
        order.shuffle(&mut rng::stream(result.master_seed, rng::AUX_STREAM));
        let (a, b) = order.split_at(g / 2);
        let (mean_a, mean_b) = (result.mean_of_groups(a), result.mean_of_groups(b));
        let (se_a, se_b) = (result.jackknife_of_groups(a), result.jackknife_of_groups(b));
        let times = result.grid.len() as f64;
        for (obs, cov) in coverage.iter_mut().enumerate() {
            let agree = (0..result.grid.len())
                .filter(|&k| {
                    let diff = (mean_a[k][obs] - mean_b[k][obs]).abs();
                    let combined = (se_a[k][obs].powi(2) + se_b[k][obs].powi(2)).sqrt();
                    diff <= 3.0 * combined || diff <= 1e-12
                })
                .count();
            *cov = Some(agree as f64 / times);
        }
        passed = Some(
            coverage
                .iter()
                .all(|c| c.is_some_and(|c| c >= HALF_SAMPLE_MIN_COVERAGE)),
        );
    }
    ConvergenceReport {
        n_effective: result.n_effective,
        n_groups: g,
        observables: OBSERVABLE_NAMES
            .iter()
            .zip(result.std_errors.series())
            .zip(coverage)
            .map(|((name, se), cov)| ObservableSummary {
                name: name.to_string(),
                max_std_error: max_se(se),
                half_sample_coverage: cov,
            })
            .collect(),
        half_sample_passed: passed,
    }
}

fn with_carrier_offset(envelope: &mut [Complex64], grid: &TimeGrid, detuning: f64) {
    if detuning != 0.0 {
        for (k, e) in envelope.iter_mut().enumerate() {
            *e *= Complex64::from_polar(1.0, detuning * grid.time(k));
        }
    }
}

fn trajectory_envelopes(cfg: &EnsembleConfig, k: usize) -> Result<[Vec<Complex64>; 2]> {
    let mut out: [Vec<Complex64>; 2] = Default::default();
    for (field, slot) in out.iter_mut().enumerate() {
        let params = cfg.scenario.fields[field].with_stream(rng::field_stream_id(k, field));
        let mut env = sample_field(&params, cfg.master_seed, &cfg.grid)?.envelope;
        with_carrier_offset(&mut env, &cfg.grid, params.carrier_detuning);
        *slot = env;
    }
    Ok(out)
}

/// Runs trajectory `k`, calling `visit(step_index, rho)` at every grid time.
fn run_trajectory<F: FnMut(usize, &CMatrix3)>(cfg: &EnsembleConfig, k: usize, mut visit: F) -> Result<()> {
    let attach = |e: Error| Error::Trajectory {
        index: k,
        source: Box::new(e),
    };
    let [env1, env2] = trajectory_envelopes(cfg, k).map_err(attach)?;
    let sys = cfg.scenario.system();
    let drive = cfg.scenario.drive;
    let grid = &cfg.grid;
    let mut rho = *DensityMatrix::ground().matrix();
    visit(0, &rho);
    for s in 0..grid.steps() {
        let t_mid = grid.time(s) + 0.5 * grid.dt();
        let h = quantum::hamiltonian_unchecked(t_mid, &sys, [env1[s], env2[s]], &drive);
        rho = quantum::step(&rho, &h, grid.dt(), cfg.propagator).map_err(attach)?;
        visit(s + 1, &rho);
    }
    Ok(())
}

/// Full state history of trajectory `k` of the ensemble.
pub fn simulate_trajectory(cfg: &EnsembleConfig, k: usize) -> Result<Vec<DensityMatrix>> {
    cfg.scenario.validate()?;
    let mut path = Vec::with_capacity(cfg.grid.len());
    run_trajectory(cfg, k, |_, rho| path.push(DensityMatrix::from_matrix_unchecked(*rho)))?;
    Ok(path)
}

fn run_group(cfg: &EnsembleConfig, g: usize) -> Result<GroupSum> {
    let mut sum = GroupSum::new(cfg.grid.len());
    for k in cfg.group_range(g) {
        run_trajectory(cfg, k, |s, rho| sum.add_at(s, rho))?;
        sum.count += 1;
    }
    Ok(sum)
}

pub fn run_ensemble(cfg: &EnsembleConfig, exec: Execution) -> Result<EnsembleResult> {
    cfg.validate()?;
    let groups = map_units(cfg.n_groups(), exec, |g| run_group(cfg, g))?;
    EnsembleResult::from_groups(cfg.grid, cfg.master_seed, groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::NoiseModel;

    fn scenario(tau_d: f64, tau_c: f64) -> Scenario {
        Scenario {
            omega_21: std::f64::consts::TAU / tau_c,
            fields: [FieldParams::new(0.01, tau_d), FieldParams::new(0.01, tau_d)],
            drive: DriveConfig::default(),
        }
    }

    fn config(n: usize, tau_d: f64) -> EnsembleConfig {
        let mut sc = scenario(tau_d, 400.0);
        // a shared starting phase makes the noiseless limit deterministic
        for f in &mut sc.fields {
            f.origin = crate::field::PhaseOrigin::Locked;
        }
        let grid = TimeGrid::with_duration(300.0, sc.default_dt()).unwrap();
        EnsembleConfig::new(sc, grid, n, 5)
    }

    #[test]
    fn packing_round_trips() {
        let rho = DensityMatrix::pure(&[
            Complex64::new(0.6, 0.0),
            Complex64::new(0.0, 0.48),
            Complex64::new(0.64, 0.0),
        ]);
        assert_eq!(unpack(&pack(rho.matrix())), *rho.matrix());
    }

    #[test]
    fn noiseless_ensemble_equals_single_trajectory() {
        let cfg = config(2, f64::INFINITY);
        let res = run_ensemble(&cfg, Execution::Sequential).unwrap();
        let single = simulate_trajectory(&cfg, 0).unwrap();
        for (a, b) in res.mean_rho.iter().zip(&single) {
            assert!((a.matrix() - b.matrix()).iter().all(|z| z.norm() < 1e-15));
        }
        assert!(res.std_errors.coherence_fraction.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn rejects_single_trajectory() {
        assert!(run_ensemble(&config(1, 60.0), Execution::Sequential).is_err());
    }

    #[test]
    fn mean_state_stays_physical() {
        let res = run_ensemble(&config(64, 60.0), Execution::Sequential).unwrap();
        for rho in &res.mean_rho {
            rho.validate().unwrap();
            assert!(rho.purity() <= 1.0 + 1e-12);
        }
        assert!(res.observables.purity.last().unwrap() < &0.99);
    }

    #[test]
    fn step_rejection_reports_trajectory() {
        let mut cfg = config(4, 60.0);
        cfg.scenario.fields[0].rabi_amplitude = 2.0;
        cfg.scenario.fields[1].rabi_amplitude = 2.0;
        let err = run_ensemble(&cfg, Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::Trajectory { index: 0, .. }), "{err}");
        assert!(err.is_numerical());
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let mut cfg = config(40, 60.0);
        cfg.scenario.fields[1].model = NoiseModel::PhaseDiffusion;
        let a = run_ensemble(&cfg, Execution::Sequential).unwrap();
        let b = run_ensemble(&cfg, Execution::Workers(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicated_trajectory_has_zero_error() {
        let cfg = config(2, 60.0);
        let path = simulate_trajectory(&cfg, 3).unwrap();
        let res = EnsembleResult::from_trajectories(cfg.grid, 0, &vec![path; 10]).unwrap();
        let report = convergence_report(&res);
        assert!(report.observables.iter().all(|o| o.max_std_error < 1e-12));
        assert_eq!(report.half_sample_passed, Some(true));
    }

    #[test]
    fn half_sample_check_passes_on_converged_run() {
        let res = run_ensemble(&config(800, 60.0), Execution::Parallel).unwrap();
        let report = convergence_report(&res);
        assert_eq!(report.n_groups, MAX_GROUPS);
        assert_eq!(report.half_sample_passed, Some(true), "{report:?}");
    }

    #[test]
    fn default_dt_uses_fastest_scale() {
        let sc = scenario(120.0, 400.0);
        assert!((sc.default_dt() - 1.2).abs() < 1e-12);
        let sc = scenario(120.0, 50.0);
        assert!((sc.default_dt() - 0.5).abs() < 1e-12);
    }
}
