//! Stochastic realizations of collisionally broadened CW fields.
//!
//! Fields are represented in a frame rotating at their carrier frequency, so a
//! realization is only the slowly varying phase factor `e^{i phi(t)}`. Both
//! noise models give the Lorentzian coherence function
//! `|g1(tau)| = exp(-|tau| / tau_d)`.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng;

/// Finest resolution demanded of the grid, as a fraction of the coherence time.
pub const RESOLUTION_FACTOR: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Poisson collisions at rate `1/tau_d`, each redrawing the phase uniformly.
    #[default]
    PhaseJump,
    /// Wiener phase diffusion with `Var[dphi] = 2 dt / tau_d`.
    PhaseDiffusion,
}

/// Phase of every realization at the first grid point.
///
/// `Locked` models a source switched on with a definite phase: each
/// realization starts at phase 0 and only then diffuses. `Random` draws the
/// starting phase uniformly, which makes the process stationary from the
/// first sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhaseOrigin {
    Locked,
    #[default]
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    /// `mu * eps0 / hbar` in rad/fs.
    pub rabi_amplitude: f64,
    /// Offset of the carrier from its assigned transition, rad/fs.
    pub carrier_detuning: f64,
    /// 1/e decay time of `|g1|`, fs. May be infinite (coherent limit).
    pub coherence_time: f64,
    pub model: NoiseModel,
    pub origin: PhaseOrigin,
    pub stream_id: u64,
}

impl FieldParams {
    pub fn new(rabi_amplitude: f64, coherence_time: f64) -> Self {
        FieldParams {
            rabi_amplitude,
            carrier_detuning: 0.0,
            coherence_time,
            model: NoiseModel::PhaseJump,
            origin: PhaseOrigin::Random,
            stream_id: 0,
        }
    }

    pub fn with_model(mut self, model: NoiseModel) -> Self {
        self.model = model;
        self
    }

    pub fn with_origin(mut self, origin: PhaseOrigin) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_stream(mut self, stream_id: u64) -> Self {
        self.stream_id = stream_id;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coherence_time > 0.0) {
            return Err(Error::param(
                "coherence_time",
                format!("must be > 0, got {}", self.coherence_time),
            ));
        }
        if !(self.rabi_amplitude >= 0.0 && self.rabi_amplitude.is_finite()) {
            return Err(Error::param(
                "rabi_amplitude",
                format!("must be finite and >= 0, got {}", self.rabi_amplitude),
            ));
        }
        if !self.carrier_detuning.is_finite() {
            return Err(Error::param("carrier_detuning", "must be finite"));
        }
        Ok(())
    }

    /// Largest grid step accepted by [`sample_field`].
    pub fn max_dt(&self) -> f64 {
        self.coherence_time / RESOLUTION_FACTOR
    }
}

/// A collision of the phase-jump model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseJump {
    pub time: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldRealization {
    pub grid: TimeGrid,
    pub envelope: Vec<Complex64>,
    pub events: Option<Vec<PhaseJump>>,
}

impl FieldRealization {
    pub fn len(&self) -> usize {
        self.envelope.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envelope.is_empty()
    }

    /// Writes `t_fs,re_env,im_env` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_fs", "re_env", "im_env"])?;
        for (t, e) in self.grid.times().zip(&self.envelope) {
            w.write_record(&[fmt(t), fmt(e.re), fmt(e.im)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `t_jump_fs,phase_rad` rows; empty body for diffusion fields.
    pub fn write_events_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_jump_fs", "phase_rad"])?;
        for ev in self.events.iter().flatten() {
            w.write_record(&[fmt(ev.time), fmt(ev.phase)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

/// Draws one realization of the field on `grid`.
///
/// Output depends only on `(params, master_seed, grid)`.
pub fn sample_field(params: &FieldParams, master_seed: u64, grid: &TimeGrid) -> Result<FieldRealization> {
    params.validate()?;
    if grid.dt() > params.max_dt() {
        return Err(Error::GridTooCoarse {
            dt: grid.dt(),
            limit: params.max_dt(),
        });
    }
    let mut rng = rng::stream(master_seed, params.stream_id);
    let phi0 = match params.origin {
        PhaseOrigin::Locked => 0.0,
        PhaseOrigin::Random => rng.gen_range(0.0..TAU),
    };
    let realization = match params.model {
        NoiseModel::PhaseJump => phase_jump_path(&mut rng, params.coherence_time, phi0, grid),
        NoiseModel::PhaseDiffusion => phase_diffusion_path(&mut rng, params.coherence_time, phi0, grid),
    };
    Ok(realization)
}

fn phase_jump_path<R: Rng>(rng: &mut R, tau_d: f64, phi0: f64, grid: &TimeGrid) -> FieldRealization {
    let mut envelope = Vec::with_capacity(grid.len());
    let mut events = Vec::new();
    let mut phase = phi0;
    let mut current = Complex64::from_polar(1.0, phase);
    let waiting = tau_d.is_finite().then(|| Exp::new(1.0 / tau_d).expect("positive rate"));
    let mut next_jump = match &waiting {
        Some(w) => grid.start() + w.sample(rng),
        None => f64::INFINITY,
    };
    for t in grid.times() {
        while next_jump <= t {
            phase = rng.gen_range(0.0..TAU);
            current = Complex64::from_polar(1.0, phase);
            events.push(PhaseJump { time: next_jump, phase });
            next_jump += waiting.as_ref().map_or(f64::INFINITY, |w| w.sample(rng));
        }
        envelope.push(current);
    }
    FieldRealization {
        grid: *grid,
        envelope,
        events: Some(events),
    }
}

fn phase_diffusion_path<R: Rng>(rng: &mut R, tau_d: f64, phi0: f64, grid: &TimeGrid) -> FieldRealization {
    let sigma = (2.0 * grid.dt() / tau_d).sqrt();
    let mut envelope = Vec::with_capacity(grid.len());
    let mut phase = phi0;
    envelope.push(Complex64::from_polar(1.0, phase));
    for _ in 1..grid.len() {
        let z: f64 = StandardNormal.sample(rng);
        phase = (phase + sigma * z).rem_euclid(TAU);
        envelope.push(Complex64::from_polar(1.0, phase));
    }
    FieldRealization {
        grid: *grid,
        envelope,
        events: None,
    }
}

/// Normalized correlation estimate at a set of lags.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub lags: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Standard error of each complex value: `sqrt(Var[re] + Var[im]) / sqrt(N)`
    /// over realizations.
    pub std_errors: Vec<f64>,
    pub n_realizations: usize,
}

impl CorrelationSeries {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }
}

/// Streaming estimator of `<a(t + tau) b*(t)>` over realizations and base times.
///
/// Each realization contributes one time-averaged value per lag, so the
/// standard error comes from the spread across independent realizations.
#[derive(Debug, Clone)]
pub struct CorrelationAccumulator {
    grid: TimeGrid,
    lag_steps: Vec<usize>,
    window: (usize, usize),
    per_lag: Vec<Vec<Complex64>>,
    power_a: Vec<f64>,
    power_b: Vec<f64>,
}

impl CorrelationAccumulator {
    pub fn new(grid: TimeGrid, lags: &[f64]) -> Result<Self> {
        Self::with_window(grid, lags, grid.start(), grid.end())
    }

    /// Restricts both `t` and `t + tau` to `[t_from, t_to]`.
    pub fn with_window(grid: TimeGrid, lags: &[f64], t_from: f64, t_to: f64) -> Result<Self> {
        let lo = ((t_from - grid.start()) / grid.dt()).round().max(0.0) as usize;
        let hi = (((t_to - grid.start()) / grid.dt()).round() as usize).min(grid.len() - 1);
        if lo >= hi {
            return Err(Error::param("window", format!("empty window [{t_from}, {t_to}]")));
        }
        let span = (hi - lo) as f64 * grid.dt();
        let mut lag_steps = Vec::with_capacity(lags.len());
        for &lag in lags {
            let s = grid.lag_steps(lag)?;
            if s > hi - lo {
                return Err(Error::LagOutOfRange { lag, span });
            }
            lag_steps.push(s);
        }
        Ok(CorrelationAccumulator {
            grid,
            lag_steps,
            window: (lo, hi),
            per_lag: vec![Vec::new(); lags.len()],
            power_a: Vec::new(),
            power_b: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.power_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power_a.is_empty()
    }

    fn check(&self, f: &FieldRealization) -> Result<()> {
        if f.grid != self.grid || f.envelope.len() != self.grid.len() {
            return Err(Error::EnsembleMismatch("realizations do not share the grid".into()));
        }
        Ok(())
    }

    pub fn add_pair(&mut self, a: &FieldRealization, b: &FieldRealization) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        let (lo, hi) = self.window;
        let (ea, eb) = (&a.envelope[lo..=hi], &b.envelope[lo..=hi]);
        for (slot, &s) in self.per_lag.iter_mut().zip(&self.lag_steps) {
            let n = ea.len() - s;
            let mut re = 0.0;
            let mut im = 0.0;
            for k in 0..n {
                let p = ea[k + s] * eb[k].conj();
                re += p.re;
                im += p.im;
            }
            slot.push(Complex64::new(re, im) / n as f64);
        }
        let power = |e: &[Complex64]| e.iter().map(|z| z.norm_sqr()).sum::<f64>() / e.len() as f64;
        self.power_a.push(power(ea));
        self.power_b.push(power(eb));
        Ok(())
    }

    pub fn add(&mut self, f: &FieldRealization) -> Result<()> {
        self.add_pair(f, f)
    }

    /// Appends another accumulator's realizations after this one's.
    pub fn merge(&mut self, other: CorrelationAccumulator) -> Result<()> {
        if other.grid != self.grid || other.lag_steps != self.lag_steps || other.window != self.window {
            return Err(Error::EnsembleMismatch(
                "accumulators differ in grid, lags or window".into(),
            ));
        }
        for (mine, theirs) in self.per_lag.iter_mut().zip(other.per_lag) {
            mine.extend(theirs);
        }
        self.power_a.extend(other.power_a);
        self.power_b.extend(other.power_b);
        Ok(())
    }

    pub fn finish(&self) -> Result<CorrelationSeries> {
        let n = self.len();
        if n < 2 {
            return Err(Error::TooFewRealizations { got: n, min: 2 });
        }
        let mean_power = |p: &[f64]| crate::stats::compensated_sum(p.iter().copied()) / p.len() as f64;
        let norm = (mean_power(&self.power_a) * mean_power(&self.power_b)).sqrt();
        let mut values = Vec::with_capacity(self.per_lag.len());
        let mut std_errors = Vec::with_capacity(self.per_lag.len());
        for samples in &self.per_lag {
            let re: Vec<f64> = samples.iter().map(|z| z.re / norm).collect();
            let im: Vec<f64> = samples.iter().map(|z| z.im / norm).collect();
            let (mr, sr) = crate::stats::mean_and_stderr(&re);
            let (mi, si) = crate::stats::mean_and_stderr(&im);
            values.push(Complex64::new(mr, mi));
            std_errors.push((sr * sr + si * si).sqrt());
        }
        Ok(CorrelationSeries {
            lags: self.lag_steps.iter().map(|&s| s as f64 * self.grid.dt()).collect(),
            values,
            std_errors,
            n_realizations: n,
        })
    }
}

/// First-order coherence `g1(tau) = <e(t + tau) e*(t)> / <|e|^2>`, averaged over
/// realizations and over base times.
pub fn estimate_g1(realizations: &[FieldRealization], lags: &[f64]) -> Result<CorrelationSeries> {
    let first = realizations
        .first()
        .ok_or(Error::TooFewRealizations { got: 0, min: 2 })?;
    let mut acc = CorrelationAccumulator::new(first.grid, lags)?;
    for f in realizations {
        acc.add(f)?;
    }
    acc.finish()
}

/// Normalized cross-correlation `<a(t + tau) b*(t)>` of paired realizations.
pub fn estimate_cross_correlation(
    fields_a: &[FieldRealization],
    fields_b: &[FieldRealization],
    lags: &[f64],
) -> Result<CorrelationSeries> {
    if fields_a.len() != fields_b.len() {
        return Err(Error::EnsembleMismatch(format!(
            "{} realizations vs {}",
            fields_a.len(),
            fields_b.len()
        )));
    }
    let first = fields_a.first().ok_or(Error::TooFewRealizations { got: 0, min: 2 })?;
    let mut acc = CorrelationAccumulator::new(first.grid, lags)?;
    for (a, b) in fields_a.iter().zip(fields_b) {
        acc.add_pair(a, b)?;
    }
    acc.finish()
}

/// Ensemble average `<a(t + tau) b*(t)>` at a single lag, resolved in the
/// base time `t` (no time averaging).
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileAccumulator {
    grid: TimeGrid,
    lag_steps: usize,
    sums: Vec<Complex64>,
    count: usize,
}

impl ProfileAccumulator {
    pub fn new(grid: TimeGrid, lag: f64) -> Result<Self> {
        let lag_steps = grid.lag_steps(lag)?;
        Ok(ProfileAccumulator {
            grid,
            lag_steps,
            sums: vec![Complex64::new(0.0, 0.0); grid.len() - lag_steps],
            count: 0,
        })
    }

    pub fn add_pair(&mut self, a: &FieldRealization, b: &FieldRealization) -> Result<()> {
        if a.grid != self.grid || b.grid != self.grid {
            return Err(Error::EnsembleMismatch("realizations do not share the grid".into()));
        }
        let s = self.lag_steps;
        for (k, slot) in self.sums.iter_mut().enumerate() {
            *slot += a.envelope[k + s] * b.envelope[k].conj();
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ProfileAccumulator) -> Result<()> {
        if other.grid != self.grid || other.lag_steps != self.lag_steps {
            return Err(Error::EnsembleMismatch("profiles differ in grid or lag".into()));
        }
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn finish(&self) -> Result<Vec<(f64, Complex64)>> {
        if self.count == 0 {
            return Err(Error::TooFewRealizations { got: 0, min: 1 });
        }
        let n = self.count as f64;
        Ok(self
            .sums
            .iter()
            .enumerate()
            .map(|(k, z)| (self.grid.time(k), z / n))
            .collect())
    }
}

pub fn cross_correlation_profile(
    fields_a: &[FieldRealization],
    fields_b: &[FieldRealization],
    lag: f64,
) -> Result<Vec<(f64, Complex64)>> {
    if fields_a.len() != fields_b.len() {
        return Err(Error::EnsembleMismatch(format!(
            "{} realizations vs {}",
            fields_a.len(),
            fields_b.len()
        )));
    }
    let first = fields_a.first().ok_or(Error::TooFewRealizations { got: 0, min: 1 })?;
    let mut acc = ProfileAccumulator::new(first.grid, lag)?;
    for (a, b) in fields_a.iter().zip(fields_b) {
        acc.add_pair(a, b)?;
    }
    acc.finish()
}

/// Correlation statistics of a pair of field ensembles.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStatistics {
    pub g1: [CorrelationSeries; 2],
    pub cross: CorrelationSeries,
    /// Equal-time cross-correlation resolved in time.
    pub cross_profile: Vec<(f64, Complex64)>,
}

/// Realizations per work unit in [`field_statistics`].
const STATS_CHUNK: usize = 250;

/// Samples `n` realization pairs (field `i` of pair `k` on stream `2k + i`)
/// and accumulates both coherence functions and the cross-correlation
/// without keeping the realizations.
pub fn field_statistics(
    params: &[FieldParams; 2],
    master_seed: u64,
    grid: &TimeGrid,
    n: usize,
    lags: &[f64],
    exec: crate::parallel::Execution,
) -> Result<FieldStatistics> {
    if n < 2 {
        return Err(Error::TooFewRealizations { got: n, min: 2 });
    }
    let units = n.div_ceil(STATS_CHUNK);
    let parts = crate::parallel::map_units(units, exec, |u| {
        let mut g1a = CorrelationAccumulator::new(*grid, lags)?;
        let mut g1b = g1a.clone();
        let mut cross = g1a.clone();
        let mut profile = ProfileAccumulator::new(*grid, 0.0)?;
        for k in u * STATS_CHUNK..((u + 1) * STATS_CHUNK).min(n) {
            let a = sample_field(&params[0].with_stream(rng::field_stream_id(k, 0)), master_seed, grid)?;
            let b = sample_field(&params[1].with_stream(rng::field_stream_id(k, 1)), master_seed, grid)?;
            g1a.add(&a)?;
            g1b.add(&b)?;
            cross.add_pair(&a, &b)?;
            profile.add_pair(&a, &b)?;
        }
        Ok((g1a, g1b, cross, profile))
    })?;
    let mut parts = parts.into_iter();
    let (mut g1a, mut g1b, mut cross, mut profile) = parts.next().expect("n >= 2");
    for (a, b, c, p) in parts {
        g1a.merge(a)?;
        g1b.merge(b)?;
        cross.merge(c)?;
        profile.merge(&p)?;
    }
    Ok(FieldStatistics {
        g1: [g1a.finish()?, g1b.finish()?],
        cross: cross.finish()?,
        cross_profile: profile.finish()?,
    })
}
