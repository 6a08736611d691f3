//! Scenario files, presets and run outputs.
//!
//! A scenario is a TOML document (frequencies in THz, read as angular
//! frequencies via [`crate::units`]; times in fs). Running it writes CSV
//! files with fixed column orders plus a JSON manifest that echoes the fully
//! resolved configuration, so a manifest can be fed back in as a config.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ensemble::{convergence_report, run_ensemble, ConvergenceReport, EnsembleConfig, EnsembleResult, Scenario};
use crate::error::{Error, Result};
use crate::field::{field_statistics, sample_field, FieldParams, FieldStatistics, NoiseModel, PhaseOrigin};
use crate::grid::TimeGrid;
use crate::observables::ObservableSeries;
use crate::parallel::Execution;
use crate::quantum::{DensityMatrix, DriveConfig, Propagator};
use crate::rng;
use crate::units::{splitting_from_period, thz_to_rad_per_fs};
use crate::white_noise::{solve_white_noise, PumpRates, WhiteNoiseState};

/// Version of the CSV layouts below; bump on any column change.
pub const SCHEMA_VERSION: u32 = 1;

pub const OBSERVABLE_COLUMNS: [&str; 9] = [
    "t_fs",
    "rho_gg",
    "rho_11",
    "rho_22",
    "re_rho12",
    "im_rho12",
    "abs_rho12",
    "coherence_fraction",
    "purity",
];

pub const STDERR_COLUMNS: [&str; 6] = [
    "se_rho_gg",
    "se_rho_11",
    "se_rho_22",
    "se_abs_rho12",
    "se_coherence_fraction",
    "se_purity",
];

pub const CORRELATION_COLUMNS: [&str; 14] = [
    "lag_fs",
    "re_g1_field1",
    "im_g1_field1",
    "abs_g1_field1",
    "se_g1_field1",
    "re_g1_field2",
    "im_g1_field2",
    "abs_g1_field2",
    "se_g1_field2",
    "re_cross",
    "im_cross",
    "abs_cross",
    "se_cross",
    "expected_abs_g1",
];

pub const CROSS_PROFILE_COLUMNS: [&str; 4] = ["t_fs", "re_cross", "im_cross", "abs_cross"];

/// Default ensemble size for partially coherent runs.
pub const DEFAULT_TRAJECTORIES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 2014;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    WhiteNoise,
    PartiallyCoherent,
    FieldStatsOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub duration_fs: f64,
    /// Defaults to `min(tau_d, tau_c, 2 pi / rabi) / 100` (partially coherent),
    /// `tau_d / 20` (field statistics) or `0.01 / max(gamma)` (white noise).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_fs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Characteristic excited-state period `2 pi / w21`. Exactly one of this
    /// and `splitting_thz` is required.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excited_period_fs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splitting_thz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub rabi_thz: f64,
    pub coherence_time_fs: f64,
    #[serde(default)]
    pub detuning_thz: f64,
    #[serde(default)]
    pub model: NoiseModel,
    #[serde(default)]
    pub origin: PhaseOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhiteNoiseConfig {
    pub gamma_1_thz: f64,
    pub gamma_2_thz: f64,
    #[serde(default)]
    pub splitting_thz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldStatsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    /// Defaults to three coherence times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_lag_fs: Option<f64>,
    /// Number of realizations per field written out as CSV.
    #[serde(default)]
    pub dump_realizations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Prefix of every output file.
    pub name: String,
    pub mode: Mode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagator: Option<Propagator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_1: Option<FieldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_2: Option<FieldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub white_noise: Option<WhiteNoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_stats: Option<FieldStatsConfig>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn require<'a, T>(value: &'a Option<T>, field: &str, mode: Mode) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::config(field, format!("required for mode {mode:?}")))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite and >= 0, got {v}")))
    }
}

impl FieldConfig {
    pub fn new(rabi_thz: f64, coherence_time_fs: f64) -> Self {
        FieldConfig {
            rabi_thz,
            coherence_time_fs,
            detuning_thz: 0.0,
            model: NoiseModel::PhaseJump,
            origin: PhaseOrigin::Random,
        }
    }

    fn validate(&self, prefix: &str) -> Result<()> {
        non_negative(&format!("{prefix}.rabi_thz"), self.rabi_thz)?;
        if !(self.coherence_time_fs > 0.0) {
            return Err(Error::config(
                format!("{prefix}.coherence_time_fs"),
                format!("must be > 0, got {}", self.coherence_time_fs),
            ));
        }
        if !self.detuning_thz.is_finite() {
            return Err(Error::config(format!("{prefix}.detuning_thz"), "must be finite"));
        }
        Ok(())
    }

    pub fn params(&self) -> FieldParams {
        FieldParams {
            rabi_amplitude: thz_to_rad_per_fs(self.rabi_thz),
            carrier_detuning: thz_to_rad_per_fs(self.detuning_thz),
            coherence_time: self.coherence_time_fs,
            model: self.model,
            origin: self.origin,
            stream_id: 0,
        }
    }
}

impl SystemConfig {
    pub fn from_period(tau_c_fs: f64) -> Self {
        SystemConfig {
            excited_period_fs: Some(tau_c_fs),
            splitting_thz: None,
        }
    }

    fn omega_21(&self) -> Result<f64> {
        match (self.excited_period_fs, self.splitting_thz) {
            (Some(tc), None) => {
                positive("system.excited_period_fs", tc)?;
                Ok(splitting_from_period(tc))
            }
            (None, Some(s)) => {
                non_negative("system.splitting_thz", s)?;
                Ok(thz_to_rad_per_fs(s))
            }
            _ => Err(Error::config(
                "system",
                "set exactly one of excited_period_fs and splitting_thz",
            )),
        }
    }
}

/// A validated, fully resolved run description.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedRun {
    WhiteNoise {
        rates: PumpRates,
        grid: TimeGrid,
    },
    PartiallyCoherent(EnsembleConfig),
    FieldStats {
        fields: [FieldParams; 2],
        grid: TimeGrid,
        realizations: usize,
        lags: Vec<f64>,
        dump: usize,
    },
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| text[s].lines().next().unwrap_or("").trim().to_string())
                .unwrap_or_default();
            Error::config(
                if field.is_empty() { "<document>".into() } else { field },
                e.message().to_string(),
            )
        })
    }

    /// Reads a TOML config, or the `config` entry of a JSON run manifest.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value = serde_json::from_str(&text)?;
            let config = manifest
                .get("config")
                .ok_or_else(|| Error::config("config", "manifest has no `config` entry"))?;
            Ok(serde_json::from_value(config.clone())?)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    fn grid_or_default(&self, default_dt: f64) -> Result<TimeGrid> {
        let g = require(&self.grid, "grid", self.mode)?;
        positive("grid.duration_fs", g.duration_fs)?;
        let dt = g.dt_fs.unwrap_or(default_dt);
        positive("grid.dt_fs", dt)?;
        if dt > g.duration_fs {
            return Err(Error::config("grid.dt_fs", "exceeds grid.duration_fs"));
        }
        TimeGrid::with_duration(g.duration_fs, dt).map_err(|e| Error::config("grid", e.to_string()))
    }

    fn fields(&self) -> Result<[FieldParams; 2]> {
        let f1 = require(&self.field_1, "field_1", self.mode)?;
        let f2 = require(&self.field_2, "field_2", self.mode)?;
        f1.validate("field_1")?;
        f2.validate("field_2")?;
        Ok([f1.params(), f2.params()])
    }

    /// Checks the config and fills every default.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must be a non-empty file-name prefix"));
        }
        match self.mode {
            Mode::WhiteNoise => {
                let wn = require(&self.white_noise, "white_noise", self.mode)?;
                non_negative("white_noise.gamma_1_thz", wn.gamma_1_thz)?;
                non_negative("white_noise.gamma_2_thz", wn.gamma_2_thz)?;
                if !wn.splitting_thz.is_finite() {
                    return Err(Error::config("white_noise.splitting_thz", "must be finite"));
                }
                let rates = PumpRates {
                    gamma_1: thz_to_rad_per_fs(wn.gamma_1_thz),
                    gamma_2: thz_to_rad_per_fs(wn.gamma_2_thz),
                    omega_12: thz_to_rad_per_fs(wn.splitting_thz),
                };
                let fastest = rates.gamma_1.max(rates.gamma_2).max(rates.omega_12.abs());
                let default_dt = if fastest > 0.0 { 0.01 / fastest } else { 1.0 };
                Ok(ResolvedRun::WhiteNoise {
                    rates,
                    grid: self.grid_or_default(default_dt)?,
                })
            }
            Mode::PartiallyCoherent => {
                let system = require(&self.system, "system", self.mode)?;
                let scenario = Scenario {
                    omega_21: system.omega_21()?,
                    fields: self.fields()?,
                    drive: self.drive.unwrap_or_default(),
                };
                let grid = self.grid_or_default(scenario.default_dt())?;
                let limit = scenario.fields[0].max_dt().min(scenario.fields[1].max_dt());
                if grid.dt() > limit {
                    return Err(Error::config(
                        "grid.dt_fs",
                        format!("{} fs exceeds coherence_time / 20 = {limit} fs", grid.dt()),
                    ));
                }
                let n = self.trajectories.unwrap_or(DEFAULT_TRAJECTORIES);
                if n < 2 {
                    return Err(Error::config("trajectories", format!("need at least 2, got {n}")));
                }
                let mut cfg = EnsembleConfig::new(scenario, grid, n, self.seed);
                if let Some(p) = self.propagator {
                    if let Propagator::Rk4 { substeps: 0 } = p {
                        return Err(Error::config("propagator.rk4.substeps", "must be >= 1"));
                    }
                    cfg.propagator = p;
                }
                Ok(ResolvedRun::PartiallyCoherent(cfg))
            }
            Mode::FieldStatsOnly => {
                let fields = self.fields()?;
                let stats = self.field_stats.clone().unwrap_or(FieldStatsConfig {
                    realizations: None,
                    max_lag_fs: None,
                    dump_realizations: 0,
                });
                let tau_d = fields[0].coherence_time.min(fields[1].coherence_time);
                let grid = self.grid_or_default(tau_d / crate::field::RESOLUTION_FACTOR)?;
                let limit = tau_d / crate::field::RESOLUTION_FACTOR;
                if grid.dt() > limit {
                    return Err(Error::config(
                        "grid.dt_fs",
                        format!("{} fs exceeds coherence_time / 20 = {limit} fs", grid.dt()),
                    ));
                }
                let realizations = stats.realizations.unwrap_or(DEFAULT_TRAJECTORIES);
                if realizations < 2 {
                    return Err(Error::config("field_stats.realizations", "need at least 2"));
                }
                let max_lag = stats.max_lag_fs.unwrap_or(3.0 * tau_d);
                non_negative("field_stats.max_lag_fs", max_lag)?;
                if max_lag > grid.span() {
                    return Err(Error::config("field_stats.max_lag_fs", "exceeds grid.duration_fs"));
                }
                let steps = (max_lag / grid.dt()).round() as usize;
                let lags = (0..=steps).map(|s| s as f64 * grid.dt()).collect();
                if stats.dump_realizations > realizations {
                    return Err(Error::config("field_stats.dump_realizations", "exceeds realizations"));
                }
                Ok(ResolvedRun::FieldStats {
                    fields,
                    grid,
                    realizations,
                    lags,
                    dump: stats.dump_realizations,
                })
            }
        }
    }

    /// Copy with every default written out, for the manifest.
    pub fn resolved(&self) -> Result<ScenarioConfig> {
        let run = self.resolve()?;
        let mut out = self.clone();
        match &run {
            ResolvedRun::WhiteNoise { grid, .. } => {
                out.grid = Some(GridConfig {
                    duration_fs: grid.span(),
                    dt_fs: Some(grid.dt()),
                });
            }
            ResolvedRun::PartiallyCoherent(cfg) => {
                out.grid = Some(GridConfig {
                    duration_fs: cfg.grid.span(),
                    dt_fs: Some(cfg.grid.dt()),
                });
                out.trajectories = Some(cfg.n_trajectories);
                out.drive = Some(cfg.scenario.drive);
                out.propagator = Some(cfg.propagator);
            }
            ResolvedRun::FieldStats {
                grid,
                realizations,
                lags,
                dump,
                ..
            } => {
                out.grid = Some(GridConfig {
                    duration_fs: grid.span(),
                    dt_fs: Some(grid.dt()),
                });
                out.field_stats = Some(FieldStatsConfig {
                    realizations: Some(*realizations),
                    max_lag_fs: Some(*lags.last().unwrap_or(&0.0)),
                    dump_realizations: *dump,
                });
            }
        }
        Ok(out)
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, trajectories: Option<usize>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(n) = trajectories {
            match self.mode {
                Mode::FieldStatsOnly => {
                    let stats = self.field_stats.get_or_insert(FieldStatsConfig {
                        realizations: None,
                        max_lag_fs: None,
                        dump_realizations: 0,
                    });
                    stats.realizations = Some(n);
                }
                _ => self.trajectories = Some(n),
            }
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub overwrite: bool,
    pub execution: Execution,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            out_dir: out_dir.into(),
            overwrite: false,
            execution: Execution::Parallel,
        }
    }
}

/// Computed results of one scenario, before anything is written.
#[derive(Debug, Clone)]
pub enum RunData {
    WhiteNoise(ObservableSeries),
    Ensemble(Box<EnsembleResult>),
    FieldStats(Box<FieldStatistics>),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: ScenarioConfig,
    pub data: RunData,
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub convergence: Option<ConvergenceReport>,
}

/// Checks the invariants every reported state must satisfy.
pub fn check_state_invariants(rho: &DensityMatrix) -> Result<()> {
    rho.validate()?;
    let p = rho.purity();
    if !(1.0 / 3.0 - 1e-9..=1.0 + 1e-9).contains(&p) {
        return Err(Error::InvalidDensityMatrix(format!("purity {p} outside [1/3, 1]")));
    }
    let c = rho.coherence_fraction();
    if !(0.0..=0.5 + 1e-9).contains(&c) {
        return Err(Error::InvalidDensityMatrix(format!(
            "coherence fraction {c} outside [0, 1/2]"
        )));
    }
    Ok(())
}

/// Runs the computation of a scenario without touching the filesystem.
pub fn compute(config: &ScenarioConfig, execution: Execution) -> Result<RunData> {
    match config.resolve()? {
        ResolvedRun::WhiteNoise { rates, grid } => {
            let series = solve_white_noise(&rates, &WhiteNoiseState::ground(), &grid)?;
            for k in 0..series.len() {
                let r = series.row(k);
                let rho = DensityMatrix::diagonal([r.rho_gg, r.rho_11, r.rho_22]);
                let mut m = *rho.matrix();
                m[(1, 2)] = r.rho_12;
                m[(2, 1)] = r.rho_12.conj();
                check_state_invariants(&DensityMatrix::from_matrix_unchecked(m)).map_err(|e| Error::Trajectory {
                    index: 0,
                    source: Box::new(e),
                })?;
            }
            Ok(RunData::WhiteNoise(series))
        }
        ResolvedRun::PartiallyCoherent(cfg) => {
            let result = run_ensemble(&cfg, execution)?;
            for rho in &result.mean_rho {
                check_state_invariants(rho)?;
            }
            Ok(RunData::Ensemble(Box::new(result)))
        }
        ResolvedRun::FieldStats {
            fields,
            grid,
            realizations,
            lags,
            ..
        } => Ok(RunData::FieldStats(Box::new(field_statistics(
            &fields,
            config.seed,
            &grid,
            realizations,
            &lags,
            execution,
        )?))),
    }
}

fn num(x: f64) -> String {
    // Shortest representation that round-trips; -0 is written as 0.
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:?}")
}

pub fn write_observables_csv<W: std::io::Write>(
    out: W,
    series: &ObservableSeries,
    errors: Option<&crate::ensemble::ObservableErrors>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = OBSERVABLE_COLUMNS.to_vec();
    if errors.is_some() {
        header.extend(STDERR_COLUMNS);
    }
    w.write_record(&header)?;
    for k in 0..series.len() {
        let r = series.row(k);
        let mut row = vec![
            num(r.t),
            num(r.rho_gg),
            num(r.rho_11),
            num(r.rho_22),
            num(r.rho_12.re),
            num(r.rho_12.im),
            num(r.rho_12.norm()),
            num(r.coherence_fraction),
            num(r.purity),
        ];
        if let Some(e) = errors {
            row.extend(e.series().iter().map(|s| num(s[k])));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_correlation_csv<W: std::io::Write>(out: W, stats: &FieldStatistics, tau_d: f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CORRELATION_COLUMNS)?;
    for (i, &lag) in stats.cross.lags.iter().enumerate() {
        let mut row = vec![num(lag)];
        for s in [&stats.g1[0], &stats.g1[1], &stats.cross] {
            let v = s.values[i];
            row.extend([num(v.re), num(v.im), num(v.norm()), num(s.std_errors[i])]);
        }
        row.push(num((-lag / tau_d).exp()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cross_profile_csv<W: std::io::Write>(out: W, stats: &FieldStatistics) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CROSS_PROFILE_COLUMNS)?;
    for (t, v) in &stats.cross_profile {
        w.write_record(&[num(*t), num(v.re), num(v.im), num(v.norm())])?;
    }
    w.flush()?;
    Ok(())
}

struct OutputSet<'a> {
    opts: &'a RunOptions,
    name: String,
    files: Vec<PathBuf>,
}

impl OutputSet<'_> {
    fn path(&mut self, suffix: &str) -> Result<PathBuf> {
        let p = self.opts.out_dir.join(format!("{}_{suffix}", self.name));
        if p.exists() && !self.opts.overwrite {
            return Err(Error::OutputExists(p));
        }
        self.files.push(p.clone());
        Ok(p)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    code_version: &'static str,
    master_seed: u64,
    wall_clock_seconds: f64,
    config: &'a ScenarioConfig,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    convergence: Option<&'a ConvergenceReport>,
}

/// Resolves, runs and writes one scenario.
pub fn run_scenario(config: &ScenarioConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let started = Instant::now();
    let resolved = config.resolved()?;
    let mut outputs = OutputSet {
        opts,
        name: resolved.name.clone(),
        files: Vec::new(),
    };
    // Claim every output path before computing so collisions fail fast.
    let manifest_path = outputs.path("manifest.json")?;
    let mut planned = Vec::new();
    match resolved.mode {
        Mode::WhiteNoise | Mode::PartiallyCoherent => planned.push(outputs.path("observables.csv")?),
        Mode::FieldStatsOnly => {
            planned.push(outputs.path("correlation.csv")?);
            planned.push(outputs.path("cross_profile.csv")?);
            let dump = resolved.field_stats.as_ref().map_or(0, |s| s.dump_realizations);
            for k in 0..dump {
                for f in 1..=2 {
                    planned.push(outputs.path(&format!("field{f}_realization{k}.csv"))?);
                    planned.push(outputs.path(&format!("field{f}_events{k}.csv"))?);
                }
            }
        }
    }
    fs::create_dir_all(&opts.out_dir)?;

    let data = compute(&resolved, opts.execution)?;
    let mut convergence = None;
    match &data {
        RunData::WhiteNoise(series) => {
            write_observables_csv(fs::File::create(&planned[0])?, series, None)?;
        }
        RunData::Ensemble(result) => {
            write_observables_csv(
                fs::File::create(&planned[0])?,
                &result.observables,
                Some(&result.std_errors),
            )?;
            convergence = Some(convergence_report(result));
        }
        RunData::FieldStats(stats) => {
            let ResolvedRun::FieldStats { fields, grid, dump, .. } = resolved.resolve()? else {
                unreachable!("mode checked above")
            };
            let tau_d = fields[0].coherence_time;
            write_correlation_csv(fs::File::create(&planned[0])?, stats, tau_d)?;
            write_cross_profile_csv(fs::File::create(&planned[1])?, stats)?;
            let mut paths = planned[2..].iter();
            for k in 0..dump {
                for (f, params) in fields.iter().enumerate() {
                    let real = sample_field(&params.with_stream(rng::field_stream_id(k, f)), resolved.seed, &grid)?;
                    real.write_csv(fs::File::create(paths.next().expect("planned"))?)?;
                    real.write_events_csv(fs::File::create(paths.next().expect("planned"))?)?;
                }
            }
        }
    }

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        code_version: env!("CARGO_PKG_VERSION"),
        master_seed: resolved.seed,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        config: &resolved,
        outputs: planned
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        convergence: convergence.as_ref(),
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunOutcome {
        config: resolved,
        data,
        files: planned,
        manifest: manifest_path,
        convergence,
    })
}

/// A named set of scenarios reproducing one figure group.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub configs: Vec<ScenarioConfig>,
}

/// Excited-state periods of the splitting sweeps, fs.
pub const SWEEP_PERIODS_FS: [f64; 4] = [50.0, 100.0, 200.0, 400.0];

/// Rabi amplitude of the partially coherent presets, THz.
pub const PRESET_RABI_THZ: f64 = 10.0;

/// Drive used by the partially coherent presets.
pub const PRESET_DRIVE: DriveConfig = DriveConfig::new(
    crate::quantum::CouplingScheme::CrossCoupled,
    crate::quantum::CarrierScheme::PerTransition,
);

pub const PARTIAL_DURATION_FS: f64 = 1000.0;

pub fn white_noise_config() -> ScenarioConfig {
    ScenarioConfig {
        name: "whitenoise_equilibration".into(),
        mode: Mode::WhiteNoise,
        seed: DEFAULT_SEED,
        trajectories: None,
        propagator: None,
        grid: Some(GridConfig {
            duration_fs: 100.0,
            dt_fs: Some(0.1),
        }),
        system: None,
        drive: None,
        field_1: None,
        field_2: None,
        white_noise: Some(WhiteNoiseConfig {
            gamma_1_thz: 250.0,
            gamma_2_thz: 250.0,
            splitting_thz: crate::units::rad_per_fs_to_thz(splitting_from_period(400.0)),
        }),
        field_stats: None,
    }
}

pub fn partial_config(tau_d: f64, tau_c: f64, drive: DriveConfig) -> ScenarioConfig {
    ScenarioConfig {
        name: format!("partial_tau{tau_d}_tc{tau_c}"),
        mode: Mode::PartiallyCoherent,
        seed: DEFAULT_SEED,
        trajectories: Some(DEFAULT_TRAJECTORIES),
        propagator: None,
        grid: Some(GridConfig {
            duration_fs: PARTIAL_DURATION_FS,
            dt_fs: None,
        }),
        system: Some(SystemConfig::from_period(tau_c)),
        drive: Some(drive),
        field_1: Some(FieldConfig::new(PRESET_RABI_THZ, tau_d)),
        field_2: Some(FieldConfig::new(PRESET_RABI_THZ, tau_d)),
        white_noise: None,
        field_stats: None,
    }
}

pub fn field_stats_config(tau_d: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: format!("field_stats_tau{tau_d}"),
        mode: Mode::FieldStatsOnly,
        // grids scale with tau_d, so a shared seed would give rescaled copies
        seed: DEFAULT_SEED + tau_d as u64,
        trajectories: None,
        propagator: None,
        grid: Some(GridConfig {
            duration_fs: 40.0 * tau_d,
            dt_fs: Some(tau_d / crate::field::RESOLUTION_FACTOR),
        }),
        system: None,
        drive: None,
        field_1: Some(FieldConfig::new(PRESET_RABI_THZ, tau_d)),
        field_2: Some(FieldConfig::new(PRESET_RABI_THZ, tau_d)),
        white_noise: None,
        field_stats: Some(FieldStatsConfig {
            realizations: Some(DEFAULT_TRAJECTORIES),
            max_lag_fs: Some(3.0 * tau_d),
            dump_realizations: 2,
        }),
    }
}

fn drive_slug(d: &DriveConfig) -> String {
    d.label().replace('/', "_")
}

pub fn presets() -> Vec<Preset> {
    let mut out = vec![Preset {
        name: "whitenoise_equilibration".into(),
        description: "white-noise pumping from |g>: populations and purity equilibrate to 1/3 (Figs. 1-2)".into(),
        configs: vec![white_noise_config()],
    }];
    for (tau_d, figs) in [(60.0, "Figs. 3, 5, 6"), (120.0, "Figs. 4, 7, 8")] {
        out.push(Preset {
            name: format!("partial_tau{tau_d}"),
            description: format!("sweep of tau_c over {{50, 100, 200, 400}} fs at tau_d = {tau_d} fs ({figs})"),
            configs: SWEEP_PERIODS_FS
                .iter()
                .map(|&tc| partial_config(tau_d, tc, PRESET_DRIVE))
                .collect(),
        });
        for tc in SWEEP_PERIODS_FS {
            out.push(Preset {
                name: format!("partial_tau{tau_d}_tc{tc}"),
                description: format!("tau_d = {tau_d} fs, tau_c = {tc} fs ({figs})"),
                configs: vec![partial_config(tau_d, tc, PRESET_DRIVE)],
            });
        }
    }
    out.push(Preset {
        name: "drive_comparison_tau120".into(),
        description: "tau_c sweep at tau_d = 120 fs under every coupling/carrier scheme".into(),
        configs: DriveConfig::ALL
            .iter()
            .flat_map(|d| {
                SWEEP_PERIODS_FS.iter().map(move |&tc| {
                    let mut c = partial_config(120.0, tc, *d);
                    c.name = format!("drive_{}_tau120_tc{tc}", drive_slug(d));
                    c
                })
            })
            .collect(),
    });
    out.push(Preset {
        name: "field_stats".into(),
        description: "coherence functions and cross-correlation of the two fields, tau_d = 60 and 120 fs (Fig. 9)"
            .into(),
        configs: vec![field_stats_config(60.0), field_stats_config(120.0)],
    });
    for tau_d in [60.0, 120.0] {
        out.push(Preset {
            name: format!("field_stats_tau{tau_d}"),
            description: format!("coherence functions and cross-correlation at tau_d = {tau_d} fs (Fig. 9)"),
            configs: vec![field_stats_config(tau_d)],
        });
    }
    out
}

pub fn preset(name: &str) -> Result<Preset> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

/// Human-readable preset listing.
pub fn list_presets() -> String {
    let mut s = String::new();
    for p in presets() {
        s.push_str(&format!(
            "{:<28} {} [{} run(s)]\n",
            p.name,
            p.description,
            p.configs.len()
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        let all = presets();
        assert!(all.len() >= 5);
        for p in &all {
            for c in &p.configs {
                c.validate().unwrap_or_else(|e| panic!("{}: {e}", p.name));
            }
        }
        for name in [
            "whitenoise_equilibration",
            "partial_tau60",
            "partial_tau120",
            "field_stats",
        ] {
            assert!(preset(name).is_ok(), "{name}");
        }
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn presets_use_reference_coherence_times() {
        let tau_ds: Vec<f64> = preset("partial_tau60")
            .unwrap()
            .configs
            .iter()
            .chain(&preset("partial_tau120").unwrap().configs)
            .map(|c| c.field_1.as_ref().unwrap().coherence_time_fs)
            .collect();
        assert!(tau_ds.contains(&60.0) && tau_ds.contains(&120.0));
        assert!(preset("partial_tau120_tc400").is_ok());
        assert!(list_presets().contains("field_stats_tau60"));
    }

    #[test]
    fn missing_section_names_the_field() {
        let text = r#"
name = "x"
mode = "partially_coherent"
[grid]
duration_fs = 100.0
[system]
excited_period_fs = 400.0
[field_1]
rabi_thz = 10.0
coherence_time_fs = 60.0
"#;
        let err = ScenarioConfig::from_toml_str(text).unwrap().validate().unwrap_err();
        assert!(
            matches!(&err, Error::Config { field, .. } if field == "field_2"),
            "{err}"
        );
    }

    #[test]
    fn bad_values_name_the_field() {
        let mut c = partial_config(60.0, 400.0, PRESET_DRIVE);
        c.field_2.as_mut().unwrap().coherence_time_fs = -1.0;
        let err = c.validate().unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "field_2.coherence_time_fs"));
        let mut c = partial_config(60.0, 400.0, PRESET_DRIVE);
        c.system = Some(SystemConfig {
            excited_period_fs: Some(400.0),
            splitting_thz: Some(1.0),
        });
        assert!(matches!(c.validate().unwrap_err(), Error::Config { field, .. } if field == "system"));
        let mut c = partial_config(60.0, 400.0, PRESET_DRIVE);
        c.grid.as_mut().unwrap().dt_fs = Some(10.0);
        assert!(matches!(c.validate().unwrap_err(), Error::Config { field, .. } if field == "grid.dt_fs"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "name = \"x\"\nmode = \"white_noise\"\nbogus = 1\n";
        assert!(matches!(ScenarioConfig::from_toml_str(text), Err(Error::Config { .. })));
    }

    #[test]
    fn toml_round_trip() {
        for p in presets() {
            for c in p.configs {
                let back = ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap();
                assert_eq!(back, c);
            }
        }
    }

    #[test]
    fn resolved_config_is_a_fixed_point() {
        let c = partial_config(120.0, 400.0, PRESET_DRIVE);
        let r = c.resolved().unwrap();
        assert_eq!(r.grid.as_ref().unwrap().dt_fs, Some(1.2));
        assert_eq!(r.resolve().unwrap(), c.resolve().unwrap());
        assert_eq!(r.resolved().unwrap(), r);
    }

    #[test]
    fn observables_header_is_pinned() {
        let mut buf = Vec::new();
        let mut s = ObservableSeries::default();
        s.push(DensityMatrix::ground().observables(0.0));
        write_observables_csv(&mut buf, &s, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "t_fs,rho_gg,rho_11,rho_22,re_rho12,im_rho12,abs_rho12,coherence_fraction,purity"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "0.0,1.0,0.0,0.0,0.0,0.0,0.0,0.0,1.0");
    }
}
