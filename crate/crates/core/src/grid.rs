use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid `start + k * dt` for `k = 0..len`, in femtoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    start: f64,
    dt: f64,
    len: usize,
}

impl TimeGrid {
    pub fn new(start: f64, dt: f64, len: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", format!("must be positive and finite, got {dt}")));
        }
        if !start.is_finite() {
            return Err(Error::param("start", "must be finite"));
        }
        if len < 2 {
            return Err(Error::GridTooShort { len, min: 2 });
        }
        Ok(TimeGrid { start, dt, len })
    }

    /// Grid on `[0, duration]` with step `dt`; the duration is rounded to a
    /// whole number of steps.
    pub fn with_duration(duration: f64, dt: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::param("duration", format!("must be positive, got {duration}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", format!("must be positive and finite, got {dt}")));
        }
        let steps = (duration / dt).round().max(1.0) as usize;
        TimeGrid::new(0.0, dt, steps + 1)
    }

    /// Validates an explicit list of sample times.
    pub fn from_times(times: &[f64]) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::GridTooShort {
                len: times.len(),
                min: 2,
            });
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::NonUniformGrid { index: 1 });
        }
        for (k, &t) in times.iter().enumerate() {
            let expected = times[0] + k as f64 * dt;
            let tol = 1e-9 * dt + 4.0 * f64::EPSILON * t.abs();
            if (t - expected).abs() > tol {
                return Err(Error::NonUniformGrid { index: k });
            }
        }
        TimeGrid::new(times[0], dt, times.len())
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn steps(&self) -> usize {
        self.len - 1
    }

    pub fn end(&self) -> f64 {
        self.time(self.len - 1)
    }

    pub fn span(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |k| self.time(k))
    }

    /// Nearest whole number of steps for a lag, rejecting lags beyond the span.
    pub fn lag_steps(&self, lag: f64) -> Result<usize> {
        if !(lag >= 0.0) {
            return Err(Error::param("lag", format!("must be non-negative, got {lag}")));
        }
        let steps = (lag / self.dt).round() as usize;
        if steps > self.steps() {
            return Err(Error::LagOutOfRange { lag, span: self.span() });
        }
        Ok(steps)
    }
}
