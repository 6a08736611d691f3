//! Compensated accumulation and resampling error estimates.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = CompensatedSum::default();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(xs.iter().copied()) / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Delete-one-group jackknife standard error from the leave-one-out
/// estimates `theta_minus`.
pub fn jackknife_stderr(theta_minus: &[f64]) -> f64 {
    let g = theta_minus.len();
    if g < 2 {
        return f64::NAN;
    }
    let mean = compensated_sum(theta_minus.iter().copied()) / g as f64;
    let ss = compensated_sum(theta_minus.iter().map(|x| (x - mean) * (x - mean)));
    ((g - 1) as f64 / g as f64 * ss).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensation_recovers_small_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn jackknife_of_mean_matches_classical_stderr() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let n = xs.len() as f64;
        let total: f64 = xs.iter().sum();
        let loo: Vec<f64> = xs.iter().map(|x| (total - x) / (n - 1.0)).collect();
        let (_, se) = mean_and_stderr(&xs);
        assert!((jackknife_stderr(&loo) - se).abs() < 1e-12);
    }

    #[test]
    fn degenerate_sample_has_zero_error() {
        assert_eq!(mean_and_stderr(&[3.0; 5]).1, 0.0);
        assert_eq!(jackknife_stderr(&[0.25; 4]), 0.0);
    }
}
