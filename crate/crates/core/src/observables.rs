use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Excited populations below this are treated as empty when forming the
/// coherence fraction.
pub const EMPTY_EXCITED_POPULATION: f64 = 1e-12;

/// `|rho_12| / (rho_11 + rho_22)`, defined as 0 for an empty excited manifold.
pub fn coherence_fraction(rho_11: f64, rho_22: f64, rho_12: Complex64) -> f64 {
    let excited = rho_11 + rho_22;
    if excited < EMPTY_EXCITED_POPULATION {
        0.0
    } else {
        rho_12.norm() / excited
    }
}

/// Time series of the reduced observables of the V system.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub t: Vec<f64>,
    pub rho_gg: Vec<f64>,
    pub rho_11: Vec<f64>,
    pub rho_22: Vec<f64>,
    pub rho_12: Vec<Complex64>,
    pub coherence_fraction: Vec<f64>,
    pub purity: Vec<f64>,
}

/// One row of an [`ObservableSeries`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableRow {
    pub t: f64,
    pub rho_gg: f64,
    pub rho_11: f64,
    pub rho_22: f64,
    pub rho_12: Complex64,
    pub coherence_fraction: f64,
    pub purity: f64,
}

impl ObservableSeries {
    pub fn with_capacity(n: usize) -> Self {
        ObservableSeries {
            t: Vec::with_capacity(n),
            rho_gg: Vec::with_capacity(n),
            rho_11: Vec::with_capacity(n),
            rho_22: Vec::with_capacity(n),
            rho_12: Vec::with_capacity(n),
            coherence_fraction: Vec::with_capacity(n),
            purity: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, row: ObservableRow) {
        self.t.push(row.t);
        self.rho_gg.push(row.rho_gg);
        self.rho_11.push(row.rho_11);
        self.rho_22.push(row.rho_22);
        self.rho_12.push(row.rho_12);
        self.coherence_fraction.push(row.coherence_fraction);
        self.purity.push(row.purity);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn row(&self, k: usize) -> ObservableRow {
        ObservableRow {
            t: self.t[k],
            rho_gg: self.rho_gg[k],
            rho_11: self.rho_11[k],
            rho_22: self.rho_22[k],
            rho_12: self.rho_12[k],
            coherence_fraction: self.coherence_fraction[k],
            purity: self.purity[k],
        }
    }

    pub fn last(&self) -> Option<ObservableRow> {
        (!self.is_empty()).then(|| self.row(self.len() - 1))
    }

    pub fn abs_rho_12(&self) -> Vec<f64> {
        self.rho_12.iter().map(|z| z.norm()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_excited_manifold_has_zero_fraction() {
        assert_eq!(coherence_fraction(0.0, 0.0, Complex64::new(0.0, 0.0)), 0.0);
        assert_eq!(coherence_fraction(1e-14, 1e-14, Complex64::new(1e-14, 0.0)), 0.0);
    }

    #[test]
    fn maximal_superposition_has_half() {
        let c = coherence_fraction(0.5, 0.5, Complex64::new(0.0, 0.5));
        assert!((c - 0.5).abs() < 1e-15);
    }
}
