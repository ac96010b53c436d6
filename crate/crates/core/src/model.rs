//! The delayed quasispecies model family and its structural hypotheses.
//!
//! Species `i = 0..=n` evolve by
//!
//! ```text
//! dx_i/dt = Σ_j f_j(t) Q_ji(t) ψ(x_j(t - τ_j(t))) - x_i(t) Φ(t)
//! Φ(t)    = Σ_j f_j(t) ψ(x_j(t - τ_j(t)))
//! ```
//!
//! where `Q_ji` is the probability that replication of type `j` produces
//! type `i`. The mutation grid is therefore indexed `mutation[j][i]` and
//! every row must sum to one.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::growth::GrowthFunction;
use crate::signal::PeriodicSignal;

/// Samples used for positivity and range checks of coefficient signals.
pub const HYPOTHESIS_SAMPLES: usize = 4096;
/// Samples used for the row-stochasticity check.
pub const STOCHASTIC_SAMPLES: usize = 256;
/// Allowed deviation of a mutation row sum from one.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Concentrations `x_0..x_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `|Σ x_i - 1|`.
    pub fn simplex_deviation(&self) -> f64 {
        (self.sum() - 1.0).abs()
    }

    /// Rescales onto the simplex by dividing through by the sum.
    pub fn normalized(&self) -> Self {
        let s = self.sum();
        Self(self.0.iter().map(|x| x / s).collect())
    }

    pub fn sup_distance(&self, other: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Complete description of an `(n+1)`-species delayed quasispecies system.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub species_count: usize,
    pub period: f64,
    pub growth: GrowthFunction,
    /// Replication rates `f_j`.
    pub rates: Vec<PeriodicSignal>,
    /// Delays `τ_j`.
    pub delays: Vec<PeriodicSignal>,
    /// `mutation[j][i] = Q_ji`.
    pub mutation: Vec<Vec<PeriodicSignal>>,
}

/// One violated hypothesis, rendered as a human-readable message.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, message: String) {
        self.violations.push(Violation { message });
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.message.clone()).collect()
    }

    pub fn into_result(self) -> Result<(), ModelError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(ModelError::Hypotheses(self.messages()))
        }
    }
}

impl ModelSpec {
    /// Two-species (single-peak landscape) model with `q = Q_00` and
    /// `p = Q_10`; the remaining entries are `1 - q` and `1 - p`.
    pub fn two_species(
        period: f64,
        growth: GrowthFunction,
        rates: [PeriodicSignal; 2],
        delays: [PeriodicSignal; 2],
        q: PeriodicSignal,
        p: PeriodicSignal,
    ) -> Self {
        let complement = |s: &PeriodicSignal| PeriodicSignal {
            period: s.period,
            mean: 1.0 - s.mean,
            cos: s.cos.iter().map(|c| -c).collect(),
            sin: s.sin.iter().map(|c| -c).collect(),
        };
        let row0 = vec![q.clone(), complement(&q)];
        let row1 = vec![p.clone(), complement(&p)];
        Self {
            species_count: 2,
            period,
            growth,
            rates: rates.to_vec(),
            delays: delays.to_vec(),
            mutation: vec![row0, row1],
        }
    }

    /// Number of components `n + 1`.
    pub fn dim(&self) -> usize {
        self.species_count
    }

    /// `q = Q_00`. Only meaningful for two species.
    pub fn q(&self) -> &PeriodicSignal {
        &self.mutation[0][0]
    }

    /// `p = Q_10`. Only meaningful for two species.
    pub fn p(&self) -> &PeriodicSignal {
        &self.mutation[1][0]
    }

    pub fn require_two_species(&self) -> Result<(), ModelError> {
        if self.species_count != 2 {
            return Err(ModelError::SpeciesCount {
                found: self.species_count,
                required: 2,
            });
        }
        Ok(())
    }

    /// Copy of the model with every delay replaced by the constant `tau`.
    pub fn with_constant_delays(&self, tau: f64) -> Self {
        let mut out = self.clone();
        for d in &mut out.delays {
            *d = PeriodicSignal::constant(self.period, tau);
        }
        out
    }

    fn signals(&self) -> impl Iterator<Item = &PeriodicSignal> {
        self.rates
            .iter()
            .chain(&self.delays)
            .chain(self.mutation.iter().flatten())
    }

    /// Checks every structural hypothesis; an empty report means valid.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.species_count;
        if n < 2 {
            report.push(format!("species_count {n} must be at least 2"));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            report.push(format!("period {} must be positive", self.period));
            return report;
        }
        if self.rates.len() != n {
            report.push(format!("rates has {} entries, expected {n}", self.rates.len()));
        }
        if self.delays.len() != n {
            report.push(format!("delays has {} entries, expected {n}", self.delays.len()));
        }
        if self.mutation.len() != n || self.mutation.iter().any(|row| row.len() != n) {
            report.push(format!("mutation must be a {n}x{n} grid"));
        }
        if !report.is_valid() {
            return report;
        }

        for s in self.signals() {
            if (s.period - self.period).abs() > 1e-12 * self.period {
                report.push(format!(
                    "signal period {} differs from model period {}",
                    s.period, self.period
                ));
                break;
            }
        }

        for (j, f) in self.rates.iter().enumerate() {
            let (lo, _) = f.grid_extrema(HYPOTHESIS_SAMPLES);
            if !(lo > 0.0) {
                report.push(format!("rate f_{j} not strictly positive (minimum {lo})"));
            }
        }
        for (j, tau) in self.delays.iter().enumerate() {
            let (lo, _) = tau.grid_extrema(HYPOTHESIS_SAMPLES);
            if !(lo >= 0.0) {
                report.push(format!("delay tau_{j} negative (minimum {lo})"));
            }
        }
        for (j, row) in self.mutation.iter().enumerate() {
            for (i, qji) in row.iter().enumerate() {
                let (lo, hi) = qji.grid_extrema(HYPOTHESIS_SAMPLES);
                if !(lo >= 0.0 && hi <= 1.0) {
                    report.push(format!("Q_{j}{i} outside [0,1] (range [{lo}, {hi}])"));
                }
            }
            let worst = (0..STOCHASTIC_SAMPLES)
                .map(|k| {
                    let t = self.period * k as f64 / STOCHASTIC_SAMPLES as f64;
                    row.iter().map(|s| s.value(t)).sum::<f64>()
                })
                .max_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs()))
                .unwrap_or(1.0);
            if !((worst - 1.0).abs() <= ROW_SUM_TOL) {
                let shown = (worst * 1e12).round() / 1e12;
                report.push(format!("mutation row {j} sum {shown} != 1"));
            }
        }

        for v in self.growth.violations() {
            report.push(v);
        }
        report
    }

    /// `γ_n`: largest delay over all species on the hypothesis grid.
    pub fn max_delay(&self) -> f64 {
        self.delays
            .iter()
            .map(|d| d.grid_extrema(HYPOTHESIS_SAMPLES).1)
            .fold(0.0, f64::max)
    }
}
