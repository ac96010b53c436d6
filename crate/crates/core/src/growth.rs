//! Growth nonlinearity `ψ` applied to delayed concentrations.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Tolerated excursion outside `[0, 1]` for arguments of `ψ`.
pub const CLIP_EPS: f64 = 1e-9;

/// Number of interior sample points used when validating `ψ`.
const VALIDATION_SAMPLES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrowthKind {
    /// `ψ(x) = x`, exponential growth.
    Linear,
    /// `ψ(x) = x (1 - x)`.
    Logistic,
    /// `ψ(x) = Σ c_k x^k`, coefficients in increasing-power order.
    CustomPolynomial,
}

/// Replication nonlinearity with an analytic derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFunction {
    pub kind: GrowthKind,
    #[serde(default)]
    pub coefficients: Vec<f64>,
}

impl GrowthFunction {
    pub fn linear() -> Self {
        Self {
            kind: GrowthKind::Linear,
            coefficients: Vec::new(),
        }
    }

    pub fn logistic() -> Self {
        Self {
            kind: GrowthKind::Logistic,
            coefficients: Vec::new(),
        }
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Self {
        Self {
            kind: GrowthKind::CustomPolynomial,
            coefficients,
        }
    }

    /// `ψ(x)` with a domain check; arguments within [`CLIP_EPS`] of the unit
    /// interval are clamped onto it.
    pub fn psi(&self, x: f64) -> Result<f64, ModelError> {
        Ok(self.psi_unchecked(check_domain(x)?))
    }

    /// `ψ'(x)` with the same domain handling as [`GrowthFunction::psi`].
    pub fn psi_prime(&self, x: f64) -> Result<f64, ModelError> {
        Ok(self.psi_prime_unchecked(check_domain(x)?))
    }

    /// Evaluates `ψ` without a domain check. Used on hot paths where the
    /// caller already guarantees the argument range.
    #[inline]
    pub fn psi_unchecked(&self, x: f64) -> f64 {
        match self.kind {
            GrowthKind::Linear => x,
            GrowthKind::Logistic => x * (1.0 - x),
            GrowthKind::CustomPolynomial => horner(&self.coefficients, x),
        }
    }

    #[inline]
    pub fn psi_prime_unchecked(&self, x: f64) -> f64 {
        match self.kind {
            GrowthKind::Linear => 1.0,
            GrowthKind::Logistic => 1.0 - 2.0 * x,
            GrowthKind::CustomPolynomial => {
                // d/dx Σ c_k x^k = Σ k c_k x^(k-1), evaluated by Horner from the top.
                let mut acc = 0.0;
                for (k, c) in self.coefficients.iter().enumerate().skip(1).rev() {
                    acc = acc * x + k as f64 * c;
                }
                acc
            }
        }
    }

    /// Lists every violated structural hypothesis of `ψ`.
    ///
    /// Requires `ψ(0) = 0`, `ψ > 0` on the open unit interval and values in
    /// `[0, 1]`, all checked on a uniform sample. `ψ(1) = 0` is not required.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let at_zero = self.psi_unchecked(0.0);
        if at_zero != 0.0 {
            out.push(format!("growth function psi(0) = {at_zero} is not 0"));
        }
        let mut nonpositive = None;
        let mut out_of_range = None;
        for i in 0..=VALIDATION_SAMPLES + 1 {
            let x = i as f64 / (VALIDATION_SAMPLES + 1) as f64;
            let v = self.psi_unchecked(x);
            let interior = i > 0 && i <= VALIDATION_SAMPLES;
            if interior && !(v > 0.0) && nonpositive.is_none() {
                nonpositive = Some((x, v));
            }
            if !(0.0..=1.0).contains(&v) && out_of_range.is_none() {
                out_of_range = Some((x, v));
            }
        }
        if let Some((x, v)) = nonpositive {
            out.push(format!(
                "growth function not strictly positive on ]0,1[ (psi({x}) = {v})"
            ));
        }
        if let Some((x, v)) = out_of_range {
            out.push(format!("growth function value psi({x}) = {v} outside [0,1]"));
        }
        out
    }
}

fn check_domain(x: f64) -> Result<f64, ModelError> {
    if !(-CLIP_EPS..=1.0 + CLIP_EPS).contains(&x) {
        return Err(ModelError::Domain { x });
    }
    Ok(x.clamp(0.0, 1.0))
}

fn horner(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
}
