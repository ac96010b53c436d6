//! Finite Fourier series used for every time-periodic coefficient.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// `value(t) = mean + Σ_k [a_k cos(2πkt/T) + b_k sin(2πkt/T)]`, `k = 1, 2, ...`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSignal {
    pub period: f64,
    pub mean: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl PeriodicSignal {
    pub fn constant(period: f64, mean: f64) -> Self {
        Self {
            period,
            mean,
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    pub fn new(period: f64, mean: f64, cos: Vec<f64>, sin: Vec<f64>) -> Self {
        Self {
            period,
            mean,
            cos,
            sin,
        }
    }

    /// `mean + amplitude * sin(2πt/T)`.
    pub fn sine(period: f64, mean: f64, amplitude: f64) -> Self {
        Self::new(period, mean, Vec::new(), vec![amplitude])
    }

    /// `mean + amplitude * cos(2πt/T)`.
    pub fn cosine(period: f64, mean: f64, amplitude: f64) -> Self {
        Self::new(period, mean, vec![amplitude], Vec::new())
    }

    pub fn is_constant(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|c| *c == 0.0)
    }

    /// Highest harmonic index carrying a coefficient.
    pub fn harmonics(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    /// Upper bound on `|value(t) - mean|`.
    pub fn amplitude_bound(&self) -> f64 {
        self.cos.iter().chain(&self.sin).map(|c| c.abs()).sum()
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        if self.cos.is_empty() && self.sin.is_empty() {
            return self.mean;
        }
        // Reduce the phase first so that value(t + T) == value(t) up to rounding
        // of the reduction itself.
        let phase = TAU * (t / self.period).rem_euclid(1.0);
        let mut acc = self.mean;
        for (k, a) in self.cos.iter().enumerate() {
            acc += a * ((k + 1) as f64 * phase).cos();
        }
        for (k, b) in self.sin.iter().enumerate() {
            acc += b * ((k + 1) as f64 * phase).sin();
        }
        acc
    }

    /// Samples on the uniform grid `t_i = i T / n`, `i = 0..n`.
    pub fn grid_samples(&self, n: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..n).map(move |i| {
            let t = self.period * i as f64 / n as f64;
            (t, self.value(t))
        })
    }

    /// Grid minimum and maximum over `n` samples of one period.
    pub fn grid_extrema(&self, n: usize) -> (f64, f64) {
        self.grid_samples(n)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| {
                (lo.min(v), hi.max(v))
            })
    }
}
