//! Stored solution nodes with cubic Hermite dense output, and the initial
//! functions that supply values before the integration start.

use std::collections::VecDeque;

use crate::error::IntegrateError;
use crate::model::StateVector;

/// Hermite basis evaluation on one interval, `s = (t - t_a) / h`.
#[inline]
pub(crate) fn hermite(s: f64, h: f64, ya: f64, da: f64, yb: f64, db: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * ya + h10 * h * da + h01 * yb + h11 * h * db
}

/// Uniformly spaced solution nodes `t_k = origin + k h` with states and
/// derivatives, kept over a rolling window.
#[derive(Debug, Clone)]
pub struct HistorySegment {
    origin: f64,
    step: f64,
    dim: usize,
    first_index: u64,
    states: VecDeque<Vec<f64>>,
    derivatives: VecDeque<Vec<f64>>,
}

impl HistorySegment {
    pub fn new(origin: f64, step: f64, dim: usize) -> Self {
        Self {
            origin,
            step,
            dim,
            first_index: 0,
            states: VecDeque::new(),
            derivatives: VecDeque::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    #[inline]
    fn time_of(&self, index: u64) -> f64 {
        self.origin + index as f64 * self.step
    }

    pub fn window_start(&self) -> f64 {
        self.time_of(self.first_index)
    }

    pub fn window_end(&self) -> f64 {
        self.time_of(self.first_index + self.states.len().saturating_sub(1) as u64)
    }

    pub fn node_times(&self) -> Vec<f64> {
        (0..self.states.len() as u64)
            .map(|k| self.time_of(self.first_index + k))
            .collect()
    }

    pub fn node_states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.iter().map(|v| v.as_slice())
    }

    pub fn node_derivatives(&self) -> impl Iterator<Item = &[f64]> {
        self.derivatives.iter().map(|v| v.as_slice())
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.back().expect("history segment is empty")
    }

    pub fn last_derivative(&self) -> &[f64] {
        self.derivatives.back().expect("history segment is empty")
    }

    /// State and derivative at the second-to-last node, if there is one.
    pub(crate) fn previous_node(&self) -> Option<(&[f64], &[f64])> {
        let n = self.states.len();
        (n >= 2).then(|| (self.states[n - 2].as_slice(), self.derivatives[n - 2].as_slice()))
    }

    /// Appends the next node. Its time is implied by the node count.
    pub fn push(&mut self, state: Vec<f64>, derivative: Vec<f64>) {
        debug_assert_eq!(state.len(), self.dim);
        self.states.push_back(state);
        self.derivatives.push_back(derivative);
    }

    /// Replaces the derivative stored at the newest node.
    pub(crate) fn set_last_derivative(&mut self, derivative: &[f64]) {
        if let Some(d) = self.derivatives.back_mut() {
            d.copy_from_slice(derivative);
        }
    }

    /// Drops nodes while the window would still start at or before `keep_from`.
    pub fn prune_before(&mut self, keep_from: f64) {
        while self.states.len() > 2 && self.time_of(self.first_index + 1) <= keep_from {
            self.states.pop_front();
            self.derivatives.pop_front();
            self.first_index += 1;
        }
    }

    fn bracket(&self, t: f64) -> Result<usize, IntegrateError> {
        let start = self.window_start();
        let end = self.window_end();
        if !(t >= start && t <= end) {
            return Err(IntegrateError::OutOfWindow { t, start, end });
        }
        let n = self.states.len();
        if n == 1 {
            return Ok(0);
        }
        let mut k = (((t - start) / self.step).floor() as usize).min(n - 2);
        // Guard against rounding in the division.
        while k > 0 && self.time_of(self.first_index + k as u64) > t {
            k -= 1;
        }
        while k + 2 < n && self.time_of(self.first_index + k as u64 + 1) <= t {
            k += 1;
        }
        Ok(k)
    }

    /// Component `i` at time `t` inside the window.
    pub fn component(&self, t: f64, i: usize) -> Result<f64, IntegrateError> {
        let k = self.bracket(t)?;
        let ta = self.time_of(self.first_index + k as u64);
        if t == ta || self.states.len() == 1 {
            return Ok(self.states[k][i]);
        }
        let tb = self.time_of(self.first_index + k as u64 + 1);
        if t == tb {
            return Ok(self.states[k + 1][i]);
        }
        let s = (t - ta) / self.step;
        Ok(hermite(
            s,
            self.step,
            self.states[k][i],
            self.derivatives[k][i],
            self.states[k + 1][i],
            self.derivatives[k + 1][i],
        ))
    }

    /// Full state at `t`; exact (bitwise) at stored nodes.
    pub fn interpolate(&self, t: f64) -> Result<StateVector, IntegrateError> {
        (0..self.dim)
            .map(|i| self.component(t, i))
            .collect::<Result<Vec<_>, _>>()
            .map(StateVector)
    }
}

/// Initial function `φ` prescribing the solution on `[t0 - γ, t0]`.
///
/// The value at `t0` is the initial state; values strictly before `t0` feed
/// the delayed arguments during the first steps.
pub trait InitialHistory: Sync {
    fn dim(&self) -> usize;
    fn component_at(&self, t: f64, i: usize) -> f64;

    fn state_at(&self, t: f64) -> StateVector {
        StateVector((0..self.dim()).map(|i| self.component_at(t, i)).collect())
    }
}

/// `φ(t) = x` for every `t`.
#[derive(Debug, Clone)]
pub struct ConstantHistory(pub StateVector);

impl ConstantHistory {
    pub fn new(values: Vec<f64>) -> Self {
        Self(StateVector(values))
    }
}

impl InitialHistory for ConstantHistory {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn component_at(&self, _t: f64, i: usize) -> f64 {
        self.0[i]
    }
}

/// Constant `before` for `t < start`, and `at_start` from `start` on.
///
/// Models a prehistory that need not lie on the simplex while the initial
/// state does.
#[derive(Debug, Clone)]
pub struct StepHistory {
    pub start: f64,
    pub before: StateVector,
    pub at_start: StateVector,
}

impl InitialHistory for StepHistory {
    fn dim(&self) -> usize {
        self.at_start.len()
    }

    fn component_at(&self, t: f64, i: usize) -> f64 {
        if t < self.start {
            self.before[i]
        } else {
            self.at_start[i]
        }
    }
}

/// History given by an arbitrary closure returning the full state.
pub struct FnHistory<F> {
    dim: usize,
    f: F,
}

impl<F> FnHistory<F>
where
    F: Fn(f64) -> Vec<f64> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> InitialHistory for FnHistory<F>
where
    F: Fn(f64) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn component_at(&self, t: f64, i: usize) -> f64 {
        (self.f)(t)[i]
    }

    fn state_at(&self, t: f64) -> StateVector {
        StateVector((self.f)(t))
    }
}

/// Periodic extension of one period of samples `x(origin + m T / M)`,
/// `m = 0..M`, with their time derivatives; cubic Hermite in between.
#[derive(Debug, Clone)]
pub struct PeriodicSampleHistory {
    pub origin: f64,
    pub period: f64,
    pub states: Vec<StateVector>,
    pub derivatives: Vec<StateVector>,
}

impl InitialHistory for PeriodicSampleHistory {
    fn dim(&self) -> usize {
        self.states[0].len()
    }

    fn component_at(&self, t: f64, i: usize) -> f64 {
        let m = self.states.len();
        let h = self.period / m as f64;
        let phase = ((t - self.origin) / self.period).rem_euclid(1.0) * m as f64;
        let k = (phase.floor() as usize).min(m - 1);
        let s = phase - k as f64;
        let next = (k + 1) % m;
        if s == 0.0 {
            return self.states[k][i];
        }
        hermite(
            s,
            h,
            self.states[k][i],
            self.derivatives[k][i],
            self.states[next][i],
            self.derivatives[next][i],
        )
    }
}
