//! Fixed-step integration of delay systems by the method of steps.
//!
//! Each step is a classical RK4 step. Delayed arguments are read from a
//! rolling window of past nodes through cubic Hermite interpolation. When a
//! delayed argument lands inside the step being computed (delays shorter than
//! the step), the step is taken twice: first against an extrapolation of the
//! last interval, then against the Hermite interpolant built from that
//! prediction. A delayed argument that coincides with the stage time (zero
//! delay) reads the stage state directly, so `τ ≡ 0` reduces to plain RK4.

mod history;

use std::cell::Cell;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

pub use history::{
    ConstantHistory, FnHistory, HistorySegment, InitialHistory, PeriodicSampleHistory,
    StepHistory,
};

use crate::error::{IntegrateError, ModelError};
use crate::model::{ModelSpec, StateVector};

/// States leaving `[lo - BLOWUP_BAND, hi + BLOWUP_BAND]` abort the run.
pub const BLOWUP_BAND: f64 = 1e-6;
/// Default excursion outside the state bounds that is projected back.
pub const DEFAULT_CLIP_TOLERANCE: f64 = 1e-9;

/// Read access to the solution at past times.
pub trait PastLookup {
    fn component_at(&self, t: f64, i: usize) -> Result<f64, IntegrateError>;
}

impl PastLookup for HistorySegment {
    fn component_at(&self, t: f64, i: usize) -> Result<f64, IntegrateError> {
        if t < self.window_start() {
            return Err(IntegrateError::HistoryUnderflow {
                t,
                window_start: self.window_start(),
            });
        }
        self.component(t, i)
    }
}

/// A system `x'(t) = F(t, x(t), x(t - τ_1(t)), ...)`.
pub trait DelaySystem: Sync {
    fn dim(&self) -> usize;

    /// Upper bound on every delay; sets the history window length.
    fn max_delay(&self) -> f64;

    /// Forcing period, if any. The step is adjusted to divide it.
    fn period(&self) -> Option<f64> {
        None
    }

    /// Box the state must stay in, if any.
    fn state_bounds(&self) -> Option<(f64, f64)> {
        None
    }

    fn derivative(
        &self,
        t: f64,
        state: &[f64],
        past: &dyn PastLookup,
        out: &mut [f64],
    ) -> Result<(), IntegrateError>;
}

impl DelaySystem for ModelSpec {
    fn dim(&self) -> usize {
        self.species_count
    }

    fn max_delay(&self) -> f64 {
        ModelSpec::max_delay(self)
    }

    fn period(&self) -> Option<f64> {
        Some(self.period)
    }

    fn state_bounds(&self) -> Option<(f64, f64)> {
        Some((0.0, 1.0))
    }

    fn derivative(
        &self,
        t: f64,
        state: &[f64],
        past: &dyn PastLookup,
        out: &mut [f64],
    ) -> Result<(), IntegrateError> {
        out.fill(0.0);
        let mut outflow = 0.0;
        for (j, (rate, delay)) in self.rates.iter().zip(&self.delays).enumerate() {
            let lagged_t = t - delay.value(t);
            let lagged = past.component_at(lagged_t, j)?;
            if !(-BLOWUP_BAND..=1.0 + BLOWUP_BAND).contains(&lagged) {
                return Err(IntegrateError::BlowUp {
                    t: lagged_t,
                    component: j,
                    value: lagged,
                });
            }
            let production = rate.value(t) * self.growth.psi_unchecked(lagged.clamp(0.0, 1.0));
            outflow += production;
            for (o, q) in out.iter_mut().zip(&self.mutation[j]) {
                *o += q.value(t) * production;
            }
        }
        for (o, x) in out.iter_mut().zip(state) {
            *o -= x * outflow;
        }
        Ok(())
    }
}

/// Right-hand side of the quasispecies system at `t`, reading delayed
/// values from `history`.
pub fn rhs(
    spec: &ModelSpec,
    t: f64,
    state: &[f64],
    history: &dyn PastLookup,
) -> Result<StateVector, IntegrateError> {
    let mut out = vec![0.0; spec.dim()];
    spec.derivative(t, state, history, &mut out)?;
    Ok(StateVector(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub step: f64,
    pub t_end: f64,
    pub clip_tolerance: f64,
    pub record_stride: usize,
}

impl IntegrationConfig {
    pub fn new(step: f64, t_end: f64) -> Self {
        Self {
            step,
            t_end,
            clip_tolerance: DEFAULT_CLIP_TOLERANCE,
            record_stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }
}

/// Largest step `<= step` that divides `period` into whole steps.
pub fn aligned_step(step: f64, period: Option<f64>) -> Result<f64, IntegrateError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(IntegrateError::StepSize(step));
    }
    Ok(match period {
        Some(t) => {
            let n = (t / step - 1e-9).ceil().max(1.0);
            t / n
        }
        None => step,
    })
}

/// Sampled solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub step: f64,
    pub sample_times: Vec<f64>,
    pub sample_states: Vec<StateVector>,
    /// `|Σ_i x_i - 1|` per sample.
    pub simplex_deviation: Vec<f64>,
    /// Components projected back onto the state bounds.
    pub clipped: usize,
    /// Largest excursion beyond the bounds left in place.
    pub max_excursion: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.sample_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_times.is_empty()
    }

    pub fn max_simplex_deviation(&self) -> f64 {
        self.simplex_deviation.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with header `t,x0,...,xn,sum_deviation`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let dim = self.sample_states.first().map_or(0, |s| s.len());
        write_csv_header(&mut w, dim)?;
        for ((t, x), dev) in self
            .sample_times
            .iter()
            .zip(&self.sample_states)
            .zip(&self.simplex_deviation)
        {
            write_csv_row(&mut w, *t, x, *dev)?;
        }
        Ok(())
    }
}

pub(crate) fn write_csv_header<W: Write>(w: &mut W, dim: usize) -> io::Result<()> {
    let mut header = String::from("t");
    for i in 0..dim {
        header.push_str(&format!(",x{i}"));
    }
    header.push_str(",sum_deviation");
    writeln!(w, "{header}")
}

pub(crate) fn write_csv_row<W: Write>(w: &mut W, t: f64, x: &[f64], dev: f64) -> io::Result<()> {
    let mut line = format!("{t:.16e}");
    for v in x {
        line.push_str(&format!(",{v:.16e}"));
    }
    line.push_str(&format!(",{dev:.16e}"));
    writeln!(w, "{line}")
}

#[derive(Clone, Copy)]
enum Extension<'a> {
    /// Continue the last stored interval past its end.
    Extrapolate,
    /// Hermite interpolant over the current step with a predicted end node.
    Predicted { state: &'a [f64], derivative: &'a [f64] },
}

struct StepLookup<'a> {
    prehistory: &'a dyn InitialHistory,
    t0: f64,
    segment: &'a HistorySegment,
    extension: Extension<'a>,
    stage_time: f64,
    stage_state: &'a [f64],
    extended: Cell<bool>,
}

impl PastLookup for StepLookup<'_> {
    fn component_at(&self, t: f64, i: usize) -> Result<f64, IntegrateError> {
        if (t - self.stage_time).abs() <= 1e-12 * self.stage_time.abs().max(1.0) {
            return Ok(self.stage_state[i]);
        }
        let start = self.segment.window_start();
        if t < start {
            if t < self.t0 && start == self.t0 {
                return Ok(self.prehistory.component_at(t, i));
            }
            return Err(IntegrateError::HistoryUnderflow {
                t,
                window_start: start,
            });
        }
        let end = self.segment.window_end();
        if t <= end {
            return self.segment.component(t, i);
        }
        self.extended.set(true);
        let h = self.segment.step();
        let yn = self.segment.last_state()[i];
        let dn = self.segment.last_derivative()[i];
        Ok(match self.extension {
            Extension::Extrapolate => match self.segment.previous_node() {
                Some((ya, da)) => history::hermite((t - end) / h + 1.0, h, ya[i], da[i], yn, dn),
                None => yn + (t - end) * dn,
            },
            Extension::Predicted { state, derivative } => {
                history::hermite((t - end) / h, h, yn, dn, state[i], derivative[i])
            }
        })
    }
}

/// Stateful fixed-step integrator; advance with [`Integrator::step`].
pub struct Integrator<'a> {
    system: &'a dyn DelaySystem,
    prehistory: &'a dyn InitialHistory,
    t0: f64,
    h: f64,
    steps: u64,
    retain: f64,
    clip_tolerance: f64,
    bounds: Option<(f64, f64)>,
    segment: HistorySegment,
    clipped: usize,
    max_excursion: f64,
    stage: Vec<f64>,
    k: [Vec<f64>; 4],
}

impl<'a> Integrator<'a> {
    /// Starts at `t0` from `prehistory(t0)`. `step` is shrunk to divide the
    /// system period when there is one.
    pub fn new(
        system: &'a dyn DelaySystem,
        prehistory: &'a dyn InitialHistory,
        t0: f64,
        step: f64,
        clip_tolerance: f64,
    ) -> Result<Self, IntegrateError> {
        let dim = system.dim();
        if prehistory.dim() != dim {
            return Err(IntegrateError::Dimension {
                found: prehistory.dim(),
                expected: dim,
            });
        }
        let h = aligned_step(step, system.period())?;
        let mut this = Self {
            system,
            prehistory,
            t0,
            h,
            steps: 0,
            retain: system.max_delay() + 2.0 * h,
            clip_tolerance,
            bounds: system.state_bounds(),
            segment: HistorySegment::new(t0, h, dim),
            clipped: 0,
            max_excursion: 0.0,
            stage: vec![0.0; dim],
            k: std::array::from_fn(|_| vec![0.0; dim]),
        };
        let mut y0 = prehistory.state_at(t0).0;
        this.enforce_bounds(t0, &mut y0)?;
        this.segment.push(y0.clone(), vec![0.0; dim]);
        let mut d0 = vec![0.0; dim];
        this.eval(t0, &y0, Extension::Extrapolate, &mut d0)?;
        this.segment.set_last_derivative(&d0);
        Ok(this)
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.steps as f64 * self.h
    }

    pub fn state(&self) -> &[f64] {
        self.segment.last_state()
    }

    pub fn derivative(&self) -> &[f64] {
        self.segment.last_derivative()
    }

    pub fn history(&self) -> &HistorySegment {
        &self.segment
    }

    pub fn clipped(&self) -> usize {
        self.clipped
    }

    pub fn max_excursion(&self) -> f64 {
        self.max_excursion
    }

    fn eval(
        &self,
        t: f64,
        y: &[f64],
        extension: Extension<'_>,
        out: &mut [f64],
    ) -> Result<bool, IntegrateError> {
        let lookup = StepLookup {
            prehistory: self.prehistory,
            t0: self.t0,
            segment: &self.segment,
            extension,
            stage_time: t,
            stage_state: y,
            extended: Cell::new(false),
        };
        self.system.derivative(t, y, &lookup, out)?;
        Ok(lookup.extended.get())
    }

    fn enforce_bounds(&mut self, t: f64, y: &mut [f64]) -> Result<(), IntegrateError> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::NonFinite { t });
        }
        let Some((lo, hi)) = self.bounds else {
            return Ok(());
        };
        for (component, v) in y.iter_mut().enumerate() {
            let excursion = (lo - *v).max(*v - hi);
            if excursion <= 0.0 {
                continue;
            }
            if excursion > BLOWUP_BAND {
                return Err(IntegrateError::BlowUp {
                    t,
                    component,
                    value: *v,
                });
            }
            if excursion <= self.clip_tolerance {
                *v = v.clamp(lo, hi);
                self.clipped += 1;
            } else {
                self.max_excursion = self.max_excursion.max(excursion);
            }
        }
        Ok(())
    }

    /// RK4 stages from the current node; returns the new state and whether
    /// any delayed argument fell inside the step.
    fn rk4(&mut self, extension: Extension<'_>) -> Result<(Vec<f64>, bool), IntegrateError> {
        let h = self.h;
        let tn = self.time();
        let yn = self.segment.last_state().to_vec();
        let mut k = std::mem::take(&mut self.k);
        let mut stage = std::mem::take(&mut self.stage);
        k[0].copy_from_slice(self.segment.last_derivative());
        let mut extended = false;
        let weights = [0.5, 0.5, 1.0];
        for s in 0..3 {
            for i in 0..yn.len() {
                stage[i] = yn[i] + weights[s] * h * k[s][i];
            }
            let (_, tail) = k.split_at_mut(s + 1);
            extended |= self.eval(tn + weights[s] * h, &stage, extension, &mut tail[0])?;
        }
        let next: Vec<f64> = (0..yn.len())
            .map(|i| yn[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]))
            .collect();
        self.k = k;
        self.stage = stage;
        Ok((next, extended))
    }

    /// Advances one step of size `h`.
    pub fn step(&mut self) -> Result<(), IntegrateError> {
        let t_next = self.time() + self.h;
        let dim = self.segment.dim();
        let (mut next, extended) = self.rk4(Extension::Extrapolate)?;
        let mut predicted_derivative = None;
        if extended {
            let mut d = vec![0.0; dim];
            self.eval(t_next, &next, Extension::Extrapolate, &mut d)?;
            let predicted = next.clone();
            let (corrected, _) = self.rk4(Extension::Predicted {
                state: &predicted,
                derivative: &d,
            })?;
            next = corrected;
            predicted_derivative = Some(d);
        }
        self.enforce_bounds(t_next, &mut next)?;
        let mut d_next = vec![0.0; dim];
        match &predicted_derivative {
            Some(d) => self.eval(
                t_next,
                &next,
                Extension::Predicted {
                    state: &next,
                    derivative: d,
                },
                &mut d_next,
            )?,
            None => self.eval(t_next, &next, Extension::Extrapolate, &mut d_next)?,
        };
        self.segment.push(next, d_next);
        self.steps += 1;
        self.segment.prune_before(t_next - self.retain);
        Ok(())
    }
}

/// Integrates `system` from `t0` to (at least) `config.t_end`.
///
/// The number of steps is `ceil((t_end - t0) / h)` with the period-aligned
/// `h`, so the final sample may lie up to one step past `t_end`.
pub fn integrate(
    system: &dyn DelaySystem,
    initial_history: &dyn InitialHistory,
    t0: f64,
    config: &IntegrationConfig,
) -> Result<Trajectory, IntegrateError> {
    let stride = config.record_stride.max(1) as u64;
    let mut integrator = Integrator::new(
        system,
        initial_history,
        t0,
        config.step,
        config.clip_tolerance,
    )?;
    let h = integrator.step_size();
    let n_steps = ((config.t_end - t0) / h - 1e-9).ceil().max(0.0) as u64;
    let mut traj = Trajectory {
        step: h,
        sample_times: Vec::new(),
        sample_states: Vec::new(),
        simplex_deviation: Vec::new(),
        clipped: 0,
        max_excursion: 0.0,
    };
    let record = |integ: &Integrator<'_>, traj: &mut Trajectory| {
        let x = StateVector(integ.state().to_vec());
        traj.sample_times.push(integ.time());
        traj.simplex_deviation.push(x.simplex_deviation());
        traj.sample_states.push(x);
    };
    record(&integrator, &mut traj);
    for k in 1..=n_steps {
        integrator.step()?;
        if k % stride == 0 {
            record(&integrator, &mut traj);
        }
    }
    traj.clipped = integrator.clipped();
    traj.max_excursion = integrator.max_excursion();
    Ok(traj)
}

/// [`integrate`] for a quasispecies model, after checking its hypotheses.
pub fn integrate_model(
    spec: &ModelSpec,
    initial_history: &dyn InitialHistory,
    t0: f64,
    config: &IntegrationConfig,
) -> Result<Trajectory, IntegrateError> {
    spec.validate()
        .into_result()
        .map_err(|e: ModelError| IntegrateError::Model(e))?;
    integrate(spec, initial_history, t0, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::GrowthFunction;
    use crate::signal::PeriodicSignal;

    fn constant_model(growth: GrowthFunction, tau: f64) -> ModelSpec {
        let c = |v| PeriodicSignal::constant(1.0, v);
        ModelSpec::two_species(1.0, growth, [c(1.0), c(1.0)], [c(tau), c(tau)], c(0.9), c(0.1))
    }

    #[test]
    fn rhs_vanishes_at_symmetric_point() {
        let spec = constant_model(GrowthFunction::linear(), 0.0);
        let mut seg = HistorySegment::new(0.0, 0.1, 2);
        seg.push(vec![0.5, 0.5], vec![0.0, 0.0]);
        let d = rhs(&spec, 0.0, &[0.5, 0.5], &seg).unwrap();
        assert!(d[0].abs() < 1e-15 && d[1].abs() < 1e-15);
    }

    #[test]
    fn rhs_logistic_vertex_state_is_stationary() {
        let spec = constant_model(GrowthFunction::logistic(), 0.0);
        let mut seg = HistorySegment::new(0.0, 0.1, 2);
        seg.push(vec![1.0, 0.0], vec![0.0, 0.0]);
        let d = rhs(&spec, 0.0, &[1.0, 0.0], &seg).unwrap();
        assert_eq!(d.0, vec![0.0, 0.0]);
    }

    #[test]
    fn rhs_sum_is_zero_on_simplex() {
        let spec = ModelSpec::two_species(
            1.0,
            GrowthFunction::polynomial(vec![0.0, 1.2, -0.9, 0.2]),
            [PeriodicSignal::cosine(1.0, 2.0, 1.0), PeriodicSignal::constant(1.0, 1.0)],
            [PeriodicSignal::constant(1.0, 0.3), PeriodicSignal::constant(1.0, 0.7)],
            PeriodicSignal::sine(1.0, 0.8, 0.1),
            PeriodicSignal::cosine(1.0, 0.15, 0.05),
        );
        let hist = FnHistory::new(2, |t: f64| vec![0.4 + 0.1 * t.sin(), 0.3 - 0.05 * t.cos()]);
        let mut seg = HistorySegment::new(-2.0, 0.01, 2);
        for k in 0..=300 {
            let t = -2.0 + k as f64 * 0.01;
            let x = hist.state_at(t);
            seg.push(x.0, vec![0.1 * t.cos(), 0.05 * t.sin()]);
        }
        for &t in &[0.0, 0.25, 0.77, 1.0] {
            for &x0 in &[0.1, 0.5, 0.93] {
                let d = rhs(&spec, t, &[x0, 1.0 - x0], &seg).unwrap();
                assert!((d[0] + d[1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rhs_underflow_is_reported() {
        let spec = constant_model(GrowthFunction::linear(), 0.5);
        let mut seg = HistorySegment::new(0.0, 0.1, 2);
        seg.push(vec![0.5, 0.5], vec![0.0, 0.0]);
        assert!(matches!(
            rhs(&spec, 0.2, &[0.5, 0.5], &seg),
            Err(IntegrateError::HistoryUnderflow { .. })
        ));
    }

    #[test]
    fn step_is_aligned_to_period() {
        assert_eq!(aligned_step(0.25, Some(1.0)).unwrap(), 0.25);
        let h = aligned_step(0.3, Some(1.0)).unwrap();
        assert_eq!(h, 0.25);
        assert!(aligned_step(0.0, None).is_err());
        assert!(aligned_step(-1.0, Some(1.0)).is_err());
    }

    #[test]
    fn zero_delay_matches_plain_ode_rk4() {
        // With tau = 0 the model is an ODE; compare with a hand-rolled RK4.
        let spec = constant_model(GrowthFunction::logistic(), 0.0);
        let h = 1.0 / 64.0;
        let traj = integrate(
            &spec,
            &ConstantHistory::new(vec![0.2, 0.8]),
            0.0,
            &IntegrationConfig::new(h, 2.0),
        )
        .unwrap();
        let f = |x: [f64; 2]| {
            let g = [x[0] * (1.0 - x[0]), x[1] * (1.0 - x[1])];
            let phi = g[0] + g[1];
            [0.9 * g[0] + 0.1 * g[1] - x[0] * phi, 0.1 * g[0] + 0.9 * g[1] - x[1] * phi]
        };
        let mut x = [0.2, 0.8];
        for _ in 0..128 {
            let k1 = f(x);
            let k2 = f([x[0] + h / 2.0 * k1[0], x[1] + h / 2.0 * k1[1]]);
            let k3 = f([x[0] + h / 2.0 * k2[0], x[1] + h / 2.0 * k2[1]]);
            let k4 = f([x[0] + h * k3[0], x[1] + h * k3[1]]);
            for i in 0..2 {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        let last = traj.sample_states.last().unwrap();
        assert!((last[0] - x[0]).abs() < 1e-14 && (last[1] - x[1]).abs() < 1e-14);
    }

    #[test]
    fn short_positive_delay_converges() {
        // tau = h/3 exercises the predictor-corrector; compare two step sizes.
        let run = |h: f64| {
            let spec = constant_model(GrowthFunction::linear(), 1.0 / 384.0);
            let traj = integrate(
                &spec,
                &ConstantHistory::new(vec![0.2, 0.8]),
                0.0,
                &IntegrationConfig::new(h, 1.0),
            )
            .unwrap();
            traj.sample_states.last().unwrap()[0]
        };
        let coarse = run(1.0 / 128.0);
        let fine = run(1.0 / 1024.0);
        assert!((coarse - fine).abs() < 1e-6, "{coarse} vs {fine}");
    }

    #[test]
    fn records_every_stride() {
        let spec = constant_model(GrowthFunction::linear(), 0.2);
        let traj = integrate(
            &spec,
            &ConstantHistory::new(vec![0.6, 0.4]),
            0.0,
            &IntegrationConfig::new(0.125, 4.0).with_stride(4),
        )
        .unwrap();
        assert_eq!(traj.len(), 9);
        assert!((traj.sample_times[8] - 4.0).abs() < 1e-12);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x0,x1,sum_deviation\n"));
        assert_eq!(text.lines().count(), 10);
    }

    #[test]
    fn rejects_history_of_wrong_dimension() {
        let spec = constant_model(GrowthFunction::linear(), 0.2);
        let err = integrate(
            &spec,
            &ConstantHistory::new(vec![1.0]),
            0.0,
            &IntegrationConfig::new(0.1, 1.0),
        )
        .unwrap_err();
        assert!(matches!(err, IntegrateError::Dimension { .. }));
    }

    #[test]
    fn blowup_outside_band() {
        let spec = constant_model(GrowthFunction::linear(), 0.2);
        let err = integrate(
            &spec,
            &ConstantHistory::new(vec![1.2, -0.2]),
            0.0,
            &IntegrationConfig::new(0.1, 1.0),
        )
        .unwrap_err();
        assert!(matches!(err, IntegrateError::BlowUp { .. }));
    }
}
