//! Periodic orbits by long-time simulation and period-map residuals.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dde::{
    write_csv_header, write_csv_row, InitialHistory, Integrator, PeriodicSampleHistory,
    StepHistory, DEFAULT_CLIP_TOLERANCE,
};
use crate::error::PeriodicError;
use crate::model::{ModelSpec, StateVector, HYPOTHESIS_SAMPLES};

/// Tolerance on `|Σ x_i - 1|` for orbit samples.
pub const SIMPLEX_TOL: f64 = 1e-8;
/// Slack on the `[η, ν]` bounds of a converged orbit.
pub const BOUNDS_TOL: f64 = 1e-6;
/// Orbits with peak-to-peak amplitude below this are constant.
pub const CONSTANT_AMPLITUDE: f64 = 1e-8;
/// Multistart limits closer than this agree.
pub const AGREEMENT_TOL: f64 = 1e-6;
/// Multistart limits farther apart than this falsify uniqueness.
pub const COUNTEREXAMPLE_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodicSearchConfig {
    pub transient_periods: usize,
    /// `M`: phase samples per period.
    pub samples_per_period: usize,
    /// Integration steps between phase samples, `h = T / (M k)`.
    pub steps_per_sample: usize,
    pub residual_tolerance: f64,
    pub max_extra_periods: usize,
    pub multistart_count: usize,
    pub seed: u64,
}

impl Default for PeriodicSearchConfig {
    fn default() -> Self {
        Self {
            transient_periods: 200,
            samples_per_period: 256,
            steps_per_sample: 1,
            residual_tolerance: 1e-6,
            max_extra_periods: 800,
            multistart_count: 16,
            seed: 0,
        }
    }
}

impl PeriodicSearchConfig {
    fn check(&self) -> Result<(), PeriodicError> {
        if self.samples_per_period == 0 || self.steps_per_sample == 0 {
            return Err(PeriodicError::Config(
                "samples_per_period and steps_per_sample must be positive".into(),
            ));
        }
        if !(self.residual_tolerance > 0.0) {
            return Err(PeriodicError::Config("residual_tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Verdicts against `η ≤ x_0 ≤ ν` and `1 - ν ≤ x_1 ≤ 1 - η` (two species).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsVerdict {
    pub eta: f64,
    pub nu: f64,
    pub x0_within: bool,
    pub x1_within: bool,
}

impl BoundsVerdict {
    pub fn holds(&self) -> bool {
        self.x0_within && self.x1_within
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicOrbitReport {
    pub converged: bool,
    /// Last period-map residual: max over phases of `|x(t + T) - x(t)|_∞`.
    pub residual: f64,
    pub residual_trace: Vec<f64>,
    pub periods_integrated: usize,
    pub step: f64,
    pub orbit_times: Vec<f64>,
    pub orbit_samples: Vec<StateVector>,
    #[serde(skip)]
    pub orbit_derivatives: Vec<StateVector>,
    pub component_min: Vec<f64>,
    pub component_max: Vec<f64>,
    pub amplitude: f64,
    pub is_constant: bool,
    pub bounds_verdict: Option<BoundsVerdict>,
    pub max_simplex_deviation: f64,
    pub simplex_verdict: bool,
    /// Every sampled component lies in `]0, 1[`.
    pub interior: bool,
}

impl PeriodicOrbitReport {
    pub fn bounds_hold(&self) -> bool {
        self.bounds_verdict.is_some_and(|b| b.holds())
    }

    /// Mean state over the sampled period.
    pub fn mean_state(&self) -> StateVector {
        let m = self.orbit_samples.len().max(1) as f64;
        let dim = self.orbit_samples.first().map_or(0, |s| s.len());
        StateVector(
            (0..dim)
                .map(|i| self.orbit_samples.iter().map(|s| s[i]).sum::<f64>() / m)
                .collect(),
        )
    }

    /// Largest phase-wise sup distance to another orbit sampled the same way.
    pub fn distance_to(&self, other: &PeriodicOrbitReport) -> f64 {
        self.orbit_samples
            .iter()
            .zip(&other.orbit_samples)
            .map(|(a, b)| a.sup_distance(b))
            .fold(0.0, f64::max)
    }

    /// Periodic extension of the sampled orbit, usable as an initial history.
    pub fn as_history(&self, period: f64) -> PeriodicSampleHistory {
        PeriodicSampleHistory {
            origin: self.orbit_times.first().copied().unwrap_or(0.0),
            period,
            states: self.orbit_samples.clone(),
            derivatives: self.orbit_derivatives.clone(),
        }
    }

    /// One period in the trajectory CSV schema.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let dim = self.orbit_samples.first().map_or(0, |s| s.len());
        write_csv_header(&mut w, dim)?;
        for (t, x) in self.orbit_times.iter().zip(&self.orbit_samples) {
            write_csv_row(&mut w, *t, x, x.simplex_deviation())?;
        }
        Ok(())
    }
}

/// `(η, ν)` from the grid extrema of `q = Q_00` and `p = Q_10`.
pub fn fidelity_range(spec: &ModelSpec) -> (f64, f64) {
    let (q_lo, q_hi) = spec.q().grid_extrema(HYPOTHESIS_SAMPLES);
    let (p_lo, p_hi) = spec.p().grid_extrema(HYPOTHESIS_SAMPLES);
    (q_lo.min(p_lo), q_hi.max(p_hi))
}

struct PeriodSamples {
    times: Vec<f64>,
    states: Vec<StateVector>,
    derivatives: Vec<StateVector>,
}

fn sample_period(
    integ: &mut Integrator<'_>,
    samples: usize,
    steps_per_sample: usize,
) -> Result<PeriodSamples, PeriodicError> {
    let mut out = PeriodSamples {
        times: Vec::with_capacity(samples),
        states: Vec::with_capacity(samples),
        derivatives: Vec::with_capacity(samples),
    };
    for _ in 0..samples {
        out.times.push(integ.time());
        out.states.push(StateVector(integ.state().to_vec()));
        out.derivatives.push(StateVector(integ.derivative().to_vec()));
        for _ in 0..steps_per_sample {
            integ.step()?;
        }
    }
    Ok(out)
}

/// Integrates through the transient, then period by period until two
/// consecutive period-map residuals fall below tolerance.
///
/// Non-convergence is not an error: the report comes back with
/// `converged = false` and the full residual trace.
pub fn find_periodic(
    spec: &ModelSpec,
    initial_history: &dyn InitialHistory,
    search: &PeriodicSearchConfig,
) -> Result<PeriodicOrbitReport, PeriodicError> {
    search.check()?;
    spec.validate().into_result()?;
    let m = search.samples_per_period;
    let k = search.steps_per_sample;
    let h = spec.period / (m * k) as f64;
    let mut integ = Integrator::new(spec, initial_history, 0.0, h, DEFAULT_CLIP_TOLERANCE)?;
    for _ in 0..search.transient_periods * m * k {
        integ.step()?;
    }

    let mut previous = sample_period(&mut integ, m, k)?;
    let mut trace = Vec::new();
    let mut consecutive = 0;
    let mut converged = false;
    let mut periods = search.transient_periods + 1;
    for _ in 0..search.max_extra_periods {
        let current = sample_period(&mut integ, m, k)?;
        periods += 1;
        let residual = current
            .states
            .iter()
            .zip(&previous.states)
            .map(|(a, b)| a.sup_distance(b))
            .fold(0.0, f64::max);
        trace.push(residual);
        previous = current;
        if residual <= search.residual_tolerance {
            consecutive += 1;
            if consecutive >= 2 {
                converged = true;
                break;
            }
        } else {
            consecutive = 0;
        }
    }

    let dim = spec.dim();
    let mut component_min = vec![f64::INFINITY; dim];
    let mut component_max = vec![f64::NEG_INFINITY; dim];
    for s in &previous.states {
        for i in 0..dim {
            component_min[i] = component_min[i].min(s[i]);
            component_max[i] = component_max[i].max(s[i]);
        }
    }
    let amplitude = component_min
        .iter()
        .zip(&component_max)
        .map(|(lo, hi)| hi - lo)
        .fold(0.0, f64::max);
    let max_simplex_deviation = previous
        .states
        .iter()
        .map(|s| s.simplex_deviation())
        .fold(0.0, f64::max);
    let interior = previous
        .states
        .iter()
        .all(|s| s.iter().all(|&x| x > 0.0 && x < 1.0));
    let bounds_verdict = (dim == 2).then(|| {
        let (eta, nu) = fidelity_range(spec);
        BoundsVerdict {
            eta,
            nu,
            x0_within: component_min[0] >= eta - BOUNDS_TOL && component_max[0] <= nu + BOUNDS_TOL,
            x1_within: component_min[1] >= 1.0 - nu - BOUNDS_TOL
                && component_max[1] <= 1.0 - eta + BOUNDS_TOL,
        }
    });

    Ok(PeriodicOrbitReport {
        converged,
        residual: trace.last().copied().unwrap_or(f64::INFINITY),
        residual_trace: trace,
        periods_integrated: periods,
        step: integ.step_size(),
        orbit_times: previous.times,
        orbit_samples: previous.states,
        orbit_derivatives: previous.derivatives,
        component_min,
        component_max,
        amplitude,
        is_constant: amplitude < CONSTANT_AMPLITUDE,
        bounds_verdict,
        max_simplex_deviation,
        simplex_verdict: max_simplex_deviation <= SIMPLEX_TOL,
        interior,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub delay: f64,
    pub report: PeriodicOrbitReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub all_converged: bool,
    pub all_bounds_hold: bool,
}

/// Runs [`find_periodic`] with every delay replaced by each constant in turn.
pub fn delay_independence_sweep(
    spec: &ModelSpec,
    delays: &[f64],
    initial_history: &dyn InitialHistory,
    search: &PeriodicSearchConfig,
) -> Result<SweepReport, PeriodicError> {
    let entries = delays
        .par_iter()
        .map(|&delay| {
            let variant = spec.with_constant_delays(delay);
            find_periodic(&variant, initial_history, search).map(|report| SweepEntry { delay, report })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepReport {
        all_converged: entries.iter().all(|e| e.report.converged),
        all_bounds_hold: entries.iter().all(|e| e.report.bounds_hold()),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartOutcome {
    pub index: usize,
    /// Constant prehistory before the start time.
    pub prehistory: StateVector,
    /// Its projection onto the simplex, used as the initial state.
    pub initial_state: StateVector,
    pub converged: bool,
    pub residual: f64,
    pub amplitude: f64,
    pub limit: StateVector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub eta: f64,
    pub seed: u64,
    pub starts: Vec<StartOutcome>,
    pub all_converged: bool,
    pub all_constant: bool,
    pub max_pairwise_distance: f64,
    /// Every start converged to the same constant orbit within tolerance.
    pub agree: bool,
    pub common_constant: StateVector,
    /// Equilibrium `(η, 1 - η)` of the dynamics with `q = p = η`.
    pub expected_constant: StateVector,
    pub distance_to_expected: f64,
    /// Distance to `(η, η)`, the constant as literally stated for the
    /// uniqueness result; off the simplex unless `η = 1/2`.
    pub distance_to_literal: f64,
}

/// Random prehistories for the multistart probe: components uniform in
/// `[0.05, 0.95]`, start state projected onto the simplex.
pub fn multistart_histories(dim: usize, count: usize, seed: u64) -> Vec<StepHistory> {
    (0..count)
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            let raw = StateVector((0..dim).map(|_| rng.gen_range(0.05..=0.95)).collect());
            StepHistory {
                start: 0.0,
                at_start: raw.normalized(),
                before: raw,
            }
        })
        .collect()
}

/// Multistart check that every start converges to one constant orbit when
/// `q = p = η` is constant.
pub fn uniqueness_probe(
    spec: &ModelSpec,
    search: &PeriodicSearchConfig,
) -> Result<UniquenessReport, PeriodicError> {
    spec.require_two_species()?;
    let (q_lo, q_hi) = spec.q().grid_extrema(HYPOTHESIS_SAMPLES);
    let (p_lo, p_hi) = spec.p().grid_extrema(HYPOTHESIS_SAMPLES);
    let spread = q_hi.max(p_hi) - q_lo.min(p_lo);
    if spread > 1e-12 {
        return Err(PeriodicError::NotUniquenessRegime(format!(
            "q and p vary over a range of {spread:e}"
        )));
    }
    let eta = q_lo;
    if !(eta > 0.0 && eta < 1.0) {
        return Err(PeriodicError::NotUniquenessRegime(format!("eta = {eta}")));
    }

    let histories = multistart_histories(2, search.multistart_count, search.seed);
    let reports = histories
        .par_iter()
        .map(|h| find_periodic(spec, h, search))
        .collect::<Result<Vec<_>, _>>()?;

    let mut max_pairwise_distance: f64 = 0.0;
    for a in 0..reports.len() {
        for b in a + 1..reports.len() {
            if !(reports[a].converged && reports[b].converged) {
                continue;
            }
            let d = reports[a].distance_to(&reports[b]);
            if d > COUNTEREXAMPLE_TOL {
                return Err(PeriodicError::Counterexample {
                    first: a,
                    second: b,
                    distance: d,
                });
            }
            max_pairwise_distance = max_pairwise_distance.max(d);
        }
    }

    let starts: Vec<StartOutcome> = histories
        .iter()
        .zip(&reports)
        .enumerate()
        .map(|(index, (h, r))| StartOutcome {
            index,
            prehistory: h.before.clone(),
            initial_state: h.at_start.clone(),
            converged: r.converged,
            residual: r.residual,
            amplitude: r.amplitude,
            limit: r.mean_state(),
        })
        .collect();
    let all_converged = starts.iter().all(|s| s.converged);
    let all_constant = reports.iter().all(|r| r.is_constant);
    let n = starts.len().max(1) as f64;
    let common_constant = StateVector(
        (0..2)
            .map(|i| starts.iter().map(|s| s.limit[i]).sum::<f64>() / n)
            .collect(),
    );
    let expected_constant = StateVector(vec![eta, 1.0 - eta]);
    Ok(UniquenessReport {
        eta,
        seed: search.seed,
        all_converged,
        all_constant,
        agree: all_converged && all_constant && max_pairwise_distance <= AGREEMENT_TOL,
        distance_to_expected: common_constant.sup_distance(&expected_constant),
        distance_to_literal: common_constant.sup_distance(&[eta, eta]),
        max_pairwise_distance,
        common_constant,
        expected_constant,
        starts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dde::ConstantHistory;
    use crate::growth::GrowthFunction;
    use crate::signal::PeriodicSignal;

    fn quick() -> PeriodicSearchConfig {
        PeriodicSearchConfig {
            transient_periods: 40,
            samples_per_period: 64,
            multistart_count: 4,
            ..Default::default()
        }
    }

    fn linear_constant(tau0: f64, tau1: f64) -> ModelSpec {
        let c = |v| PeriodicSignal::constant(1.0, v);
        ModelSpec::two_species(
            1.0,
            GrowthFunction::linear(),
            [c(2.0), c(1.0)],
            [c(tau0), c(tau1)],
            c(0.9),
            c(0.1),
        )
    }

    #[test]
    fn constant_coefficients_give_equilibrium() {
        let spec = linear_constant(0.5, 1.3);
        let r = find_periodic(&spec, &ConstantHistory::new(vec![0.6, 0.4]), &quick()).unwrap();
        assert!(r.converged);
        assert!(r.residual <= 1e-6);
        let expected = (0.89f64.sqrt() + 0.7) / 2.0;
        assert!((r.orbit_samples[0][0] - expected).abs() < 1e-6);
        assert!(r.simplex_verdict && r.interior && r.bounds_hold());
        assert_eq!(r.orbit_samples.len(), 64);
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let spec = linear_constant(0.5, 1.3);
        let search = PeriodicSearchConfig {
            transient_periods: 0,
            max_extra_periods: 2,
            samples_per_period: 16,
            ..Default::default()
        };
        let r = find_periodic(&spec, &ConstantHistory::new(vec![0.1, 0.9]), &search).unwrap();
        assert!(!r.converged);
        assert_eq!(r.residual_trace.len(), 2);
    }

    #[test]
    fn invalid_model_is_rejected() {
        let mut spec = linear_constant(0.5, 1.3);
        spec.rates[0] = PeriodicSignal::constant(1.0, -1.0);
        assert!(matches!(
            find_periodic(&spec, &ConstantHistory::new(vec![0.5, 0.5]), &quick()),
            Err(PeriodicError::Model(_))
        ));
    }

    #[test]
    fn multistart_histories_are_seeded() {
        let a = multistart_histories(2, 5, 7);
        let b = multistart_histories(2, 5, 7);
        let c = multistart_histories(2, 5, 8);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.before, y.before);
            assert!((x.at_start.sum() - 1.0).abs() < 1e-15);
            assert!(x.before.iter().all(|v| (0.05..=0.95).contains(v)));
        }
        assert_ne!(a[0].before, c[0].before);
        assert_ne!(a[0].before, a[1].before);
    }

    #[test]
    fn uniqueness_requires_equal_constant_fidelities() {
        let spec = linear_constant(0.5, 1.3);
        assert!(matches!(
            uniqueness_probe(&spec, &quick()),
            Err(PeriodicError::NotUniquenessRegime(_))
        ));
    }

    #[test]
    fn uniqueness_with_long_delay() {
        let c = |v| PeriodicSignal::constant(1.0, v);
        let spec = ModelSpec::two_species(
            1.0,
            GrowthFunction::linear(),
            [PeriodicSignal::sine(1.0, 2.0, 1.0), c(1.0)],
            [c(3.0), c(3.0)],
            c(0.5),
            c(0.5),
        );
        let r = uniqueness_probe(&spec, &quick()).unwrap();
        assert!(r.agree, "{r:?}");
        assert!(r.distance_to_expected < 1e-6);
    }
}
