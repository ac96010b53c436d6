//! Executable verification suite.
//!
//! Each [`VerificationCase`] pairs a model with one [`Claim`]. Running a case
//! produces a list of [`Check`]s; the case passes when every check does, and
//! its margin is the smallest `tolerance - observed` over the numeric checks.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::averaging::{
    analyze, check_condition_c, solve_averaged, AveragedData, SolverOptions,
};
use crate::config::{ConfigError, ModelConfig};
use crate::dde::{integrate_model, IntegrationConfig, StepHistory};
use crate::growth::{GrowthFunction, GrowthKind};
use crate::model::{ModelSpec, StateVector};
use crate::periodic::{
    delay_independence_sweep, find_periodic, uniqueness_probe, PeriodicSearchConfig,
    BOUNDS_TOL, CONSTANT_AMPLITUDE, SIMPLEX_TOL,
};
use crate::signal::PeriodicSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Claim {
    /// Solutions stay on the simplex and inside the unit box.
    CpInvariance,
    /// A periodic orbit exists on the simplex.
    PeriodicOnSimplex,
    /// The periodic orbit respects `η ≤ x_0 ≤ ν`, `1 - ν ≤ x_1 ≤ 1 - η`.
    TeopBounds,
    /// With `q = p = η` constant, all starts reach one constant orbit.
    TeosUniqueness,
    /// Linear growth: averaged root matches the quadratic closed form.
    #[serde(rename = "COROLLARY1_FORM")]
    Corollary1Form,
    /// Logistic growth: averaged root matches the rational closed form.
    #[serde(rename = "COROLLARY2_FORM")]
    Corollary2Form,
    /// Orbit existence and bounds persist across constant delays.
    DelayIndependence,
}

impl Claim {
    pub fn as_str(self) -> &'static str {
        match self {
            Claim::CpInvariance => "CP_INVARIANCE",
            Claim::PeriodicOnSimplex => "PERIODIC_ON_SIMPLEX",
            Claim::TeopBounds => "TEOP_BOUNDS",
            Claim::TeosUniqueness => "TEOS_UNIQUENESS",
            Claim::Corollary1Form => "COROLLARY1_FORM",
            Claim::Corollary2Form => "COROLLARY2_FORM",
            Claim::DelayIndependence => "DELAY_INDEPENDENCE",
        }
    }
}

/// Numerical knobs of a case. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaseParameters {
    /// State at `t = 0`.
    pub initial: Vec<f64>,
    /// Constant value for `t < 0`; defaults to `initial`.
    pub prehistory: Option<Vec<f64>>,
    /// Horizon, in periods, of the invariance run.
    pub periods: usize,
    pub samples_per_period: usize,
    pub transient_periods: usize,
    pub max_extra_periods: usize,
    pub residual_tolerance: f64,
    pub multistart_count: usize,
    pub seed: u64,
    /// Constant delays of the sweep, in units of the period.
    pub sweep_delays: Vec<f64>,
    pub root_tolerance: f64,
    pub simulation_tolerance: f64,
    /// Also compare a long simulation with the closed form (constant
    /// coefficients only).
    pub simulate: bool,
}

impl Default for CaseParameters {
    fn default() -> Self {
        let search = PeriodicSearchConfig::default();
        Self {
            initial: vec![0.6, 0.4],
            prehistory: None,
            periods: 100,
            samples_per_period: search.samples_per_period,
            transient_periods: search.transient_periods,
            max_extra_periods: search.max_extra_periods,
            residual_tolerance: search.residual_tolerance,
            multistart_count: search.multistart_count,
            seed: search.seed,
            sweep_delays: vec![0.0, 0.3, 2.7],
            root_tolerance: 1e-10,
            simulation_tolerance: 1e-6,
            simulate: true,
        }
    }
}

impl CaseParameters {
    pub fn search(&self) -> PeriodicSearchConfig {
        PeriodicSearchConfig {
            transient_periods: self.transient_periods,
            samples_per_period: self.samples_per_period,
            steps_per_sample: 1,
            residual_tolerance: self.residual_tolerance,
            max_extra_periods: self.max_extra_periods,
            multistart_count: self.multistart_count,
            seed: self.seed,
        }
    }

    pub fn history(&self) -> StepHistory {
        let at_start = StateVector(self.initial.clone());
        StepHistory {
            start: 0.0,
            before: self
                .prehistory
                .clone()
                .map(StateVector)
                .unwrap_or_else(|| at_start.clone()),
            at_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationCase {
    pub name: String,
    pub claim: Claim,
    #[serde(serialize_with = "serialize_spec")]
    pub spec: ModelSpec,
    pub parameters: CaseParameters,
}

fn serialize_spec<S: serde::Serializer>(spec: &ModelSpec, s: S) -> Result<S::Ok, S::Error> {
    crate::config::emit_config(spec).serialize(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
}

/// One measured quantity, or a yes/no condition when `observed` is absent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub passed: bool,
}

impl Check {
    fn within(label: impl Into<String>, observed: f64, tolerance: f64) -> Self {
        Self {
            label: label.into(),
            observed: Some(observed),
            tolerance: Some(tolerance),
            passed: observed <= tolerance,
        }
    }

    fn holds(label: impl Into<String>, passed: bool) -> Self {
        Self {
            label: label.into(),
            observed: None,
            tolerance: None,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub name: String,
    pub claim: Claim,
    pub verdict: Verdict,
    /// `min(tolerance - observed)` over numeric checks; `None` when the case
    /// errored or had none.
    pub margin: Option<f64>,
    pub checks: Vec<Check>,
    pub details: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub cases: Vec<CaseResult>,
    pub passed: usize,
    pub failed: usize,
    pub all_passed: bool,
}

/// Linear-growth closed form for the first component of the averaged root.
///
/// With `B = f̄_1 + \overline{p f_1} - \overline{q f_0}`: if `f̄_0 ≠ f̄_1`,
/// `x = (sqrt(B² + 4 \overline{p f_1} (f̄_0 - f̄_1)) - B) / (2 (f̄_0 - f̄_1))`,
/// otherwise `x = \overline{p f_1} / (f̄_0 + \overline{p f_1} - \overline{q f_0})`.
pub fn linear_closed_form(data: &AveragedData) -> f64 {
    let (f0, f1, qf0, pf1) = (data.mean_f0, data.mean_f1, data.mean_qf0, data.mean_pf1);
    let d = f0 - f1;
    let b = f1 + pf1 - qf0;
    if d.abs() <= 1e-12 * f0.abs().max(f1.abs()) {
        pf1 / (f0 + pf1 - qf0)
    } else {
        ((b * b + 4.0 * pf1 * d).sqrt() - b) / (2.0 * d)
    }
}

/// Logistic-growth closed form `x = (\overline{p f_1} + \overline{q f_0}) / (f̄_0 + f̄_1)`.
pub fn logistic_closed_form(data: &AveragedData) -> f64 {
    (data.mean_pf1 + data.mean_qf0) / (data.mean_f0 + data.mean_f1)
}

pub mod scenarios {
    //! Reference models, all with period `T = 1`.

    use super::*;

    fn c(v: f64) -> PeriodicSignal {
        PeriodicSignal::constant(1.0, v)
    }

    fn delays() -> [PeriodicSignal; 2] {
        [c(0.5), c(1.3)]
    }

    /// Linear growth, `f = (2, 1)`, `q = 0.9`, `p = 0.1`.
    pub fn e1() -> ModelSpec {
        ModelSpec::two_species(1.0, GrowthFunction::linear(), [c(2.0), c(1.0)], delays(), c(0.9), c(0.1))
    }

    /// Linear growth, equal rates `f = (1, 1)`.
    pub fn e2() -> ModelSpec {
        ModelSpec::two_species(1.0, GrowthFunction::linear(), [c(1.0), c(1.0)], delays(), c(0.9), c(0.1))
    }

    /// Logistic growth, otherwise as [`e1`].
    pub fn l1() -> ModelSpec {
        ModelSpec::two_species(1.0, GrowthFunction::logistic(), [c(2.0), c(1.0)], delays(), c(0.9), c(0.1))
    }

    /// Logistic growth with `q = 0.8 + 0.1 sin`, `p = 0.15 + 0.05 cos`,
    /// `f_0 = 2 + cos`, `f_1 = 1`.
    pub fn p1() -> ModelSpec {
        ModelSpec::two_species(
            1.0,
            GrowthFunction::logistic(),
            [PeriodicSignal::cosine(1.0, 2.0, 1.0), c(1.0)],
            delays(),
            PeriodicSignal::sine(1.0, 0.8, 0.1),
            PeriodicSignal::cosine(1.0, 0.15, 0.05),
        )
    }

    /// Linear growth, `q = p = 0.5`, `f_0 = 2 + sin`, `f_1 = 1`.
    pub fn s1() -> ModelSpec {
        ModelSpec::two_species(
            1.0,
            GrowthFunction::linear(),
            [PeriodicSignal::sine(1.0, 2.0, 1.0), c(1.0)],
            delays(),
            c(0.5),
            c(0.5),
        )
    }

    /// Logistic growth, `q = p = 0.3`, `f_0 = 2 + sin`, `f_1 = 1`.
    pub fn s2() -> ModelSpec {
        ModelSpec::two_species(
            1.0,
            GrowthFunction::logistic(),
            [PeriodicSignal::sine(1.0, 2.0, 1.0), c(1.0)],
            delays(),
            c(0.3),
            c(0.3),
        )
    }
}

/// The built-in suite.
pub fn builtin_cases() -> Vec<VerificationCase> {
    let case = |name: &str, claim, spec, parameters| VerificationCase {
        name: name.to_string(),
        claim,
        spec,
        parameters,
    };
    let default = CaseParameters::default;
    vec![
        case(
            "E1_cp_invariance",
            Claim::CpInvariance,
            scenarios::e1(),
            CaseParameters {
                prehistory: Some(vec![0.7, 0.5]),
                ..default()
            },
        ),
        case("E1_linear_root", Claim::Corollary1Form, scenarios::e1(), default()),
        case("E2_linear_root", Claim::Corollary1Form, scenarios::e2(), default()),
        case("L1_logistic_root", Claim::Corollary2Form, scenarios::l1(), default()),
        case("P1_periodic_on_simplex", Claim::PeriodicOnSimplex, scenarios::p1(), default()),
        case("P1_orbit_bounds", Claim::TeopBounds, scenarios::p1(), default()),
        case("D1_delay_independence", Claim::DelayIndependence, scenarios::p1(), default()),
        case("S1_uniqueness", Claim::TeosUniqueness, scenarios::s1(), default()),
        case("S2_uniqueness", Claim::TeosUniqueness, scenarios::s2(), default()),
    ]
}

/// Cases whose name equals `selector` or starts with `selector_`; `all`
/// selects everything.
pub fn select_cases(cases: Vec<VerificationCase>, selector: &str) -> Vec<VerificationCase> {
    if selector == "all" {
        return cases;
    }
    let prefix = format!("{selector}_");
    cases
        .into_iter()
        .filter(|c| c.name == selector || c.name.starts_with(&prefix))
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFileEntry {
    name: String,
    claim: Claim,
    model: ModelConfig,
    #[serde(default)]
    parameters: CaseParameters,
}

/// Reads a JSON array of `{name, claim, model, parameters}` entries. Models
/// go through shape checks only, so a case may deliberately break a
/// hypothesis.
pub fn load_cases_str(text: &str) -> Result<Vec<VerificationCase>, ConfigError> {
    let entries: Vec<CaseFileEntry> =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    entries
        .into_iter()
        .map(|e| {
            Ok(VerificationCase {
                spec: e.model.to_spec()?,
                name: e.name,
                claim: e.claim,
                parameters: e.parameters,
            })
        })
        .collect()
}

pub fn load_cases(path: impl AsRef<Path>) -> Result<Vec<VerificationCase>, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_cases_str(&text)
}

type Outcome = Result<(Vec<Check>, Value), String>;

fn bounds_excursion(spec: &ModelSpec, min: &[f64], max: &[f64]) -> (f64, f64, f64) {
    let (eta, nu) = crate::periodic::fidelity_range(spec);
    let x0 = (eta - min[0]).max(max[0] - nu);
    let x1 = ((1.0 - nu) - min[1]).max(max[1] - (1.0 - eta));
    (eta, nu, x0.max(x1))
}

fn run_cp_invariance(case: &VerificationCase) -> Outcome {
    let p = &case.parameters;
    let spec = &case.spec;
    if p.initial.len() != spec.dim() {
        return Err(format!("initial state has {} components, model has {}", p.initial.len(), spec.dim()));
    }
    let h = spec.period / p.samples_per_period as f64;
    let cfg = IntegrationConfig::new(h, p.periods as f64 * spec.period);
    let traj = integrate_model(spec, &p.history(), 0.0, &cfg).map_err(|e| e.to_string())?;
    let box_excursion = traj
        .sample_states
        .iter()
        .flat_map(|s| s.iter().map(|&x| (-x).max(x - 1.0)))
        .fold(f64::NEG_INFINITY, f64::max);
    let checks = vec![
        Check::within("simplex deviation", traj.max_simplex_deviation(), SIMPLEX_TOL),
        Check::within("excursion outside [0,1]", box_excursion, SIMPLEX_TOL),
    ];
    let details = json!({
        "step": traj.step,
        "samples": traj.len(),
        "final_time": traj.sample_times.last(),
        "final_state": traj.sample_states.last(),
        "clipped": traj.clipped,
    });
    Ok((checks, details))
}

fn orbit_checks(spec: &ModelSpec, report: &crate::periodic::PeriodicOrbitReport, tol: f64) -> Vec<Check> {
    let mut checks = vec![
        Check::holds("converged", report.converged),
        Check::within("period-map residual", report.residual, tol),
        Check::within("simplex deviation", report.max_simplex_deviation, SIMPLEX_TOL),
    ];
    if spec.dim() == 2 {
        let (_, _, exc) = bounds_excursion(spec, &report.component_min, &report.component_max);
        checks.push(Check::within("excursion outside fidelity box", exc, BOUNDS_TOL));
    }
    checks
}

fn orbit_details(report: &crate::periodic::PeriodicOrbitReport) -> Value {
    json!({
        "converged": report.converged,
        "residual": report.residual,
        "periods_integrated": report.periods_integrated,
        "component_min": report.component_min,
        "component_max": report.component_max,
        "amplitude": report.amplitude,
        "bounds": report.bounds_verdict,
        "max_simplex_deviation": report.max_simplex_deviation,
    })
}

fn run_periodic(case: &VerificationCase, with_hypotheses: bool) -> Outcome {
    let p = &case.parameters;
    let spec = &case.spec;
    let mut checks = Vec::new();
    let mut details = serde_json::Map::new();
    if with_hypotheses {
        let alg = analyze(spec, &SolverOptions::default()).map_err(|e| e.to_string())?;
        checks.push(Check::holds("averaged system has roots", alg.condition_s_holds));
        checks.push(Check::holds("nonzero sign sum", alg.condition_c_holds));
        checks.push(Check::holds("0 < eta < nu < 1", alg.theorem_applicable));
        details.insert("algebraic".into(), serde_json::to_value(&alg).unwrap_or(Value::Null));
    }
    let report = find_periodic(spec, &p.history(), &p.search()).map_err(|e| e.to_string())?;
    checks.extend(orbit_checks(spec, &report, p.residual_tolerance));
    if !with_hypotheses {
        checks.push(Check::holds("orbit interior to the simplex", report.interior));
    }
    details.insert("orbit".into(), orbit_details(&report));
    Ok((checks, Value::Object(details)))
}

fn run_uniqueness(case: &VerificationCase) -> Outcome {
    let report = uniqueness_probe(&case.spec, &case.parameters.search()).map_err(|e| e.to_string())?;
    let max_amplitude = report.starts.iter().map(|s| s.amplitude).fold(0.0, f64::max);
    let checks = vec![
        Check::holds("all starts converged", report.all_converged),
        Check::within("orbit amplitude", max_amplitude, CONSTANT_AMPLITUDE),
        Check::within("pairwise distance", report.max_pairwise_distance, crate::periodic::AGREEMENT_TOL),
        Check::within(
            "distance to (eta, 1 - eta)",
            report.distance_to_expected,
            case.parameters.simulation_tolerance,
        ),
    ];
    let details = json!({
        "eta": report.eta,
        "seed": report.seed,
        "starts": report.starts.len(),
        "common_constant": report.common_constant,
        "expected_constant": report.expected_constant,
        "distance_to_literal": report.distance_to_literal,
    });
    Ok((checks, details))
}

fn run_closed_form(case: &VerificationCase, kind: GrowthKind) -> Outcome {
    let p = &case.parameters;
    let spec = &case.spec;
    if spec.growth.kind != kind {
        return Err(format!("claim needs {kind:?} growth, model has {:?}", spec.growth.kind));
    }
    spec.validate().into_result().map_err(|e| e.to_string())?;
    let data = AveragedData::from_spec(spec).map_err(|e| e.to_string())?;
    let x = match kind {
        GrowthKind::Logistic => logistic_closed_form(&data),
        _ => linear_closed_form(&data),
    };
    let roots = solve_averaged(&data, &spec.growth, &SolverOptions::default());
    let mut checks = vec![Check::holds("exactly one root", roots.len() == 1)];
    let mut details = serde_json::Map::new();
    details.insert("closed_form".into(), json!([x, 1.0 - x]));
    details.insert("roots".into(), serde_json::to_value(&roots).unwrap_or(Value::Null));
    if let Some(r) = roots.first() {
        let d = (r.x - x).abs().max((r.y - (1.0 - x)).abs());
        checks.push(Check::within("root vs closed form", d, p.root_tolerance));
    }
    match check_condition_c(&roots, &data) {
        Ok(deg) => {
            checks.push(Check::holds("sign sum is +-1", deg.sign_sum.abs() == 1));
            details.insert("sign_sum".into(), json!(deg.sign_sum));
        }
        Err(e) => checks.push(Check::holds(format!("sign sum: {e}"), false)),
    }
    let constant = spec.rates.iter().chain(spec.mutation.iter().flatten()).all(|s| s.is_constant());
    if p.simulate && constant {
        let report = find_periodic(spec, &p.history(), &p.search()).map_err(|e| e.to_string())?;
        let limit = report.mean_state();
        checks.push(Check::holds("simulation converged", report.converged));
        checks.push(Check::within(
            "simulation vs closed form",
            limit.sup_distance(&[x, 1.0 - x]),
            p.simulation_tolerance,
        ));
        details.insert("simulated_limit".into(), json!(limit));
    }
    Ok((checks, Value::Object(details)))
}

fn run_sweep(case: &VerificationCase) -> Outcome {
    let p = &case.parameters;
    let spec = &case.spec;
    let delays: Vec<f64> = p.sweep_delays.iter().map(|d| d * spec.period).collect();
    let sweep =
        delay_independence_sweep(spec, &delays, &p.history(), &p.search()).map_err(|e| e.to_string())?;
    let mut checks = Vec::new();
    let mut entries = Vec::new();
    for e in &sweep.entries {
        for mut c in orbit_checks(spec, &e.report, p.residual_tolerance) {
            c.label = format!("tau={}: {}", e.delay, c.label);
            checks.push(c);
        }
        entries.push(json!({ "delay": e.delay, "orbit": orbit_details(&e.report) }));
    }
    Ok((checks, json!({ "entries": entries })))
}

/// Runs one case; errors become failing results.
pub fn run_case(case: &VerificationCase) -> CaseResult {
    let outcome = match case.claim {
        Claim::CpInvariance => run_cp_invariance(case),
        Claim::PeriodicOnSimplex => run_periodic(case, false),
        Claim::TeopBounds => run_periodic(case, true),
        Claim::TeosUniqueness => run_uniqueness(case),
        Claim::Corollary1Form => run_closed_form(case, GrowthKind::Linear),
        Claim::Corollary2Form => run_closed_form(case, GrowthKind::Logistic),
        Claim::DelayIndependence => run_sweep(case),
    };
    match outcome {
        Ok((checks, details)) => {
            let passed = !checks.is_empty() && checks.iter().all(|c| c.passed);
            let margin = checks
                .iter()
                .filter_map(|c| Some(c.tolerance? - c.observed?))
                .reduce(f64::min);
            CaseResult {
                name: case.name.clone(),
                claim: case.claim,
                verdict: if passed { Verdict::Pass } else { Verdict::Fail },
                margin,
                checks,
                details,
                error: None,
            }
        }
        Err(message) => CaseResult {
            name: case.name.clone(),
            claim: case.claim,
            verdict: Verdict::Fail,
            margin: None,
            checks: Vec::new(),
            details: Value::Null,
            error: Some(message),
        },
    }
}

/// Runs the cases in parallel; results are ordered by case name.
pub fn run_suite(cases: &[VerificationCase]) -> SuiteReport {
    let mut results: Vec<CaseResult> = cases.par_iter().map(run_case).collect();
    results.sort_by(|a, b| a.name.cmp(&b.name));
    let passed = results.iter().filter(|r| r.passed()).count();
    SuiteReport {
        failed: results.len() - passed,
        all_passed: passed == results.len(),
        passed,
        cases: results,
    }
}

impl SuiteReport {
    /// Fixed-width summary, one line per case.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<26} {:<20} {:<7} {:>12}", "case", "claim", "verdict", "margin");
        for r in &self.cases {
            let margin = r.margin.map_or_else(|| "-".to_string(), |m| format!("{m:.3e}"));
            let verdict = if r.passed() { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{:<26} {:<20} {:<7} {:>12}", r.name, r.claim.as_str(), verdict, margin);
            if let Some(e) = &r.error {
                let _ = writeln!(out, "    error: {e}");
            }
            for c in r.checks.iter().filter(|c| !c.passed) {
                match (c.observed, c.tolerance) {
                    (Some(o), Some(t)) => {
                        let _ = writeln!(out, "    failed: {} = {o:.3e} > {t:.1e}", c.label);
                    }
                    _ => {
                        let _ = writeln!(out, "    failed: {}", c.label);
                    }
                }
            }
        }
        let _ = writeln!(out, "{} passed, {} failed", self.passed, self.failed);
        out
    }

    pub fn to_junit(&self) -> String {
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            out,
            "<testsuite name=\"quasidelay-verify\" tests=\"{}\" failures=\"{}\">",
            self.cases.len(),
            self.failed
        );
        for r in &self.cases {
            let open = format!(
                "  <testcase classname=\"{}\" name=\"{}\"",
                r.claim.as_str(),
                xml_escape(&r.name)
            );
            if r.passed() {
                let _ = writeln!(out, "{open}/>");
                continue;
            }
            let mut reasons: Vec<String> = r
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| match (c.observed, c.tolerance) {
                    (Some(o), Some(t)) => format!("{}: {o:e} > {t:e}", c.label),
                    _ => c.label.clone(),
                })
                .collect();
            if let Some(e) = &r.error {
                reasons.push(e.clone());
            }
            let message = xml_escape(&reasons.join("; "));
            let _ = writeln!(out, "{open}>");
            let _ = writeln!(out, "    <failure message=\"{message}\">{message}</failure>");
            let _ = writeln!(out, "  </testcase>");
        }
        out.push_str("</testsuite>\n");
        out
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_on_reference_values() {
        let d = AveragedData::from_spec(&scenarios::e1()).unwrap();
        assert!((linear_closed_form(&d) - (0.89f64.sqrt() + 0.7) / 2.0).abs() < 1e-14);
        let d = AveragedData::from_spec(&scenarios::e2()).unwrap();
        assert!((linear_closed_form(&d) - 0.5).abs() < 1e-14);
        let d = AveragedData::from_spec(&scenarios::l1()).unwrap();
        assert!((logistic_closed_form(&d) - 19.0 / 30.0).abs() < 1e-14);
    }

    #[test]
    fn claim_names() {
        let s = serde_json::to_string(&[Claim::Corollary1Form, Claim::TeopBounds]).unwrap();
        assert_eq!(s, r#"["COROLLARY1_FORM","TEOP_BOUNDS"]"#);
        let c: Claim = serde_json::from_str(r#""CP_INVARIANCE""#).unwrap();
        assert_eq!(c, Claim::CpInvariance);
    }

    #[test]
    fn selection_by_scenario_prefix() {
        let e1 = select_cases(builtin_cases(), "E1");
        assert_eq!(e1.len(), 2);
        assert_eq!(select_cases(builtin_cases(), "L1_logistic_root").len(), 1);
        assert!(select_cases(builtin_cases(), "E").is_empty());
        assert_eq!(select_cases(builtin_cases(), "all").len(), builtin_cases().len());
    }

    #[test]
    fn wrong_growth_is_a_failed_case() {
        let case = VerificationCase {
            name: "x".into(),
            claim: Claim::Corollary2Form,
            spec: scenarios::e1(),
            parameters: CaseParameters::default(),
        };
        let r = run_case(&case);
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.error.unwrap().contains("Logistic"));
    }

    #[test]
    fn closed_form_case_passes_without_simulation() {
        let case = VerificationCase {
            name: "L1".into(),
            claim: Claim::Corollary2Form,
            spec: scenarios::l1(),
            parameters: CaseParameters {
                simulate: false,
                ..Default::default()
            },
        };
        let r = run_case(&case);
        assert!(r.passed(), "{r:?}");
        assert!(r.margin.unwrap() > 0.0);
    }

    #[test]
    fn junit_escapes_and_counts() {
        let report = SuiteReport {
            cases: vec![CaseResult {
                name: "a<b".into(),
                claim: Claim::CpInvariance,
                verdict: Verdict::Fail,
                margin: None,
                checks: vec![],
                details: Value::Null,
                error: Some("x & y".into()),
            }],
            passed: 0,
            failed: 1,
            all_passed: false,
        };
        let xml = report.to_junit();
        assert!(xml.contains("failures=\"1\""));
        assert!(xml.contains("a&lt;b"));
        assert!(xml.contains("x &amp; y"));
    }
}
