//! Acceptance criteria. Each test writes one `PASS`/`FAIL` line to stderr
//! (bypassing output capture) and then asserts.

use std::io::Write;

use quasidelay::averaging::{check_condition_c, solve_averaged, AveragedData, SolverOptions};
use quasidelay::dde::{
    integrate, integrate_model, ConstantHistory, DelaySystem, IntegrationConfig,
    PastLookup, StepHistory,
};
use quasidelay::periodic::{delay_independence_sweep, find_periodic, uniqueness_probe, PeriodicSearchConfig};
use quasidelay::{verify, GrowthFunction, IntegrateError, ModelSpec, PeriodicSignal, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, title: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("[{verdict}] criterion {id:>2} {title}: {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn c(v: f64) -> PeriodicSignal {
    PeriodicSignal::constant(1.0, v)
}

fn constant_model(growth: GrowthFunction, f0: f64, f1: f64) -> ModelSpec {
    ModelSpec::two_species(1.0, growth, [c(f0), c(f1)], [c(0.5), c(1.3)], c(0.9), c(0.1))
}

fn e1() -> ModelSpec {
    constant_model(GrowthFunction::linear(), 2.0, 1.0)
}

fn e2() -> ModelSpec {
    constant_model(GrowthFunction::linear(), 1.0, 1.0)
}

fn l1() -> ModelSpec {
    constant_model(GrowthFunction::logistic(), 2.0, 1.0)
}

fn p1() -> ModelSpec {
    ModelSpec::two_species(
        1.0,
        GrowthFunction::logistic(),
        [PeriodicSignal::new(1.0, 2.0, vec![1.0], vec![]), c(1.0)],
        [c(0.5), c(1.3)],
        PeriodicSignal::new(1.0, 0.8, vec![], vec![0.1]),
        PeriodicSignal::new(1.0, 0.15, vec![0.05], vec![]),
    )
}

fn uniqueness_model(growth: GrowthFunction, eta: f64) -> ModelSpec {
    ModelSpec::two_species(
        1.0,
        growth,
        [PeriodicSignal::new(1.0, 2.0, vec![], vec![1.0]), c(1.0)],
        [c(0.5), c(1.3)],
        c(eta),
        c(eta),
    )
}

/// Long run from a fixed start; returns the final state.
fn settle(spec: &ModelSpec, periods: f64) -> StateVector {
    let history = ConstantHistory::new(vec![0.6, 0.4]);
    let cfg = IntegrationConfig::new(1.0 / 256.0, periods).with_stride(256);
    let traj = integrate_model(spec, &history, 0.0, &cfg).unwrap();
    traj.sample_states.last().unwrap().clone()
}

#[test]
fn library_scenarios_match_acceptance_parameters() {
    use verify::scenarios;
    assert_eq!(scenarios::e1(), e1());
    assert_eq!(scenarios::e2(), e2());
    assert_eq!(scenarios::l1(), l1());
    assert_eq!(scenarios::p1(), p1());
    assert_eq!(scenarios::s1(), uniqueness_model(GrowthFunction::linear(), 0.5));
    assert_eq!(scenarios::s2(), uniqueness_model(GrowthFunction::logistic(), 0.3));
}

#[test]
fn criterion_01_simplex_invariance() {
    let history = StepHistory {
        start: 0.0,
        before: StateVector(vec![0.7, 0.5]),
        at_start: StateVector(vec![0.6, 0.4]),
    };
    let cfg = IntegrationConfig::new(1.0 / 256.0, 100.0);
    let traj = integrate_model(&e1(), &history, 0.0, &cfg).unwrap();
    let worst = traj
        .sample_states
        .iter()
        .map(|s| (s[0] + s[1] - 1.0).abs())
        .fold(0.0, f64::max);
    let covered = *traj.sample_times.last().unwrap() >= 100.0 - 1e-12 && traj.len() == 25_601;
    report(
        1,
        "CP invariance on E1",
        covered && worst <= 1e-8,
        format!("max |x0+x1-1| = {worst:.3e} over {} samples (tol 1e-8)", traj.len()),
    );
}

#[test]
fn criterion_02_linear_unequal_rates() {
    let oracle = (0.89f64.sqrt() + 0.7) / 2.0;
    assert!((oracle - 0.8216990566).abs() < 1e-10);
    let spec = e1();
    let data = AveragedData::from_spec(&spec).unwrap();
    let roots = solve_averaged(&data, &spec.growth, &SolverOptions::default());
    let root_err = roots
        .first()
        .map_or(f64::INFINITY, |r| (r.x - oracle).abs().max((r.y - (1.0 - oracle)).abs()));
    let sim = settle(&spec, 200.0);
    let sim_err = sim.sup_distance(&[oracle, 1.0 - oracle]);
    report(
        2,
        "E1 root and simulation",
        roots.len() == 1 && root_err <= 1e-10 && sim_err <= 1e-6,
        format!(
            "{} root(s), |root - oracle| = {root_err:.3e} (tol 1e-10), |x(200) - oracle| = {sim_err:.3e} (tol 1e-6)",
            roots.len()
        ),
    );
}

#[test]
fn criterion_03_linear_equal_rates() {
    let spec = e2();
    let data = AveragedData::from_spec(&spec).unwrap();
    let roots = solve_averaged(&data, &spec.growth, &SolverOptions::default());
    let err = roots
        .first()
        .map_or(f64::INFINITY, |r| (r.x - 0.5).abs().max((r.y - 0.5).abs()));
    report(
        3,
        "E2 root",
        roots.len() == 1 && err <= 1e-10,
        format!("{} root(s), |root - (0.5, 0.5)| = {err:.3e} (tol 1e-10)", roots.len()),
    );
}

#[test]
fn criterion_04_logistic_constant() {
    let spec = l1();
    let (x, y) = (19.0 / 30.0, 11.0 / 30.0);
    let data = AveragedData::from_spec(&spec).unwrap();
    let roots = solve_averaged(&data, &spec.growth, &SolverOptions::default());
    let root_err = roots
        .first()
        .map_or(f64::INFINITY, |r| (r.x - x).abs().max((r.y - y).abs()));
    let sim_err = settle(&spec, 200.0).sup_distance(&[x, y]);
    report(
        4,
        "L1 root and simulation",
        roots.len() == 1 && root_err <= 1e-10 && sim_err <= 1e-6,
        format!(
            "{} root(s), |root - (19/30, 11/30)| = {root_err:.3e} (tol 1e-10), simulation {sim_err:.3e} (tol 1e-6)",
            roots.len()
        ),
    );
}

fn orbit_within_box(samples: &[StateVector], eta: f64, nu: f64) -> (bool, f64) {
    let mut ok = true;
    let mut simplex: f64 = 0.0;
    for s in samples {
        ok &= s[0] >= eta - 1e-6 && s[0] <= nu + 1e-6;
        ok &= s[1] >= 1.0 - nu - 1e-6 && s[1] <= 1.0 - eta + 1e-6;
        simplex = simplex.max((s[0] + s[1] - 1.0).abs());
    }
    (ok && simplex <= 1e-8, simplex)
}

#[test]
fn criterion_05_periodic_orbit_bounds() {
    let spec = p1();
    let search = PeriodicSearchConfig::default();
    let orbit = find_periodic(&spec, &ConstantHistory::new(vec![0.5, 0.5]), &search).unwrap();
    let (inside, simplex) = orbit_within_box(&orbit.orbit_samples, 0.1, 0.9);
    let (lo, hi) = (orbit.component_min[0], orbit.component_max[0]);
    report(
        5,
        "P1 periodic orbit",
        orbit.converged && orbit.residual <= 1e-6 && orbit.orbit_samples.len() == 256 && inside,
        format!(
            "residual {:.3e} (tol 1e-6), x0 in [{lo:.6}, {hi:.6}] vs [0.1, 0.9], max |x0+x1-1| = {simplex:.3e}",
            orbit.residual
        ),
    );
}

#[test]
fn criterion_06_delay_sweep() {
    let spec = p1();
    let sweep = delay_independence_sweep(
        &spec,
        &[0.0, 0.3, 2.7],
        &ConstantHistory::new(vec![0.5, 0.5]),
        &PeriodicSearchConfig::default(),
    )
    .unwrap();
    let mut pass = sweep.entries.len() == 3;
    let mut parts = Vec::new();
    for e in &sweep.entries {
        let (inside, _) = orbit_within_box(&e.report.orbit_samples, 0.1, 0.9);
        pass &= e.report.converged && e.report.residual <= 1e-6 && inside;
        parts.push(format!(
            "tau={}: residual {:.1e}, x0 in [{:.4}, {:.4}]",
            e.delay, e.report.residual, e.report.component_min[0], e.report.component_max[0]
        ));
    }
    report(6, "delay independence on P1", pass, parts.join("; "));
}

#[test]
fn criterion_07_uniqueness() {
    let search = PeriodicSearchConfig::default();
    let s1 = uniqueness_probe(&uniqueness_model(GrowthFunction::linear(), 0.5), &search).unwrap();
    let s2 = uniqueness_probe(&uniqueness_model(GrowthFunction::logistic(), 0.3), &search).unwrap();
    let amp = |r: &quasidelay::periodic::UniquenessReport| {
        r.starts.iter().map(|s| s.amplitude).fold(0.0, f64::max)
    };
    let s1_ok = s1.starts.len() == 16
        && s1.all_converged
        && amp(&s1) <= 1e-6
        && s1.max_pairwise_distance <= 1e-6
        && s1.common_constant.sup_distance(&[0.5, 0.5]) <= 1e-6;
    let s2_ok = s2.starts.len() == 16
        && s2.all_converged
        && amp(&s2) <= 1e-6
        && s2.max_pairwise_distance <= 1e-6;
    report(
        7,
        "uniqueness S1/S2",
        s1_ok && s2_ok,
        format!(
            "S1 limit {:?} spread {:.1e}; S2 limit {:?} spread {:.1e}, distance to (0.3, 0.7) {:.1e}",
            s1.common_constant.0,
            s1.max_pairwise_distance,
            s2.common_constant.0,
            s2.max_pairwise_distance,
            s2.common_constant.sup_distance(&[0.3, 0.7])
        ),
    );
}

fn psi(linear: bool, x: f64) -> f64 {
    if linear {
        x
    } else {
        x * (1.0 - x)
    }
}

/// Averaged residual written out from the definition.
fn residual(d: &AveragedData, linear: bool, x: f64, y: f64) -> [f64; 2] {
    let (px, py) = (psi(linear, x), psi(linear, y));
    let out = d.mean_f0 * px + d.mean_f1 * py;
    [
        d.mean_qf0 * px + d.mean_pf1 * py - x * out,
        (d.mean_f0 - d.mean_qf0) * px + (d.mean_f1 - d.mean_pf1) * py - y * out,
    ]
}

#[test]
fn criterion_08_jacobian_sign_machinery() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for linear in [true, false] {
        let growth = if linear { GrowthFunction::linear() } else { GrowthFunction::logistic() };
        for _ in 0..100 {
            let (f0, f1) = (rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0));
            let (q, p) = (rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95));
            let d = AveragedData {
                mean_f0: f0,
                mean_f1: f1,
                mean_qf0: q * f0,
                mean_pf1: p * f1,
                eta: q.min(p),
                nu: q.max(p),
            };
            let (x, y) = (rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99));
            let h = 1e-5;
            let dx = |s: f64| residual(&d, linear, x + s, y);
            let dy = |s: f64| residual(&d, linear, x, y + s);
            let (a, b) = (dx(h), dx(-h));
            let (e, g) = (dy(h), dy(-h));
            let j = [
                [(a[0] - b[0]) / (2.0 * h), (e[0] - g[0]) / (2.0 * h)],
                [(a[1] - b[1]) / (2.0 * h), (e[1] - g[1]) / (2.0 * h)],
            ];
            let fd = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let n = d.eval_n(&growth, x, y);
            worst = worst.max((n - fd).abs() / fd.abs().max(1.0));
        }
    }
    let mut sums = Vec::new();
    for spec in [e1(), e2(), l1()] {
        let data = AveragedData::from_spec(&spec).unwrap();
        let roots = solve_averaged(&data, &spec.growth, &SolverOptions::default());
        sums.push(check_condition_c(&roots, &data).map(|r| r.sign_sum).unwrap_or(0));
    }
    report(
        8,
        "eval_N and sign sums",
        worst <= 1e-6 && sums.iter().all(|s| s.abs() == 1),
        format!("max relative N error {worst:.3e} (tol 1e-6), sign sums E1/E2/L1 = {sums:?}"),
    );
}

/// `x' = -x(t - 1)` with `x = 1` before `t = 0`.
struct UnitLag;

impl DelaySystem for UnitLag {
    fn dim(&self) -> usize {
        1
    }
    fn max_delay(&self) -> f64 {
        1.0
    }
    fn derivative(
        &self,
        t: f64,
        _state: &[f64],
        past: &dyn PastLookup,
        out: &mut [f64],
    ) -> Result<(), IntegrateError> {
        out[0] = -past.component_at(t - 1.0, 0)?;
        Ok(())
    }
}

/// Exact solution by method of steps on polynomials: on `[k, k + 1]`,
/// `x(k + s) = x(k) - ∫_0^s x_{prev}(u) du`.
fn unit_lag_exact(t: f64) -> f64 {
    let mut poly = vec![1.0];
    let mut k = 0.0;
    loop {
        let start: f64 = poly.iter().sum();
        let mut next = vec![start];
        next.extend(poly.iter().enumerate().map(|(i, a)| -a / (i as f64 + 1.0)));
        if t <= k + 1.0 {
            let s = t - k;
            return next.iter().rev().fold(0.0, |acc, a| acc * s + a);
        }
        poly = next;
        k += 1.0;
    }
}

fn order_errors(spec: &ModelSpec) -> Vec<(f64, f64)> {
    let history = ConstantHistory::new(vec![0.5, 0.5]);
    let reference_n = 256 * 64;
    let reference = integrate_model(spec, &history, 0.0, &IntegrationConfig::new(1.0 / reference_n as f64, 1.0))
        .unwrap();
    [64usize, 128, 256]
        .iter()
        .map(|&n| {
            let traj = integrate_model(spec, &history, 0.0, &IntegrationConfig::new(1.0 / n as f64, 1.0)).unwrap();
            let ratio = reference_n / n;
            let err = traj
                .sample_states
                .iter()
                .enumerate()
                .map(|(k, s)| s.sup_distance(&reference.sample_states[k * ratio]))
                .fold(0.0, f64::max);
            (1.0 / n as f64, err)
        })
        .collect()
}

#[test]
fn criterion_09_integrator_accuracy() {
    let errs = order_errors(&p1());
    let (mx, my) = errs.iter().fold((0.0, 0.0), |(a, b), (h, e)| (a + h.ln(), b + e.ln()));
    let (mx, my) = (mx / 3.0, my / 3.0);
    let (num, den) = errs.iter().fold((0.0, 0.0), |(n, d), (h, e)| {
        (n + (h.ln() - mx) * (e.ln() - my), d + (h.ln() - mx).powi(2))
    });
    let slope = num / den;

    let cfg = IntegrationConfig::new(1.0 / 256.0, 3.0);
    let traj = integrate(&UnitLag, &ConstantHistory::new(vec![1.0]), 0.0, &cfg).unwrap();
    let scalar_err = traj
        .sample_times
        .iter()
        .zip(&traj.sample_states)
        .map(|(t, s)| (s[0] - unit_lag_exact(*t)).abs())
        .fold(0.0, f64::max);
    report(
        9,
        "integrator order and scalar DDE",
        slope >= 3.0 && scalar_err <= 1e-8,
        format!(
            "P1 slope {slope:.2} (errors {:.2e}, {:.2e}, {:.2e}), scalar max error {scalar_err:.2e} (tol 1e-8)",
            errs[0].1, errs[1].1, errs[2].1
        ),
    );
}

#[test]
fn criterion_10_roots_localized() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_box: f64 = f64::NEG_INFINITY;
    let mut worst_sum: f64 = 0.0;
    let mut roots_seen = 0;
    for draw in 0..20 {
        let growth = if draw % 2 == 0 { GrowthFunction::linear() } else { GrowthFunction::logistic() };
        let qm = rng.gen_range(0.2..0.8);
        let pm = rng.gen_range(0.2..0.8);
        let qa = rng.gen_range(0.0..0.15);
        let pa = rng.gen_range(0.0..0.15);
        let f0 = rng.gen_range(1.0..3.0);
        let f1 = rng.gen_range(1.0..3.0);
        let fa = rng.gen_range(0.0..0.9);
        let spec = ModelSpec::two_species(
            1.0,
            growth,
            [PeriodicSignal::new(1.0, f0, vec![f0 * fa], vec![]), c(f1)],
            [c(0.5), c(1.3)],
            PeriodicSignal::new(1.0, qm, vec![], vec![qa]),
            PeriodicSignal::new(1.0, pm, vec![pa], vec![]),
        );
        let data = AveragedData::from_spec(&spec).unwrap();
        assert!(0.0 < data.eta && data.eta < data.nu && data.nu < 1.0);
        for r in solve_averaged(&data, &spec.growth, &SolverOptions::default()) {
            roots_seen += 1;
            let outside = [
                data.eta - r.x,
                r.x - data.nu,
                1.0 - data.nu - r.y,
                r.y - (1.0 - data.eta),
            ]
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
            worst_box = worst_box.max(outside);
            worst_sum = worst_sum.max((r.x + r.y - 1.0).abs());
        }
    }
    report(
        10,
        "roots inside localization box",
        roots_seen >= 20 && worst_box <= 1e-9 && worst_sum <= 1e-9,
        format!("{roots_seen} roots, max box excursion {worst_box:.3e}, max |x+y-1| = {worst_sum:.3e} (tol 1e-9)"),
    );
}
