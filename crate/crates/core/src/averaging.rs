//! Time averages of the two-species coefficients and the averaged algebraic
//! system they define.
//!
//! With `q = Q_00`, `p = Q_10` and bars denoting one-period means, the
//! averaged system on the open unit square is
//!
//! ```text
//! r1 = qf0·ψ(x) + pf1·ψ(y) - x (f0·ψ(x) + f1·ψ(y)) = 0
//! r2 = (f0 - qf0)·ψ(x) + (f1 - pf1)·ψ(y) - y (f0·ψ(x) + f1·ψ(y)) = 0
//! ```
//!
//! Its roots are counted with the sign of the Jacobian determinant `N(x, y)`;
//! a nonzero sign sum is the degree condition for existence of a periodic
//! orbit in the box `[η, ν] × [1 - ν, 1 - η]`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::AveragingError;
use crate::growth::GrowthFunction;
use crate::model::{ModelSpec, HYPOTHESIS_SAMPLES};
use crate::signal::PeriodicSignal;

const MIN_PANELS: usize = 64;
const MAX_PANELS: usize = 1 << 20;
const QUADRATURE_TOL: f64 = 1e-12;

/// Roots with `|N|` below this are degenerate for the sign count.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Membership tolerance for the localization box.
pub const BOX_TOL: f64 = 1e-9;

/// Mean of `f` over `[0, period]` by composite Simpson with panel doubling.
///
/// Starts at `start_panels` (rounded up to an even count, at least 64) and
/// doubles until two successive estimates differ by less than `1e-12`.
pub fn periodic_mean(
    f: impl Fn(f64) -> f64,
    period: f64,
    start_panels: usize,
) -> Result<f64, AveragingError> {
    let mut panels = start_panels.max(MIN_PANELS).next_power_of_two();
    let mut width = period / panels as f64;
    let ends = f(0.0) + f(period);
    let mut evens: f64 = (1..panels / 2).map(|k| f(2.0 * k as f64 * width)).sum();
    let mut odds: f64 = (0..panels / 2).map(|k| f((2 * k + 1) as f64 * width)).sum();
    let mut last_change = f64::NAN;
    let mut estimate = width / 3.0 * (ends + 4.0 * odds + 2.0 * evens) / period;
    while panels < MAX_PANELS {
        panels *= 2;
        width /= 2.0;
        evens += odds;
        odds = (0..panels / 2).map(|k| f((2 * k + 1) as f64 * width)).sum();
        let next = width / 3.0 * (ends + 4.0 * odds + 2.0 * evens) / period;
        let change = (next - estimate).abs();
        estimate = next;
        if change < QUADRATURE_TOL {
            return Ok(estimate);
        }
        last_change = change;
    }
    Err(AveragingError::NonConvergence {
        panels,
        change: last_change,
    })
}

/// One-period mean of a signal.
pub fn time_average(signal: &PeriodicSignal) -> Result<f64, AveragingError> {
    periodic_mean(|t| signal.value(t), signal.period, 4 * signal.harmonics() + 4)
}

/// One-period mean of the pointwise product of two signals.
pub fn time_average_product(
    a: &PeriodicSignal,
    b: &PeriodicSignal,
) -> Result<f64, AveragingError> {
    periodic_mean(
        |t| a.value(t) * b.value(t),
        a.period,
        4 * (a.harmonics() + b.harmonics()) + 4,
    )
}

/// Means entering the averaged system, plus `η`, `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AveragedData {
    pub mean_f0: f64,
    pub mean_f1: f64,
    pub mean_qf0: f64,
    pub mean_pf1: f64,
    pub eta: f64,
    pub nu: f64,
}

impl AveragedData {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self, AveragingError> {
        spec.require_two_species()?;
        let (f0, f1) = (&spec.rates[0], &spec.rates[1]);
        let (q, p) = (spec.q(), spec.p());
        let (q_lo, q_hi) = q.grid_extrema(HYPOTHESIS_SAMPLES);
        let (p_lo, p_hi) = p.grid_extrema(HYPOTHESIS_SAMPLES);
        Ok(Self {
            mean_f0: time_average(f0)?,
            mean_f1: time_average(f1)?,
            mean_qf0: time_average_product(q, f0)?,
            mean_pf1: time_average_product(p, f1)?,
            eta: q_lo.min(p_lo),
            nu: q_hi.max(p_hi),
        })
    }

    /// `(r1, r2)` at `(x, y)`.
    pub fn residual(&self, growth: &GrowthFunction, x: f64, y: f64) -> (f64, f64) {
        let (px, py) = (growth.psi_unchecked(x), growth.psi_unchecked(y));
        let total = self.mean_f0 * px + self.mean_f1 * py;
        (
            self.mean_qf0 * px + self.mean_pf1 * py - x * total,
            (self.mean_f0 - self.mean_qf0) * px + (self.mean_f1 - self.mean_pf1) * py - y * total,
        )
    }

    /// Analytic Jacobian `[[∂r1/∂x, ∂r1/∂y], [∂r2/∂x, ∂r2/∂y]]`.
    pub fn jacobian(&self, growth: &GrowthFunction, x: f64, y: f64) -> [[f64; 2]; 2] {
        let (px, py) = (growth.psi_unchecked(x), growth.psi_unchecked(y));
        let (dx, dy) = (growth.psi_prime_unchecked(x), growth.psi_prime_unchecked(y));
        let (f0, f1, qf0, pf1) = (self.mean_f0, self.mean_f1, self.mean_qf0, self.mean_pf1);
        [
            [
                qf0 * dx - f0 * (px + x * dx) - f1 * py,
                (pf1 - f1 * x) * dy,
            ],
            [
                (f0 - qf0 - f0 * y) * dx,
                (f1 - pf1) * dy - f1 * (py + y * dy) - f0 * px,
            ],
        ]
    }

    /// `N(x, y)`: determinant of the Jacobian of the averaged field.
    pub fn eval_n(&self, growth: &GrowthFunction, x: f64, y: f64) -> f64 {
        let j = self.jacobian(growth, x, y);
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    }

    /// The determinant formula with `y ψ'(x)` in the second diagonal factor
    /// instead of `y ψ'(y)`. Coincides with [`AveragedData::eval_n`] when
    /// `ψ'` is constant.
    pub fn eval_n_literal(&self, growth: &GrowthFunction, x: f64, y: f64) -> f64 {
        let (px, py) = (growth.psi_unchecked(x), growth.psi_unchecked(y));
        let (dx, dy) = (growth.psi_prime_unchecked(x), growth.psi_prime_unchecked(y));
        let (f0, f1, qf0, pf1) = (self.mean_f0, self.mean_f1, self.mean_qf0, self.mean_pf1);
        (qf0 * dx - f0 * (px + x * dx) - f1 * py)
            * ((f1 - pf1) * dy - f1 * (py + y * dx) - f0 * px)
            - (f0 - qf0 - f0 * y) * (pf1 - f1 * x) * dx * dy
    }

    pub fn localization_box(&self) -> Result<LocalizationBox, AveragingError> {
        if !(self.eta > 0.0 && self.eta <= self.nu && self.nu < 1.0) {
            return Err(AveragingError::InvalidBox {
                eta: self.eta,
                nu: self.nu,
            });
        }
        Ok(self.box_unchecked())
    }

    fn box_unchecked(&self) -> LocalizationBox {
        LocalizationBox {
            x: [self.eta, self.nu],
            y: [1.0 - self.nu, 1.0 - self.eta],
            collapsed: self.eta == self.nu,
        }
    }
}

/// `[η, ν] × [1 - ν, 1 - η]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalizationBox {
    pub x: [f64; 2],
    pub y: [f64; 2],
    /// `η = ν`: the box is a single point.
    pub collapsed: bool,
}

impl LocalizationBox {
    pub fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        x >= self.x[0] - tol && x <= self.x[1] + tol && y >= self.y[0] - tol && y <= self.y[1] + tol
    }
}

/// Root of the averaged system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlgebraicSolution {
    pub x: f64,
    pub y: f64,
    pub residual_norm: f64,
    /// Jacobian determinant `N(x, y)`.
    pub n_value: f64,
    /// Literal-formula value, present only when it differs from `n_value`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_value_literal: Option<f64>,
    pub in_box: bool,
}

/// Grid scan and Newton settings for [`solve_averaged`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub grid: usize,
    pub seed_threshold: f64,
    pub newton_tol: f64,
    pub accept_tol: f64,
    pub dedup_radius: f64,
    pub max_iterations: usize,
    /// Roots closer than this to the square's boundary are discarded.
    pub boundary_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            grid: 256,
            seed_threshold: 1e-3,
            newton_tol: 1e-12,
            accept_tol: 1e-10,
            dedup_radius: 1e-6,
            max_iterations: 100,
            boundary_margin: 1e-8,
        }
    }
}

fn norm(r: (f64, f64)) -> f64 {
    r.0.hypot(r.1)
}

fn newton(
    data: &AveragedData,
    growth: &GrowthFunction,
    mut x: f64,
    mut y: f64,
    opts: &SolverOptions,
) -> (f64, f64, f64) {
    let mut r = data.residual(growth, x, y);
    for _ in 0..opts.max_iterations {
        if r.0.abs().max(r.1.abs()) <= opts.newton_tol {
            break;
        }
        let j = data.jacobian(growth, x, y);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dx = -(j[1][1] * r.0 - j[0][1] * r.1) / det;
        let dy = -(-j[1][0] * r.0 + j[0][0] * r.1) / det;
        let current = norm(r);
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-10 {
            let (cx, cy) = (x + lambda * dx, y + lambda * dy);
            if cx > 0.0 && cx < 1.0 && cy > 0.0 && cy < 1.0 {
                let rc = data.residual(growth, cx, cy);
                if norm(rc) < current {
                    x = cx;
                    y = cy;
                    r = rc;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (x, y, norm(r))
}

/// Roots of the averaged system in the open unit square.
///
/// Scans a uniform cell-centred grid, seeds damped Newton at every local
/// minimum of `r1² + r2²` below the seed threshold, and merges roots within
/// the dedup radius (sup norm). Results are sorted by `(x, y)`; an empty list
/// means the existence condition on the averaged system fails.
pub fn solve_averaged(
    data: &AveragedData,
    growth: &GrowthFunction,
    opts: &SolverOptions,
) -> Vec<AlgebraicSolution> {
    let n = opts.grid;
    let coord = |k: usize| (k as f64 + 0.5) / n as f64;
    let values: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let r = data.residual(growth, coord(i), coord(j));
                    r.0 * r.0 + r.1 * r.1
                })
                .collect()
        })
        .collect();

    let mut seeds = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = values[i][j];
            if !(v < opts.seed_threshold) {
                continue;
            }
            let is_min = (i.saturating_sub(1)..=(i + 1).min(n - 1)).all(|a| {
                (j.saturating_sub(1)..=(j + 1).min(n - 1)).all(|b| values[a][b] >= v)
            });
            if is_min {
                seeds.push((coord(i), coord(j)));
            }
        }
    }

    let mut roots: Vec<(f64, f64, f64)> = seeds
        .par_iter()
        .map(|&(x, y)| newton(data, growth, x, y, opts))
        .filter(|&(x, y, res)| {
            let m = opts.boundary_margin;
            res <= opts.accept_tol && x > m && y > m && x < 1.0 - m && y < 1.0 - m
        })
        .collect();
    roots.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut unique: Vec<(f64, f64, f64)> = Vec::new();
    for r in roots {
        let dup = unique.iter_mut().find(|u| {
            (u.0 - r.0).abs().max((u.1 - r.1).abs()) <= opts.dedup_radius
        });
        match dup {
            Some(u) if r.2 < u.2 => *u = r,
            Some(_) => {}
            None => unique.push(r),
        }
    }

    let bx = data.box_unchecked();
    unique
        .into_iter()
        .map(|(x, y, residual_norm)| {
            let n_value = data.eval_n(growth, x, y);
            let literal = data.eval_n_literal(growth, x, y);
            let differs = (literal - n_value).abs() > 1e-12 * n_value.abs().max(1.0);
            AlgebraicSolution {
                x,
                y,
                residual_norm,
                n_value,
                n_value_literal: differs.then_some(literal),
                in_box: bx.contains(x, y, BOX_TOL),
            }
        })
        .collect()
}

/// Sign accounting over the roots of the averaged system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeReport {
    pub solutions: Vec<AlgebraicSolution>,
    /// `Σ sign N(x_i, y_i)`, without the leading minus of the degree.
    pub sign_sum: i32,
    pub condition_s_holds: bool,
    pub condition_c_holds: bool,
    /// Roots exist, the sign sum is nonzero, and `0 < η < ν < 1`.
    pub theorem_applicable: bool,
}

/// Computes the sign sum; fails on a root with `|N| < 1e-10`.
pub fn check_condition_c(
    solutions: &[AlgebraicSolution],
    data: &AveragedData,
) -> Result<DegreeReport, AveragingError> {
    if let Some(s) = solutions.iter().find(|s| s.n_value.abs() < DEGENERACY_TOL) {
        return Err(AveragingError::DegenerateRoot {
            x: s.x,
            y: s.y,
            n_value: s.n_value,
        });
    }
    let sign_sum = solutions
        .iter()
        .map(|s| if s.n_value > 0.0 { 1 } else { -1 })
        .sum();
    let condition_s_holds = !solutions.is_empty();
    let condition_c_holds = condition_s_holds && sign_sum != 0;
    Ok(DegreeReport {
        solutions: solutions.to_vec(),
        sign_sum,
        condition_s_holds,
        condition_c_holds,
        theorem_applicable: condition_c_holds
            && 0.0 < data.eta
            && data.eta < data.nu
            && data.nu < 1.0,
    })
}

/// Everything the `solve-algebraic` command reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgebraicReport {
    pub averages: AveragedData,
    #[serde(rename = "box")]
    pub localization_box: Option<LocalizationBox>,
    pub roots: Vec<AlgebraicSolution>,
    pub sign_sum: Option<i32>,
    pub condition_s_holds: bool,
    pub condition_c_holds: bool,
    pub theorem_applicable: bool,
    pub notes: Vec<String>,
}

/// Averages the model, solves the averaged system and checks the degree
/// condition.
pub fn analyze(spec: &ModelSpec, opts: &SolverOptions) -> Result<AlgebraicReport, AveragingError> {
    let data = AveragedData::from_spec(spec)?;
    let roots = solve_averaged(&data, &spec.growth, opts);
    let mut notes = Vec::new();
    let localization_box = match data.localization_box() {
        Ok(b) => {
            if b.collapsed {
                notes.push("eta = nu: localization box collapsed to a point".to_string());
            }
            Some(b)
        }
        Err(e) => {
            notes.push(e.to_string());
            None
        }
    };
    let (sign_sum, s_holds, c_holds, applicable) = match check_condition_c(&roots, &data) {
        Ok(r) => (
            Some(r.sign_sum),
            r.condition_s_holds,
            r.condition_c_holds,
            r.theorem_applicable,
        ),
        Err(e) => {
            notes.push(e.to_string());
            (None, !roots.is_empty(), false, false)
        }
    };
    Ok(AlgebraicReport {
        averages: data,
        localization_box,
        roots,
        sign_sum,
        condition_s_holds: s_holds,
        condition_c_holds: c_holds,
        theorem_applicable: applicable,
        notes,
    })
}
