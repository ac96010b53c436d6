use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("argument {x} outside the growth-function domain [0,1]")]
    Domain { x: f64 },
    #[error("model hypotheses violated: {}", .0.join("; "))]
    Hypotheses(Vec<String>),
    #[error("model has {found} species, operation requires {required}")]
    SpeciesCount { found: usize, required: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("step size must be positive and finite, got {0}")]
    StepSize(f64),
    #[error("delayed time {t} precedes the retained history window starting at {window_start}")]
    HistoryUnderflow { t: f64, window_start: f64 },
    #[error("query time {t} outside history window [{start}, {end}]")]
    OutOfWindow { t: f64, start: f64, end: f64 },
    #[error("component x{component} = {value} left the admissible band at t = {t}")]
    BlowUp { t: f64, component: usize, value: f64 },
    #[error("initial history has dimension {found}, system has {expected}")]
    Dimension { found: usize, expected: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AveragingError {
    #[error("Simpson quadrature did not converge after {panels} panels (last change {change:e})")]
    NonConvergence { panels: usize, change: f64 },
    #[error("root ({x}, {y}) is degenerate: |N| = {n_value:e} below 1e-10")]
    DegenerateRoot { x: f64, y: f64, n_value: f64 },
    #[error("localization box requires 0 < eta <= nu < 1, got eta = {eta}, nu = {nu}")]
    InvalidBox { eta: f64, nu: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeriodicError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("uniqueness probe requires q = p = const in ]0,1[: {0}")]
    NotUniquenessRegime(String),
    #[error(
        "counterexample to uniqueness: starts {first} and {second} converged to orbits {distance:e} apart"
    )]
    Counterexample {
        first: usize,
        second: usize,
        distance: f64,
    },
}
