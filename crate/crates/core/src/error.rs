use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("field is singular at ({u}, {v}): u + v = 0")]
    SingularOrigin { u: f64, v: f64 },
    #[error("singular denominator at ({u}, {x})")]
    SingularDenominator { u: f64, x: f64 },
    #[error("state ({u}, {v}) is on the boundary; interior state required")]
    BoundaryState { u: f64, v: f64 },
    #[error("out of model: {0}")]
    OutOfModel(&'static str),
    #[error("regime violation: {0}")]
    Regime(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("state ({u}, {v}) is not an equilibrium (residual {residual:e})")]
    NotEquilibrium { u: f64, v: f64, residual: f64 },
    #[error("the origin is a singular equilibrium; classify it via blow-up charts")]
    OriginInput,
    #[error("invalid sweep range: {0}")]
    InvalidRange(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NullclineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("theta = 0: the u-nullcline is the parabola branch")]
    ThetaZero,
    #[error("the parabola branch requires theta = 0")]
    ThetaNonZero,
    #[error("negative discriminant {0:e} in slope quadratic")]
    NegativeDiscriminant(f64),
    #[error("empty branch: {0}")]
    EmptyBranch(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid options: {0}")]
    InvalidOptions(&'static str),
    #[error("step size underflow at t = {t} (h = {h:e}) near ({u}, {v})")]
    StepUnderflow { t: f64, h: f64, u: f64, v: f64 },
    #[error("max_steps = {0} exceeded")]
    MaxSteps(usize),
    #[error("non-finite value at t = {0}")]
    NonFinite(f64),
    #[error("no sign change of the event function on [{t0}, {t1}]")]
    NoSignChange { t0: f64, t1: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlowupError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error("chart {chart:?} is not defined for regime {regime:?}")]
    InvalidChart {
        regime: crate::blowup::Regime,
        chart: crate::blowup::Chart,
    },
    #[error("wrong coordinate count: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("point is outside the overlap of the charts: {0}")]
    Overlap(&'static str),
    #[error("radial coordinate must be positive for blow-down, got {0}")]
    RadialZero(f64),
    #[error("no transition map between {0:?} and {1:?}")]
    NoTransition(crate::blowup::ChartId, crate::blowup::ChartId),
    #[error("regime mismatch: {0}")]
    RegimeMismatch(&'static str),
}
