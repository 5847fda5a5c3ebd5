//! Slow-fast analysis of a two-dimensional parasite-host model with
//! dilution: vector fields, equilibria, nullclines, the fast-flow constant of
//! motion, a chart-switching integrator, regime experiments and the blow-up
//! of the extinction singularity.

pub mod blowup;
pub mod equilibria;
pub mod error;
pub mod geometry;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod nullclines;
pub mod regimes;
pub mod verify;

pub use blowup::{Chart, ChartEquilibrium, ChartId, ChartPoint, Regime};
pub use equilibria::{EquilibriumKind, EquilibriumReport, ReproductionNumbers};
pub use error::{BlowupError, EquilibriumError, IntegrationError, ModelError, NullclineError};
pub use geometry::Side;
pub use integrator::{Event, IntegrationOptions, Trajectory};
pub use model::{Deriv, LogState, Params, PlanarField, State};
pub use nullclines::{BranchCurve, BranchId};
pub use regimes::{Attractor, RegimeCase, RegimeReport};
