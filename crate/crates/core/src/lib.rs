//! Spatial Bertrand-Hotelling price competition on the unit square.
//!
//! - [`market`]: torus geometry, effective costs, customer assignment.
//! - [`dynamics`]: best responses and alternating price dynamics.
//! - [`analytics`]: closed-form two-firm equilibrium, stability,
//!   nearest-neighbor statistics and power-law fitting.
//! - [`experiments`]: seeded sweeps over distances, grid sizes, firm counts
//!   and cost exponents.
//! - [`cli`]: argument parsing and the command driver.
//! - [`output`]: CSV, JSON, plot-data and SVG writers.

pub mod analytics;
pub mod cli;
pub mod dynamics;
pub mod experiments;
pub mod market;
pub mod output;

pub use analytics::{NashEquilibrium, PowerLawFit};
pub use dynamics::{BestResponse, DynamicsTrace, Method, MethodKind, PriceEngine};
pub use experiments::{ExperimentKind, ExperimentResult, ExperimentSpec};
pub use market::{Assignment, Boundary, FirmState, MarketConfig, Point};
