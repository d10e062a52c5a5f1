//! Simulation and verification kernel for a gravity-held gas column with a
//! vacuum free boundary, damped by friction, evolved in Lagrangian
//! coordinates on the fixed reference interval (0, hbar).
//!
//! The crate is organized around five concerns:
//!
//! * [`model`] — gas parameters, the stationary column, the
//!   physical-vacuum slope, and Eulerian reconstruction;
//! * [`weighted`] — grids, the degenerate weight, weighted norms and
//!   quadrature, cut-offs, and the Hardy-quotient checker;
//! * [`solver`] — explicit time integration of the damped dynamics and of
//!   the inertialess Darcy reduction;
//! * [`energy`] — weighted energy/dissipation tables, exponential decay
//!   fitting, and pointwise convergence ratios;
//! * [`identities`] — pointwise checks of the multi-dimensional flow-map
//!   algebra on closed-form fields.

pub mod energy;
pub mod error;
pub mod identities;
pub mod model;
pub mod solver;
pub mod weighted;

pub use energy::{fit_decay, DecayFit, EnergyEntry, EnergyReport, PointwiseBounds};
pub use error::{Error, Result};
pub use identities::FlowSample;
pub use model::{EulerianField, GasParams};
pub use solver::{InitFamily, InitialData, ModelKind, Record, RunConfig, RunOutput, State1D};
pub use weighted::{CutoffPair, Grid1D, Quadrature, Spacing};
