//! Equivariant wave maps from the 2+1 dimensional wormhole into the 2-sphere.
//!
//! The crate evolves the reduced field equation on hyperboloidal slices with a
//! Chebyshev collocation method of lines, measures Bondi energy, radiation
//! coefficients and kink positions along the way, searches for the critical
//! amplitude separating kink–antikink annihilation from chain expansion, and
//! integrates the collective-coordinate ODE models for N-chains.
//!
//! Module map:
//!
//! * [`spectral`]: Chebyshev–Gauss–Lobatto grids, differentiation, quadrature,
//!   barycentric interpolation and crossing search.
//! * [`wavemap`]: coordinates, kinks and chains, initial data, energies and the
//!   semi-discrete right-hand side.
//! * [`evolve`]: adaptive Radau IIA time stepping for fields and chains.
//! * [`diagnostics`]: Bondi energy, radiation coefficients, flux balance,
//!   kink tracking and energy quanta.
//! * [`ode_models`]: reduced chain dynamics, exact and asymptotic solutions,
//!   linearized growing modes.
//! * [`threshold`]: classification of evolutions and bisection on amplitude.
//! * [`fit`]: log-law fitting of kink trajectories.
//! * [`config`], [`io`]: key=value configuration and CSV/JSON persistence.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod evolve;
pub mod fit;
pub mod io;
pub mod ode_models;
pub mod par;
pub mod spectral;
pub mod threshold;
pub mod wavemap;

pub use error::{Error, Result};
pub use par::Execution;
pub use spectral::Grid;
