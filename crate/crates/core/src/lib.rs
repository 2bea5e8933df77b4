//! Macroscopic congested crowd motion by prediction and correction.
//!
//! Each time step first transports the density along the spontaneous
//! velocity field `V = -grad(phi) / |grad(phi)|`, where `phi` solves the
//! eikonal equation `|grad(phi)| = f` with `phi = 0` on the exits. The
//! transported density may exceed the packing limit `1`; the correction step
//! projects it back onto `0 <= rho <= 1` by solving a weighted minimum-flow
//! problem with first-order primal-dual iterations.
//!
//! Module map:
//! * [`grid`], [`field`], [`ops`]: staggered grid, boundary classification
//!   and the adjoint divergence / gradient pair;
//! * [`eikonal`]: travel-cost potential and the unit velocity field;
//! * [`transport`]: explicit upwind finite-volume step;
//! * [`beckmann`]: the correction problem and its primal-dual solver;
//! * [`simulator`]: the time loop, comparisons and obstacle studies;
//! * [`scenario`], [`io`], [`expr`]: scenario files, CSV/PGM output and the
//!   closed-form field expressions used in scenario files.

pub mod beckmann;
pub mod eikonal;
pub mod error;
pub mod expr;
pub mod field;
pub mod grid;
pub mod io;
pub mod ops;
pub mod pd;
pub mod scenario;
pub mod simulator;
pub mod transport;

pub use error::{Error, Result};
pub use field::{FluxField, ScalarField};
pub use grid::{BoundarySpec, Edge, Face, GridSpec};
pub use pd::{PdParams, SolverSettings};

