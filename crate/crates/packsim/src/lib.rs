//! Numerical toolkit for an N-predator / single-prey reaction–diffusion
//! competition system on rectangles with no-flux boundaries.
//!
//! The toolkit covers the full pipeline for studying predator segregation
//! under strong interspecies competition:
//!
//! * [`model`] — validated parameters, reaction kinetics and Jacobians,
//!   viability margins, absorbing-box Lipschitz bounds, and the rescaling
//!   to unit diffusivities;
//! * [`grid`] — cell-centered grids, the no-flux Laplacian, quadrature, and
//!   closed-form Neumann eigenpairs (continuum and discrete);
//! * [`evolve`] — IMEX time integration with positivity safeguards,
//!   trajectory recording, bound monitors, and exponential-decay
//!   diagnostics for the homogenization regime;
//! * [`equilibria`] — the catalog of constant equilibria with closed-form
//!   linearizations, stability verdicts, damped-Newton refinement of
//!   non-constant steady states, and closed-form bifurcation thresholds;
//! * [`continuation`] — pseudo-arclength tracing of non-constant steady
//!   branches in the competition strength β, with branch switching off the
//!   symmetric coexistence state;
//! * [`segregation`] — overlap integrals, comparability ratios, interface
//!   detection, collapse calibration, and the energy balance used to bound
//!   gradients along branches;
//! * [`packs`] — counting bounds for stable segregated packs, exact mass
//!   identities, a half-domain reflection construction, and a small
//!   optimizer that compares total predator mass across pack counts;
//! * [`io`] — CSV/JSON readers and writers for every artifact the tools
//!   emit.
//!
//! Numerical conventions shared across modules: states are ordered
//! `(w_1, …, w_N, u)`; fields live on cell-centered grids with reflection
//! ghosts; all banded linear algebra runs through [`linalg`].

pub mod continuation;
pub mod equilibria;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod packs;
pub mod segregation;

pub use error::{Error, Result};

/// Crate version, recorded in CLI manifests for provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
