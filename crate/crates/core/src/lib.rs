//! Optimal recovery of a Hilbert-space element from linear measurements
//! combined with subspace-approximability information.
//!
//! The library works in a finite-dimensional inner-product space. The unknown
//! element `u` is observed through `m` linear functionals whose Riesz
//! representers span a measurement space `W`; the data is the projection
//! `w = P_W u`. Prior knowledge is expressed through a nested hierarchy of
//! subspaces `V_0 ⊂ V_1 ⊂ … ⊂ V_n` with tolerances
//! `ε_0 ≥ … ≥ ε_n > 0` such that `dist(u, V_j) ≤ ε_j`.
//!
//! Three layers are provided:
//!
//! * [`onespace`] — the exact optimal algorithm for a single subspace:
//!   favorable bases via the SVD of the cross-Gramian, the minimizer pair
//!   `(u*, v*)`, the stability constants `β`/`μ`, the Chebyshev radius of the
//!   data-consistent set and its ellipsoid description.
//! * [`bounds`] — a priori radius bounds for the multi-space problem
//!   (θ-vector, budget index `k`, fraction `δ`, the bound `E` and its
//!   subsequence variants) together with the classical one-space minimum.
//! * [`solve`] — two projection-based solvers (cyclic and averaged) that
//!   produce a point in the intersection of the constraint ellipsoids, with a
//!   computable a posteriori error bound driving the stopping rule.
//!
//! [`instances`] supplies deterministic generators for test problems and a
//! sampling oracle used to validate the bounds. With the default `parallel`
//! feature the embarrassingly parallel inner loops (per-level SVDs, subset
//! sweeps, averaged projections, oracle restarts) run on rayon; disabling the
//! feature falls back to equivalent sequential loops.

pub mod bounds;
pub mod error;
pub mod instances;
pub mod io;
pub mod onespace;
mod par;
pub mod solve;
pub mod space;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
