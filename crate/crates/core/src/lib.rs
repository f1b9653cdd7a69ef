//! Numerical laboratory for conformal metric flows on periodic grids.
//!
//! The crate is organised around the pipeline
//!
//! ```text
//! grid  ->  conformal  ->  flow  ->  estimates / experiments
//! ```
//!
//! * [`grid`] — periodic n-dimensional grids (n ≥ 3), scalar fields,
//!   spectral and finite-difference flat operators, quadrature, and the
//!   binary/CSV field container formats.
//! * [`conformal`] — background geometries g₀, scalar curvature under
//!   conformal change g = u^{4/(n−2)} g₀, volume, total scalar curvature,
//!   Yamabe energy and a flow-based Yamabe-constant estimator.
//! * [`flow`] — time integration of the normalized and unnormalized
//!   Yamabe flows for the conformal factor, with monitors for every
//!   conserved or monotone quantity.
//! * [`estimates`] — checkers for the comparison inequalities satisfied
//!   along the flows (Gronwall engine, extremum bounds, volume bounds,
//!   L¹ estimate, uniform-convergence probe).
//! * [`experiments`] — metric-sequence constructions and the closedness
//!   experiment harness with JSON/CSV reporting.
//! * [`expr`] — the small expression language used for analytic field
//!   input (`1 + 0.3*sin(2*pi*x1)`).

pub mod conformal;
pub mod estimates;
pub mod experiments;
pub mod expr;
pub mod flow;
pub mod grid;
pub mod util;

pub use grid::{GridSpec, ScalarField};
