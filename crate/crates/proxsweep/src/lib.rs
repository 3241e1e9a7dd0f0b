//! Catching-up integration for perturbed sweeping processes on prox-regular
//! sets, with certified a-posteriori bound checking.
//!
//! The crate is organized around five layers:
//! - [`proxsets`]: the set catalogue (distances, projections, normal cones)
//!   and prox-regularity certificates;
//! - [`fields`]: perturbation fields with certified one-sided Lipschitz and
//!   magnitude constants;
//! - [`integrator`]: the projected Euler scheme, trajectories, and grid
//!   refinement;
//! - [`analysis`]: a-posteriori checks that measured trajectory quantities
//!   stay under their theoretical envelopes;
//! - [`cli`]: scenario files, deterministic runs, and report emission.

// Negated comparisons like `!(x >= 0.0)` are deliberate throughout: NaN must
// fail validation, and the un-negated `x < 0.0` would let it through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod fields;
pub mod integrator;
pub mod proxsets;
pub mod tolerances;
pub mod vector;

pub use proxsets::{ProxSet, SetError, SetKind};
pub use vector::{Vector, VectorError};
