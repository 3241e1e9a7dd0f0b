//! Central numeric tolerances and safety factors.
//!
//! Every tolerance used across the crate lives here with a short note on why
//! its value is what it is. Keeping them in one place makes the accuracy
//! contract auditable and keeps modules from drifting apart.

/// Absolute tolerance for set membership tests.
///
/// States produced by projection sit on set boundaries up to rounding of a
/// handful of dot products and one square root, so their residual distance is
/// a few ulps at unit scale. 1e-9 is far above that noise floor and far below
/// any geometric feature the catalogue can represent.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Absolute tolerance for geometric certification residuals (projection
/// identity, proximal inequality, hypo-monotonicity).
///
/// Closed-form projections are exact to rounding; residuals of valid inputs
/// land near 1e-15 at unit scale. 1e-7 gives six orders of headroom while
/// still catching genuine violations, which are O(1).
pub const CHECK_TOL: f64 = 1e-7;

/// Default relative slack applied to analytic bounds before comparing them to
/// measured quantities. Discretization bias of the first-order scheme stays
/// well under 5% at the shipped step sizes.
pub const DEFAULT_SLACK: f64 = 0.05;

/// Default absolute floor added to every bound comparison so that bounds that
/// are exactly zero do not demand exact zeros from floating point.
pub const DEFAULT_ABS_TOL: f64 = 1e-6;

/// A step is accepted only if `step * sup||f||` stays below this fraction of
/// the prox constant. Half the enlargement radius keeps every predictor point
/// strictly inside the region where projection is single-valued, with the
/// same margin again in reserve for probing error in `sup||f||`.
pub const STEP_SAFETY_FACTOR: f64 = 0.5;

/// Central-difference step for gradient consistency checks. Balances
/// truncation (h^2 = 1e-10) against cancellation (eps/h = 2e-11) near the
/// f64 sweet spot.
pub const FD_STEP: f64 = 1e-5;

/// Relative tolerance for central-difference gradient agreement. The optimal
/// FD error at unit scale is ~1e-10; 1e-6 absorbs poorly scaled potentials.
pub const FD_REL_TOL: f64 = 1e-6;

/// Half-width of the default working region (a box around the origin) on
/// which sampled Lipschitz and convexity certificates are probed.
pub const WORKING_HALF_WIDTH: f64 = 10.0;

/// Two normal-cone generators are considered the same direction when they
/// agree within this angle (radians). Generators come from normalized
/// closed-form normals, so genuinely equal directions agree to ~1e-15;
/// distinct catalogue faces are separated by O(1) angles.
pub const ANGULAR_TOL: f64 = 1e-6;

/// Resolution used by the empirical prox-constant estimator: a sample point
/// counts as ambiguous when its best and second-best projection candidates
/// differ by less than this. Coarse enough that uniform sampling actually
/// hits the ambiguous slab, fine enough to bias the estimate by under 1%.
pub const AMBIGUITY_RESOLUTION: f64 = 1e-2;

/// Convergence tolerance for the alternating-projection gap computation
/// between members of a disjoint union.
pub const GAP_CONVERGENCE_TOL: f64 = 1e-12;

/// Iteration cap for the alternating-projection gap computation. Pairs of
/// desk-scale convex sets converge in far fewer; the cap only guards
/// pathological near-parallel geometry.
pub const GAP_MAX_ITERS: usize = 10_000;

/// Magnitude cap for probe normals on convex sets, whose prox constant is
/// infinite and therefore gives no intrinsic scale.
pub const PROBE_NORMAL_SCALE: f64 = 10.0;

/// Fraction of the prox constant up to which sampled normals are scaled in
/// randomized certificates. Staying strictly inside the enlargement keeps
/// projections single-valued with margin for rounding.
pub const NORMAL_SAFETY_FRACTION: f64 = 0.99;

/// Default stop tolerance on the terminal velocity norm for dissipation
/// accounting over a finite horizon: below this the remaining tail of the
/// energy integral is negligible at check precision.
pub const STOP_TOL: f64 = 1e-3;

/// Relative mismatch between `horizon/step` and the nearest integer that the
/// rounding guard accepts when building the time grid.
pub const GRID_ROUNDING_GUARD: f64 = 1e-9;
