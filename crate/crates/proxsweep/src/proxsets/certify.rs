//! Runtime certificates for prox-regularity.
//!
//! Three equivalent characterizations of an r-prox-regular set are exposed as
//! checkable residuals: the projection identity for short normal steps, the
//! quadratic support inequality, and hypo-monotonicity of truncated normals.
//! A sampling estimator cross-checks the declared prox constant itself.

use crate::tolerances::{
    AMBIGUITY_RESOLUTION, CHECK_TOL, MEMBERSHIP_TOL, NORMAL_SAFETY_FRACTION, PROBE_NORMAL_SCALE,
};
use crate::vector::Vector;
use rand::Rng;

use super::{ProxSet, SetError};

/// Minimum distance from the set for a sample to probe projection behaviour.
/// Closer points say nothing about curvature.
const MIN_PROBE_DIST: f64 = 1e-6;

/// Samples an estimator must see land off the set before its answer means
/// anything.
const MIN_USABLE_SAMPLES: usize = 10;

/// Checks the nearest-point identity `project(x + xi) == x` for a normal
/// direction `xi` at a feasible point `x`. Steps with `||xi|| >= prox_r`
/// leave the uniqueness enlargement and propagate as errors.
pub fn verify_projection_identity(
    set: &ProxSet,
    x: &Vector,
    xi: &Vector,
) -> Result<bool, SetError> {
    let d = set.distance(x)?;
    if d > MEMBERSHIP_TOL {
        return Err(SetError::NotInSet { distance: d, tol: MEMBERSHIP_TOL });
    }
    let p = set.project(&x.add(xi))?;
    Ok(p.dist(x) <= CHECK_TOL * (1.0 + x.norm()))
}

/// Largest violation of the quadratic support inequality
/// `<xi, y - x> <= (||xi|| / 2r) ||y - x||^2` over the given feasible
/// samples. Nonpositive means the inequality held everywhere; the convex
/// case (`r = inf`) degenerates to plain support-function nonpositivity.
pub fn prox_inequality_residual(
    set: &ProxSet,
    x: &Vector,
    xi: &Vector,
    samples: &[Vector],
) -> Result<f64, SetError> {
    if samples.is_empty() {
        return Err(SetError::InsufficientSamples { needed: 1, got: 0 });
    }
    let d = set.distance(x)?;
    if d > MEMBERSHIP_TOL {
        return Err(SetError::NotInSet { distance: d, tol: MEMBERSHIP_TOL });
    }
    let factor = if set.prox_r().is_finite() { xi.norm() / (2.0 * set.prox_r()) } else { 0.0 };
    let mut worst = f64::NEG_INFINITY;
    for y in samples {
        let dy = set.distance(y)?;
        if dy > MEMBERSHIP_TOL {
            return Err(SetError::NotInSet { distance: dy, tol: MEMBERSHIP_TOL });
        }
        let diff = y.sub(x);
        worst = worst.max(xi.dot(&diff) - factor * diff.norm_sq());
    }
    Ok(worst)
}

/// Hypo-monotonicity gap `<xi1 - xi2, x1 - x2> + ||x1 - x2||^2` for two
/// normal vectors truncated to `||xi|| <= prox_r`. Nonnegative (up to
/// roundoff) on an r-prox-regular set; the bound is tight for antipodal
/// normals across the narrowest gap.
pub fn hypo_monotonicity_gap(
    set: &ProxSet,
    x1: &Vector,
    xi1: &Vector,
    x2: &Vector,
    xi2: &Vector,
) -> Result<f64, SetError> {
    for (x, xi) in [(x1, xi1), (x2, xi2)] {
        let d = set.distance(x)?;
        if d > MEMBERSHIP_TOL {
            return Err(SetError::NotInSet { distance: d, tol: MEMBERSHIP_TOL });
        }
        if xi.norm() > set.prox_r() * (1.0 + 1e-12) {
            return Err(SetError::InvalidGeometry(format!(
                "normal magnitude {:.6e} exceeds the prox constant {:.6e}",
                xi.norm(),
                set.prox_r()
            )));
        }
    }
    let dx = x1.sub(x2);
    Ok(xi1.sub(xi2).dot(&dx) + dx.norm_sq())
}

/// Monte-Carlo estimate of the prox constant from points sampled uniformly
/// in the box `[lo, hi]`.
///
/// A sample whose best and second-best projection candidates sit within
/// `AMBIGUITY_RESOLUTION` of each other witnesses projection ambiguity, so
/// the prox constant cannot exceed its distance; the smallest such distance
/// is the estimate. If no ambiguity is ever witnessed the largest observed
/// distance is returned instead, as a certified lower bound: every sampled
/// point up to that distance projected uniquely.
pub fn estimate_prox_constant<R: Rng>(
    set: &ProxSet,
    lo: &Vector,
    hi: &Vector,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64, SetError> {
    check_box(set, lo, hi)?;
    let mut usable = 0usize;
    let mut min_ambiguous = f64::INFINITY;
    let mut max_unique = 0.0f64;
    for _ in 0..n_samples {
        let s = sample_in_box(rng, lo, hi);
        let d = set.distance(&s)?;
        if d <= MIN_PROBE_DIST {
            continue;
        }
        usable += 1;
        match set.projection_ambiguity_gap(&s)? {
            Some(gap) if gap <= AMBIGUITY_RESOLUTION => min_ambiguous = min_ambiguous.min(d),
            _ => max_unique = max_unique.max(d),
        }
    }
    if usable < MIN_USABLE_SAMPLES {
        return Err(SetError::InsufficientSamples { needed: MIN_USABLE_SAMPLES, got: usable });
    }
    if min_ambiguous.is_finite() {
        Ok(min_ambiguous)
    } else {
        Ok(max_unique)
    }
}

/// Uniform sample from the axis box `[lo, hi]`. Bounds must be finite with
/// `lo < hi` coordinatewise.
pub fn sample_in_box<R: Rng>(rng: &mut R, lo: &Vector, hi: &Vector) -> Vector {
    assert_eq!(lo.dim(), hi.dim(), "sample box bounds disagree in dimension");
    let coords = (0..lo.dim()).map(|i| rng.random_range(lo.get(i)..hi.get(i))).collect();
    Vector::new(coords).expect("finite bounds give finite samples")
}

/// Draws a feasible point together with a unit proximal normal at it, by
/// projecting random exterior samples back onto the set. Samples too close
/// to the set or outside the uniqueness enlargement are discarded; `None`
/// after `max_tries` draws means the box never produced a usable exterior
/// point (e.g. the whole space).
pub fn sample_boundary_normal_pair<R: Rng>(
    set: &ProxSet,
    rng: &mut R,
    lo: &Vector,
    hi: &Vector,
    max_tries: usize,
) -> Result<Option<(Vector, Vector)>, SetError> {
    check_box(set, lo, hi)?;
    let max_dist = NORMAL_SAFETY_FRACTION * set.prox_r().min(PROBE_NORMAL_SCALE);
    for _ in 0..max_tries {
        let s = sample_in_box(rng, lo, hi);
        let d = set.distance(&s)?;
        if d <= MIN_PROBE_DIST || d >= max_dist {
            continue;
        }
        let x = match set.project(&s) {
            Ok(x) => x,
            Err(SetError::AmbiguousProjection { .. }) => continue,
            Err(e) => return Err(e),
        };
        let Some(dir) = s.sub(&x).normalized() else { continue };
        return Ok(Some((x, dir)));
    }
    Ok(None)
}

fn check_box(set: &ProxSet, lo: &Vector, hi: &Vector) -> Result<(), SetError> {
    if lo.dim() != set.dim() || hi.dim() != set.dim() {
        return Err(SetError::DimensionMismatch { expected: set.dim(), got: lo.dim() });
    }
    for i in 0..lo.dim() {
        if !(lo.get(i) < hi.get(i)) {
            return Err(SetError::InvalidGeometry(format!(
                "sample box is empty in coordinate {i}: [{}, {}]",
                lo.get(i),
                hi.get(i)
            )));
        }
    }
    Ok(())
}
