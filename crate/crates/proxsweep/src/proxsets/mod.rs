//! Catalogue of uniformly prox-regular subsets of R^n.
//!
//! Each set kind carries an exact distance, an exact nearest-point projection
//! valid strictly inside its uniqueness enlargement, and a polyhedral
//! description of its limiting normal cone at feasible points. Convex kinds
//! have an infinite prox constant; the two nonconvex kinds (ball complements
//! and disjoint unions of convex members) carry the finite constant that makes
//! their projection single-valued.

mod cone;
pub mod certify;

pub use cone::{minimal_norm_velocity, project_onto_cone, ConeRep};

use crate::tolerances::{GAP_CONVERGENCE_TOL, GAP_MAX_ITERS, MEMBERSHIP_TOL};
use crate::vector::Vector;
use thiserror::Error;

/// Hard cap on polytope faces so active-subset enumeration stays bounded.
const MAX_FACES: usize = 20;

/// Minimum box edge length. Thinner boxes would let opposite faces both
/// activate inside one membership tolerance band.
const MIN_BOX_EXTENT: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SetError {
    #[error("dimension mismatch: set lives in R^{expected}, point in R^{got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point is not in the set: distance {distance:.6e} exceeds tolerance {tol:.1e}")]
    NotInSet { distance: f64, tol: f64 },
    #[error(
        "point lies outside the uniqueness enlargement: distance {distance:.6e} >= prox constant {prox_r:.6e}"
    )]
    OutsideEnlargement { distance: f64, prox_r: f64 },
    #[error("projection is ambiguous: nearest candidates at distances {nearest:.6e} and {second:.6e}")]
    AmbiguousProjection { nearest: f64, second: f64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("insufficient usable samples: needed {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
}

/// Closed half-space `{ x : <normal, x> <= offset }`. The stored normal is the
/// outward direction; it need not be unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    normal: Vector,
    offset: f64,
    norm: f64,
}

impl HalfSpace {
    pub fn new(normal: Vector, offset: f64) -> Result<Self, SetError> {
        if !offset.is_finite() {
            return Err(SetError::InvalidGeometry(format!(
                "half-space offset must be finite, got {offset}"
            )));
        }
        let norm = normal.norm();
        if norm <= f64::MIN_POSITIVE {
            return Err(SetError::InvalidGeometry(
                "half-space normal must be nonzero".into(),
            ));
        }
        Ok(Self { normal, offset, norm })
    }

    pub fn normal(&self) -> &Vector {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Euclidean violation: positive outside, negative inside.
    fn signed_dist(&self, x: &Vector) -> f64 {
        (self.normal.dot(x) - self.offset) / self.norm
    }

    fn unit_normal(&self) -> Vector {
        self.normal.scale(1.0 / self.norm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetKind {
    WholeSpace,
    HalfSpace(HalfSpace),
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vector, radius: f64 },
    BallComplement { center: Vector, radius: f64 },
    Polytope { faces: Vec<HalfSpace> },
    DisjointConvexUnion { members: Vec<ProxSet> },
}

/// A uniformly prox-regular set together with its declared prox constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxSet {
    kind: SetKind,
    dim: usize,
    prox_r: f64,
}

impl ProxSet {
    pub fn whole_space(dim: usize) -> Result<Self, SetError> {
        if dim == 0 {
            return Err(SetError::InvalidGeometry("dimension must be >= 1".into()));
        }
        Ok(Self { kind: SetKind::WholeSpace, dim, prox_r: f64::INFINITY })
    }

    pub fn half_space(normal: Vector, offset: f64) -> Result<Self, SetError> {
        let dim = normal.dim();
        let hs = HalfSpace::new(normal, offset)?;
        Ok(Self { kind: SetKind::HalfSpace(hs), dim, prox_r: f64::INFINITY })
    }

    /// Axis-aligned box `{ x : lower <= x <= upper }`. Entries may be
    /// `-inf`/`+inf` for unbounded directions; every edge must be strictly
    /// thicker than the membership tolerance band.
    pub fn axis_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SetError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(SetError::InvalidGeometry(format!(
                "box bounds must be nonempty and of equal length ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        for i in 0..lower.len() {
            let (lo, hi) = (lower[i], upper[i]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(SetError::InvalidGeometry(format!(
                    "box bounds out of order in coordinate {i}: [{lo}, {hi}]"
                )));
            }
            if !(hi - lo >= MIN_BOX_EXTENT) {
                return Err(SetError::InvalidGeometry(format!(
                    "box extent in coordinate {i} is {} but must be at least {MIN_BOX_EXTENT}",
                    hi - lo
                )));
            }
        }
        let dim = lower.len();
        Ok(Self { kind: SetKind::Box { lower, upper }, dim, prox_r: f64::INFINITY })
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self, SetError> {
        check_radius(radius)?;
        let dim = center.dim();
        Ok(Self { kind: SetKind::Ball { center, radius }, dim, prox_r: f64::INFINITY })
    }

    /// Closure of the complement of an open ball: `{ x : ||x - c|| >= rho }`.
    /// Its prox constant equals the excluded radius.
    pub fn ball_complement(center: Vector, radius: f64) -> Result<Self, SetError> {
        check_radius(radius)?;
        let dim = center.dim();
        Ok(Self { kind: SetKind::BallComplement { center, radius }, dim, prox_r: radius })
    }

    pub fn polytope(faces: Vec<HalfSpace>) -> Result<Self, SetError> {
        if faces.is_empty() {
            return Err(SetError::InvalidGeometry("polytope needs at least one face".into()));
        }
        if faces.len() > MAX_FACES {
            return Err(SetError::InvalidGeometry(format!(
                "polytope has {} faces; enumeration supports at most {MAX_FACES}",
                faces.len()
            )));
        }
        let dim = faces[0].normal.dim();
        for f in &faces {
            if f.normal.dim() != dim {
                return Err(SetError::DimensionMismatch { expected: dim, got: f.normal.dim() });
            }
        }
        let set = Self { kind: SetKind::Polytope { faces }, dim, prox_r: f64::INFINITY };
        // Projecting any point certifies nonemptiness.
        set.project(&Vector::zeros(dim)).map_err(|_| {
            SetError::InvalidGeometry("polytope appears empty or numerically degenerate".into())
        })?;
        Ok(set)
    }

    /// Union of pairwise disjoint convex members. The canonical prox constant
    /// is half the smallest pairwise gap: any point closer to the union than
    /// that is strictly nearer to one member than to all others.
    pub fn disjoint_union(members: Vec<ProxSet>) -> Result<Self, SetError> {
        if members.len() < 2 {
            return Err(SetError::InvalidGeometry(
                "a disjoint union needs at least two members".into(),
            ));
        }
        let dim = members[0].dim;
        for m in &members {
            if m.dim != dim {
                return Err(SetError::DimensionMismatch { expected: dim, got: m.dim });
            }
            if !m.is_convex() || m.prox_r.is_finite() {
                return Err(SetError::InvalidGeometry(
                    "union members must be convex sets with infinite prox constant".into(),
                ));
            }
            if matches!(m.kind, SetKind::WholeSpace) {
                return Err(SetError::InvalidGeometry(
                    "the whole space cannot be a union member".into(),
                ));
            }
        }
        let mut min_gap = f64::INFINITY;
        for i in 0..members.len() {
            for j in (i + 1)..members.len() {
                let gap = pairwise_gap(&members[i], &members[j]);
                if !(gap > MEMBERSHIP_TOL) {
                    return Err(SetError::InvalidGeometry(format!(
                        "members {i} and {j} are not separated (gap {gap:.3e})"
                    )));
                }
                min_gap = min_gap.min(gap);
            }
        }
        Ok(Self {
            kind: SetKind::DisjointConvexUnion { members },
            dim,
            prox_r: min_gap / 2.0,
        })
    }

    /// Replace the declared prox constant by a smaller (more conservative)
    /// one. Enlarging it would void the uniqueness guarantee.
    pub fn with_prox_r(mut self, prox_r: f64) -> Result<Self, SetError> {
        if !(prox_r > 0.0) || prox_r.is_nan() {
            return Err(SetError::InvalidGeometry(format!(
                "prox constant must be positive, got {prox_r}"
            )));
        }
        if prox_r > self.prox_r {
            return Err(SetError::InvalidGeometry(format!(
                "declared prox constant {prox_r} exceeds the certified value {}",
                self.prox_r
            )));
        }
        self.prox_r = prox_r;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prox_r(&self) -> f64 {
        self.prox_r
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn is_convex(&self) -> bool {
        matches!(
            self.kind,
            SetKind::WholeSpace
                | SetKind::HalfSpace(_)
                | SetKind::Box { .. }
                | SetKind::Ball { .. }
                | SetKind::Polytope { .. }
        )
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SetKind::WholeSpace => "whole_space",
            SetKind::HalfSpace(_) => "half_space",
            SetKind::Box { .. } => "box",
            SetKind::Ball { .. } => "ball",
            SetKind::BallComplement { .. } => "ball_complement",
            SetKind::Polytope { .. } => "polytope",
            SetKind::DisjointConvexUnion { .. } => "disjoint_convex_union",
        }
    }

    fn check_dim(&self, x: &Vector) -> Result<(), SetError> {
        if x.dim() != self.dim {
            return Err(SetError::DimensionMismatch { expected: self.dim, got: x.dim() });
        }
        Ok(())
    }

    /// Membership within absolute tolerance `tol` on the distance.
    pub fn contains(&self, x: &Vector, tol: f64) -> Result<bool, SetError> {
        Ok(self.distance(x)? <= tol)
    }

    /// Exact Euclidean distance to the set.
    pub fn distance(&self, x: &Vector) -> Result<f64, SetError> {
        self.check_dim(x)?;
        Ok(match &self.kind {
            SetKind::WholeSpace => 0.0,
            SetKind::HalfSpace(hs) => hs.signed_dist(x).max(0.0),
            SetKind::Box { lower, upper } => {
                let mut d2 = 0.0;
                for i in 0..self.dim {
                    let deficit = (lower[i] - x.get(i)).max(x.get(i) - upper[i]).max(0.0);
                    d2 += deficit * deficit;
                }
                d2.sqrt()
            }
            SetKind::Ball { center, radius } => (x.dist(center) - radius).max(0.0),
            SetKind::BallComplement { center, radius } => (radius - x.dist(center)).max(0.0),
            SetKind::Polytope { faces } => {
                if faces.iter().all(|f| f.signed_dist(x) <= 0.0) {
                    0.0
                } else {
                    project_polytope(faces, x)?.dist(x)
                }
            }
            SetKind::DisjointConvexUnion { members } => {
                let mut best = f64::INFINITY;
                for m in members {
                    best = best.min(m.distance(x)?);
                }
                best
            }
        })
    }

    /// Nearest point of the set. Defined (and single-valued) strictly inside
    /// the uniqueness enlargement `{ s : d(s, C) < prox_r }`.
    pub fn project(&self, s: &Vector) -> Result<Vector, SetError> {
        self.check_dim(s)?;
        if self.prox_r.is_finite() {
            let d = self.distance(s)?;
            if d >= self.prox_r {
                return Err(SetError::OutsideEnlargement { distance: d, prox_r: self.prox_r });
            }
        }
        match &self.kind {
            SetKind::WholeSpace => Ok(s.clone()),
            SetKind::HalfSpace(hs) => {
                let v = hs.signed_dist(s);
                if v <= 0.0 {
                    Ok(s.clone())
                } else {
                    Ok(s.add_scaled(-v, &hs.unit_normal()))
                }
            }
            SetKind::Box { lower, upper } => {
                let coords = (0..self.dim)
                    .map(|i| s.get(i).max(lower[i]).min(upper[i]))
                    .collect();
                Ok(Vector::new(coords).expect("clamped coordinates are finite"))
            }
            SetKind::Ball { center, radius } => {
                let delta = s.sub(center);
                let n = delta.norm();
                if n <= *radius {
                    Ok(s.clone())
                } else {
                    Ok(center.add_scaled(radius / n, &delta))
                }
            }
            SetKind::BallComplement { center, radius } => {
                let delta = s.sub(center);
                let n = delta.norm();
                if n >= *radius {
                    Ok(s.clone())
                } else if n <= radius * 1e-12 {
                    // At the center every boundary point is nearest; just
                    // inside this band the projection is still wildly
                    // ill-conditioned.
                    Err(SetError::AmbiguousProjection { nearest: radius - n, second: radius - n })
                } else {
                    Ok(center.add_scaled(radius / n, &delta))
                }
            }
            SetKind::Polytope { faces } => project_polytope(faces, s),
            SetKind::DisjointConvexUnion { members } => {
                let mut dists = Vec::with_capacity(members.len());
                for (i, m) in members.iter().enumerate() {
                    dists.push((m.distance(s)?, i));
                }
                dists.sort_by(|a, b| a.0.total_cmp(&b.0));
                let (nearest, best_idx) = dists[0];
                let second = dists[1].0;
                if second - nearest <= MEMBERSHIP_TOL {
                    return Err(SetError::AmbiguousProjection { nearest, second });
                }
                members[best_idx].project(s)
            }
        }
    }

    /// Polyhedral representation of the normal cone at a feasible point.
    /// `tol` controls both the membership test and face-activity detection.
    pub fn normal_cone(&self, x: &Vector, tol: f64) -> Result<ConeRep, SetError> {
        self.check_dim(x)?;
        let d = self.distance(x)?;
        if d > tol {
            return Err(SetError::NotInSet { distance: d, tol });
        }
        let generators = match &self.kind {
            SetKind::WholeSpace => vec![],
            SetKind::HalfSpace(hs) => {
                if hs.signed_dist(x).abs() <= tol {
                    vec![hs.unit_normal()]
                } else {
                    vec![]
                }
            }
            SetKind::Box { lower, upper } => {
                let mut gens = Vec::new();
                for i in 0..self.dim {
                    if lower[i].is_finite() && x.get(i) - lower[i] <= tol {
                        gens.push(Vector::basis(self.dim, i, -1.0));
                    } else if upper[i].is_finite() && upper[i] - x.get(i) <= tol {
                        gens.push(Vector::basis(self.dim, i, 1.0));
                    }
                }
                gens
            }
            SetKind::Ball { center, radius } => {
                let delta = x.sub(center);
                if radius - delta.norm() <= tol {
                    vec![delta.normalized().expect("boundary point is off-center")]
                } else {
                    vec![]
                }
            }
            SetKind::BallComplement { center, radius } => {
                let delta = center.sub(x);
                if delta.norm() - radius <= tol {
                    vec![delta.normalized().expect("boundary point is off-center")]
                } else {
                    vec![]
                }
            }
            SetKind::Polytope { faces } => faces
                .iter()
                .filter(|f| f.signed_dist(x).abs() <= tol)
                .map(HalfSpace::unit_normal)
                .collect(),
            SetKind::DisjointConvexUnion { members } => {
                let member = self
                    .union_member_containing(x, tol)?
                    .expect("feasible union point lies in some member");
                return members[member].normal_cone(x, tol);
            }
        };
        Ok(ConeRep::new(x.clone(), generators))
    }

    /// Index of the union member containing `x`, `None` for non-union kinds.
    pub fn union_member_containing(
        &self,
        x: &Vector,
        tol: f64,
    ) -> Result<Option<usize>, SetError> {
        self.check_dim(x)?;
        if let SetKind::DisjointConvexUnion { members } = &self.kind {
            for (i, m) in members.iter().enumerate() {
                if m.contains(x, tol)? {
                    return Ok(Some(i));
                }
            }
            let d = self.distance(x)?;
            return Err(SetError::NotInSet { distance: d, tol });
        }
        Ok(None)
    }

    /// Gap between the best and second-best projection candidate at `s`, for
    /// kinds where the nearest point can be contested. `None` means the
    /// projection at `s` is structurally unique.
    pub(crate) fn projection_ambiguity_gap(&self, s: &Vector) -> Result<Option<f64>, SetError> {
        self.check_dim(s)?;
        Ok(match &self.kind {
            SetKind::DisjointConvexUnion { members } => {
                let mut dists = Vec::with_capacity(members.len());
                for m in members {
                    dists.push(m.distance(s)?);
                }
                dists.sort_by(f64::total_cmp);
                Some(dists[1] - dists[0])
            }
            SetKind::BallComplement { center, radius } => {
                let n = s.dist(center);
                if n < *radius {
                    // Nearest and antipodal boundary candidates differ by 2n.
                    Some(2.0 * n)
                } else {
                    None
                }
            }
            _ => None,
        })
    }
}

fn check_radius(radius: f64) -> Result<(), SetError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(SetError::InvalidGeometry(format!(
            "radius must be positive and finite, got {radius}"
        )));
    }
    Ok(())
}

/// Nearest-point projection onto an intersection of half-spaces by
/// enumeration of active-face subsets. For each candidate subset the
/// equality-constrained projection is solved via its normal equations; the
/// true projection is the feasible candidate with nonnegative multipliers at
/// minimal distance.
fn project_polytope(faces: &[HalfSpace], s: &Vector) -> Result<Vector, SetError> {
    if faces.iter().all(|f| f.signed_dist(s) <= 0.0) {
        return Ok(s.clone());
    }
    let dim = s.dim();
    let m = faces.len();
    let feas_tol = MEMBERSHIP_TOL * (1.0 + s.norm());
    let mut best: Option<(f64, Vector)> = None;
    for mask in 1u32..(1u32 << m) {
        let k = mask.count_ones() as usize;
        if k > dim {
            continue;
        }
        let active: Vec<&HalfSpace> = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| &faces[i]).collect();
        let mut gram = nalgebra::DMatrix::<f64>::zeros(k, k);
        let mut rhs = nalgebra::DVector::<f64>::zeros(k);
        for (a, fa) in active.iter().enumerate() {
            for (b, fb) in active.iter().enumerate() {
                gram[(a, b)] = fa.normal.dot(&fb.normal);
            }
            rhs[a] = fa.normal.dot(s) - fa.offset;
        }
        let Some(mu) = gram.lu().solve(&rhs) else { continue };
        if mu.iter().any(|&v| v < -1e-10) {
            continue;
        }
        let mut x = s.clone();
        for (a, fa) in active.iter().enumerate() {
            x = x.add_scaled(-mu[a], &fa.normal);
        }
        if x.iter().any(|c| !c.is_finite()) {
            continue;
        }
        if faces.iter().any(|f| f.signed_dist(&x) > feas_tol) {
            continue;
        }
        let d2 = x.sub(s).norm_sq();
        if best.as_ref().is_none_or(|(bd, _)| d2 < *bd) {
            best = Some((d2, x));
        }
    }
    best.map(|(_, x)| x).ok_or_else(|| {
        SetError::InvalidGeometry(
            "projection enumeration found no feasible candidate (empty or degenerate polytope)"
                .into(),
        )
    })
}

/// Euclidean gap between two disjoint convex sets via alternating
/// projections. Distances are nonincreasing along the iteration and converge
/// to the infimal gap for closed convex sets.
fn pairwise_gap(a: &ProxSet, b: &ProxSet) -> f64 {
    let anchor = Vector::zeros(a.dim());
    let mut x = a.project(&anchor).expect("convex projection is total");
    let mut gap = f64::INFINITY;
    for _ in 0..GAP_MAX_ITERS {
        let y = b.project(&x).expect("convex projection is total");
        x = a.project(&y).expect("convex projection is total");
        let d = x.dist(&y);
        if (gap - d).abs() <= GAP_CONVERGENCE_TOL * (1.0 + d) {
            return d;
        }
        gap = d;
    }
    gap
}
