//! Finitely generated normal cones and exact projection onto them.

use crate::vector::Vector;

/// A finitely generated cone `{ sum_i lambda_i g_i : lambda_i >= 0 }`
/// anchored at an apex point. Generators are unit vectors; an empty list is
/// the zero cone (interior points).
#[derive(Debug, Clone, PartialEq)]
pub struct ConeRep {
    apex: Vector,
    generators: Vec<Vector>,
}

impl ConeRep {
    pub fn new(apex: Vector, generators: Vec<Vector>) -> Self {
        Self { apex, generators }
    }

    pub fn apex(&self) -> &Vector {
        &self.apex
    }

    pub fn generators(&self) -> &[Vector] {
        &self.generators
    }

    pub fn is_zero_cone(&self) -> bool {
        self.generators.is_empty()
    }
}

/// Euclidean projection of `w` onto the cone, by enumeration of generator
/// subsets. For each subset the unconstrained least-squares coefficients
/// solve the Gram system; subsets with a negative coefficient violate the
/// conic constraint and are skipped. Among the survivors the candidate
/// nearest to `w` is the projection. With at most a handful of generators
/// this is exact and deterministic.
pub fn project_onto_cone(cone: &ConeRep, w: &Vector) -> Vector {
    let dim = w.dim();
    let m = cone.generators.len();
    if m == 0 {
        return Vector::zeros(dim);
    }
    assert!(m <= 30, "cone has too many generators for subset enumeration");
    let mut best_d2 = w.norm_sq(); // empty subset: the zero vector
    let mut best = Vector::zeros(dim);
    for mask in 1u32..(1u32 << m) {
        let active: Vec<&Vector> =
            (0..m).filter(|i| mask & (1 << i) != 0).map(|i| &cone.generators[i]).collect();
        let k = active.len();
        let mut gram = nalgebra::DMatrix::<f64>::zeros(k, k);
        let mut rhs = nalgebra::DVector::<f64>::zeros(k);
        for (a, ga) in active.iter().enumerate() {
            for (b, gb) in active.iter().enumerate() {
                gram[(a, b)] = ga.dot(gb);
            }
            rhs[a] = active[a].dot(w);
        }
        let Some(lambda) = gram.lu().solve(&rhs) else { continue };
        if lambda.iter().any(|&l| l < 0.0 || !l.is_finite()) {
            continue;
        }
        let mut cand = Vector::zeros(dim);
        for (a, ga) in active.iter().enumerate() {
            cand = cand.add_scaled(lambda[a], ga);
        }
        let d2 = cand.sub(w).norm_sq();
        if d2 < best_d2 {
            best_d2 = d2;
            best = cand;
        }
    }
    best
}

/// Smallest-norm element of `f(x) - N`, where `N` is the normal cone at `x`:
/// the residual of `f(x)` after removing its normal component. This is the
/// initial right velocity of the dynamics.
pub fn minimal_norm_velocity(cone: &ConeRep, fx: &Vector) -> Vector {
    fx.sub(&project_onto_cone(cone, fx))
}
