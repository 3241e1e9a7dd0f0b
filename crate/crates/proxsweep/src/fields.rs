//! Perturbation fields with certified constants.
//!
//! Every field carries a one-sided Lipschitz constant `k` with
//! `<f(x) - f(y), x - y> <= k ||x - y||^2`, certified at construction, and can
//! bound its own magnitude over an axis box. The bound checker consumes both;
//! a silently wrong constant would void every envelope downstream, so the
//! constructors refuse declared constants below the certified value.

use crate::tolerances::WORKING_HALF_WIDTH;
use crate::vector::Vector;
use nalgebra::DMatrix;
use thiserror::Error;

/// Grid density for polynomial sup bounds on an interval.
const POLY_GRID_POINTS: usize = 20_001;

/// Inflation applied to grid-sampled polynomial suprema. The sampled maximum
/// of a smooth function on a dense grid undershoots the true supremum by
/// O(grid step^2); this factor absorbs that for moderate degrees.
const GRID_SAFETY: f64 = 1.001;

/// Inflation applied to power-iteration spectral estimates, which approach
/// the top singular value from below.
const SPECTRAL_SAFETY: f64 = 1.0 + 1e-6;

/// Eigenvalues of a certified-convex quadratic may undershoot zero by at
/// most this much (roundoff in the symmetric eigensolver).
const PSD_TOL: f64 = 1e-10;

/// Corner enumeration cap for exact convex maxima over boxes.
const MAX_BOX_DIM: usize = 20;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid field: {0}")]
    InvalidField(String),
}

#[derive(Debug, Clone, PartialEq)]
enum PotentialKind {
    /// `V(x) = x^T Q x / 2 + <q, x>` with symmetric `Q`.
    Quadratic { q: DMatrix<f64>, lin: Vector },
    /// `V(x) = sum_i p_i(x_i)` with per-coordinate polynomials given by
    /// ascending coefficients.
    SeparablePolynomial { coeffs: Vec<Vec<f64>> },
}

/// A potential whose gradient Lipschitz constant and convexity are certified
/// at construction. Polynomial certificates hold on the working region
/// `[-WORKING_HALF_WIDTH, WORKING_HALF_WIDTH]^n`; quadratic ones are global.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    kind: PotentialKind,
    dim: usize,
    grad_lipschitz: f64,
    convex: bool,
}

impl Potential {
    pub fn quadratic(rows: Vec<Vec<f64>>, lin: Vector) -> Result<Self, FieldError> {
        let q = square_matrix(rows)?;
        let n = q.nrows();
        if lin.dim() != n {
            return Err(FieldError::DimensionMismatch { expected: n, got: lin.dim() });
        }
        let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (q[(i, j)] - q[(j, i)]).abs() > 1e-12 * scale {
                    return Err(FieldError::InvalidField(format!(
                        "quadratic matrix is not symmetric at ({i}, {j}): {} vs {}",
                        q[(i, j)],
                        q[(j, i)]
                    )));
                }
            }
        }
        let eigs = q.clone().symmetric_eigen().eigenvalues;
        let grad_lipschitz = eigs.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
        let convex = eigs.iter().all(|&l| l >= -PSD_TOL);
        Ok(Self { kind: PotentialKind::Quadratic { q, lin }, dim: n, grad_lipschitz, convex })
    }

    pub fn separable_polynomial(coeffs: Vec<Vec<f64>>) -> Result<Self, FieldError> {
        if coeffs.is_empty() {
            return Err(FieldError::InvalidField("no coordinate polynomials given".into()));
        }
        for (i, c) in coeffs.iter().enumerate() {
            if c.is_empty() {
                return Err(FieldError::InvalidField(format!(
                    "coordinate {i} has an empty coefficient list"
                )));
            }
            if let Some(bad) = c.iter().find(|v| !v.is_finite()) {
                return Err(FieldError::InvalidField(format!(
                    "coordinate {i} has a non-finite coefficient {bad}"
                )));
            }
        }
        let dim = coeffs.len();
        let w = WORKING_HALF_WIDTH;
        let mut grad_lipschitz = 0.0f64;
        let mut convex = true;
        for c in &coeffs {
            let d2 = poly_derivative(&poly_derivative(c));
            let (lo_curv, hi_curv) = poly_range_on_grid(&d2, -w, w);
            grad_lipschitz = grad_lipschitz.max(lo_curv.abs().max(hi_curv.abs()));
            if lo_curv < -PSD_TOL {
                convex = false;
            }
        }
        grad_lipschitz *= GRID_SAFETY;
        Ok(Self { kind: PotentialKind::SeparablePolynomial { coeffs }, dim, grad_lipschitz, convex })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match &self.kind {
            PotentialKind::Quadratic { q, lin } => {
                let qx = mat_vec(q, x);
                0.5 * x.dot(&qx) + lin.dot(x)
            }
            PotentialKind::SeparablePolynomial { coeffs } => {
                coeffs.iter().enumerate().map(|(i, c)| poly_eval(c, x.get(i))).sum()
            }
        }
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        match &self.kind {
            PotentialKind::Quadratic { q, lin } => mat_vec(q, x).add(lin),
            PotentialKind::SeparablePolynomial { coeffs } => {
                let g = coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| poly_eval(&poly_derivative(c), x.get(i)))
                    .collect();
                Vector::new(g).expect("finite coefficients give finite gradients")
            }
        }
    }

    /// Certified Lipschitz constant of the gradient (on the working region
    /// for polynomials, globally for quadratics).
    pub fn grad_lipschitz(&self) -> f64 {
        self.grad_lipschitz
    }

    pub fn is_certified_convex(&self) -> bool {
        self.convex
    }

    /// True when gradient certificates only hold on the bounded working
    /// region rather than globally.
    pub fn has_bounded_certificates(&self) -> bool {
        matches!(self.kind, PotentialKind::SeparablePolynomial { .. })
    }

    /// For quadratics: the positive-definite matrix and linear term, if the
    /// potential is strictly convex. Used to confine gradient descent to a
    /// sublevel set.
    pub(crate) fn positive_definite_parts(&self) -> Option<(&DMatrix<f64>, &Vector)> {
        match &self.kind {
            PotentialKind::Quadratic { q, lin } => {
                let min_eig =
                    q.clone().symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |m, &l| m.min(l));
                (min_eig > PSD_TOL).then_some((q, lin))
            }
            PotentialKind::SeparablePolynomial { .. } => None,
        }
    }

    /// Upper bound on `||grad V||` over the axis box `[lo, hi]`.
    fn max_gradient_norm_on_box(&self, lo: &Vector, hi: &Vector) -> f64 {
        match &self.kind {
            PotentialKind::Quadratic { q, lin } => {
                max_affine_norm_on_box(q, lin, lo, hi)
            }
            PotentialKind::SeparablePolynomial { coeffs } => {
                let mut sum = 0.0;
                for (i, c) in coeffs.iter().enumerate() {
                    let d1 = poly_derivative(c);
                    let (a, b) = poly_range_on_grid(&d1, lo.get(i), hi.get(i));
                    let sup = a.abs().max(b.abs()) * GRID_SAFETY;
                    sum += sup * sup;
                }
                sum.sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum FieldKind {
    Constant { value: Vector },
    Linear { matrix: DMatrix<f64>, offset: Vector },
    NegGradient { potential: Potential },
}

/// A perturbation field together with its certified one-sided Lipschitz
/// constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    kind: FieldKind,
    dim: usize,
    one_sided_lipschitz: f64,
}

impl Field {
    pub fn constant(value: Vector) -> Self {
        let dim = value.dim();
        Self { kind: FieldKind::Constant { value }, dim, one_sided_lipschitz: 0.0 }
    }

    /// Affine field `f(x) = A x + b`. The certified constant is the top
    /// singular value of `A` (an upper bound for the one-sided constant),
    /// estimated by power iteration and inflated for safety. A declared
    /// constant may replace it only from above.
    pub fn linear(
        rows: Vec<Vec<f64>>,
        offset: Vector,
        declared_k: Option<f64>,
    ) -> Result<Self, FieldError> {
        let matrix = square_matrix(rows)?;
        let n = matrix.nrows();
        if offset.dim() != n {
            return Err(FieldError::DimensionMismatch { expected: n, got: offset.dim() });
        }
        let certified = top_singular_value(&matrix) * SPECTRAL_SAFETY;
        let k = match declared_k {
            None => certified,
            Some(k) if k.is_finite() && k >= certified => k,
            Some(k) => {
                return Err(FieldError::InvalidField(format!(
                    "declared one-sided Lipschitz constant {k} is below the certified value {certified:.9e}"
                )))
            }
        };
        Ok(Self { kind: FieldKind::Linear { matrix, offset }, dim: n, one_sided_lipschitz: k })
    }

    /// Steepest-descent field `f(x) = -grad V(x)`; the gradient Lipschitz
    /// constant of `V` certifies the one-sided constant.
    pub fn neg_gradient(potential: Potential) -> Self {
        let dim = potential.dim();
        let k = potential.grad_lipschitz();
        Self { kind: FieldKind::NegGradient { potential }, dim, one_sided_lipschitz: k }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn one_sided_lipschitz(&self) -> f64 {
        self.one_sided_lipschitz
    }

    pub fn potential(&self) -> Option<&Potential> {
        match &self.kind {
            FieldKind::NegGradient { potential } => Some(potential),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            FieldKind::Constant { .. } => "constant",
            FieldKind::Linear { .. } => "linear",
            FieldKind::NegGradient { .. } => "neg_gradient",
        }
    }

    pub fn value(&self, x: &Vector) -> Vector {
        debug_assert_eq!(x.dim(), self.dim);
        match &self.kind {
            FieldKind::Constant { value } => value.clone(),
            FieldKind::Linear { matrix, offset } => mat_vec(matrix, x).add(offset),
            FieldKind::NegGradient { potential } => potential.gradient(x).scale(-1.0),
        }
    }

    /// Upper bound on `||f||` over the axis box `[lo, hi]`.
    pub fn magnitude_bound_on_box(&self, lo: &Vector, hi: &Vector) -> f64 {
        debug_assert_eq!(lo.dim(), self.dim);
        debug_assert_eq!(hi.dim(), self.dim);
        match &self.kind {
            FieldKind::Constant { value } => value.norm(),
            FieldKind::Linear { matrix, offset } => {
                max_affine_norm_on_box(matrix, offset, lo, hi)
            }
            FieldKind::NegGradient { potential } => potential.max_gradient_norm_on_box(lo, hi),
        }
    }
}

fn square_matrix(rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>, FieldError> {
    let n = rows.len();
    if n == 0 {
        return Err(FieldError::InvalidField("matrix has no rows".into()));
    }
    if n > MAX_BOX_DIM {
        return Err(FieldError::InvalidField(format!(
            "matrix dimension {n} exceeds the supported maximum {MAX_BOX_DIM}"
        )));
    }
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(FieldError::InvalidField(format!(
                "row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(FieldError::InvalidField(format!(
                    "matrix entry ({i}, {j}) is not finite: {v}"
                )));
            }
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

fn mat_vec(m: &DMatrix<f64>, x: &Vector) -> Vector {
    let coords = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x.get(j)).sum())
        .collect();
    Vector::new(coords).expect("finite matrix and point give finite products")
}

/// Exact maximum of the convex function `x -> ||A x + b||` over an axis box,
/// attained at a vertex; vertices are enumerated.
fn max_affine_norm_on_box(a: &DMatrix<f64>, b: &Vector, lo: &Vector, hi: &Vector) -> f64 {
    let n = lo.dim();
    assert!(n <= MAX_BOX_DIM, "box dimension exceeds corner enumeration cap");
    let mut best = 0.0f64;
    for mask in 0u32..(1u32 << n) {
        let corner: Vec<f64> =
            (0..n).map(|i| if mask & (1 << i) != 0 { hi.get(i) } else { lo.get(i) }).collect();
        let corner = Vector::new(corner).expect("finite box corners");
        best = best.max(mat_vec(a, &corner).add(b).norm());
    }
    best
}

fn poly_eval(ascending: &[f64], x: f64) -> f64 {
    ascending.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn poly_derivative(ascending: &[f64]) -> Vec<f64> {
    if ascending.len() <= 1 {
        return vec![0.0];
    }
    ascending.iter().enumerate().skip(1).map(|(i, &c)| i as f64 * c).collect()
}

/// (min, max) of a polynomial sampled on a dense uniform grid over [lo, hi].
fn poly_range_on_grid(ascending: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for k in 0..POLY_GRID_POINTS {
        let t = k as f64 / (POLY_GRID_POINTS - 1) as f64;
        let v = poly_eval(ascending, lo + t * (hi - lo));
        min = min.min(v);
        max = max.max(v);
    }
    (min, max)
}

/// Top singular value by power iteration on `A^T A`, from two deterministic
/// starts, stopping when the Rayleigh quotient stagnates. Approaches the true
/// value from below; callers inflate by SPECTRAL_SAFETY. A spectrum whose
/// top two singular values differ by a hair can in principle stall the
/// iteration short of that margin, which is accepted here: the downstream
/// envelopes carry percent-level slack.
fn top_singular_value(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let b = a.transpose() * a;
    let mut best = 0.0f64;
    for start in 0..2 {
        let mut v = DMatrix::<f64>::from_fn(n, 1, |i, _| {
            if start == 0 { 1.0 + 0.01 * (i as f64 + 1.0) } else { 1.0 / (i as f64 + 1.5) }
        });
        v /= v.norm();
        let mut rayleigh = 0.0f64;
        let mut stagnant = 0;
        for _ in 0..10_000 {
            let w = &b * &v;
            let norm = w.norm();
            if norm <= f64::MIN_POSITIVE {
                rayleigh = 0.0;
                break;
            }
            v = w / norm;
            let r = (&b * &v).dot(&v);
            if (r - rayleigh).abs() <= 1e-15 * r.max(1.0) {
                stagnant += 1;
                if stagnant >= 3 {
                    rayleigh = r;
                    break;
                }
            } else {
                stagnant = 0;
            }
            rayleigh = r;
        }
        best = best.max(rayleigh.max(0.0).sqrt());
    }
    best
}
