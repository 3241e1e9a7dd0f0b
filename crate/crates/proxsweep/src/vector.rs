//! Dense real vectors with validated, finite coordinates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum VectorError {
    #[error("vector must have at least one coordinate")]
    Empty,
    #[error("coordinate {index} is not finite ({value})")]
    NotFinite { index: usize, value: f64 },
}

/// A point or direction in R^n. Coordinates are finite and n >= 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector {
    coords: Vec<f64>,
}

impl Vector {
    pub fn new(coords: Vec<f64>) -> Result<Self, VectorError> {
        if coords.is_empty() {
            return Err(VectorError::Empty);
        }
        for (index, &value) in coords.iter().enumerate() {
            if !value.is_finite() {
                return Err(VectorError::NotFinite { index, value });
            }
        }
        Ok(Self { coords })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "zero-dimensional vector");
        Self { coords: vec![0.0; dim] }
    }

    /// Standard basis vector `sign * e_axis`.
    pub fn basis(dim: usize, axis: usize, sign: f64) -> Self {
        let mut v = Self::zeros(dim);
        v.coords[axis] = sign;
        v
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn get(&self, i: usize) -> f64 {
        self.coords[i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        assert!(value.is_finite(), "non-finite coordinate assignment");
        self.coords[i] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.coords.iter()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.check_dim(other);
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(&self, other: &Self) -> f64 {
        self.sub(other).norm()
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_dim(other);
        Self {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_dim(other);
        Self {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, t: f64) -> Self {
        Self {
            coords: self.coords.iter().map(|a| a * t).collect(),
        }
    }

    /// `self + t * other`, the workhorse of every predictor step.
    pub fn add_scaled(&self, t: f64, other: &Self) -> Self {
        self.check_dim(other);
        Self {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + t * b)
                .collect(),
        }
    }

    /// Unit vector in the direction of `self`, or None at (numerical) zero.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if n <= f64::MIN_POSITIVE {
            None
        } else {
            Some(self.scale(1.0 / n))
        }
    }

    fn check_dim(&self, other: &Self) {
        assert_eq!(
            self.coords.len(),
            other.coords.len(),
            "internal dimension mismatch: {} vs {}",
            self.coords.len(),
            other.coords.len()
        );
    }
}

impl From<&[f64]> for Vector {
    /// Panics on invalid coordinates; use `Vector::new` for untrusted input.
    fn from(slice: &[f64]) -> Self {
        Vector::new(slice.to_vec()).expect("invalid coordinates")
    }
}

impl std::fmt::Display for Vector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}
