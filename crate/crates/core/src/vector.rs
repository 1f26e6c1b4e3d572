//! Dense parameter/gradient vectors.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Owned dense vector of scalars.
///
/// Every operation in this module returns an error rather than a vector
/// containing NaN or infinity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector<S>(Vec<S>);

impl<S: Scalar> Vector<S> {
    pub fn new(data: Vec<S>) -> Self {
        Vector(data)
    }

    pub fn zeros(len: usize) -> Self {
        Vector(vec![S::zero(); len])
    }

    pub fn into_inner(self) -> Vec<S> {
        self.0
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub(crate) fn checked(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(op))
        }
    }

    /// Returns `y + a·x`.
    pub fn axpy(a: S, x: &Vector<S>, y: &Vector<S>) -> Result<Vector<S>> {
        if x.len() != y.len() {
            return Err(Error::dim("axpy operands", y.len(), x.len()));
        }
        let out = x
            .iter()
            .zip(y.iter())
            .map(|(&xi, &yi)| yi + a * xi)
            .collect();
        Vector(out).checked("axpy")
    }

    /// In-place `self += a·x`.
    pub fn add_scaled(&mut self, a: S, x: &Vector<S>) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::dim("axpy operands", self.len(), x.len()));
        }
        for (yi, &xi) in self.0.iter_mut().zip(x.iter()) {
            *yi += a * xi;
        }
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite("axpy"))
        }
    }

    pub fn scale(&self, a: S) -> Vector<S> {
        Vector(self.0.iter().map(|&v| a * v).collect())
    }

    pub fn dot(&self, other: &Vector<S>) -> Result<S> {
        if other.len() != self.len() {
            return Err(Error::dim("dot operands", self.len(), other.len()));
        }
        Ok(self.iter().zip(other.iter()).map(|(&a, &b)| a * b).sum())
    }

    /// Euclidean norm. Scaled by the largest magnitude so that huge or tiny
    /// entries do not overflow or underflow the sum of squares.
    pub fn l2_norm(&self) -> S {
        let max = self.0.iter().fold(S::zero(), |m, v| m.max(v.abs()));
        if max == S::zero() || !max.is_finite() {
            return max;
        }
        let sum: S = self.0.iter().map(|&v| (v / max) * (v / max)).sum();
        max * sum.sqrt()
    }

    /// Rescales the vector onto the ball of radius `c` if it lies outside.
    /// `c` may be infinite, in which case the input is returned unchanged.
    pub fn clip_to_norm(&self, c: S) -> Result<Vector<S>> {
        if c.is_nan() || c <= S::zero() {
            return Err(Error::param("clip_norm", format!("must be > 0, got {c}")));
        }
        let norm = self.l2_norm();
        if norm <= c {
            return Ok(self.clone());
        }
        let factor = c / norm;
        let mut out = self.scale(factor);
        // Rounding in `c / norm` can leave the result a few ulps outside the ball.
        let mut n = out.l2_norm();
        while n > c {
            let shrink = S::one() - S::epsilon();
            out = out.scale(shrink);
            n = out.l2_norm();
        }
        Ok(out)
    }
}

impl<S> Deref for Vector<S> {
    type Target = [S];

    fn deref(&self) -> &[S] {
        &self.0
    }
}

impl<S> DerefMut for Vector<S> {
    fn deref_mut(&mut self) -> &mut [S] {
        &mut self.0
    }
}

impl<S: Scalar> From<Vec<S>> for Vector<S> {
    fn from(v: Vec<S>) -> Self {
        Vector(v)
    }
}

impl<S: Scalar> FromIterator<S> for Vector<S> {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Vector(iter.into_iter().collect())
    }
}
