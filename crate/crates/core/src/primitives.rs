//! Parameter vectors, l1-balls and the problem constants shared by every optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack used by every l1-ball membership test.
pub const BALL_TOLERANCE: f64 = 1e-9;

/// A finite point of R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    /// Builds a vector, rejecting NaN and infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry {} at coordinate {j}",
                values[j]
            )));
        }
        Ok(DenseVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        DenseVector(vec![0.0; dim])
    }

    /// Canonical basis vector `scale * e_index`.
    pub fn basis(dim: usize, index: usize, scale: f64) -> Self {
        let mut v = vec![0.0; dim];
        v[index] = scale;
        DenseVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Mutable access for in-crate numerics that preserve finiteness.
    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.len() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                got: self.len(),
            })
        }
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        other.check_dim(self.len())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Number of nonzero coordinates.
    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }

    pub fn sub(&self, other: &DenseVector) -> Result<DenseVector> {
        other.check_dim(self.len())?;
        Ok(DenseVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        DenseVector::new(values)
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sum of absolute values, plain left-to-right summation.
pub fn l1_norm(v: &DenseVector) -> Result<f64> {
    // DenseVector is finite by construction; re-checked for vectors mutated in place.
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite entry in l1_norm"));
    }
    Ok(v.iter().map(|x| x.abs()).sum())
}

/// `‖v − center‖₁ ≤ radius + 1e−9`.
pub fn ball_contains(ball: &L1Ball, v: &DenseVector) -> Result<bool> {
    v.check_dim(ball.center.len())?;
    let dist: f64 = v
        .iter()
        .zip(ball.center.iter())
        .map(|(a, c)| (a - c).abs())
        .sum();
    Ok(dist <= ball.radius + BALL_TOLERANCE)
}

/// Euclidean distance `‖v − θ*‖₂`.
pub fn excess_l2(v: &DenseVector, theta_star: &DenseVector) -> Result<f64> {
    Ok(v.sub(theta_star)?.l2_norm())
}

/// The l1-ball `{θ : ‖θ − center‖₁ ≤ radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Ball {
    center: DenseVector,
    radius: f64,
}

impl L1Ball {
    pub fn new(center: DenseVector, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::invalid(format!("ball radius must be >= 0, got {radius}")));
        }
        Ok(L1Ball { center, radius })
    }

    /// Ball centered at the origin.
    pub fn centered(dim: usize, radius: f64) -> Result<Self> {
        L1Ball::new(DenseVector::zeros(dim), radius)
    }

    pub fn center(&self) -> &DenseVector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }
}

/// Constants `(d0, α, U, B, δ)` consumed by the accelerated procedure and its bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    /// Sparsity budget.
    pub d0: usize,
    /// Strong-convexity constant: the risk is 2α-strongly convex.
    pub alpha: f64,
    /// l1 radius bound on θ*.
    pub u: f64,
    /// Sup-norm gradient bound over the 2U-ball.
    pub b: f64,
    /// Global failure probability.
    pub delta: f64,
}

impl ProblemParams {
    pub fn new(d0: usize, alpha: f64, u: f64, b: f64, delta: f64) -> Result<Self> {
        let p = ProblemParams {
            d0,
            alpha,
            u,
            b,
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("U", self.u), ("B", self.b)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        Ok(())
    }

    pub fn validate_for_dim(&self, dim: usize) -> Result<()> {
        self.validate()?;
        if self.d0 > dim {
            return Err(Error::invalid(format!(
                "d0 = {} exceeds dimension {dim}",
                self.d0
            )));
        }
        Ok(())
    }

    /// `γ = 2⁴ d0 B / (α U)`, the constant governing session lengths.
    pub fn gamma(&self) -> f64 {
        16.0 * self.d0 as f64 * self.b / (self.alpha * self.u)
    }
}
