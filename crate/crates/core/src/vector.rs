//! Dense vectors and the ternary sign convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ternary sign with `sign_of(0) = 0`.
///
/// Mapping zero to zero (rather than to an arbitrary side) means a tied
/// majority vote produces no update for that coordinate and keeps vote
/// outputs ternary.
pub fn sign_of(x: f64) -> Result<i8> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("sign_of({x})")));
    }
    Ok(sign3(x))
}

/// Unchecked ternary sign for values already known to be finite.
#[inline]
pub(crate) fn sign3(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Length-`d` real vector holding iterates, gradients and residuals.
///
/// All entries are finite by construction; the vector is immutable after
/// construction and safe to share across threads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector {
    values: Vec<f64>,
}

impl DenseVector {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput(
                "vector dimension must be positive".into(),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vector entry {bad}")));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "vector dimension must be positive");
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> f64) -> Result<Self> {
        Self::new((0..dim).map(f).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: f64, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + factor * b)
                .collect(),
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Largest absolute coordinate-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs())))
    }
}

/// Per-coordinate keep-probability scaling for the sparsifying compressor.
///
/// Either one budget broadcast to all coordinates or an explicit length-`d`
/// sequence. Every entry must be finite and non-negative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CompressionBudget {
    Uniform(f64),
    PerCoordinate(Vec<f64>),
}

impl CompressionBudget {
    pub fn uniform(b: f64) -> Result<Self> {
        let budget = Self::Uniform(b);
        budget.validate()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |b: f64| -> Result<()> {
            if !b.is_finite() || b < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "budget entries must be finite and >= 0, got {b}"
                )));
            }
            Ok(())
        };
        match self {
            Self::Uniform(b) => check(*b),
            Self::PerCoordinate(bs) => {
                if bs.is_empty() {
                    return Err(Error::InvalidInput("empty per-coordinate budget".into()));
                }
                bs.iter().try_for_each(|b| check(*b))
            }
        }
    }

    /// Checks compatibility with a vector of dimension `dim`.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            Self::Uniform(_) => Ok(()),
            Self::PerCoordinate(bs) if bs.len() == dim => Ok(()),
            Self::PerCoordinate(bs) => Err(Error::DimensionMismatch {
                expected: dim,
                actual: bs.len(),
            }),
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        match self {
            Self::Uniform(b) => *b,
            Self::PerCoordinate(bs) => bs[i],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_convention() {
        assert_eq!(sign_of(3.2).unwrap(), 1);
        assert_eq!(sign_of(-0.0001).unwrap(), -1);
        assert_eq!(sign_of(0.0).unwrap(), 0);
        assert_eq!(sign_of(-0.0).unwrap(), 0);
        assert!(sign_of(f64::NAN).is_err());
        assert!(sign_of(f64::INFINITY).is_err());
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(DenseVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(DenseVector::new(vec![]).is_err());
        assert!(DenseVector::new(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn norms() {
        let v = DenseVector::new(vec![3.0, -4.0]).unwrap();
        assert_eq!(v.l1_norm(), 7.0);
        assert_eq!(v.l2_norm(), 5.0);
        assert_eq!(v.linf_norm(), 4.0);
    }

    #[test]
    fn axpy_and_dims() {
        let a = DenseVector::new(vec![1.0, 2.0]).unwrap();
        let b = DenseVector::new(vec![10.0, -10.0]).unwrap();
        assert_eq!(a.axpy(0.5, &b).unwrap().values(), &[6.0, -3.0]);
        let c = DenseVector::zeros(3);
        assert!(a.add(&c).is_err());
    }

    #[test]
    fn budget_validation() {
        assert!(CompressionBudget::uniform(-1.0).is_err());
        assert!(CompressionBudget::PerCoordinate(vec![0.0, 2.0])
            .validate()
            .is_ok());
        let b = CompressionBudget::PerCoordinate(vec![1.0, 2.0]);
        assert!(b.check_dim(3).is_err());
        assert!(b.check_dim(2).is_ok());
    }
}
