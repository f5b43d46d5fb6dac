//! Shared domain vocabulary: preference vectors and return vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Expected discounted return, one entry per objective.
pub type ReturnVector = Vec<f64>;

/// A point on the probability simplex weighting the objectives.
///
/// Entries are nonnegative and sum to 1 within 1e-9.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PreferenceVector(Vec<f64>);

impl PreferenceVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("preference vector must be non-empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(
                "preference weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "preference weights must sum to 1 (got {sum})"
            )));
        }
        Ok(Self(weights))
    }

    /// Normalizes arbitrary nonnegative weights onto the simplex.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::Config(
                "preference weights must have a positive finite sum".into(),
            ));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        let mut w = vec![0.0; n];
        w[index] = 1.0;
        Self(w)
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

    pub fn dot(&self, returns: &[f64]) -> f64 {
        dot(&self.0, returns)
    }
}

impl std::ops::Index<usize> for PreferenceVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
