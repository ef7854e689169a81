//! Error metrics over sampled sweeps.

use serde::Serialize;

use crate::error::{Error, Result};

/// Default number of samples in an evaluation sweep.
pub const DEFAULT_GRID: usize = 1000;

/// A sampled reference signal and its approximation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    xs: Vec<f64>,
    reference: Vec<f64>,
    approximation: Vec<f64>,
}

impl Sweep {
    pub fn new(xs: Vec<f64>, reference: Vec<f64>, approximation: Vec<f64>) -> Result<Self> {
        if xs.len() != reference.len() || xs.len() != approximation.len() {
            return Err(Error::Shape(format!(
                "sweep lengths differ: x {}, reference {}, approximation {}",
                xs.len(),
                reference.len(),
                approximation.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::Shape(format!(
                "sweep needs at least 2 samples, got {}",
                xs.len()
            )));
        }
        Ok(Self {
            xs,
            reference,
            approximation,
        })
    }

    /// Sample `reference` and `approximation` at every `x`.
    pub fn sample(
        xs: Vec<f64>,
        reference: impl Fn(f64) -> f64,
        approximation: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let r = xs.iter().map(|&x| reference(x)).collect();
        let a = xs.iter().map(|&x| approximation(x)).collect();
        Self::new(xs, r, a)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn approximation(&self) -> &[f64] {
        &self.approximation
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// `max(reference) - min(reference)`
    pub fn reference_range(&self) -> f64 {
        let (lo, hi) = self
            .reference
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        hi - lo
    }

    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.approximation
            .iter()
            .zip(&self.reference)
            .map(|(a, r)| a - r)
    }
}

/// Normalized mean percentage error as a signed fraction: the mean of
/// `approximation - reference` divided by the range of the reference.
/// Negative values mean the approximation underestimates.
pub fn nmpe(sweep: &Sweep) -> Result<f64> {
    let range = sweep.reference_range();
    if !(range > 0.0) {
        return Err(Error::DegenerateRange);
    }
    let mean = sweep.errors().sum::<f64>() / sweep.len() as f64;
    Ok(mean / range)
}

pub fn max_abs_error(sweep: &Sweep) -> f64 {
    sweep.errors().map(f64::abs).fold(0.0, f64::max)
}

pub fn rmse(sweep: &Sweep) -> f64 {
    (sweep.errors().map(|e| e * e).sum::<f64>() / sweep.len() as f64).sqrt()
}

/// Median of a non-empty slice.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
