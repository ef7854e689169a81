//! Single-input KAN layer built from quadratic Bézier splines.
//!
//! ```text
//! phi(x) = w_b * b(x) + w_s * sum_i c_i * B_i(x)
//! ```
//!
//! The layer domain is split into equal sub-domains, one spline each.
//! Sub-domains are half-open except the last, which is closed, so every
//! input activates exactly one spline. A spline sees its input mapped
//! affinely onto `[-0.5, 0.5]`, the block operating range.

mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::UniformStream;
use crate::spline::{check_constraints, ControlPoints, SplineDomain};

pub use train::{
    finite_difference_gradient, held_out_grid, mse, mse_and_gradient, train,
    wide_domain_experiment, CurvePoint, Gradient, Target, TrainConfig, TrainReport, WideDomainRow,
    DEFAULT_SPLINE_NOISE,
};

/// Residual basis function `b(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Identity,
    #[default]
    Silu,
}

impl BasisKind {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            BasisKind::Identity => x,
            BasisKind::Silu => x / (1.0 + (-x).exp()),
        }
    }
}

impl std::str::FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(BasisKind::Identity),
            "silu" => Ok(BasisKind::Silu),
            _ => Err(Error::Config(format!("unknown basis `{s}`"))),
        }
    }
}

/// A spline and the slice of the input domain it covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub points: ControlPoints,
    pub domain: SplineDomain,
}

impl Segment {
    /// Spline input for layer input `x`.
    #[inline]
    pub fn local(&self, x: f64) -> f64 {
        self.domain.to_rail(x)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.points.rewritten(self.local(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanLayer {
    pub domain: SplineDomain,
    pub segments: Vec<Segment>,
    pub coefficients: Vec<f64>,
    pub w_b: f64,
    pub w_s: f64,
    pub basis: BasisKind,
    /// Series-resistor weights of the analog MAC.
    pub mac_weights: Vec<f64>,
}

impl KanLayer {
    /// `n` zero splines over an equal partition of `domain`, unit
    /// coefficients, `w_s = 1`, `w_b = 0`.
    pub fn new(domain: SplineDomain, n: usize, basis: BasisKind) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("a layer needs at least one spline".into()));
        }
        let segments = domain
            .partition(n)
            .into_iter()
            .map(|d| Segment {
                points: ControlPoints::ZERO,
                domain: d,
            })
            .collect();
        Ok(Self {
            domain,
            segments,
            coefficients: vec![1.0; n],
            w_b: 0.0,
            w_s: 1.0,
            basis,
            mac_weights: vec![1.0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.segments.len();
        if n == 0 || self.coefficients.len() != n || self.mac_weights.len() != n {
            return Err(Error::Shape(format!(
                "{} segments, {} coefficients, {} MAC weights",
                n,
                self.coefficients.len(),
                self.mac_weights.len()
            )));
        }
        let first = self.segments[0].domain;
        let last = self.segments[n - 1].domain;
        if first.lo() != self.domain.lo() || last.hi() != self.domain.hi() {
            return Err(Error::Config(
                "segments do not cover the layer domain".into(),
            ));
        }
        for w in self.segments.windows(2) {
            if w[0].domain.hi() != w[1].domain.lo() {
                return Err(Error::Config(format!(
                    "segments {} and {} are not contiguous",
                    w[0].domain, w[1].domain
                )));
            }
        }
        for (i, s) in self.segments.iter().enumerate() {
            let report = check_constraints(&s.points);
            if !report.is_empty() {
                return Err(Error::Config(format!("spline {i}: {report}")));
            }
        }
        if let Some(w) = self.mac_weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::Config(format!("MAC weight {w} must be positive")));
        }
        Ok(())
    }

    /// Index of the spline responsible for `x`.
    pub fn active_index(&self, x: f64) -> Result<usize> {
        self.domain.check(x)?;
        let n = self.segments.len();
        let guess = ((x - self.domain.lo()) / self.domain.width() * n as f64).floor();
        let mut i = (guess.max(0.0) as usize).min(n - 1);
        while i > 0 && x < self.segments[i].domain.lo() {
            i -= 1;
        }
        while i + 1 < n && x >= self.segments[i].domain.hi() {
            i += 1;
        }
        Ok(i)
    }

    /// Noise-free layer output.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let k = self.active_index(x)?;
        let spline = self.segments[k].eval(x);
        Ok(self.w_b * self.basis.eval(x) + self.w_s * self.coefficients[k] * spline)
    }

    /// Layer output with the active spline perturbed by `noise`.
    pub fn eval_noisy(&self, x: f64, noise: &mut NoiseInjector) -> Result<f64> {
        let k = self.active_index(x)?;
        let spline = noise.perturb(k, self.segments[k].eval(x));
        Ok(self.w_b * self.basis.eval(x) + self.w_s * self.coefficients[k] * spline)
    }

    /// Output as summed by the resistive MAC: the weighted mean of every
    /// spline's scaled contribution, inactive splines contributing zero.
    pub fn eval_mac(&self, x: f64) -> Result<f64> {
        let k = self.active_index(x)?;
        let outputs: Vec<f64> = (0..self.len())
            .map(|i| {
                if i == k {
                    self.coefficients[i] * self.segments[i].eval(x)
                } else {
                    0.0
                }
            })
            .collect();
        mac_compose(&outputs, &self.mac_weights)
    }
}

/// `eval_layer` with optional noise injection.
pub fn eval_layer(layer: &KanLayer, x: f64, noise: Option<&mut NoiseInjector>) -> Result<f64> {
    match noise {
        Some(n) => layer.eval_noisy(x, n),
        None => layer.eval(x),
    }
}

/// Weighted mean `sum w_i y_i / sum w_i` of spline outputs, as formed by
/// series resistors feeding a common node.
pub fn mac_compose(outputs: &[f64], weights: &[f64]) -> Result<f64> {
    if outputs.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} outputs, {} weights",
            outputs.len(),
            weights.len()
        )));
    }
    if outputs.is_empty() {
        return Err(Error::Shape("no spline outputs".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::Config(format!("MAC weight {w} must be positive")));
    }
    if weights.iter().all(|&w| w == weights[0]) {
        return Ok(outputs.iter().sum::<f64>() / outputs.len() as f64);
    }
    let total: f64 = weights.iter().sum();
    Ok(outputs.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / total)
}

/// Smallest output span used to scale spline noise.
pub const MIN_NOISE_SPAN: f64 = 0.25;

/// Running min/max of a spline's outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunningRange {
    pub min: f64,
    pub max: f64,
}

impl RunningRange {
    pub const EMPTY: RunningRange = RunningRange {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    };

    #[inline]
    pub fn observe(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    /// `max - min`, floored at [`MIN_NOISE_SPAN`].
    #[inline]
    pub fn span(&self) -> f64 {
        if self.max >= self.min {
            (self.max - self.min).max(MIN_NOISE_SPAN)
        } else {
            MIN_NOISE_SPAN
        }
    }
}

/// Per-spline stochastic perturbation emulating block error.
///
/// Each evaluation of spline `k` adds `factor * u * span_k` with `u`
/// uniform on `[0, 1)` and `span_k` the running output range of that
/// spline.
#[derive(Debug, Clone)]
pub struct NoiseInjector {
    factor: f64,
    stream: UniformStream,
    ranges: Vec<RunningRange>,
}

impl NoiseInjector {
    pub fn new(factor: f64, n_splines: usize, seed: u64) -> Self {
        Self {
            factor,
            stream: UniformStream::new(seed),
            ranges: vec![RunningRange::EMPTY; n_splines],
        }
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn ranges(&self) -> &[RunningRange] {
        &self.ranges
    }

    /// Same range estimates, fresh stream.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self {
            factor: self.factor,
            stream: UniformStream::new(seed),
            ranges: self.ranges.clone(),
        }
    }

    /// Record `clean` for spline `k` and return the perturbed value.
    #[inline]
    pub fn perturb(&mut self, k: usize, clean: f64) -> f64 {
        self.ranges[k].observe(clean);
        if self.factor == 0.0 {
            return clean;
        }
        clean + self.factor * self.stream.next_unit() * self.ranges[k].span()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_spline_layer_is_zero() {
        let layer = KanLayer::new(SplineDomain::RAIL, 1, BasisKind::Silu).unwrap();
        for x in SplineDomain::RAIL.grid(21) {
            assert_eq!(eval_layer(&layer, x, None).unwrap(), 0.0);
        }
    }

    #[test]
    fn basis_only_identity() {
        let mut layer = KanLayer::new(SplineDomain::RAIL, 3, BasisKind::Identity).unwrap();
        layer.w_b = 1.0;
        layer.w_s = 0.0;
        layer.segments[1].points = ControlPoints::new(0.1, 0.2, 0.3);
        for x in SplineDomain::RAIL.grid(21) {
            assert_eq!(layer.eval(x).unwrap(), x);
        }
    }

    #[test]
    fn silu_values() {
        assert_eq!(BasisKind::Silu.eval(0.0), 0.0);
        assert!((BasisKind::Silu.eval(1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn outside_domain_is_error() {
        let layer = KanLayer::new(SplineDomain::RAIL, 3, BasisKind::Silu).unwrap();
        assert!(matches!(layer.eval(0.7), Err(Error::Domain { .. })));
    }

    #[test]
    fn boundaries_go_right_last_closed() {
        let d = SplineDomain::new(0.0, 3.0).unwrap();
        let layer = KanLayer::new(d, 3, BasisKind::Silu).unwrap();
        assert_eq!(layer.active_index(0.0).unwrap(), 0);
        assert_eq!(layer.active_index(1.0).unwrap(), 1);
        assert_eq!(layer.active_index(2.0).unwrap(), 2);
        assert_eq!(layer.active_index(3.0).unwrap(), 2);
        assert_eq!(layer.active_index(0.999).unwrap(), 0);
    }

    #[test]
    fn mac_examples() {
        assert!((mac_compose(&[0.2, 0.4], &[1.0, 1.0]).unwrap() - 0.3).abs() < 1e-15);
        assert!((mac_compose(&[0.2, 0.4], &[3.0, 1.0]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(mac_compose(&[0.7], &[42.0]).unwrap(), 0.7);
        assert!(matches!(
            mac_compose(&[0.1, 0.2], &[1.0]),
            Err(Error::Shape(_))
        ));
        assert!(mac_compose(&[0.1], &[0.0]).is_err());
    }

    #[test]
    fn validation() {
        let mut layer = KanLayer::new(SplineDomain::RAIL, 3, BasisKind::Silu).unwrap();
        layer.validate().unwrap();
        layer.mac_weights[0] = 0.0;
        assert!(layer.validate().is_err());
        layer.mac_weights[0] = 1.0;
        layer.segments[2].points = ControlPoints::new(0.0, 0.3, 0.0);
        assert!(layer.validate().is_err());
    }

    #[test]
    fn noise_is_one_sided_and_scaled() {
        let mut layer = KanLayer::new(SplineDomain::RAIL, 1, BasisKind::Silu).unwrap();
        layer.segments[0].points = ControlPoints::new(0.1, 0.1, 0.1);
        let mut noise = NoiseInjector::new(-0.1, 1, 5);
        for x in SplineDomain::RAIL.grid(200) {
            let y = layer.eval_noisy(x, &mut noise).unwrap();
            // constant spline: the span sits at the floor
            assert!(y <= 0.1 && y > 0.1 - 0.1 * MIN_NOISE_SPAN);
        }
    }

    #[test]
    fn running_range_floor() {
        let mut r = RunningRange::EMPTY;
        assert_eq!(r.span(), MIN_NOISE_SPAN);
        r.observe(0.0);
        r.observe(0.1);
        assert_eq!(r.span(), MIN_NOISE_SPAN);
        r.observe(1.0);
        assert_eq!(r.span(), 1.0);
    }

    proptest! {
        #[test]
        fn every_input_has_one_spline(lo in -10.0f64..10.0, w in 0.01f64..20.0, n in 1usize..9, f in 0.0f64..=1.0) {
            let d = SplineDomain::new(lo, lo + w).unwrap();
            let layer = KanLayer::new(d, n, BasisKind::Silu).unwrap();
            let x = (lo + f * w).min(d.hi());
            let k = layer.active_index(x).unwrap();
            let seg = layer.segments[k].domain;
            let covered = |i: usize| {
                let s = layer.segments[i].domain;
                x >= s.lo() && (x < s.hi() || (i + 1 == n && x <= s.hi()))
            };
            prop_assert!(covered(k), "x={} seg={}", x, seg);
            prop_assert_eq!((0..n).filter(|&i| covered(i)).count(), 1);
        }
    }
}
