//! Second-order Bézier splines: the two closed forms, the control-point
//! range constraints, and the five-block analog realization.
//!
//! Both closed forms are evaluated directly on the raw input voltage; no
//! remapping to `[0, 1]` is performed.

mod constraints;
mod pipeline;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use constraints::{
    check_constraints, project_to_constraints, Constraint, ConstraintReport, Violation,
    CURVATURE_BOUND, END_SLOPE_BOUND, FEASIBILITY_TOLERANCE, SLOPE_BOUND,
};
pub use pipeline::{count_blocks, AnalogSplinePipeline, BlockCount, Formulation, Stage, SweepRow};

/// The trainable control points of one quadratic Bézier spline, in volts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlPoints {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

impl ControlPoints {
    pub const ZERO: ControlPoints = ControlPoints::new(0.0, 0.0, 0.0);

    pub const fn new(p0: f64, p1: f64, p2: f64) -> Self {
        Self { p0, p1, p2 }
    }

    /// `P1 - P0`
    #[inline]
    pub fn slope(&self) -> f64 {
        self.p1 - self.p0
    }

    /// `P0 - 2 P1 + P2`
    #[inline]
    pub fn curvature(&self) -> f64 {
        self.p0 - 2.0 * self.p1 + self.p2
    }

    /// `P2 - P1`
    #[inline]
    pub fn end_slope(&self) -> f64 {
        self.p2 - self.p1
    }

    /// The three constants fed to the analog pipeline:
    /// `(P0, 2 (P1 - P0), P0 - 2 P1 + P2)`.
    #[inline]
    pub fn coefficients(&self) -> (f64, f64, f64) {
        (self.p0, self.slope() * 2.0, self.curvature())
    }

    /// `P0 (1 - x)^2 + 2 P1 (1 - x) x + P2 x^2`
    #[inline]
    pub fn canonical(&self, x: f64) -> f64 {
        let s = 1.0 - x;
        self.p0 * s * s + 2.0 * self.p1 * s * x + self.p2 * x * x
    }

    /// `P0 + (P1 - P0) 2 x + (P0 - 2 P1 + P2) x^2`
    #[inline]
    pub fn rewritten(&self, x: f64) -> f64 {
        let (c0, c1, c2) = self.coefficients();
        c0 + c1 * x + c2 * (x * x)
    }

    pub fn is_feasible(&self) -> bool {
        check_constraints(self).is_empty()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p0, self.p1, self.p2]
    }

    pub fn from_array(p: [f64; 3]) -> Self {
        Self::new(p[0], p[1], p[2])
    }
}

impl fmt::Display for ControlPoints {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.p0, self.p1, self.p2)
    }
}

impl FromStr for ControlPoints {
    type Err = Error;

    /// Parses `p0,p1,p2`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("control points `{s}`: {e}")))?;
        match parts.as_slice() {
            [p0, p1, p2] => Ok(ControlPoints::new(*p0, *p1, *p2)),
            _ => Err(Error::Config(format!(
                "control points `{s}`: expected three comma-separated values"
            ))),
        }
    }
}

/// Closed input interval of a spline or layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct SplineDomain {
    lo: f64,
    hi: f64,
}

impl SplineDomain {
    /// The ABB operating range.
    pub const RAIL: SplineDomain = SplineDomain { lo: -0.5, hi: 0.5 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "domain [{lo}, {hi}] must satisfy lo < hi"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain {
                x,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    /// `n` evenly spaced points from `lo` to `hi` inclusive.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.lo],
            _ => {
                let step = self.width() / (n - 1) as f64;
                (0..n)
                    .map(|i| {
                        if i == n - 1 {
                            self.hi
                        } else {
                            self.lo + step * i as f64
                        }
                    })
                    .collect()
            }
        }
    }

    /// Equal-width sub-intervals covering this domain.
    pub fn partition(&self, n: usize) -> Vec<SplineDomain> {
        let step = self.width() / n as f64;
        (0..n)
            .map(|i| {
                let lo = self.lo + step * i as f64;
                let hi = if i + 1 == n {
                    self.hi
                } else {
                    self.lo + step * (i + 1) as f64
                };
                SplineDomain { lo, hi }
            })
            .collect()
    }

    /// Affine map of `x` onto the rail domain `[-0.5, 0.5]`.
    #[inline]
    pub fn to_rail(&self, x: f64) -> f64 {
        (x - self.lo) / self.width() - 0.5
    }

    /// Canonical Bernstein form, with `x` checked against this domain.
    pub fn eval_canonical(&self, points: &ControlPoints, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(points.canonical(x))
    }

    pub fn eval_rewritten(&self, points: &ControlPoints, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(points.rewritten(x))
    }
}

impl Default for SplineDomain {
    fn default() -> Self {
        Self::RAIL
    }
}

impl TryFrom<(f64, f64)> for SplineDomain {
    type Error = Error;

    fn try_from((lo, hi): (f64, f64)) -> Result<Self> {
        SplineDomain::new(lo, hi)
    }
}

impl From<SplineDomain> for (f64, f64) {
    fn from(d: SplineDomain) -> Self {
        (d.lo, d.hi)
    }
}

impl FromStr for SplineDomain {
    type Err = Error;

    /// Parses `lo:hi`.
    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("domain `{s}`: expected lo:hi")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("domain `{s}`: {e}")))
        };
        SplineDomain::new(parse(lo)?, parse(hi)?)
    }
}

impl fmt::Display for SplineDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.lo, self.hi)
    }
}

/// Evaluate the canonical form over the default rail domain.
pub fn eval_bezier_canonical(points: &ControlPoints, x: f64) -> Result<f64> {
    SplineDomain::RAIL.eval_canonical(points, x)
}

/// Evaluate the rewritten form over the default rail domain.
pub fn eval_bezier_rewritten(points: &ControlPoints, x: f64) -> Result<f64> {
    SplineDomain::RAIL.eval_rewritten(points, x)
}

/// The three reference control-point sets of the full-spline error study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B,
    C,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::A, Scenario::B, Scenario::C];

    pub const fn points(self) -> ControlPoints {
        match self {
            Scenario::A => ControlPoints::new(0.1, 0.3, 0.8),
            Scenario::B => ControlPoints::new(0.2, 0.4, 0.6),
            Scenario::C => ControlPoints::new(0.15, 0.4, 0.85),
        }
    }

    /// NMPE of the fabricated spline, post-layout.
    pub const fn measured_nmpe(self) -> f64 {
        match self {
            Scenario::A => -0.0484,
            Scenario::B => -0.0502,
            Scenario::C => -0.0758,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Scenario::A => "A",
            Scenario::B => "B",
            Scenario::C => "C",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            _ => Err(Error::Config(format!(
                "unknown scenario `{s}` (expected A, B or C)"
            ))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
