//! Voltage-range constraints on control points.
//!
//! Two linear forms are bounded directly:
//!
//! * `P1 - P0` in `[-0.25, 0.25]`, so that `2 (P1 - P0)` is a valid MUL input;
//! * `P0 - 2 P1 + P2` in `[-0.5, 0.5]`, so that the squared-term constant is
//!   a valid input.
//!
//! Their sum `P2 - P1` is then confined to `[-0.75, 0.75]`; it is reported
//! as a third, implied constraint.

use std::fmt;

use serde::Serialize;

use super::ControlPoints;
use crate::error::{Error, Result};

pub const SLOPE_BOUND: f64 = 0.25;
pub const CURVATURE_BOUND: f64 = 0.5;
pub const END_SLOPE_BOUND: f64 = SLOPE_BOUND + CURVATURE_BOUND;

/// Values within this distance of a bound count as on the bound.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Constraint {
    /// `P1 - P0`
    Slope,
    /// `P0 - 2 P1 + P2`
    Curvature,
    /// `P2 - P1`
    EndSlope,
}

impl Constraint {
    pub const ALL: [Constraint; 3] = [
        Constraint::Slope,
        Constraint::Curvature,
        Constraint::EndSlope,
    ];

    pub const fn bound(self) -> f64 {
        match self {
            Constraint::Slope => SLOPE_BOUND,
            Constraint::Curvature => CURVATURE_BOUND,
            Constraint::EndSlope => END_SLOPE_BOUND,
        }
    }

    pub fn value(self, p: &ControlPoints) -> f64 {
        match self {
            Constraint::Slope => p.slope(),
            Constraint::Curvature => p.curvature(),
            Constraint::EndSlope => p.end_slope(),
        }
    }

    pub const fn expression(self) -> &'static str {
        match self {
            Constraint::Slope => "P1 - P0",
            Constraint::Curvature => "P0 - 2 P1 + P2",
            Constraint::EndSlope => "P2 - P1",
        }
    }

    /// Coefficients of the linear form in `(p0, p1, p2)`.
    const fn normal(self) -> [f64; 3] {
        match self {
            Constraint::Slope => [-1.0, 1.0, 0.0],
            Constraint::Curvature => [1.0, -2.0, 1.0],
            Constraint::EndSlope => [0.0, -1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub value: f64,
    pub bound: f64,
    /// Distance beyond the bound.
    pub excess: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} = {} outside [-{}, {}] by {}",
            self.constraint.expression(),
            self.value,
            self.bound,
            self.bound,
            self.excess
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("all constraints satisfied");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Report every constraint the points violate.
pub fn check_constraints(points: &ControlPoints) -> ConstraintReport {
    let violations = Constraint::ALL
        .into_iter()
        .filter_map(|c| {
            let value = c.value(points);
            let excess = value.abs() - c.bound();
            (excess > FEASIBILITY_TOLERANCE || value.is_nan()).then_some(Violation {
                constraint: c,
                value,
                bound: c.bound(),
                excess,
            })
        })
        .collect();
    ConstraintReport { violations }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn within(c: Constraint, p: &[f64; 3]) -> bool {
    dot(&c.normal(), p).abs() <= c.bound() + FEASIBILITY_TOLERANCE
}

/// Nearest feasible point in the Euclidean sense.
///
/// The feasible set is the intersection of two slabs, so the minimizer has
/// one of nine active sets (each defining constraint free, at its lower or
/// at its upper bound). Each candidate is the orthogonal projection onto
/// the corresponding affine subspace; the closest feasible one is returned.
/// Feasible input is returned unchanged, which makes the map idempotent.
pub fn project_to_constraints(points: &ControlPoints) -> Result<ControlPoints> {
    let p = points.as_array();
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!(
            "cannot project non-finite control points {points}"
        )));
    }
    let defining = [Constraint::Slope, Constraint::Curvature];
    if defining.iter().all(|&c| within(c, &p)) {
        return Ok(*points);
    }

    let mut best: Option<([f64; 3], f64)> = None;
    let targets = |c: Constraint| [None, Some(-c.bound()), Some(c.bound())];
    for t_slope in targets(Constraint::Slope) {
        for t_curv in targets(Constraint::Curvature) {
            let active: Vec<(Constraint, f64)> = [
                t_slope.map(|t| (Constraint::Slope, t)),
                t_curv.map(|t| (Constraint::Curvature, t)),
            ]
            .into_iter()
            .flatten()
            .collect();
            let q = project_affine(&p, &active);
            if !defining.iter().all(|&c| within(c, &q)) {
                continue;
            }
            let d = (0..3).map(|i| (q[i] - p[i]).powi(2)).sum::<f64>();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((q, d));
            }
        }
    }
    best.map(|(q, _)| ControlPoints::from_array(q))
        .ok_or_else(|| Error::Projection(points.to_string()))
}

/// Orthogonal projection of `p` onto `{q : n_c . q = t_c for all active}`.
fn project_affine(p: &[f64; 3], active: &[(Constraint, f64)]) -> [f64; 3] {
    match active {
        [] => *p,
        [(c, t)] => {
            let n = c.normal();
            let r = (dot(&n, p) - t) / dot(&n, &n);
            [p[0] - r * n[0], p[1] - r * n[1], p[2] - r * n[2]]
        }
        [(c1, t1), (c2, t2)] => {
            let (n1, n2) = (c1.normal(), c2.normal());
            let (g11, g12, g22) = (dot(&n1, &n1), dot(&n1, &n2), dot(&n2, &n2));
            let (r1, r2) = (dot(&n1, p) - t1, dot(&n2, p) - t2);
            let det = g11 * g22 - g12 * g12;
            let l1 = (g22 * r1 - g12 * r2) / det;
            let l2 = (g11 * r2 - g12 * r1) / det;
            [
                p[0] - l1 * n1[0] - l2 * n2[0],
                p[1] - l1 * n1[1] - l2 * n2[1],
                p[2] - l1 * n1[2] - l2 * n2[2],
            ]
        }
        _ => unreachable!("at most two defining constraints"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scenario_c_sits_on_the_slope_bound() {
        let r = check_constraints(&ControlPoints::new(0.15, 0.4, 0.85));
        assert!(r.is_empty(), "{r}");
    }

    #[test]
    fn slope_violation_is_reported() {
        let r = check_constraints(&ControlPoints::new(0.0, 0.3, 0.0));
        let slope = r
            .violations
            .iter()
            .find(|v| v.constraint == Constraint::Slope)
            .unwrap();
        assert!((slope.value - 0.3).abs() < 1e-15);
        assert!((slope.excess - 0.05).abs() < 1e-15);
        assert!(r.to_string().contains("P1 - P0"));
    }

    #[test]
    fn zero_is_feasible_and_fixed() {
        assert!(check_constraints(&ControlPoints::ZERO).is_empty());
        assert_eq!(
            project_to_constraints(&ControlPoints::ZERO).unwrap(),
            ControlPoints::ZERO
        );
    }

    #[test]
    fn feasible_input_is_unchanged() {
        let p = ControlPoints::new(0.1, 0.3, 0.8);
        assert_eq!(project_to_constraints(&p).unwrap(), p);
    }

    #[test]
    fn infeasible_input_is_repaired() {
        let p = ControlPoints::new(0.0, 0.3, 0.6);
        let q = project_to_constraints(&p).unwrap();
        assert!(check_constraints(&q).is_empty());
        assert_ne!(p, q);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        assert!(project_to_constraints(&ControlPoints::new(f64::NAN, 0.0, 0.0)).is_err());
    }

    /// Dykstra's alternating projections, run to convergence: an
    /// independent route to the same nearest point.
    fn dykstra(p: [f64; 3]) -> [f64; 3] {
        let slab = |c: Constraint, x: [f64; 3]| {
            let n = c.normal();
            let s = dot(&n, &x);
            let b = c.bound();
            let shift = if s > b {
                s - b
            } else if s < -b {
                s + b
            } else {
                return x;
            };
            let r = shift / dot(&n, &n);
            [x[0] - r * n[0], x[1] - r * n[1], x[2] - r * n[2]]
        };
        let add = |a: [f64; 3], b: [f64; 3]| [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
        let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let (mut x, mut i1, mut i2) = (p, [0.0; 3], [0.0; 3]);
        for _ in 0..20_000 {
            let y = slab(Constraint::Slope, add(x, i1));
            i1 = sub(add(x, i1), y);
            let z = slab(Constraint::Curvature, add(y, i2));
            i2 = sub(add(y, i2), z);
            x = z;
        }
        x
    }

    proptest! {
        #[test]
        fn matches_dykstra(p0 in -1.0f64..1.0, p1 in -1.0f64..1.0, p2 in -1.0f64..1.0) {
            let p = ControlPoints::new(p0, p1, p2);
            let q = project_to_constraints(&p).unwrap().as_array();
            let r = dykstra(p.as_array());
            for i in 0..3 {
                prop_assert!((q[i] - r[i]).abs() < 1e-9, "{:?} vs {:?}", q, r);
            }
        }

        #[test]
        fn closure_and_idempotence(p0 in -2.0f64..2.0, p1 in -2.0f64..2.0, p2 in -2.0f64..2.0) {
            let q = project_to_constraints(&ControlPoints::new(p0, p1, p2)).unwrap();
            prop_assert!(check_constraints(&q).is_empty());
            prop_assert_eq!(project_to_constraints(&q).unwrap(), q);
        }

        #[test]
        fn defining_bounds_imply_end_slope(p0 in -0.5f64..0.5, s in -0.25f64..=0.25, c in -0.5f64..=0.5) {
            let p1 = p0 + s;
            let p = ControlPoints::new(p0, p1, c - p0 + 2.0 * p1);
            prop_assert!(p.end_slope().abs() <= END_SLOPE_BOUND + FEASIBILITY_TOLERANCE);
        }
    }
}
