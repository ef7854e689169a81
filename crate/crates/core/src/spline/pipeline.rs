//! The five-block analog spline and block bookkeeping for both closed
//! forms.
//!
//! Rewritten form, per input `x`:
//!
//! ```text
//! b  = MUL(2 (P1 - P0), x)
//! s  = SQR(x)
//! c  = MUL(P0 - 2 P1 + P2, s)   squaring-block design, SQR calibration
//! t  = ADD(P0, b)
//! y  = ADD(t, c)
//! ```
//!
//! `P0` and both constants are precomputed and injected as voltages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ControlPoints, SplineDomain};
use crate::abb::{BlockKind, ErrorTable, NoisyBlock, Voltage};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// One block instance in a spline realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Stage {
    pub label: &'static str,
    /// Arithmetic performed.
    pub function: BlockKind,
    /// Calibration entry used for its error model.
    pub error_kind: BlockKind,
}

const fn stage(label: &'static str, function: BlockKind, error_kind: BlockKind) -> Stage {
    Stage {
        label,
        function,
        error_kind,
    }
}

const REWRITTEN: [Stage; 5] = [
    stage("2(P1-P0)*x", BlockKind::Mul, BlockKind::Mul),
    stage("x^2", BlockKind::Sqr, BlockKind::Sqr),
    stage("(P0-2P1+P2)*x^2", BlockKind::Mul, BlockKind::Sqr),
    stage("P0+b", BlockKind::Add, BlockKind::Add),
    stage("(P0+b)+c", BlockKind::Add, BlockKind::Add),
];

const CANONICAL: [Stage; 9] = [
    stage("1-x", BlockKind::Sub, BlockKind::Sub),
    stage("(1-x)^2", BlockKind::Sqr, BlockKind::Sqr),
    stage("P0*(1-x)^2", BlockKind::Mul, BlockKind::Mul),
    stage("x^2", BlockKind::Sqr, BlockKind::Sqr),
    stage("x-x^2", BlockKind::Sub, BlockKind::Sub),
    stage("2P1*(x-x^2)", BlockKind::Mul, BlockKind::Mul),
    stage("P2*x^2", BlockKind::Mul, BlockKind::Mul),
    stage("first+second", BlockKind::Add, BlockKind::Add),
    stage("+third", BlockKind::Add, BlockKind::Add),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// Bernstein form, nine blocks.
    Canonical,
    /// Expanded polynomial form, five blocks.
    Rewritten,
}

impl Formulation {
    pub const fn stages(self) -> &'static [Stage] {
        match self {
            Formulation::Canonical => &CANONICAL,
            Formulation::Rewritten => &REWRITTEN,
        }
    }
}

impl std::str::FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "canonical" => Ok(Formulation::Canonical),
            "rewritten" => Ok(Formulation::Rewritten),
            _ => Err(Error::Config(format!(
                "unknown formulation `{s}` (expected canonical or rewritten)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockCount {
    pub per_kind: BTreeMap<BlockKind, usize>,
    pub total: usize,
}

impl BlockCount {
    pub fn get(&self, kind: BlockKind) -> usize {
        self.per_kind.get(&kind).copied().unwrap_or(0)
    }
}

/// Blocks needed per formulation, grouped by the arithmetic they perform.
pub fn count_blocks(formulation: Formulation) -> BlockCount {
    let mut per_kind = BTreeMap::new();
    for s in formulation.stages() {
        *per_kind.entry(s.function).or_insert(0) += 1;
    }
    BlockCount {
        total: formulation.stages().len(),
        per_kind,
    }
}

/// One row of a pipeline sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub x: f64,
    pub ideal: f64,
    pub analog: f64,
    pub abs_err: f64,
}

/// Behavioral model of the fabricated spline.
#[derive(Debug, Clone)]
pub struct AnalogSplinePipeline {
    points: ControlPoints,
    domain: SplineDomain,
    table: ErrorTable,
    constants: (f64, f64, f64),
    blocks: Vec<NoisyBlock>,
}

impl AnalogSplinePipeline {
    /// Fails if a precomputed constant falls outside the rails.
    pub fn new(points: ControlPoints, table: ErrorTable) -> Result<Self> {
        table.validate()?;
        let constants = points.coefficients();
        let (c0, c1, c2) = constants;
        let checks = [
            (BlockKind::Add, c0),
            (BlockKind::Mul, c1),
            (BlockKind::Mul, c2),
        ];
        for (block, value) in checks {
            if !Voltage(value).within_rails() {
                return Err(Error::RangeViolation {
                    block,
                    value,
                    rail: crate::abb::RAIL,
                });
            }
        }
        let blocks = REWRITTEN
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut model = *table.get(s.error_kind);
                model.rng_seed = derive_seed(model.rng_seed, i as u64);
                NoisyBlock::new(model)
            })
            .collect();
        Ok(Self {
            points,
            domain: SplineDomain::RAIL,
            table,
            constants,
            blocks,
        })
    }

    pub fn ideal(points: ControlPoints) -> Result<Self> {
        Self::new(points, ErrorTable::IDEAL)
    }

    pub fn points(&self) -> &ControlPoints {
        &self.points
    }

    pub fn error_table(&self) -> &ErrorTable {
        &self.table
    }

    pub fn stages(&self) -> &'static [Stage] {
        &REWRITTEN
    }

    pub fn domain(&self) -> SplineDomain {
        self.domain
    }

    /// Evaluate the spline at input voltage `x`, advancing every block's
    /// random stream.
    pub fn eval(&mut self, x: Voltage) -> Result<Voltage> {
        self.domain.check(x.0)?;
        let (c0, c1, c2) = self.constants;
        let [mul, sqr, cmul, add0, add1] = &mut self.blocks[..] else {
            unreachable!("five blocks")
        };
        let b = mul.eval_unchecked(BlockKind::Mul, c1, x.0);
        let s = sqr.eval_unchecked(BlockKind::Sqr, x.0, 0.0);
        let c = cmul.eval_unchecked(BlockKind::Mul, c2, s.0);
        let t = add0.eval_unchecked(BlockKind::Add, c0, b.0);
        Ok(add1.eval_unchecked(BlockKind::Add, t.0, c.0))
    }

    /// Evaluate over `xs`.
    pub fn sweep(&mut self, xs: &[f64]) -> Result<Vec<SweepRow>> {
        xs.iter()
            .map(|&x| {
                let analog = self.eval(Voltage(x))?.0;
                let ideal = self.points.rewritten(x);
                Ok(SweepRow {
                    x,
                    ideal,
                    analog,
                    abs_err: (analog - ideal).abs(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abb::{default_error_table, BlockErrorModel};
    use crate::metrics::{nmpe, Sweep};
    use crate::spline::Scenario;
    use proptest::prelude::*;

    #[test]
    fn block_counts() {
        let r = count_blocks(Formulation::Rewritten);
        assert_eq!(r.total, 5);
        assert_eq!(r.get(BlockKind::Mul), 2);
        assert_eq!(r.get(BlockKind::Sqr), 1);
        assert_eq!(r.get(BlockKind::Add), 2);
        assert_eq!(r.get(BlockKind::Sub), 0);

        let c = count_blocks(Formulation::Canonical);
        assert_eq!(c.total, 9);
        assert_eq!(c.get(BlockKind::Sub), 2);
        assert_eq!(c.get(BlockKind::Mul), 3);
        assert_eq!(c.get(BlockKind::Sqr), 2);
        assert_eq!(c.get(BlockKind::Add), 2);
    }

    #[test]
    fn constant_multiplier_uses_squaring_calibration() {
        let s = REWRITTEN[2];
        assert_eq!(s.function, BlockKind::Mul);
        assert_eq!(s.error_kind, BlockKind::Sqr);
    }

    #[test]
    fn zero_error_matches_closed_form() {
        let mut p = AnalogSplinePipeline::ideal(Scenario::A.points()).unwrap();
        assert_eq!(p.eval(Voltage(0.5)).unwrap().0, 0.375);
        let mut z = AnalogSplinePipeline::ideal(ControlPoints::ZERO).unwrap();
        for x in SplineDomain::RAIL.grid(101) {
            assert_eq!(z.eval(Voltage(x)).unwrap().0, 0.0);
        }
    }

    #[test]
    fn domain_is_enforced() {
        let mut p = AnalogSplinePipeline::ideal(Scenario::B.points()).unwrap();
        assert!(matches!(p.eval(Voltage(0.51)), Err(Error::Domain { .. })));
    }

    #[test]
    fn out_of_rail_constant_is_rejected() {
        let r = AnalogSplinePipeline::ideal(ControlPoints::new(0.7, 0.7, 0.7));
        assert!(matches!(r, Err(Error::RangeViolation { .. })));
    }

    #[test]
    fn biased_blocks_underestimate_scenario_c() {
        let mut p = AnalogSplinePipeline::new(Scenario::C.points(), default_error_table()).unwrap();
        let xs = SplineDomain::RAIL.grid(1000);
        let rows = p.sweep(&xs).unwrap();
        let sweep = Sweep::new(
            xs,
            rows.iter().map(|r| r.ideal).collect(),
            rows.iter().map(|r| r.analog).collect(),
        )
        .unwrap();
        assert!(nmpe(&sweep).unwrap() < 0.0);
    }

    #[test]
    fn noisy_pipeline_is_reproducible() {
        let table = default_error_table().with_noise(-0.05).with_seed(9);
        let xs = SplineDomain::RAIL.grid(64);
        let a = AnalogSplinePipeline::new(Scenario::A.points(), table)
            .unwrap()
            .sweep(&xs)
            .unwrap();
        let b = AnalogSplinePipeline::new(Scenario::A.points(), table)
            .unwrap()
            .sweep(&xs)
            .unwrap();
        assert_eq!(a, b);
    }

    fn single_bias(kind: BlockKind, bias: f64) -> ErrorTable {
        let mut t = ErrorTable::IDEAL;
        *t.get_mut(kind) = BlockErrorModel::with_bias(bias);
        t
    }

    proptest! {
        #[test]
        fn fidelity_without_error(p0 in -0.2f64..0.2, s in -0.15f64..0.15, c in -0.2f64..0.2, x in -0.5f64..=0.5) {
            let p1 = p0 + s;
            let pts = ControlPoints::new(p0, p1, c - p0 + 2.0 * p1);
            let mut pipe = AnalogSplinePipeline::ideal(pts).unwrap();
            let y = pipe.eval(Voltage(x)).unwrap().0;
            prop_assert!((y - pts.rewritten(x)).abs() <= 1e-12);
        }

        #[test]
        fn single_bias_effect_is_continuous(kind_ix in 0usize..5, x in -0.5f64..=0.5, bias in -0.2f64..0.2) {
            let kind = BlockKind::ALL[kind_ix];
            let pts = Scenario::A.points();
            let ideal = pts.rewritten(x);
            let at = |b: f64| {
                let mut p = AnalogSplinePipeline::new(pts, single_bias(kind, b)).unwrap();
                p.eval(Voltage(x)).unwrap().0 - ideal
            };
            prop_assert!(at(0.0).abs() <= 1e-15);
            let h = 1e-7;
            prop_assert!((at(bias + h) - at(bias)).abs() <= 10.0 * h);
        }
    }
}
