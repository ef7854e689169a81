//! Behavioral models of the analog building blocks.
//!
//! Each block computes its ideal arithmetic result and then, optionally,
//! applies an error model: a systematic offset proportional to the block's
//! calibrated NMPE plus a one-sided uniform perturbation. Block outputs
//! clip to the supply rails; block inputs outside the rails are reported as
//! errors.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::UniformStream;

/// Half the supply voltage: every block operates on `[-RAIL, RAIL]`.
pub const RAIL: f64 = 0.5;

/// Slack allowed on input range checks for values that are on the rail up
/// to floating-point rounding.
pub const RAIL_TOLERANCE: f64 = 1e-12;

/// A node voltage in volts.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Voltage(pub f64);

impl Voltage {
    pub const ZERO: Voltage = Voltage(0.0);

    #[inline]
    pub const fn get(self) -> f64 {
        self.0
    }

    /// Clip to `[-RAIL, RAIL]`.
    #[inline]
    pub fn saturate(self) -> Voltage {
        Voltage(self.0.clamp(-RAIL, RAIL))
    }

    #[inline]
    pub fn within_rails(self) -> bool {
        self.0.abs() <= RAIL + RAIL_TOLERANCE
    }
}

impl From<f64> for Voltage {
    fn from(v: f64) -> Self {
        Voltage(v)
    }
}

impl fmt::Display for Voltage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} V", self.0)
    }
}

/// The five block kinds. ADD is physically an inversion followed by a
/// subtraction, but it carries its own calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BlockKind {
    Inv,
    Sub,
    Add,
    Mul,
    Sqr,
}

impl BlockKind {
    pub const ALL: [BlockKind; 5] = [
        BlockKind::Inv,
        BlockKind::Sub,
        BlockKind::Add,
        BlockKind::Mul,
        BlockKind::Sqr,
    ];

    /// Number of voltage operands.
    pub const fn arity(self) -> usize {
        match self {
            BlockKind::Inv | BlockKind::Sqr => 1,
            BlockKind::Sub | BlockKind::Add | BlockKind::Mul => 2,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            BlockKind::Inv => "INV",
            BlockKind::Sub => "SUB",
            BlockKind::Add => "ADD",
            BlockKind::Mul => "MUL",
            BlockKind::Sqr => "SQR",
        }
    }

    /// Exact arithmetic, no range handling.
    #[inline]
    pub(crate) fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BlockKind::Inv => -a,
            BlockKind::Sub => a - b,
            BlockKind::Add => a + b,
            BlockKind::Mul => a * b,
            BlockKind::Sqr => a * a,
        }
    }

    fn check_operands(self, a: Voltage, b: Option<Voltage>) -> Result<f64> {
        let b = match (self.arity(), b) {
            (1, None) => 0.0,
            (2, Some(b)) => {
                check_rail(self, b)?;
                b.0
            }
            (expected, _) => {
                return Err(Error::Arity {
                    block: self,
                    expected,
                })
            }
        };
        check_rail(self, a)?;
        Ok(b)
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BlockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BlockKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown block kind `{s}`")))
    }
}

fn check_rail(block: BlockKind, v: Voltage) -> Result<()> {
    if v.within_rails() {
        Ok(())
    } else {
        Err(Error::RangeViolation {
            block,
            value: v.0,
            rail: RAIL,
        })
    }
}

/// Exact block result, saturated to the rails.
pub fn eval_ideal(kind: BlockKind, a: Voltage, b: Option<Voltage>) -> Result<Voltage> {
    let b = kind.check_operands(a, b)?;
    Ok(Voltage(kind.apply(a.0, b)).saturate())
}

/// What the relative bias and noise factor are multiplied by to obtain an
/// absolute offset in volts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetReference {
    /// A fixed nominal span, `output_span`.
    #[default]
    Span,
    /// The magnitude of the block's ideal output: the block under- or
    /// over-shoots its own signal by the calibrated fraction.
    Signal,
}

impl std::str::FromStr for OffsetReference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "span" => Ok(OffsetReference::Span),
            "signal" => Ok(OffsetReference::Signal),
            _ => Err(Error::Config(format!("unknown offset reference `{s}`"))),
        }
    }
}

/// Error calibration of a single block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockErrorModel {
    /// Signed relative bias, e.g. `-0.0793` for -7.93 %.
    pub nmpe_bias: f64,
    /// Nominal output span in volts used with [`OffsetReference::Span`].
    pub output_span: f64,
    /// Signed scale of the uniform perturbation.
    pub noise_factor: f64,
    pub rng_seed: u64,
    #[serde(default)]
    pub reference: OffsetReference,
}

impl BlockErrorModel {
    /// A model that leaves the ideal result untouched.
    pub const IDEAL: BlockErrorModel = BlockErrorModel {
        nmpe_bias: 0.0,
        output_span: 1.0,
        noise_factor: 0.0,
        rng_seed: 0,
        reference: OffsetReference::Span,
    };

    pub fn with_bias(nmpe_bias: f64) -> Self {
        BlockErrorModel {
            nmpe_bias,
            ..Self::IDEAL
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nmpe_bias.abs() < 1.0) {
            return Err(Error::Config(format!(
                "nmpe_bias {} must satisfy |bias| < 1",
                self.nmpe_bias
            )));
        }
        if !(self.output_span > 0.0 && self.output_span.is_finite()) {
            return Err(Error::Config(format!(
                "output_span {} must be positive",
                self.output_span
            )));
        }
        if !self.noise_factor.is_finite() {
            return Err(Error::Config("noise_factor must be finite".into()));
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.nmpe_bias == 0.0 && self.noise_factor == 0.0
    }

    #[inline]
    fn perturb(&self, ideal: f64, stream: &mut UniformStream) -> f64 {
        if self.is_ideal() {
            return ideal;
        }
        let reference = match self.reference {
            OffsetReference::Span => self.output_span,
            OffsetReference::Signal => ideal.abs(),
        };
        let mut out = ideal + self.nmpe_bias * reference;
        if self.noise_factor != 0.0 {
            out += self.noise_factor * reference * stream.next_unit();
        }
        out
    }
}

impl Default for BlockErrorModel {
    fn default() -> Self {
        Self::IDEAL
    }
}

/// One error model per block kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    #[serde(rename = "INV")]
    pub inv: BlockErrorModel,
    #[serde(rename = "SUB")]
    pub sub: BlockErrorModel,
    #[serde(rename = "ADD")]
    pub add: BlockErrorModel,
    #[serde(rename = "MUL")]
    pub mul: BlockErrorModel,
    #[serde(rename = "SQR")]
    pub sqr: BlockErrorModel,
}

impl ErrorTable {
    /// Every block ideal.
    pub const IDEAL: ErrorTable = ErrorTable {
        inv: BlockErrorModel::IDEAL,
        sub: BlockErrorModel::IDEAL,
        add: BlockErrorModel::IDEAL,
        mul: BlockErrorModel::IDEAL,
        sqr: BlockErrorModel::IDEAL,
    };

    pub fn get(&self, kind: BlockKind) -> &BlockErrorModel {
        match kind {
            BlockKind::Inv => &self.inv,
            BlockKind::Sub => &self.sub,
            BlockKind::Add => &self.add,
            BlockKind::Mul => &self.mul,
            BlockKind::Sqr => &self.sqr,
        }
    }

    pub fn get_mut(&mut self, kind: BlockKind) -> &mut BlockErrorModel {
        match kind {
            BlockKind::Inv => &mut self.inv,
            BlockKind::Sub => &mut self.sub,
            BlockKind::Add => &mut self.add,
            BlockKind::Mul => &mut self.mul,
            BlockKind::Sqr => &mut self.sqr,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (BlockKind, &BlockErrorModel)> {
        BlockKind::ALL.into_iter().map(move |k| (k, self.get(k)))
    }

    /// Same biases, with every block using `reference`.
    pub fn with_reference(mut self, reference: OffsetReference) -> Self {
        for k in BlockKind::ALL {
            self.get_mut(k).reference = reference;
        }
        self
    }

    /// Same biases, with every block perturbed by `noise_factor`.
    pub fn with_noise(mut self, noise_factor: f64) -> Self {
        for k in BlockKind::ALL {
            self.get_mut(k).noise_factor = noise_factor;
        }
        self
    }

    /// Give each block its own seed, `base ^ kind_index`.
    pub fn with_seed(mut self, base: u64) -> Self {
        for (i, k) in BlockKind::ALL.into_iter().enumerate() {
            self.get_mut(k).rng_seed = crate::rng::derive_seed(base, i as u64);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.iter().try_for_each(|(_, m)| m.validate())
    }
}

impl Default for ErrorTable {
    fn default() -> Self {
        default_error_table()
    }
}

/// Measured per-block NMPE: INV +2.66 %, SUB -4.7 %, ADD -4.23 %,
/// MUL -6.99 %, SQR -7.93 %; span 1 V, no noise.
pub fn default_error_table() -> ErrorTable {
    ErrorTable {
        inv: BlockErrorModel::with_bias(0.0266),
        sub: BlockErrorModel::with_bias(-0.047),
        add: BlockErrorModel::with_bias(-0.0423),
        mul: BlockErrorModel::with_bias(-0.0699),
        sqr: BlockErrorModel::with_bias(-0.0793),
    }
}

/// A block error model bound to its own random stream.
#[derive(Debug, Clone)]
pub struct NoisyBlock {
    model: BlockErrorModel,
    stream: UniformStream,
}

impl NoisyBlock {
    pub fn new(model: BlockErrorModel) -> Self {
        Self {
            stream: UniformStream::new(model.rng_seed),
            model,
        }
    }

    pub fn model(&self) -> &BlockErrorModel {
        &self.model
    }

    /// Evaluate `kind` with this block's error model.
    pub fn eval(&mut self, kind: BlockKind, a: Voltage, b: Option<Voltage>) -> Result<Voltage> {
        let b = kind.check_operands(a, b)?;
        Ok(self.eval_unchecked(kind, a.0, b))
    }

    /// Ideal result of `kind`, perturbed and clipped. The caller is
    /// responsible for the operand range.
    #[inline]
    pub(crate) fn eval_unchecked(&mut self, kind: BlockKind, a: f64, b: f64) -> Voltage {
        let ideal = Voltage(kind.apply(a, b)).saturate().0;
        Voltage(self.model.perturb(ideal, &mut self.stream)).saturate()
    }
}

/// One-shot evaluation with a fresh stream seeded from the model.
pub fn eval_with_error(
    kind: BlockKind,
    model: &BlockErrorModel,
    a: Voltage,
    b: Option<Voltage>,
) -> Result<Voltage> {
    NoisyBlock::new(*model).eval(kind, a, b)
}

/// Circuit metadata for a block. Purely descriptive; never read during
/// evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub transistors: String,
    pub resistors: Vec<String>,
    pub bias_sources: Vec<String>,
    pub relative_area_weight: f64,
    pub relative_power_weight: f64,
}

/// Design properties of the fabricated blocks. ADD is an INV followed by a
/// SUB and has no separate sizing.
pub fn block_specs() -> Vec<BlockSpec> {
    let spec = |kind, transistors: &str, resistors: &[&str], bias: &[&str]| BlockSpec {
        kind,
        transistors: transistors.to_string(),
        resistors: resistors.iter().map(|s| s.to_string()).collect(),
        bias_sources: bias.iter().map(|s| s.to_string()).collect(),
        relative_area_weight: 1.0,
        relative_power_weight: 1.0,
    };
    vec![
        spec(
            BlockKind::Inv,
            "2x W=20um L=600nm",
            &["r=250kOhm W=2.4um L=3um"],
            &[],
        ),
        spec(
            BlockKind::Sub,
            "2x W=20um L=600nm",
            &["r=30kOhm W=20um L=3um"],
            &["vbias=0.5V"],
        ),
        spec(BlockKind::Add, "INV + SUB", &[], &[]),
        spec(
            BlockKind::Mul,
            "W=5um L=600nm",
            &[
                "R r=99.97MOhm W=1.4um L=719.4um",
                "R1 r=428.57kOhm W=1.4um L=3um",
                "R2 r=40MOhm W=1.4um L=291.8um",
            ],
            &["ibias=1uA"],
        ),
        spec(
            BlockKind::Sqr,
            "W=5um L=1.3um",
            &[
                "R r=25.97MOhm W=1.4um L=201.4um",
                "R1 r=15.45MOhm W=1.4um L=123.8um",
            ],
            &["ibias=1uA", "vbias=-210mV"],
        ),
    ]
}
