//! Bit-exact 8-bit fixed-point reference spline.
//!
//! Values are two's-complement Q1.6: one sign bit, one integer bit and six
//! fractional bits, covering `[-2, 1.984375]` in steps of `1/64`.
//!
//! The spline evaluates the expanded polynomial with quantized constants.
//! Products are held at 16 fractional bits and every term, as well as
//! every sum, is rounded back to six fractional bits (round half to
//! even). All arithmetic saturates.

use serde::Serialize;

use crate::abb::{ErrorTable, Voltage};
use crate::error::Result;
use crate::metrics::{max_abs_error, nmpe, Sweep};
use crate::spline::{AnalogSplinePipeline, ControlPoints, SplineDomain};

pub const FRAC_BITS: u32 = 6;
/// Fractional bits of intermediate products.
pub const WIDE_FRAC_BITS: u32 = 16;
pub const ULP: f64 = 1.0 / (1 << FRAC_BITS) as f64;

/// An 8-bit Q1.6 value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct FixedPointCode(pub i8);

impl FixedPointCode {
    pub const MIN: FixedPointCode = FixedPointCode(i8::MIN);
    pub const MAX: FixedPointCode = FixedPointCode(i8::MAX);
    pub const MIN_VALUE: f64 = i8::MIN as f64 * ULP;
    pub const MAX_VALUE: f64 = i8::MAX as f64 * ULP;

    #[inline]
    pub const fn raw(self) -> i8 {
        self.0
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0 as f64 * ULP
    }

    /// All 256 codes in ascending order.
    pub fn all() -> impl Iterator<Item = FixedPointCode> {
        (i8::MIN..=i8::MAX).map(FixedPointCode)
    }

    #[inline]
    fn saturating(raw: i64) -> Self {
        FixedPointCode(raw.clamp(i8::MIN as i64, i8::MAX as i64) as i8)
    }
}

/// Nearest code, ties to even, saturating at the format bounds.
pub fn quantize(v: f64) -> FixedPointCode {
    let scaled = (v * (1 << FRAC_BITS) as f64).round_ties_even();
    // `as` saturates and maps NaN to zero
    FixedPointCode::saturating(scaled as i64)
}

/// `v / 2^shift`, rounded half to even.
#[inline]
fn round_shift(v: i64, shift: u32) -> i64 {
    if shift == 0 {
        return v;
    }
    let q = v >> shift;
    let rem = v - (q << shift);
    let half = 1i64 << (shift - 1);
    if rem > half || (rem == half && q & 1 == 1) {
        q + 1
    } else {
        q
    }
}

/// Narrow a `WIDE_FRAC_BITS` value to a saturated code.
#[inline]
fn narrow(wide: i64) -> FixedPointCode {
    FixedPointCode::saturating(round_shift(wide, WIDE_FRAC_BITS - FRAC_BITS))
}

/// The quantized constants of a digital spline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DigitalSpline {
    pub constant: FixedPointCode,
    pub linear: FixedPointCode,
    pub quadratic: FixedPointCode,
}

impl DigitalSpline {
    pub fn new(points: &ControlPoints) -> Self {
        let (c0, c1, c2) = points.coefficients();
        Self {
            constant: quantize(c0),
            linear: quantize(c1),
            quadratic: quantize(c2),
        }
    }

    pub fn eval(&self, x: FixedPointCode) -> FixedPointCode {
        let x = x.0 as i64;
        let up = WIDE_FRAC_BITS - 2 * FRAC_BITS;

        // linear term: 12 fractional bits, exact at 16
        let linear = narrow((self.linear.0 as i64 * x) << up);

        // x^2 is exact at 16 bits; the product with the constant carries
        // 22 and is rounded to 16 before narrowing
        let square = (x * x) << up;
        let quad_wide = round_shift(self.quadratic.0 as i64 * square, FRAC_BITS);
        let quadratic = narrow(quad_wide);

        let partial = FixedPointCode::saturating(self.constant.0 as i64 + linear.0 as i64);
        FixedPointCode::saturating(partial.0 as i64 + quadratic.0 as i64)
    }
}

/// Digital spline output for input code `x`.
pub fn eval_digital_spline(points: &ControlPoints, x: FixedPointCode) -> FixedPointCode {
    DigitalSpline::new(points).eval(x)
}

/// Real-valued expanded polynomial, clipped to what the format can hold.
pub fn reference_value(points: &ControlPoints, x: f64) -> f64 {
    points
        .rewritten(x)
        .clamp(FixedPointCode::MIN_VALUE, FixedPointCode::MAX_VALUE)
}

/// One input code in an exhaustive comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CodeRow {
    pub x_code: i8,
    pub x_value: f64,
    pub oracle: f64,
    pub digital: f64,
    /// `None` where the code lies outside the analog rails.
    pub analog: Option<f64>,
}

impl CodeRow {
    pub fn digital_error(&self) -> f64 {
        self.digital - self.oracle
    }

    pub fn analog_error(&self) -> Option<f64> {
        self.analog.map(|a| a - self.oracle)
    }
}

/// Accuracy of the analog pipeline against the digital spline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub points: ControlPoints,
    /// NMPE over the analog sweep grid.
    pub nmpe_analog: f64,
    pub nmpe_digital: f64,
    pub max_abs_analog: f64,
    pub max_abs_digital: f64,
    /// Worst digital error over every input code.
    pub max_abs_digital_all_codes: f64,
    pub codes: Vec<CodeRow>,
}

/// Sweep `grid` through the analog pipeline and the digital spline, and
/// every input code through the digital spline, all against the
/// real-valued polynomial.
pub fn compare_analog_digital(
    points: &ControlPoints,
    table: &ErrorTable,
    grid: &[f64],
) -> Result<ComparisonReport> {
    let digital = DigitalSpline::new(points);
    let mut analog = AnalogSplinePipeline::new(*points, *table)?;

    let oracle: Vec<f64> = grid.iter().map(|&x| points.rewritten(x)).collect();
    let analog_out = analog.sweep(grid)?.into_iter().map(|r| r.analog).collect();
    let digital_out = grid
        .iter()
        .map(|&x| digital.eval(quantize(x)).value())
        .collect();
    let analog_sweep = Sweep::new(grid.to_vec(), oracle.clone(), analog_out)?;
    let digital_sweep = Sweep::new(grid.to_vec(), oracle, digital_out)?;

    // code rows reuse a fresh pipeline so they do not depend on the grid
    let mut code_pipeline = AnalogSplinePipeline::new(*points, *table)?;
    let rail = SplineDomain::RAIL;
    let codes: Vec<CodeRow> = FixedPointCode::all()
        .map(|code| {
            let x = code.value();
            let analog = rail
                .contains(x)
                .then(|| code_pipeline.eval(Voltage(x)).map(|v| v.0))
                .transpose()?;
            Ok(CodeRow {
                x_code: code.0,
                x_value: x,
                oracle: reference_value(points, x),
                digital: digital.eval(code).value(),
                analog,
            })
        })
        .collect::<Result<_>>()?;
    let max_abs_digital_all_codes = codes
        .iter()
        .map(|r| r.digital_error().abs())
        .fold(0.0, f64::max);

    Ok(ComparisonReport {
        points: *points,
        nmpe_analog: nmpe(&analog_sweep)?,
        nmpe_digital: nmpe(&digital_sweep)?,
        max_abs_analog: max_abs_error(&analog_sweep),
        max_abs_digital: max_abs_error(&digital_sweep),
        max_abs_digital_all_codes,
        codes,
    })
}
