//! Two's-complement fixed-point scalars and complex samples.
//!
//! Every value carries its [`FixedFormat`]: word length, fractional bits,
//! rounding rule and overflow policy. Arithmetic is done on widened `i128`
//! intermediates and brought back into a format exactly once, through
//! [`FixedFormat::requantize`], so a datapath's rounding points are explicit.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FxError {
    #[error("invalid fixed-point format: word_length={word_length}, frac_bits={frac_bits}")]
    InvalidFormat { word_length: u32, frac_bits: u32 },
    #[error("operand formats differ: {0} vs {1}")]
    FormatMismatch(FixedFormat, FixedFormat),
    #[error("cannot parse fixed-point format `{0}` (expected e.g. Q1.11)")]
    Parse(String),
}

/// How bits dropped by a right shift are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Rounding {
    /// Drop the bits (floor toward −∞, what a plain arithmetic shift does).
    Truncate,
    HalfAwayFromZero,
    #[default]
    HalfEven,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Overflow {
    #[default]
    Saturate,
    Wrap,
}

impl FromStr for Rounding {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "truncate" | "trunc" | "floor" => Ok(Rounding::Truncate),
            "half-away" | "round-half-away-from-zero" | "away" => Ok(Rounding::HalfAwayFromZero),
            "half-even" | "round-half-even" | "even" => Ok(Rounding::HalfEven),
            other => Err(format!("unknown rounding mode `{other}`")),
        }
    }
}

impl FromStr for Overflow {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "saturate" | "sat" => Ok(Overflow::Saturate),
            "wrap" => Ok(Overflow::Wrap),
            other => Err(format!("unknown overflow policy `{other}`")),
        }
    }
}

impl fmt::Display for Rounding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rounding::Truncate => "truncate",
            Rounding::HalfAwayFromZero => "half-away",
            Rounding::HalfEven => "half-even",
        })
    }
}

impl fmt::Display for Overflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Overflow::Saturate => "saturate",
            Overflow::Wrap => "wrap",
        })
    }
}

/// Signed fixed-point format. Raw values are interpreted as `raw / 2^frac_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedFormat {
    word_length: u8,
    frac_bits: u8,
    pub rounding: Rounding,
    pub overflow: Overflow,
}

pub const MIN_WORD_LENGTH: u32 = 4;
pub const MAX_WORD_LENGTH: u32 = 32;

impl FixedFormat {
    /// Half-even rounding, saturating overflow.
    pub fn new(word_length: u32, frac_bits: u32) -> Result<Self, FxError> {
        if !(MIN_WORD_LENGTH..=MAX_WORD_LENGTH).contains(&word_length) || frac_bits >= word_length {
            return Err(FxError::InvalidFormat { word_length, frac_bits });
        }
        Ok(Self {
            word_length: word_length as u8,
            frac_bits: frac_bits as u8,
            rounding: Rounding::default(),
            overflow: Overflow::default(),
        })
    }

    /// Q1.(w-1): one sign bit, the rest fractional.
    pub fn fractional(word_length: u32) -> Result<Self, FxError> {
        Self::new(word_length, word_length.saturating_sub(1))
    }

    /// The 12-bit Q1.11 data format of the reference architecture.
    pub fn q1_11() -> Self {
        Self::new(12, 11).expect("Q1.11 is valid")
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn with_overflow(mut self, overflow: Overflow) -> Self {
        self.overflow = overflow;
        self
    }

    pub fn word_length(&self) -> u32 {
        self.word_length as u32
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits as u32
    }

    pub fn int_bits(&self) -> u32 {
        self.word_length() - self.frac_bits()
    }

    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.word_length() - 1)) - 1
    }

    pub fn min_raw(&self) -> i64 {
        -(1i64 << (self.word_length() - 1))
    }

    pub fn ulp(&self) -> f64 {
        (-(self.frac_bits() as f64)).exp2()
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.ulp()
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 * self.ulp()
    }

    pub fn contains_raw(&self, raw: i64) -> bool {
        (self.min_raw()..=self.max_raw()).contains(&raw)
    }

    /// Shift `value` right by `shift` bits under this format's rounding rule.
    pub fn round_shift(&self, value: i128, shift: u32) -> i128 {
        round_shift(value, shift, self.rounding)
    }

    /// Apply the overflow policy. Returns the fitted raw value and whether it
    /// was out of range.
    pub fn fit(&self, value: i128) -> (i64, bool) {
        let min = self.min_raw() as i128;
        let max = self.max_raw() as i128;
        if (min..=max).contains(&value) {
            return (value as i64, false);
        }
        let fitted = match self.overflow {
            Overflow::Saturate => value.clamp(min, max),
            Overflow::Wrap => {
                let bits = self.word_length();
                let modulus = 1i128 << bits;
                let mut r = value.rem_euclid(modulus);
                if r > max {
                    r -= modulus;
                }
                r
            }
        };
        (fitted as i64, true)
    }

    /// Bring a wide value with `frac` fractional bits into this format: one
    /// rounding (if bits are dropped) followed by the overflow policy.
    pub fn requantize(&self, value: i128, frac: u32) -> (i64, bool) {
        let target = self.frac_bits();
        let aligned = if frac >= target {
            self.round_shift(value, frac - target)
        } else {
            value << (target - frac)
        };
        self.fit(aligned)
    }
}

impl Default for FixedFormat {
    fn default() -> Self {
        Self::q1_11()
    }
}

impl fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits(), self.frac_bits())
    }
}

impl FromStr for FixedFormat {
    type Err = FxError;

    /// Parses `Q<int>.<frac>`; rounding/overflow take their defaults.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || FxError::Parse(s.to_string());
        let body = s.strip_prefix('Q').or_else(|| s.strip_prefix('q')).ok_or_else(err)?;
        let (int, frac) = body.split_once('.').ok_or_else(err)?;
        let int: u32 = int.parse().map_err(|_| err())?;
        let frac: u32 = frac.parse().map_err(|_| err())?;
        Self::new(int + frac, frac)
    }
}

fn round_shift(value: i128, shift: u32, rounding: Rounding) -> i128 {
    if shift == 0 {
        return value;
    }
    match rounding {
        Rounding::Truncate => value >> shift,
        Rounding::HalfAwayFromZero => {
            let half = 1i128 << (shift - 1);
            if value >= 0 {
                (value + half) >> shift
            } else {
                -((-value + half) >> shift)
            }
        }
        Rounding::HalfEven => {
            let q = value >> shift;
            let r = value - (q << shift);
            let half = 1i128 << (shift - 1);
            if r > half || (r == half && q & 1 == 1) {
                q + 1
            } else {
                q
            }
        }
    }
}

/// A fixed-point scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fx {
    raw: i64,
    format: FixedFormat,
}

impl Fx {
    /// Builds a value from a raw integer, applying the overflow policy if it
    /// does not fit.
    pub fn from_raw(raw: i64, format: FixedFormat) -> Self {
        Self {
            raw: format.fit(raw as i128).0,
            format,
        }
    }

    pub fn zero(format: FixedFormat) -> Self {
        Self { raw: 0, format }
    }

    /// Wide intermediate with `frac` fractional bits into `format`; the flag
    /// reports an overflow.
    pub fn from_wide(value: i128, frac: u32, format: FixedFormat) -> (Self, bool) {
        let (raw, ovf) = format.requantize(value, frac);
        (Self { raw, format }, ovf)
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn format(&self) -> FixedFormat {
        self.format
    }

    pub fn to_f64(&self) -> f64 {
        self.raw as f64 * self.format.ulp()
    }

    pub fn overflowing_neg(self) -> (Self, bool) {
        let (raw, ovf) = self.format.fit(-(self.raw as i128));
        (Self { raw, ..self }, ovf)
    }

    pub fn overflowing_add(self, rhs: Self) -> Result<(Self, bool), FxError> {
        same_format(self.format, rhs.format)?;
        let (raw, ovf) = self.format.fit(self.raw as i128 + rhs.raw as i128);
        Ok((Self { raw, ..self }, ovf))
    }

    pub fn overflowing_sub(self, rhs: Self) -> Result<(Self, bool), FxError> {
        same_format(self.format, rhs.format)?;
        let (raw, ovf) = self.format.fit(self.raw as i128 - rhs.raw as i128);
        Ok((Self { raw, ..self }, ovf))
    }
}

impl fmt::Display for Fx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.raw)
    }
}

fn same_format(a: FixedFormat, b: FixedFormat) -> Result<(), FxError> {
    if a == b {
        Ok(())
    } else {
        Err(FxError::FormatMismatch(a, b))
    }
}

/// Nearest representable value under `format`'s rounding rule; out-of-range
/// inputs follow the overflow policy. NaN maps to zero.
pub fn quantize(value: f64, format: FixedFormat) -> Fx {
    if value.is_nan() {
        return Fx::zero(format);
    }
    let scaled = value * (format.frac_bits() as f64).exp2();
    let rounded = match format.rounding {
        Rounding::Truncate => scaled.floor(),
        Rounding::HalfAwayFromZero => scaled.round(),
        Rounding::HalfEven => scaled.round_ties_even(),
    };
    // Beyond 2^100 every policy gives the same answer as a clamped value for
    // saturation; wrap of such magnitudes is meaningless anyway.
    let limit = 2f64.powi(100);
    let wide = rounded.clamp(-limit, limit) as i128;
    Fx {
        raw: format.fit(wide).0,
        format,
    }
}

pub fn fx_add(a: Fx, b: Fx) -> Result<Fx, FxError> {
    a.overflowing_add(b).map(|(v, _)| v)
}

pub fn fx_sub(a: Fx, b: Fx) -> Result<Fx, FxError> {
    a.overflowing_sub(b).map(|(v, _)| v)
}

/// Full-precision product rounded once into `out_format`.
pub fn fx_mul(a: Fx, b: Fx, out_format: FixedFormat) -> Fx {
    let wide = a.raw as i128 * b.raw as i128;
    Fx::from_wide(wide, a.format.frac_bits() + b.format.frac_bits(), out_format).0
}

/// Complex sample: real and imaginary parts in one shared format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CFx {
    pub re: Fx,
    pub im: Fx,
}

impl CFx {
    pub fn new(re: Fx, im: Fx) -> Result<Self, FxError> {
        same_format(re.format, im.format)?;
        Ok(Self { re, im })
    }

    pub fn from_raw(re: i64, im: i64, format: FixedFormat) -> Self {
        Self {
            re: Fx::from_raw(re, format),
            im: Fx::from_raw(im, format),
        }
    }

    pub fn zero(format: FixedFormat) -> Self {
        Self::from_raw(0, 0, format)
    }

    pub fn quantize(re: f64, im: f64, format: FixedFormat) -> Self {
        Self {
            re: quantize(re, format),
            im: quantize(im, format),
        }
    }

    /// Both components from wide intermediates sharing `frac` fractional bits.
    pub fn from_wide(re: i128, im: i128, frac: u32, format: FixedFormat) -> (Self, bool) {
        let (re, o1) = Fx::from_wide(re, frac, format);
        let (im, o2) = Fx::from_wide(im, frac, format);
        (Self { re, im }, o1 || o2)
    }

    pub fn format(&self) -> FixedFormat {
        self.re.format
    }

    pub fn raw(&self) -> (i64, i64) {
        (self.re.raw, self.im.raw)
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }
}

impl fmt::Display for CFx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.re.raw, self.im.raw)
    }
}

/// Complex product with both accumulations at full precision and a single
/// rounding per output component.
pub fn cfx_mul(a: CFx, w: CFx, out_format: FixedFormat) -> CFx {
    cfx_mul_overflowing(a, w, out_format).0
}

pub fn cfx_mul_overflowing(a: CFx, w: CFx, out_format: FixedFormat) -> (CFx, bool) {
    let (ar, ai) = (a.re.raw as i128, a.im.raw as i128);
    let (wr, wi) = (w.re.raw as i128, w.im.raw as i128);
    let frac = a.format().frac_bits() + w.format().frac_bits();
    CFx::from_wide(ar * wr - ai * wi, ar * wi + ai * wr, frac, out_format)
}
