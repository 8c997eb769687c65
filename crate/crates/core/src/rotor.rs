//! Rotator datapaths and the angle bookkeeping behind them.
//!
//! A twiddle `W_L^m = e^{-j2πm/L}` is handled by the cheapest datapath whose
//! angle set contains it:
//!
//! * trivial rotations (multiples of π/2) are swaps and negations,
//! * `W_8` odd powers use one shared constant multiplier by `0.7071`,
//! * `W_16` odd powers use a three-adder multiplier shared by `473`, `362`
//!   and `196` (all over 512),
//! * anything else goes through a general complex multiplier with a
//!   coefficient table.
//!
//! Constant multipliers are shift-and-add [`CsdRecipe`]s evaluated on exact
//! integers; each datapath rounds once, at its output.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::fxnum::{cfx_mul_overflowing, CFx, FixedFormat, Fx};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RotorError {
    #[error("twiddle base {0} is not a power of two")]
    InvalidBase(u32),
    #[error("M-rotator order needs a power-of-two base >= 8, got {0}")]
    InvalidMrotBase(u32),
    #[error("{0} is not handled by this datapath")]
    UnsupportedExponent(TwiddleExponent),
    #[error("{exponent} is not allocated to this rotator")]
    AllocationViolation { exponent: TwiddleExponent },
    #[error("W8 constant at {frac_bits} fractional bits needs {ops} add/sub operations (bound {bound})")]
    RecipeTooLong { frac_bits: u32, ops: usize, bound: usize },
    #[error("W8 constant precision must be within 6..=16 fractional bits, got {0}")]
    FracBitsOutOfRange(u32),
}

/// `W_L^m`, with `m` kept reduced modulo `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TwiddleExponent {
    base: u32,
    m: u32,
}

impl TwiddleExponent {
    pub fn new(base: u32, m: u64) -> Result<Self, RotorError> {
        if !base.is_power_of_two() {
            return Err(RotorError::InvalidBase(base));
        }
        Ok(Self {
            base,
            m: (m % base as u64) as u32,
        })
    }

    pub const IDENTITY: TwiddleExponent = TwiddleExponent { base: 1, m: 0 };

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// Smallest base expressing the same rotation (`W_16^4` → `W_4^1`).
    pub fn reduced(&self) -> Self {
        let (mut base, mut m) = (self.base, self.m);
        if m == 0 {
            return Self::IDENTITY;
        }
        while m % 2 == 0 {
            base /= 2;
            m /= 2;
        }
        Self { base, m }
    }

    /// Same rotation over a larger base, if `base` is a multiple of ours.
    pub fn rebased(&self, base: u32) -> Option<Self> {
        if !base.is_power_of_two() || base < self.base {
            return None;
        }
        Some(Self {
            base,
            m: self.m * (base / self.base),
        })
    }

    pub fn is_identity(&self) -> bool {
        self.m == 0
    }

    /// Rotation angle in radians, `-2πm/L`.
    pub fn angle(&self) -> f64 {
        -2.0 * PI * self.m as f64 / self.base as f64
    }

    pub fn value(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.angle())
    }
}

impl fmt::Display for TwiddleExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "W_{}^{}", self.base, self.m)
    }
}

/// Symmetric-angle-set form of a rotation: angle `n·π/2 + sign·α` with
/// `α ∈ [0, π/4]`.
///
/// The coefficient `e^{jθ}` is `(±A, ±B)` where `(A, B)` is `(cos α, sin α)`,
/// or `(sin α, cos α)` when `swap_re_im` is set, and the negate flags give the
/// component signs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SasForm {
    pub quadrant_n: u8,
    pub sign: i8,
    pub alpha: f64,
    pub swap_re_im: bool,
    pub negate_re: bool,
    pub negate_im: bool,
    /// `α = 2π·alpha_index / alpha_base`, exact.
    pub alpha_index: u32,
    pub alpha_base: u32,
}

impl SasForm {
    pub fn angle(&self) -> f64 {
        self.quadrant_n as f64 * FRAC_PI_2 + self.sign as f64 * self.alpha
    }

    /// The rotation coefficient rebuilt from the α-rotation plus trivia.
    pub fn coefficient(&self) -> Complex64 {
        let (c, s) = (self.alpha.cos(), self.alpha.sin());
        let (a, b) = if self.swap_re_im { (s, c) } else { (c, s) };
        let re = if self.negate_re { -a } else { a };
        let im = if self.negate_im { -b } else { b };
        Complex64::new(re, im)
    }
}

pub fn sas_decompose(t: TwiddleExponent) -> SasForm {
    // Work in units of 2π/L' with L' ≥ 8 so that π/4 is a whole number of units.
    let base = t.base.max(8);
    let scale = base / t.base;
    let m = t.m * scale;
    let pos = (base - m) % base;
    let quarter = base / 4;
    let eighth = base / 8;
    let (mut n, r) = (pos / quarter, pos % quarter);
    let (sign, alpha_index) = if r <= eighth {
        (1i8, r)
    } else {
        n += 1;
        (-1i8, quarter - r)
    };
    let n = (n % 4) as u8;
    let plus = sign > 0;
    // e^{jθ} = j^n · (cos α + j·sign·sin α)
    let (negate_re, negate_im) = match n {
        0 => (false, !plus),
        1 => (plus, false),
        2 => (true, plus),
        _ => (!plus, true),
    };
    SasForm {
        quadrant_n: n,
        sign,
        alpha: 2.0 * PI * alpha_index as f64 / base as f64,
        swap_re_im: n % 2 == 1,
        negate_re,
        negate_im,
        alpha_index,
        alpha_base: base,
    }
}

/// Number of symmetric angle sets a `W_L` rotator must cover: `L/8 + 1`.
pub fn mrot_order(base_l: u32) -> Result<u32, RotorError> {
    if base_l < 8 || !base_l.is_power_of_two() {
        return Err(RotorError::InvalidMrotBase(base_l));
    }
    Ok(base_l / 8 + 1)
}

/// Distinct α values over all `W_L^m`, counted from the decompositions.
pub fn distinct_alphas(base_l: u32) -> Result<usize, RotorError> {
    let mut seen = BTreeSet::new();
    for m in 0..base_l {
        let sas = sas_decompose(TwiddleExponent::new(base_l, m as u64)?);
        seen.insert(sas.alpha_index * (1 << 20) / sas.alpha_base);
    }
    Ok(seen.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Input,
    /// Result of an earlier operation, by index.
    Intermediate(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Term {
    pub operand: Operand,
    pub shift: u32,
    pub negate: bool,
}

/// One adder: `(lhs << lhs_shift) ± (rhs << rhs_shift)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsdOp {
    pub lhs: Operand,
    pub lhs_shift: u32,
    pub subtract: bool,
    pub rhs: Operand,
    pub rhs_shift: u32,
}

/// A shift-and-add multiplier by a fixed integer constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsdRecipe {
    pub target: i64,
    pub ops: Vec<CsdOp>,
    pub output: Term,
}

impl CsdRecipe {
    pub fn op_count(&self) -> usize {
        self.ops.len()
    }

    pub fn evaluate(&self, x: i128) -> i128 {
        let mut values = Vec::with_capacity(self.ops.len());
        let fetch = |values: &Vec<i128>, op: Operand| match op {
            Operand::Input => x,
            Operand::Intermediate(i) => values[i],
        };
        for op in &self.ops {
            let a = fetch(&values, op.lhs) << op.lhs_shift;
            let b = fetch(&values, op.rhs) << op.rhs_shift;
            values.push(if op.subtract { a - b } else { a + b });
        }
        let v = fetch(&values, self.output.operand) << self.output.shift;
        if self.output.negate {
            -v
        } else {
            v
        }
    }
}

fn operand_name(op: Operand) -> String {
    match op {
        Operand::Input => "x".to_string(),
        Operand::Intermediate(i) => format!("t{}", i + 1),
    }
}

impl fmt::Display for CsdRecipe {
    /// One line per adder, `t = (a << s) ± (b << t)`, the last named `out`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {}·x, {} add/sub", self.target, self.ops.len())?;
        let last = self.ops.len().checked_sub(1);
        let output_is_last = last.is_some_and(|l| {
            self.output.operand == Operand::Intermediate(l) && self.output.shift == 0 && !self.output.negate
        });
        for (i, op) in self.ops.iter().enumerate() {
            let name = if output_is_last && Some(i) == last {
                "out".to_string()
            } else {
                format!("t{}", i + 1)
            };
            writeln!(
                f,
                "{name} = ({} << {}) {} ({} << {})",
                operand_name(op.lhs),
                op.lhs_shift,
                if op.subtract { '-' } else { '+' },
                operand_name(op.rhs),
                op.rhs_shift
            )?;
        }
        if !output_is_last {
            writeln!(
                f,
                "out = {}({} << {})",
                if self.output.negate { "-" } else { "" },
                operand_name(self.output.operand),
                self.output.shift
            )?;
        }
        Ok(())
    }
}

/// Non-adjacent-form digits of `k`, least significant first.
pub fn naf_digits(mut k: i64) -> Vec<i8> {
    let mut digits = Vec::new();
    while k != 0 {
        if k & 1 == 1 {
            let d: i8 = if k.rem_euclid(4) == 1 { 1 } else { -1 };
            digits.push(d);
            k -= d as i64;
        } else {
            digits.push(0);
        }
        k /= 2;
    }
    digits
}

/// Accumulating chain over the NAF digits of `k`, most significant first.
pub fn csd_recipe(k: i64) -> CsdRecipe {
    let negate = k < 0;
    let digits = naf_digits(k.abs());
    let mut terms: Vec<(u32, bool)> = digits
        .iter()
        .enumerate()
        .rev()
        .filter(|(_, d)| **d != 0)
        .map(|(i, d)| (i as u32, *d < 0))
        .collect();
    if terms.is_empty() {
        // k == 0: x − x
        return CsdRecipe {
            target: 0,
            ops: vec![CsdOp {
                lhs: Operand::Input,
                lhs_shift: 0,
                subtract: true,
                rhs: Operand::Input,
                rhs_shift: 0,
            }],
            output: Term {
                operand: Operand::Intermediate(0),
                shift: 0,
                negate: false,
            },
        };
    }
    let (top_shift, _) = terms.remove(0);
    if terms.is_empty() {
        return CsdRecipe {
            target: k,
            ops: Vec::new(),
            output: Term {
                operand: Operand::Input,
                shift: top_shift,
                negate,
            },
        };
    }
    let mut ops = Vec::with_capacity(terms.len());
    for (i, (shift, subtract)) in terms.into_iter().enumerate() {
        let (lhs, lhs_shift) = if i == 0 {
            (Operand::Input, top_shift)
        } else {
            (Operand::Intermediate(i - 1), 0)
        };
        ops.push(CsdOp {
            lhs,
            lhs_shift,
            subtract,
            rhs: Operand::Input,
            rhs_shift: shift,
        });
    }
    let last = ops.len() - 1;
    CsdRecipe {
        target: k,
        ops,
        output: Term {
            operand: Operand::Intermediate(last),
            shift: 0,
            negate,
        },
    }
}

pub const W8_MAX_OPS: usize = 4;
pub const DEFAULT_W8_FRAC_BITS: u32 = 8;
pub const W16_FRAC_BITS: u32 = 9;
const W16_ADDERS: usize = 3;

/// The `0.7071` constant at `frac_bits` of precision.
pub fn w8_constant(frac_bits: u32) -> i64 {
    (std::f64::consts::FRAC_1_SQRT_2 * (frac_bits as f64).exp2()).round() as i64
}

/// Shift-and-add recipe for the W8 constant, bounded to four adders.
// 181/256 is the default; 1448/2048 also fits the bound (it is 181·8).
pub fn w8_csd_recipe(frac_bits: u32) -> Result<CsdRecipe, RotorError> {
    if !(6..=16).contains(&frac_bits) {
        return Err(RotorError::FracBitsOutOfRange(frac_bits));
    }
    let recipe = csd_recipe(w8_constant(frac_bits));
    if recipe.op_count() > W8_MAX_OPS {
        return Err(RotorError::RecipeTooLong {
            frac_bits,
            ops: recipe.op_count(),
            bound: W8_MAX_OPS,
        });
    }
    Ok(recipe)
}

fn op(lhs: Operand, lhs_shift: u32, subtract: bool, rhs: Operand, rhs_shift: u32) -> CsdOp {
    CsdOp {
        lhs,
        lhs_shift,
        subtract,
        rhs,
        rhs_shift,
    }
}

/// The W16 constant multiplier: three add/sub units whose shifts and signs are
/// multiplexed per constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct W16SharedMultiplier {
    recipes: [CsdRecipe; 3],
}

impl W16SharedMultiplier {
    pub fn recipes(&self) -> &[CsdRecipe; 3] {
        &self.recipes
    }

    pub fn adder_count(&self) -> usize {
        W16_ADDERS
    }

    /// `k · x` for `k ∈ {0, 196, 362, 473, 512}`.
    pub fn multiply(&self, k: i64, x: i128) -> i128 {
        match k {
            0 => 0,
            512 => x << 9,
            _ => self
                .recipes
                .iter()
                .find(|r| r.target == k)
                .map(|r| r.evaluate(x))
                .unwrap_or_else(|| panic!("W16 multiplier has no recipe for {k}")),
        }
    }
}

pub fn w16_shared_recipes() -> W16SharedMultiplier {
    use Operand::{Input as X, Intermediate as T};
    let out = |i| Term {
        operand: T(i),
        shift: 0,
        negate: false,
    };
    let r473 = CsdRecipe {
        target: 473,
        ops: vec![op(X, 9, true, X, 5), op(T(0), 0, true, X, 3), op(T(1), 0, false, X, 0)],
        output: out(2),
    };
    let r362 = CsdRecipe {
        target: 362,
        ops: vec![
            op(X, 0, false, X, 2),
            op(T(0), 3, false, T(0), 0),
            op(T(1), 3, false, X, 1),
        ],
        output: out(2),
    };
    let r196 = CsdRecipe {
        target: 196,
        ops: vec![op(X, 7, false, X, 6), op(T(0), 0, false, X, 2)],
        output: out(1),
    };
    W16SharedMultiplier {
        recipes: [r473, r362, r196],
    }
}

fn neg(x: Fx, ovf: &mut bool) -> Fx {
    let (v, o) = x.overflowing_neg();
    *ovf |= o;
    v
}

/// Multiply by `(-j)^quarter_turns`: swaps and negations only.
pub fn trivial_rotate(x: CFx, quarter_turns: u32) -> (CFx, bool) {
    let mut ovf = false;
    let r = match quarter_turns % 4 {
        0 => x,
        1 => CFx {
            re: x.im,
            im: neg(x.re, &mut ovf),
        },
        2 => CFx {
            re: neg(x.re, &mut ovf),
            im: neg(x.im, &mut ovf),
        },
        _ => CFx {
            re: neg(x.im, &mut ovf),
            im: x.re,
        },
    };
    (r, ovf)
}

/// The PE_W4 datapath: pass-through or `-j`.
pub fn rotate_w4(x: CFx, exp: TwiddleExponent) -> Result<CFx, RotorError> {
    if exp.base() != 4 || exp.m() > 1 {
        return Err(RotorError::UnsupportedExponent(exp));
    }
    Ok(trivial_rotate(x, exp.m()).0)
}

/// The PE_W8 datapath. The `0.7071` constant sits at the rotator input: both
/// components are multiplied by it, then combined with add/sub and a trivial
/// quadrant correction, with one rounding at the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct W8Rotator {
    frac_bits: u32,
    recipe: CsdRecipe,
}

impl W8Rotator {
    pub fn new(frac_bits: u32) -> Result<Self, RotorError> {
        Ok(Self {
            frac_bits,
            recipe: w8_csd_recipe(frac_bits)?,
        })
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn constant(&self) -> i64 {
        self.recipe.target
    }

    pub fn recipe(&self) -> &CsdRecipe {
        &self.recipe
    }

    pub fn rotate(&self, x: CFx, m: u32) -> (CFx, bool) {
        let m = m % 8;
        if m.is_multiple_of(2) {
            return trivial_rotate(x, m / 2);
        }
        let (xr, xi) = (x.re.raw() as i128, x.im.raw() as i128);
        let p = self.recipe.evaluate(xr);
        let q = self.recipe.evaluate(xi);
        // W8^1 = c(1 - j), W8^3 = c(-1 - j), W8^5 = c(-1 + j), W8^7 = c(1 + j)
        let (sr, si): (i128, i128) = match m {
            1 => (1, -1),
            3 => (-1, -1),
            5 => (-1, 1),
            _ => (1, 1),
        };
        let re = sr * p - si * q;
        let im = si * p + sr * q;
        let fmt = x.format();
        CFx::from_wide(re, im, fmt.frac_bits() + self.frac_bits, fmt)
    }
}

impl Default for W8Rotator {
    fn default() -> Self {
        Self::new(DEFAULT_W8_FRAC_BITS).expect("default W8 precision has a recipe")
    }
}

pub fn rotate_w8(x: CFx, m: u32) -> CFx {
    W8Rotator::default().rotate(x, m).0
}

/// The PE_W16 datapath: α-class from the SAS decomposition picks the constant
/// pair, the shared multiplier forms the products, signs and swap come from
/// the quadrant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct W16Rotator {
    multiplier: W16SharedMultiplier,
}

impl Default for W16Rotator {
    fn default() -> Self {
        Self {
            multiplier: w16_shared_recipes(),
        }
    }
}

impl W16Rotator {
    pub fn multiplier(&self) -> &W16SharedMultiplier {
        &self.multiplier
    }

    /// Integer coefficient for `W_16^m` over 512.
    pub fn coefficient(m: u32) -> (i64, i64) {
        let sas = sas_decompose(TwiddleExponent { base: 16, m: m % 16 });
        let (c, s) = match sas.alpha_index {
            0 => (512, 0),
            1 => (473, 196),
            _ => (362, 362),
        };
        let (a, b) = if sas.swap_re_im { (s, c) } else { (c, s) };
        (if sas.negate_re { -a } else { a }, if sas.negate_im { -b } else { b })
    }

    pub fn rotate(&self, x: CFx, m: u32) -> (CFx, bool) {
        let (wr, wi) = Self::coefficient(m);
        let (xr, xi) = (x.re.raw() as i128, x.im.raw() as i128);
        let mul = |k: i64, v: i128| {
            let p = self.multiplier.multiply(k.abs(), v);
            if k < 0 {
                -p
            } else {
                p
            }
        };
        let re = mul(wr, xr) - mul(wi, xi);
        let im = mul(wi, xr) + mul(wr, xi);
        let fmt = x.format();
        CFx::from_wide(re, im, fmt.frac_bits() + W16_FRAC_BITS, fmt)
    }
}

pub fn rotate_w16(x: CFx, m: u32) -> CFx {
    W16Rotator::default().rotate(x, m).0
}

/// Quantized `W_L^m` coefficients for a general rotator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientTable {
    base: u32,
    format: FixedFormat,
    entries: Vec<Option<CFx>>,
}

impl CoefficientTable {
    /// Coefficient format for a data format: same fractional bits, one extra
    /// integer bit so that ±1 is exact.
    pub fn coefficient_format(data: FixedFormat) -> FixedFormat {
        let wl = (data.word_length() + 1).min(crate::fxnum::MAX_WORD_LENGTH);
        let frac = data.frac_bits().min(wl - 2);
        FixedFormat::new(wl, frac)
            .expect("derived coefficient format is valid")
            .with_rounding(data.rounding)
            .with_overflow(data.overflow)
    }

    pub fn full(base: u32, format: FixedFormat) -> Result<Self, RotorError> {
        Self::for_exponents(base, 0..base, format)
    }

    pub fn for_exponents(
        base: u32,
        exponents: impl IntoIterator<Item = u32>,
        format: FixedFormat,
    ) -> Result<Self, RotorError> {
        if !base.is_power_of_two() {
            return Err(RotorError::InvalidBase(base));
        }
        let mut entries = vec![None; base as usize];
        for m in exponents {
            let w = TwiddleExponent::new(base, m as u64)?.value();
            entries[(m % base) as usize] = Some(CFx::quantize(w.re, w.im, format));
        }
        Ok(Self { base, format, entries })
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn format(&self) -> FixedFormat {
        self.format
    }

    pub fn get(&self, t: TwiddleExponent) -> Option<CFx> {
        let t = t.reduced().rebased(self.base)?;
        self.entries[t.m() as usize]
    }

    pub fn contains(&self, t: TwiddleExponent) -> bool {
        self.get(t).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, CFx)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(m, w)| w.map(|w| (m as u32, w)))
    }
}

pub fn rotate_general_overflowing(
    x: CFx,
    t: TwiddleExponent,
    table: &CoefficientTable,
) -> Result<(CFx, bool), RotorError> {
    let w = table.get(t).ok_or(RotorError::AllocationViolation { exponent: t })?;
    Ok(cfx_mul_overflowing(x, w, x.format()))
}

/// The PE_TW datapath: a table-driven general complex multiply.
pub fn rotate_general(x: CFx, t: TwiddleExponent, table: &CoefficientTable) -> Result<CFx, RotorError> {
    rotate_general_overflowing(x, t, table).map(|(v, _)| v)
}

/// The datapaths a stage can instantiate, cheapest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RotatorKind {
    NoRotation,
    W4Trivial,
    W8Csd,
    W16Shared,
    GeneralTw(Arc<CoefficientTable>),
}

impl RotatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            RotatorKind::NoRotation => "none",
            RotatorKind::W4Trivial => "W4",
            RotatorKind::W8Csd => "W8",
            RotatorKind::W16Shared => "W16",
            RotatorKind::GeneralTw(_) => "TW",
        }
    }

    /// Rank in the simplification hierarchy.
    pub fn rank(&self) -> u8 {
        match self {
            RotatorKind::NoRotation => 0,
            RotatorKind::W4Trivial => 1,
            RotatorKind::W8Csd => 2,
            RotatorKind::W16Shared => 3,
            RotatorKind::GeneralTw(_) => 4,
        }
    }

    pub fn covers(&self, t: TwiddleExponent) -> bool {
        let base = t.reduced().base();
        match self {
            RotatorKind::NoRotation => base == 1,
            RotatorKind::W4Trivial => base <= 4,
            RotatorKind::W8Csd => base <= 8,
            RotatorKind::W16Shared => base <= 16,
            RotatorKind::GeneralTw(table) => table.contains(t),
        }
    }

    /// Cheapest specialized kind covering every exponent in `set`; `None` if a
    /// general multiplier is needed.
    pub fn cheapest_specialized<'a>(set: impl IntoIterator<Item = &'a TwiddleExponent>) -> Option<RotatorKind> {
        let base = set.into_iter().map(|t| t.reduced().base()).max().unwrap_or(1);
        match base {
            1 => Some(RotatorKind::NoRotation),
            2 | 4 => Some(RotatorKind::W4Trivial),
            8 => Some(RotatorKind::W8Csd),
            16 => Some(RotatorKind::W16Shared),
            _ => None,
        }
    }

    pub fn rotate(&self, x: CFx, t: TwiddleExponent, datapaths: &Datapaths) -> Result<(CFx, bool), RotorError> {
        if !self.covers(t) {
            return Err(RotorError::AllocationViolation { exponent: t });
        }
        match self {
            RotatorKind::GeneralTw(table) => rotate_general_overflowing(x, t, table),
            _ => datapaths.specialized(x, t),
        }
    }
}

impl fmt::Display for RotatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Configured constant multipliers shared by every specialized rotator.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Datapaths {
    pub w8: W8Rotator,
    pub w16: W16Rotator,
}

impl Datapaths {
    pub fn new(w8_frac_bits: u32) -> Result<Self, RotorError> {
        Ok(Self {
            w8: W8Rotator::new(w8_frac_bits)?,
            w16: W16Rotator::default(),
        })
    }

    /// Route a rotation to the cheapest datapath for its reduced base.
    pub fn specialized(&self, x: CFx, t: TwiddleExponent) -> Result<(CFx, bool), RotorError> {
        let r = t.reduced();
        match r.base() {
            1 => Ok((x, false)),
            2 => Ok(trivial_rotate(x, 2)),
            4 => Ok(trivial_rotate(x, r.m())),
            8 => Ok(self.w8.rotate(x, r.m())),
            16 => Ok(self.w16.rotate(x, r.m())),
            _ => Err(RotorError::UnsupportedExponent(t)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(base: u32, m: u64) -> TwiddleExponent {
        TwiddleExponent::new(base, m).unwrap()
    }

    #[test]
    fn exponent_reduction() {
        assert_eq!(w(16, 4).reduced(), w(4, 1));
        assert_eq!(w(16, 6).reduced(), w(8, 3));
        assert_eq!(w(128, 0).reduced(), TwiddleExponent::IDENTITY);
        assert_eq!(w(8, 11), w(8, 3));
        assert!(TwiddleExponent::new(12, 1).is_err());
        assert_eq!(w(4, 1).rebased(128), Some(w(128, 32)));
        assert_eq!(w(128, 1).rebased(16), None);
    }

    #[test]
    fn sas_examples() {
        let id = sas_decompose(w(4, 0));
        assert_eq!((id.quadrant_n, id.alpha), (0, 0.0));
        let s = sas_decompose(w(8, 3));
        assert!((s.alpha - PI / 4.0).abs() < 1e-15);
        let target = 5.0 * PI / 4.0;
        let diff = (s.angle() - target).rem_euclid(2.0 * PI);
        assert!(diff.min(2.0 * PI - diff) < 1e-12);
        // boundary canonicalizes to +α
        assert_eq!(s.sign, 1);
    }

    #[test]
    fn sas_reconstruction_all_w32() {
        for m in 0..32 {
            let t = w(32, m);
            let s = sas_decompose(t);
            assert!((0.0..=PI / 4.0 + 1e-15).contains(&s.alpha));
            assert!((s.coefficient() - t.value()).norm() < 1e-12, "m={m}");
            assert!((Complex64::from_polar(1.0, s.angle()) - t.value()).norm() < 1e-12);
        }
    }

    #[test]
    fn mrot_examples() {
        assert_eq!(mrot_order(8), Ok(2));
        assert_eq!(mrot_order(16), Ok(3));
        assert_eq!(mrot_order(32), Ok(5));
        assert!(mrot_order(4).is_err());
        assert!(mrot_order(24).is_err());
    }

    #[test]
    fn w8_recipe_181() {
        let r = w8_csd_recipe(8).unwrap();
        assert_eq!(r.target, 181);
        assert_eq!(r.op_count(), 4);
        assert_eq!(w8_csd_recipe(11).unwrap().target, 1448);
        assert!(w8_csd_recipe(5).is_err());
        assert!(matches!(w8_csd_recipe(16), Err(RotorError::RecipeTooLong { .. })));
    }

    #[test]
    fn single_digit_constant_has_no_ops() {
        let r = csd_recipe(64);
        assert_eq!(r.op_count(), 0);
        assert_eq!(r.evaluate(-3), -192);
        assert_eq!(csd_recipe(-8).evaluate(5), -40);
        assert_eq!(csd_recipe(0).evaluate(5), 0);
    }

    #[test]
    fn recipe_dump_format() {
        let text = w16_shared_recipes().recipes()[1].to_string();
        assert_eq!(
            text,
            "# 362·x, 3 add/sub\nt1 = (x << 0) + (x << 2)\nt2 = (t1 << 3) + (t1 << 0)\nout = (t2 << 3) + (x << 1)\n"
        );
        assert!(csd_recipe(8).to_string().ends_with("out = (x << 3)\n"));
    }

    #[test]
    fn w4_examples() {
        let f = FixedFormat::q1_11();
        let x = CFx::from_raw(1, 2, f);
        assert_eq!(rotate_w4(x, w(4, 0)).unwrap(), x);
        assert_eq!(rotate_w4(x, w(4, 1)).unwrap().raw(), (2, -1));
        assert!(rotate_w4(x, w(4, 2)).is_err());
        let min = CFx::from_raw(f.min_raw(), f.min_raw(), f);
        assert_eq!(rotate_w4(min, w(4, 1)).unwrap().raw(), (f.min_raw(), f.max_raw()));
    }

    #[test]
    fn w8_examples() {
        let f = FixedFormat::q1_11();
        let x = CFx::from_raw(-77, 1500, f);
        assert_eq!(rotate_w8(x, 0), x);
        let one = CFx::from_raw(256, 0, FixedFormat::new(12, 8).unwrap());
        assert_eq!(rotate_w8(one, 2).raw(), (0, -256));
        assert_eq!(rotate_w8(one, 1).raw(), (181, -181));
    }

    #[test]
    fn w16_examples() {
        let f = FixedFormat::new(12, 9).unwrap();
        let x = CFx::from_raw(512, 0, f);
        assert_eq!(rotate_w16(x, 0), x);
        assert_eq!(rotate_w16(x, 1).raw(), (473, -196));
        assert_eq!(rotate_w16(x, 2).raw(), (362, -362));
        assert_eq!(rotate_w16(x, 3).raw(), (196, -473));
        assert_eq!(rotate_w16(x, 4).raw(), (0, -512));
    }

    #[test]
    fn general_examples() {
        let f = FixedFormat::q1_11();
        let table = CoefficientTable::full(128, CoefficientTable::coefficient_format(f)).unwrap();
        let x = CFx::from_raw(1234, -567, f);
        assert_eq!(rotate_general(x, w(128, 0), &table).unwrap(), x);
        assert_eq!(
            rotate_general(x, w(128, 32), &table).unwrap(),
            rotate_w4(x, w(4, 1)).unwrap()
        );
        let partial = CoefficientTable::for_exponents(128, [0, 1, 2], table.format()).unwrap();
        assert!(matches!(
            rotate_general(x, w(128, 5), &partial),
            Err(RotorError::AllocationViolation { .. })
        ));
    }

    #[test]
    fn kinds_cover_and_rank() {
        let k = RotatorKind::cheapest_specialized(&[w(16, 0), w(16, 4)]).unwrap();
        assert_eq!(k, RotatorKind::W4Trivial);
        let k = RotatorKind::cheapest_specialized(&[w(16, 2), w(16, 6)]).unwrap();
        assert_eq!(k, RotatorKind::W8Csd);
        assert_eq!(
            RotatorKind::cheapest_specialized(&[w(16, 1), w(16, 5)]),
            Some(RotatorKind::W16Shared)
        );
        assert_eq!(RotatorKind::cheapest_specialized(&[w(128, 3)]), None);
        assert!(!RotatorKind::NoRotation.covers(w(4, 1)));
        assert!(RotatorKind::W8Csd.covers(w(16, 6)));
        assert!(!RotatorKind::W8Csd.covers(w(16, 5)));
    }
}
