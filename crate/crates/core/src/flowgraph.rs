//! Radix-2^k decimation-in-frequency stage planning and reference transforms.
//!
//! Index a point by its position bits `p = Σ p_b 2^b`. The DIF stage `s`
//! (1-based) pairs positions differing in bit `B - s` (`B = log2 N`), consuming
//! time bit `n_{B-s}` and producing frequency bit `k_{s-1}` in the same
//! position. Expanding `W_N^{nk}` bit by bit leaves cross terms
//! `n_i·k_j·2^{i+j}` with `i + j ≤ B - 2`; each may be applied after any stage
//! in `[j + 1, B - 1 - i]`. A radix-2^k decomposition is a choice of stage for
//! every such term:
//!
//! * terms whose time bit outlives the current group go to the group's last
//!   stage (the general inter-group twiddle);
//! * within a non-final group, terms go to the latest stage they may occupy,
//!   which yields the `W_4, W_8, …` pattern ahead of the inter-group twiddle;
//! * within the final group they go to the earliest stage, so every rotation
//!   there sits on the difference output of its butterfly.
//!
//! For `N = 128` split as `[3, 4]` this gives stage bases
//! `[4, 8, 128, 16, 8, 4, 1]`.

use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::fxnum::{CFx, FixedFormat};
use crate::rotor::{CoefficientTable, Datapaths, RotorError, TwiddleExponent, DEFAULT_W8_FRAC_BITS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("transform size {0} is not a power of two >= 2")]
    InvalidSize(usize),
    #[error("radix factors {factors:?} do not sum to log2({n})")]
    FactorMismatch { n: usize, factors: Vec<u32> },
    #[error("frame has {got} samples, plan expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("frame must be in {expected:?} order")]
    WrongOrder { expected: Order },
    #[error("frame sample format {got} differs from configured {expected}")]
    FormatMismatch { expected: FixedFormat, got: FixedFormat },
    #[error(transparent)]
    Rotor(#[from] RotorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Order {
    #[default]
    Natural,
    BitReversed,
}

impl Order {
    pub fn as_str(&self) -> &'static str {
        match self {
            Order::Natural => "natural",
            Order::BitReversed => "bitrev",
        }
    }
}

impl std::str::FromStr for Order {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "natural" => Ok(Order::Natural),
            "bitrev" | "bit-reversed" => Ok(Order::BitReversed),
            other => Err(format!("unknown order `{other}`")),
        }
    }
}

/// A block of samples plus the order they are stored in.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub samples: Vec<T>,
    pub order: Order,
}

impl<T> Frame<T> {
    pub fn natural(samples: Vec<T>) -> Self {
        Self {
            samples,
            order: Order::Natural,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub type FloatFrame = Frame<Complex64>;
pub type FixedFrame = Frame<CFx>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionSpec {
    pub n: usize,
    pub radix_factors: Vec<u32>,
}

impl DecompositionSpec {
    pub fn new(n: usize, radix_factors: Vec<u32>) -> Result<Self, PlanError> {
        if n < 2 || !n.is_power_of_two() {
            return Err(PlanError::InvalidSize(n));
        }
        if radix_factors.contains(&0) || radix_factors.iter().sum::<u32>() != n.trailing_zeros() {
            return Err(PlanError::FactorMismatch {
                n,
                factors: radix_factors,
            });
        }
        Ok(Self { n, radix_factors })
    }

    /// 128 points, radix-2^3 followed by radix-2^4.
    pub fn msc128() -> Self {
        Self::new(128, vec![3, 4]).expect("valid")
    }
}

/// One DIF stage: a butterfly over bit `log2 N - stage_index`, then the
/// rotations assigned to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagePlan {
    pub stage_index: u32,
    pub butterfly_stride: usize,
    pub twiddle_base: u32,
    /// Cross terms `(i, j)`: time bit `n_i` times frequency bit `k_j`.
    terms: Vec<(u32, u32)>,
    log_n: u32,
}

impl StagePlan {
    pub fn terms(&self) -> &[(u32, u32)] {
        &self.terms
    }

    /// Position bit paired by this stage's butterfly.
    pub fn pair_bit(&self) -> u32 {
        self.log_n - self.stage_index
    }

    /// True when every sum output has a zero exponent, so only difference
    /// outputs pass the rotator.
    pub fn lower_only(&self) -> bool {
        self.terms.iter().all(|&(_, j)| j + 1 == self.stage_index)
    }

    /// Twiddle applied after the butterfly at flow-graph position `p`.
    pub fn exponent(&self, p: usize) -> TwiddleExponent {
        if self.twiddle_base == 1 {
            return TwiddleExponent::IDENTITY;
        }
        let n = 1usize << self.log_n;
        let mut e = 0usize;
        for &(i, j) in &self.terms {
            let ni = (p >> i) & 1;
            let kj = (p >> (self.log_n - 1 - j)) & 1;
            e += (ni & kj) << (i + j);
        }
        let unit = n / self.twiddle_base as usize;
        TwiddleExponent::new(self.twiddle_base, ((e % n) / unit) as u64).expect("power of two base")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FftPlan {
    pub spec: DecompositionSpec,
    pub stages: Vec<StagePlan>,
}

impl FftPlan {
    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn log_n(&self) -> u32 {
        self.spec.n.trailing_zeros()
    }

    pub fn twiddle_bases(&self) -> Vec<u32> {
        self.stages.iter().map(|s| s.twiddle_base).collect()
    }
}

pub fn build_plan(spec: &DecompositionSpec) -> Result<FftPlan, PlanError> {
    let spec = DecompositionSpec::new(spec.n, spec.radix_factors.clone())?;
    let log_n = spec.n.trailing_zeros();
    // group ranges in 1-based stage numbers
    let mut groups = Vec::new();
    let mut start = 1;
    for &k in &spec.radix_factors {
        groups.push((start, start + k - 1));
        start += k;
    }
    let last_group = groups.len() - 1;
    let mut terms: Vec<Vec<(u32, u32)>> = vec![Vec::new(); log_n as usize];
    for j in 0..log_n {
        for i in 0..log_n {
            if i + j + 2 > log_n {
                continue;
            }
            let known = j + 1;
            let consumed = log_n - i;
            let g = groups.iter().position(|&(a, b)| (a..=b).contains(&known)).unwrap();
            let (_, end) = groups[g];
            let stage = if consumed > end {
                end
            } else if g == last_group {
                known
            } else {
                consumed - 1
            };
            terms[stage as usize - 1].push((i, j));
        }
    }
    let stages = terms
        .into_iter()
        .enumerate()
        .map(|(idx, terms)| {
            let stage_index = idx as u32 + 1;
            let twiddle_base = terms.iter().map(|&(i, j)| 1u32 << (log_n - i - j)).max().unwrap_or(1);
            StagePlan {
                stage_index,
                butterfly_stride: spec.n >> stage_index,
                twiddle_base,
                terms,
                log_n,
            }
        })
        .collect();
    Ok(FftPlan { spec, stages })
}

/// Direct `O(N²)` evaluation, natural order.
pub fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let e = ((i * k) % n) as f64;
                    v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * e / n as f64)
                })
                .sum()
        })
        .collect()
}

pub fn bit_reverse_index(i: usize, log_n: u32) -> usize {
    if log_n == 0 {
        return i;
    }
    i.reverse_bits() >> (usize::BITS - log_n)
}

/// Permute a frame by index bit reversal, flipping its order tag.
pub fn bit_reverse_order<T: Clone>(x: &Frame<T>) -> Result<Frame<T>, PlanError> {
    let n = x.len();
    if !n.is_power_of_two() {
        return Err(PlanError::InvalidSize(n));
    }
    let log_n = n.trailing_zeros();
    let samples = (0..n).map(|i| x.samples[bit_reverse_index(i, log_n)].clone()).collect();
    let order = match x.order {
        Order::Natural => Order::BitReversed,
        Order::BitReversed => Order::Natural,
    };
    Ok(Frame { samples, order })
}

fn check_input<T>(x: &Frame<T>, plan: &FftPlan) -> Result<(), PlanError> {
    if x.len() != plan.n() {
        return Err(PlanError::LengthMismatch {
            expected: plan.n(),
            got: x.len(),
        });
    }
    if x.order != Order::Natural {
        return Err(PlanError::WrongOrder {
            expected: Order::Natural,
        });
    }
    Ok(())
}

/// Double-precision execution of the plan; output is bit-reversed.
pub fn fft_float(x: &FloatFrame, plan: &FftPlan) -> Result<FloatFrame, PlanError> {
    check_input(x, plan)?;
    let mut data = x.samples.clone();
    for stage in &plan.stages {
        let half = stage.butterfly_stride;
        for p in 0..data.len() {
            if p & half == 0 {
                let (a, b) = (data[p], data[p + half]);
                data[p] = a + b;
                data[p + half] = a - b;
            }
        }
        if stage.twiddle_base > 1 {
            for (p, v) in data.iter_mut().enumerate() {
                let t = stage.exponent(p);
                if !t.is_identity() {
                    *v *= t.value();
                }
            }
        }
    }
    Ok(Frame {
        samples: data,
        order: Order::BitReversed,
    })
}

/// Which butterfly stages divide their outputs by two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ScalingPolicy {
    None,
    #[default]
    PerStage,
    /// Bit `s - 1` set → stage `s` scales.
    Mask(u32),
}

impl ScalingPolicy {
    pub fn scales(&self, stage_index: u32) -> bool {
        match *self {
            ScalingPolicy::None => false,
            ScalingPolicy::PerStage => true,
            ScalingPolicy::Mask(m) => (m >> (stage_index - 1)) & 1 == 1,
        }
    }

    /// Gain the DFT must be divided by to match a scaled transform.
    pub fn gain(&self, stages: u32) -> f64 {
        let scaled = (1..=stages).filter(|&s| self.scales(s)).count();
        (scaled as f64).exp2()
    }

    pub fn id(&self) -> String {
        match self {
            ScalingPolicy::None => "none".into(),
            ScalingPolicy::PerStage => "per-stage".into(),
            ScalingPolicy::Mask(m) => format!("mask:{m:#b}"),
        }
    }
}

impl std::str::FromStr for ScalingPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ScalingPolicy::None),
            "per-stage" | "stage" => Ok(ScalingPolicy::PerStage),
            _ => {
                let body = s
                    .strip_prefix("mask:")
                    .ok_or_else(|| format!("unknown scaling policy `{s}`"))?;
                let parsed = if let Some(b) = body.strip_prefix("0b") {
                    u32::from_str_radix(b, 2)
                } else if let Some(h) = body.strip_prefix("0x") {
                    u32::from_str_radix(h, 16)
                } else {
                    body.parse()
                };
                parsed
                    .map(ScalingPolicy::Mask)
                    .map_err(|_| format!("bad scaling mask `{body}`"))
            }
        }
    }
}

/// Numeric configuration shared by the golden model and the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedConfig {
    pub format: FixedFormat,
    pub scaling: ScalingPolicy,
    pub w8_frac_bits: u32,
}

impl Default for FixedConfig {
    fn default() -> Self {
        Self {
            format: FixedFormat::q1_11(),
            scaling: ScalingPolicy::PerStage,
            w8_frac_bits: DEFAULT_W8_FRAC_BITS,
        }
    }
}

impl FixedConfig {
    pub fn with_format(format: FixedFormat) -> Self {
        Self {
            format,
            ..Self::default()
        }
    }
}

/// Rotation engine for every stage of a plan: stages whose base is at most
/// 16 use the specialized datapaths, larger bases a full coefficient table.
#[derive(Debug, Clone)]
pub struct Twiddler {
    datapaths: Datapaths,
    tables: Vec<Option<Arc<CoefficientTable>>>,
}

/// Largest base handled without a general multiplier.
pub const MAX_SPECIALIZED_BASE: u32 = 16;

impl Twiddler {
    pub fn new(plan: &FftPlan, config: &FixedConfig) -> Result<Self, PlanError> {
        let datapaths = Datapaths::new(config.w8_frac_bits)?;
        let coeff_format = CoefficientTable::coefficient_format(config.format);
        let tables = plan
            .stages
            .iter()
            .map(|s| {
                if s.twiddle_base > MAX_SPECIALIZED_BASE {
                    CoefficientTable::full(s.twiddle_base, coeff_format).map(|t| Some(Arc::new(t)))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { datapaths, tables })
    }

    pub fn datapaths(&self) -> &Datapaths {
        &self.datapaths
    }

    pub fn table(&self, stage_index: u32) -> Option<&Arc<CoefficientTable>> {
        self.tables[stage_index as usize - 1].as_ref()
    }

    pub fn rotate(&self, stage_index: u32, x: CFx, t: TwiddleExponent) -> Result<(CFx, bool), RotorError> {
        match self.table(stage_index) {
            Some(table) => crate::rotor::rotate_general_overflowing(x, t, table),
            None => self.datapaths.specialized(x, t),
        }
    }
}

/// Sum output of a butterfly, optionally halved with one rounding.
pub fn butterfly_sum(a: CFx, b: CFx, scale: bool) -> (CFx, bool) {
    butterfly_half(a, b, scale, false)
}

pub fn butterfly_diff(a: CFx, b: CFx, scale: bool) -> (CFx, bool) {
    butterfly_half(a, b, scale, true)
}

fn butterfly_half(a: CFx, b: CFx, scale: bool, diff: bool) -> (CFx, bool) {
    let fmt = a.format();
    let (ar, ai) = (a.re.raw() as i128, a.im.raw() as i128);
    let (br, bi) = (b.re.raw() as i128, b.im.raw() as i128);
    let (re, im) = if diff { (ar - br, ai - bi) } else { (ar + br, ai + bi) };
    let frac = fmt.frac_bits() + scale as u32;
    CFx::from_wide(re, im, frac, fmt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedOutput {
    pub frame: FixedFrame,
    /// Butterfly or rotator results that left the representable range.
    pub overflows: u64,
}

/// Transaction-level fixed-point model: the same dataflow as [`fft_float`]
/// with every add and rotation done by the hardware datapaths.
pub fn fft_fixed(x: &FixedFrame, plan: &FftPlan, config: &FixedConfig) -> Result<FixedOutput, PlanError> {
    let twiddler = Twiddler::new(plan, config)?;
    fft_fixed_with(x, plan, config, &twiddler)
}

pub fn fft_fixed_with(
    x: &FixedFrame,
    plan: &FftPlan,
    config: &FixedConfig,
    twiddler: &Twiddler,
) -> Result<FixedOutput, PlanError> {
    check_input(x, plan)?;
    if let Some(bad) = x.samples.iter().find(|s| s.format() != config.format) {
        return Err(PlanError::FormatMismatch {
            expected: config.format,
            got: bad.format(),
        });
    }
    let mut data = x.samples.clone();
    let mut overflows = 0u64;
    for stage in &plan.stages {
        let half = stage.butterfly_stride;
        let scale = config.scaling.scales(stage.stage_index);
        for p in 0..data.len() {
            if p & half == 0 {
                let (a, b) = (data[p], data[p + half]);
                let (s, o1) = butterfly_sum(a, b, scale);
                let (d, o2) = butterfly_diff(a, b, scale);
                overflows += o1 as u64 + o2 as u64;
                data[p] = s;
                data[p + half] = d;
            }
        }
        if stage.twiddle_base > 1 {
            for (p, v) in data.iter_mut().enumerate() {
                let t = stage.exponent(p);
                if t.is_identity() {
                    continue;
                }
                let (r, o) = twiddler.rotate(stage.stage_index, *v, t)?;
                overflows += o as u64;
                *v = r;
            }
        }
    }
    Ok(FixedOutput {
        frame: Frame {
            samples: data,
            order: Order::BitReversed,
        },
        overflows,
    })
}

pub fn to_float(x: &FixedFrame) -> FloatFrame {
    Frame {
        samples: x
            .samples
            .iter()
            .map(|s| {
                let (re, im) = s.to_f64();
                Complex64::new(re, im)
            })
            .collect(),
        order: x.order,
    }
}
