//! SQNR harness, hardware cost census and area/power normalization.

use std::fmt;
use std::fmt::Write as _;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::flowgraph::{
    build_plan, fft_fixed_with, fft_float, to_float, DecompositionSpec, FixedConfig, FixedFrame, FloatFrame, Frame,
    PlanError, ScalingPolicy, Twiddler,
};
use crate::fxnum::{CFx, FixedFormat};
use crate::mscpipe::ArchitecturePlan;
use crate::rotor::RotatorKind;

/// Input magnitude of the ±1 test patterns relative to full scale. With the
/// per-stage policy no intermediate can exceed it.
pub const INPUT_AMPLITUDE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SqnrReport {
    pub num_frames: usize,
    pub word_length: u32,
    pub frac_bits: u32,
    pub scaling: String,
    pub mean_sqnr_db: f64,
    pub min_sqnr_db: f64,
    pub max_sqnr_db: f64,
    pub seed: u64,
    /// Frames with zero reference energy.
    pub skipped: usize,
}

impl SqnrReport {
    pub fn to_kv(&self) -> String {
        format!(
            "num_frames={}\nword_length={}\nfrac_bits={}\nscaling={}\nmean_sqnr_db={:.4}\nmin_sqnr_db={:.4}\nmax_sqnr_db={:.4}\nseed={}\nskipped={}\n",
            self.num_frames,
            self.word_length,
            self.frac_bits,
            self.scaling,
            self.mean_sqnr_db,
            self.min_sqnr_db,
            self.max_sqnr_db,
            self.seed,
            self.skipped
        )
    }
}

impl fmt::Display for SqnrReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SQNR over {} frames, Q{}.{} ({} bits), scaling {}, seed {}: mean {:.2} dB (min {:.2}, max {:.2})",
            self.num_frames,
            self.word_length - self.frac_bits,
            self.frac_bits,
            self.word_length,
            self.scaling,
            self.seed,
            self.mean_sqnr_db,
            self.min_sqnr_db,
            self.max_sqnr_db
        )
    }
}

/// `10·log10(Σ|ref|² / Σ|fixed·gain − ref|²)`, `None` for zero reference
/// energy. An exact match yields `+inf`.
pub fn frame_sqnr(fixed: &FixedFrame, reference: &FloatFrame, gain: f64) -> Option<f64> {
    let y = to_float(fixed);
    let (mut signal, mut noise) = (0.0, 0.0);
    for (a, r) in y.samples.iter().zip(&reference.samples) {
        signal += r.norm_sqr();
        noise += (a * gain - r).norm_sqr();
    }
    (signal > 0.0).then(|| 10.0 * (signal / noise).log10())
}

/// Frame of ±`amplitude` components drawn from `rng`.
pub fn random_pm1_frame(rng: &mut ChaCha8Rng, format: FixedFormat, amplitude: f64) -> FixedFrame {
    let v = |rng: &mut ChaCha8Rng| if rng.gen::<bool>() { amplitude } else { -amplitude };
    Frame::natural((0..128).map(|_| CFx::quantize(v(rng), v(rng), format)).collect())
}

/// Mean SQNR of `fft_fixed` against `fft_float` on the same quantized
/// ±[`INPUT_AMPLITUDE`] frames.
pub fn measure_sqnr(
    num_frames: usize,
    format: FixedFormat,
    scaling: ScalingPolicy,
    seed: u64,
) -> Result<SqnrReport, PlanError> {
    let cfg = FixedConfig {
        format,
        scaling,
        ..FixedConfig::default()
    };
    measure_sqnr_with(num_frames, &cfg, INPUT_AMPLITUDE, seed)
}

pub fn measure_sqnr_with(
    num_frames: usize,
    cfg: &FixedConfig,
    amplitude: f64,
    seed: u64,
) -> Result<SqnrReport, PlanError> {
    let (format, scaling) = (cfg.format, cfg.scaling);
    let plan = build_plan(&DecompositionSpec::msc128())?;
    let twiddler = Twiddler::new(&plan, cfg)?;
    let gain = scaling.gain(plan.stages.len() as u32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<FixedFrame> = (0..num_frames)
        .map(|_| random_pm1_frame(&mut rng, format, amplitude))
        .collect();

    let workers = thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(16);
    let chunk = num_frames.div_ceil(workers).max(1);
    let per_frame: Vec<Option<f64>> = thread::scope(|s| {
        let handles: Vec<_> = inputs
            .chunks(chunk)
            .map(|part| {
                let (plan, twiddler) = (&plan, &twiddler);
                s.spawn(move || -> Result<Vec<Option<f64>>, PlanError> {
                    part.iter()
                        .map(|x| {
                            let y = fft_fixed_with(x, plan, cfg, twiddler)?.frame;
                            let r = fft_float(&to_float(x), plan)?;
                            Ok(frame_sqnr(&y, &r, gain))
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect::<Result<Vec<_>, _>>()
            .map(|v| v.into_iter().flatten().collect())
    })?;

    let values: Vec<f64> = per_frame.iter().flatten().copied().collect();
    let skipped = per_frame.len() - values.len();
    let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    Ok(SqnrReport {
        num_frames,
        word_length: format.word_length(),
        frac_bits: format.frac_bits(),
        scaling: scaling.id(),
        mean_sqnr_db: mean,
        min_sqnr_db: values.iter().copied().fold(f64::INFINITY, f64::min),
        max_sqnr_db: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        seed,
        skipped,
    })
}

/// Real-arithmetic resources of one path PE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UnitCost {
    /// Butterfly and complex-multiply add/sub units.
    pub addsub: u32,
    /// Shift-and-add operations inside constant multipliers.
    pub const_mult_addsub: u32,
    pub general_multipliers: u32,
    pub delay_elements: u32,
}

impl UnitCost {
    fn add(&mut self, o: &UnitCost) {
        self.addsub += o.addsub;
        self.const_mult_addsub += o.const_mult_addsub;
        self.general_multipliers += o.general_multipliers;
        self.delay_elements += o.delay_elements;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathCost {
    pub stage_index: u32,
    /// 1-based.
    pub path: usize,
    pub rotator: &'static str,
    pub cost: UnitCost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub paths: Vec<PathCost>,
    pub per_stage: Vec<UnitCost>,
    pub total: UnitCost,
    pub rotators_by_kind: Vec<(&'static str, u32)>,
}

/// Per-instance rotator cost: `(addsub, const_mult_addsub, general_multipliers)`.
/// A general rotator is a direct-form complex multiplier.
pub fn rotator_cost(kind: &RotatorKind, w8_recipe_ops: u32) -> (u32, u32, u32) {
    match kind {
        RotatorKind::NoRotation | RotatorKind::W4Trivial => (0, 0, 0),
        RotatorKind::W8Csd => (0, w8_recipe_ops, 0),
        RotatorKind::W16Shared => (0, 3, 0),
        RotatorKind::GeneralTw(_) => (2, 0, 4),
    }
}

pub fn cost_census(arch: &ArchitecturePlan, config: &FixedConfig) -> Result<CostReport, crate::rotor::RotorError> {
    let w8_ops = crate::rotor::w8_csd_recipe(config.w8_frac_bits)?.op_count() as u32;
    let mut paths = Vec::new();
    let mut per_stage = Vec::new();
    let mut total = UnitCost::default();
    let mut kinds: Vec<(&'static str, u32)> = ["none", "W4", "W8", "W16", "TW"].iter().map(|&k| (k, 0)).collect();
    for s in &arch.stages {
        let mut stage = UnitCost::default();
        for (p, kind) in s.rotators.iter().enumerate() {
            let (addsub, const_ops, mults) = rotator_cost(kind, w8_ops);
            let cost = UnitCost {
                // half of a radix-2 butterfly per PE in both modes
                addsub: 2 + addsub,
                const_mult_addsub: const_ops,
                general_multipliers: mults,
                delay_elements: s.commutator.depth as u32,
            };
            stage.add(&cost);
            if let Some(k) = kinds.iter_mut().find(|(n, _)| *n == kind.name()) {
                k.1 += 1;
            }
            paths.push(PathCost {
                stage_index: s.stage_index,
                path: p + 1,
                rotator: kind.name(),
                cost,
            });
        }
        total.add(&stage);
        per_stage.push(stage);
    }
    Ok(CostReport {
        paths,
        per_stage,
        total,
        rotators_by_kind: kinds,
    })
}

impl CostReport {
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for p in &self.paths {
            let c = &p.cost;
            let _ = writeln!(
                out,
                "stage{}.path{}.rotator={}\nstage{}.path{}.addsub={}\nstage{}.path{}.const_mult_addsub={}\nstage{}.path{}.general_multipliers={}\nstage{}.path{}.delay_elements={}",
                p.stage_index, p.path, p.rotator,
                p.stage_index, p.path, c.addsub,
                p.stage_index, p.path, c.const_mult_addsub,
                p.stage_index, p.path, c.general_multipliers,
                p.stage_index, p.path, c.delay_elements
            );
        }
        for (k, n) in &self.rotators_by_kind {
            let _ = writeln!(out, "rotators.{k}={n}");
        }
        let t = &self.total;
        let _ = write!(
            out,
            "total.pe={}\ntotal.addsub={}\ntotal.const_mult_addsub={}\ntotal.general_multipliers={}\ntotal.delay_elements={}\n",
            self.paths.len(),
            t.addsub,
            t.const_mult_addsub,
            t.general_multipliers,
            t.delay_elements
        );
        out
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stage path rotator addsub const_addsub mult delay")?;
        for p in &self.paths {
            let c = &p.cost;
            writeln!(
                f,
                "{:>5} {:>4} {:>7} {:>6} {:>12} {:>4} {:>5}",
                p.stage_index,
                p.path,
                p.rotator,
                c.addsub,
                c.const_mult_addsub,
                c.general_multipliers,
                c.delay_elements
            )?;
        }
        let t = &self.total;
        write!(
            f,
            "total      {:>7} {:>6} {:>12} {:>4} {:>5}",
            self.paths.len(),
            t.addsub,
            t.const_mult_addsub,
            t.general_multipliers,
            t.delay_elements
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecordError {
    #[error("{0}")]
    Csv(String),
    #[error("row {row}: missing column `{column}`")]
    MissingColumn { row: usize, column: &'static str },
    #[error("row {row}: column `{column}`: cannot parse `{value}`")]
    BadValue {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("row {row}: tech_nm and voltage_v must be positive")]
    NonPositive { row: usize },
}

/// One column of the comparison table, plus the published normalized values.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRecord {
    pub label: String,
    pub tech_nm: f64,
    pub voltage_v: f64,
    pub area_mm2: Option<f64>,
    pub power_mw: Option<f64>,
    pub power_sample_rate_msps: Option<f64>,
    pub gate_count: Option<u64>,
    pub published_area_n_mm2: Option<f64>,
    pub published_power_n_mw: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn record(
    label: &str,
    tech_nm: f64,
    voltage_v: f64,
    area_mm2: Option<f64>,
    gate_count: Option<u64>,
    power: Option<(f64, f64)>,
    published_area_n_mm2: Option<f64>,
    published_power_n_mw: Option<f64>,
) -> DesignRecord {
    DesignRecord {
        label: label.into(),
        tech_nm,
        voltage_v,
        area_mm2,
        power_mw: power.map(|p| p.0),
        power_sample_rate_msps: power.map(|p| p.1),
        gate_count,
        published_area_n_mm2,
        published_power_n_mw,
    }
}

/// Reference designs for the area and power comparison.
pub fn comparison_table() -> Vec<DesignRecord> {
    vec![
        record(
            "mscfft",
            90.0,
            1.0,
            Some(0.167),
            Some(59049),
            Some((14.81, 1000.0)),
            Some(0.167),
            Some(6.75),
        ),
        record(
            "design-a",
            180.0,
            1.8,
            None,
            Some(93200),
            Some((132.0, 800.0)),
            None,
            Some(11.2),
        ),
        record(
            "design-b",
            180.0,
            1.8,
            Some(3.097),
            None,
            Some((175.0, 1000.0)),
            Some(0.774),
            Some(11.97),
        ),
        record("design-c", 180.0, 1.8, None, Some(130000), None, None, None),
        record(
            "design-d",
            90.0,
            1.0,
            Some(0.53),
            None,
            Some((6.8, 409.6)),
            Some(0.53),
            Some(7.3),
        ),
        record(
            "design-e",
            65.0,
            0.7,
            Some(0.34),
            None,
            Some((2.12, 317.25)),
            Some(0.652),
            Some(8.31),
        ),
    ]
}

pub const REF_TECH_NM: f64 = 90.0;
pub const REF_VOLTAGE: f64 = 1.0;
pub const TARGET_MSPS: f64 = 440.0;

/// `A / (tech/ref)²`, `None` without an area figure.
pub fn normalize_area(d: &DesignRecord, ref_tech_nm: f64) -> Option<f64> {
    d.area_mm2.map(|a| a / (d.tech_nm / ref_tech_nm).powi(2))
}

/// Scale power linearly to `target_msps`, then divide by
/// `(tech/ref_tech)·(V/ref_voltage)²`.
pub fn normalize_power(d: &DesignRecord, target_msps: f64, ref_tech_nm: f64, ref_voltage: f64) -> Option<f64> {
    let (p, rate) = (d.power_mw?, d.power_sample_rate_msps?);
    Some(p * target_msps / rate / ((d.tech_nm / ref_tech_nm) * (d.voltage_v / ref_voltage).powi(2)))
}

pub const AREA_TOLERANCE: f64 = 0.005;
pub const POWER_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub computed: f64,
    pub published: Option<f64>,
}

impl Comparison {
    pub fn delta(&self) -> Option<f64> {
        self.published.map(|p| self.computed - p)
    }

    pub fn reproduces(&self, tolerance: f64) -> Option<bool> {
        self.delta().map(|d| d.abs() <= tolerance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationRow {
    pub label: String,
    pub area: Option<Comparison>,
    pub power: Option<Comparison>,
}

pub fn normalization_rows(records: &[DesignRecord]) -> Vec<NormalizationRow> {
    records
        .iter()
        .map(|d| NormalizationRow {
            label: d.label.clone(),
            area: normalize_area(d, REF_TECH_NM).map(|computed| Comparison {
                computed,
                published: d.published_area_n_mm2,
            }),
            power: normalize_power(d, TARGET_MSPS, REF_TECH_NM, REF_VOLTAGE).map(|computed| Comparison {
                computed,
                published: d.published_power_n_mw,
            }),
        })
        .collect()
}

fn fmt_cmp(c: &Option<Comparison>, tol: f64) -> String {
    match c {
        None => "n/a".into(),
        Some(c) => match (c.published, c.delta(), c.reproduces(tol)) {
            (Some(p), Some(d), Some(ok)) => format!(
                "{:.3} (published {p}, delta {d:+.3}{})",
                c.computed,
                if ok { "" } else { ", MISMATCH" }
            ),
            _ => format!("{:.3}", c.computed),
        },
    }
}

pub fn normalization_text(rows: &[NormalizationRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(
            out,
            "{:<10} area_n_mm2 {}  power_n_mw@440 {}",
            r.label,
            fmt_cmp(&r.area, AREA_TOLERANCE),
            fmt_cmp(&r.power, POWER_TOLERANCE)
        );
    }
    out
}

pub fn normalization_kv(rows: &[NormalizationRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let key: String = r.label.chars().filter(|c| c.is_alphanumeric()).collect();
        for (name, c, tol) in [
            ("area_n_mm2", &r.area, AREA_TOLERANCE),
            ("power_n_mw", &r.power, POWER_TOLERANCE),
        ] {
            let Some(c) = c else { continue };
            let _ = writeln!(out, "{key}.{name}={:.4}", c.computed);
            if let (Some(p), Some(d), Some(ok)) = (c.published, c.delta(), c.reproduces(tol)) {
                let _ = writeln!(
                    out,
                    "{key}.{name}.published={p}\n{key}.{name}.delta={d:.4}\n{key}.{name}.reproduces={ok}"
                );
            }
        }
    }
    out
}

const COLUMNS: [&str; 9] = [
    "label",
    "tech_nm",
    "voltage_v",
    "area_mm2",
    "gate_count",
    "power_mw",
    "power_sample_rate_msps",
    "published_area_n_mm2",
    "published_power_n_mw",
];

/// Comma-separated records with a header row; empty cells are absent values.
pub fn parse_design_records(text: &str) -> Result<Vec<DesignRecord>, RecordError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| RecordError::Csv(e.to_string()))?.clone();
    let index = |c: &'static str| headers.iter().position(|h| h == c);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| RecordError::Csv(e.to_string()))?;
        let cell = |c: &'static str| index(c).and_then(|j| rec.get(j)).filter(|v| !v.is_empty());
        let num = |c: &'static str| -> Result<Option<f64>, RecordError> {
            cell(c)
                .map(|v| {
                    v.parse::<f64>().map_err(|_| RecordError::BadValue {
                        row,
                        column: c,
                        value: v.into(),
                    })
                })
                .transpose()
        };
        let req = |c: &'static str| num(c)?.ok_or(RecordError::MissingColumn { row, column: c });
        let d = DesignRecord {
            label: cell("label")
                .ok_or(RecordError::MissingColumn { row, column: "label" })?
                .to_string(),
            tech_nm: req("tech_nm")?,
            voltage_v: req("voltage_v")?,
            area_mm2: num("area_mm2")?,
            power_mw: num("power_mw")?,
            power_sample_rate_msps: num("power_sample_rate_msps")?,
            gate_count: cell("gate_count")
                .map(|v| {
                    v.parse::<u64>().map_err(|_| RecordError::BadValue {
                        row,
                        column: "gate_count",
                        value: v.into(),
                    })
                })
                .transpose()?,
            published_area_n_mm2: num("published_area_n_mm2")?,
            published_power_n_mw: num("published_power_n_mw")?,
        };
        if d.tech_nm <= 0.0 || d.voltage_v <= 0.0 {
            return Err(RecordError::NonPositive { row });
        }
        out.push(d);
    }
    Ok(out)
}

pub fn write_design_records(records: &[DesignRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let o = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    w.write_record(COLUMNS).expect("in-memory write");
    for d in records {
        w.write_record([
            d.label.clone(),
            d.tech_nm.to_string(),
            d.voltage_v.to_string(),
            o(d.area_mm2),
            d.gate_count.map(|g| g.to_string()).unwrap_or_default(),
            o(d.power_mw),
            o(d.power_sample_rate_msps),
            o(d.published_area_n_mm2),
            o(d.published_power_n_mw),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}
