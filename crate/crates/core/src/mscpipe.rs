//! Clocked model of the 4-path serial-commutator pipeline.
//!
//! Each of the four paths carries one complex sample per cycle, 32 cycles per
//! 128-point frame. A frame's flow-graph position `p` travels on path
//! `2·p₁ + p₀` (position bits 1 and 0; paths are numbered 1..=4 in reports),
//! and its remaining five bits give the time slot. Per stage:
//!
//! 1. a commutator permutes time slots so the butterfly partner bit becomes
//!    the least significant slot bit. It is modeled as a fixed delay plus a
//!    slot permutation, not as a register/multiplexer netlist;
//! 2. the butterfly. When the partner bit is a time bit, each path runs a
//!    half-butterfly that emits the sum of a pair on the cycle the second
//!    sample arrives and the difference on the next. When the partner bit is
//!    a path bit (stages 6 and 7), the adders of the two paired PEs form one
//!    butterfly across the paths;
//! 3. the path's rotator, sized by the exponents allocated to it.
//!
//! The rotation allocation at stages 4–6 follows the published per-path
//! table; the remaining stages are uniform across paths.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::flowgraph::{
    butterfly_diff, butterfly_sum, FftPlan, FixedConfig, FixedFrame, Frame, Order, PlanError, StagePlan, Twiddler,
    MAX_SPECIALIZED_BASE,
};
use crate::fxnum::CFx;
use crate::rotor::{RotatorKind, RotorError, TwiddleExponent};

pub const PATHS: usize = 4;
pub const N: usize = 128;
pub const SLOTS: usize = N / PATHS;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipeError {
    #[error("architecture supports only the 128-point radix-2^3/2^4 plan, got n={n} factors={factors:?}")]
    UnsupportedPlan { n: usize, factors: Vec<u32> },
    #[error(
        "no feasible schedule: stage {stage} path {path} needs {derived} but the allocation table gives {expected}"
    )]
    Infeasible {
        stage: u32,
        path: usize,
        derived: String,
        expected: String,
    },
    #[error("stream protocol error at cycle {cycle}: {reason}")]
    Protocol { cycle: u64, reason: String },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Rotor(#[from] RotorError),
}

/// Bijection between (path, slot) and flow-graph position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    /// Path index bit `q` holds position bit `path_bits[q]`.
    pub path_bits: Vec<u32>,
    /// Slot bit `t` holds position bit `slot_bits[t]`.
    pub slot_bits: Vec<u32>,
    /// Physical path → logical path (identity for a conforming schedule).
    pub path_map: Vec<usize>,
}

impl Layout {
    fn input() -> Self {
        Self {
            path_bits: vec![0, 1],
            slot_bits: vec![2, 3, 4, 5, 6],
            path_map: (0..PATHS).collect(),
        }
    }

    /// Position of the sample on `path` (0-based) at `slot`.
    pub fn position(&self, path: usize, slot: usize) -> usize {
        let logical = self.path_map[path];
        let mut p = 0;
        for (q, &b) in self.path_bits.iter().enumerate() {
            p |= ((logical >> q) & 1) << b;
        }
        for (t, &b) in self.slot_bits.iter().enumerate() {
            p |= ((slot >> t) & 1) << b;
        }
        p
    }

    pub fn slot_of(&self, position: usize) -> usize {
        self.slot_bits
            .iter()
            .enumerate()
            .map(|(t, &b)| ((position >> b) & 1) << t)
            .sum()
    }

    pub fn path_of(&self, position: usize) -> usize {
        let logical: usize = self
            .path_bits
            .iter()
            .enumerate()
            .map(|(q, &b)| ((position >> b) & 1) << q)
            .sum();
        self.path_map
            .iter()
            .position(|&l| l == logical)
            .expect("path map is a bijection")
    }
}

/// Slot permutation with a fixed delay: slot `a` of a frame leaving at
/// `frame_start + delay + perm[a]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Commutator {
    pub perm: Vec<usize>,
    pub delay: u64,
    /// Peak number of samples held per path with frames streamed back to back.
    pub depth: usize,
}

impl Commutator {
    fn between(from: &Layout, to: &Layout) -> Self {
        let perm: Vec<usize> = (0..SLOTS).map(|a| to.slot_of(from.position(0, a))).collect();
        let delay = (0..SLOTS).map(|a| a.saturating_sub(perm[a])).max().unwrap_or(0) as u64;
        // occupancy over three back-to-back frames
        let mut events: Vec<(u64, i64)> = Vec::new();
        for f in 0..3u64 {
            for (a, &b) in perm.iter().enumerate() {
                let arrive = f * SLOTS as u64 + a as u64;
                let leave = f * SLOTS as u64 + delay + b as u64;
                if leave > arrive {
                    events.push((arrive, 1));
                    events.push((leave, -1));
                }
            }
        }
        events.sort();
        let mut depth = 0i64;
        let mut peak = 0i64;
        for (_, d) in events {
            depth += d;
            peak = peak.max(depth);
        }
        Self {
            perm,
            delay,
            depth: peak as usize,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.delay == 0 && self.perm.iter().enumerate().all(|(a, &b)| a == b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ButterflyMode {
    /// Half-butterfly over consecutive samples of one path.
    Serial,
    /// Full butterfly across the two paths differing in this path bit.
    CrossPath { path_bit: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageConfig {
    pub stage_index: u32,
    pub mode: ButterflyMode,
    pub commutator: Commutator,
    /// Layout after the commutator (unchanged by butterfly and rotator).
    pub layout: Layout,
    pub rotators: Vec<RotatorKind>,
    pub allocated_exponents: Vec<BTreeSet<TwiddleExponent>>,
    /// Sum outputs bypass the rotator.
    pub lower_only: bool,
}

impl StageConfig {
    /// Whether the output at `slot` passes through the path rotator.
    pub fn uses_rotator(&self, slot: usize) -> bool {
        match self.mode {
            ButterflyMode::CrossPath { .. } => true,
            ButterflyMode::Serial => !self.lower_only || slot % 2 == 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArchitecturePlan {
    pub n: usize,
    pub paths: usize,
    pub plan: FftPlan,
    pub input_layout: Layout,
    pub stages: Vec<StageConfig>,
}

impl ArchitecturePlan {
    pub fn output_layout(&self) -> &Layout {
        &self.stages.last().expect("seven stages").layout
    }

    /// `(path, cycle-within-frame) → position` at the input of every stage.
    pub fn permutation_schedule(&self) -> Vec<Vec<Vec<usize>>> {
        self.stages
            .iter()
            .map(|s| {
                (0..self.paths)
                    .map(|p| (0..SLOTS).map(|t| s.layout.position(p, t)).collect())
                    .collect()
            })
            .collect()
    }

    /// Frame start to frame start: commutator delays plus one register per
    /// butterfly.
    pub fn latency(&self) -> u64 {
        self.stages.iter().map(|s| s.commutator.delay + 1).sum()
    }

    /// Test fixture: exchange the data carried by two physical paths while
    /// keeping each path's rotator and allocation.
    pub fn scrambled(&self, a: usize, b: usize) -> Self {
        let mut arch = self.clone();
        let swap = |l: &mut Layout| l.path_map.swap(a, b);
        swap(&mut arch.input_layout);
        for s in &mut arch.stages {
            swap(&mut s.layout);
        }
        arch
    }
}

/// Per-path rotation sets of the published allocation table (stages 4–6).
pub fn expected_allocation(stage_index: u32) -> Option<Vec<BTreeSet<TwiddleExponent>>> {
    let w = |b, m| TwiddleExponent::new(b, m).expect("power of two");
    let sets = match stage_index {
        4 => (0..PATHS as u64).map(|p| [w(16, p), w(16, p + 4)].into()).collect(),
        5 => (0..PATHS as u64).map(|p| [w(8, p)].into()).collect(),
        6 => (0..PATHS).map(|p| [w(4, (p == PATHS - 1) as u64)].into()).collect(),
        _ => return None,
    };
    Some(sets)
}

fn fmt_set(s: &BTreeSet<TwiddleExponent>) -> String {
    let items: Vec<String> = s.iter().map(|t| t.to_string()).collect();
    format!("{{{}}}", items.join(", "))
}

pub fn build_architecture(plan: &FftPlan, config: &FixedConfig) -> Result<ArchitecturePlan, PipeError> {
    if plan.n() != N || plan.spec.radix_factors != [3, 4] {
        return Err(PipeError::UnsupportedPlan {
            n: plan.n(),
            factors: plan.spec.radix_factors.clone(),
        });
    }
    let twiddler = Twiddler::new(plan, config)?;
    let input_layout = Layout::input();
    let mut current = input_layout.clone();
    let mut stages = Vec::with_capacity(plan.stages.len());
    for sp in &plan.stages {
        let bit = sp.pair_bit();
        let (mode, layout) = match current.path_bits.iter().position(|&b| b == bit) {
            Some(q) => (ButterflyMode::CrossPath { path_bit: q }, current.clone()),
            None => {
                let mut next = current.clone();
                let t = next
                    .slot_bits
                    .iter()
                    .position(|&b| b == bit)
                    .expect("bit is a slot bit");
                next.slot_bits.swap(0, t);
                (ButterflyMode::Serial, next)
            }
        };
        let commutator = Commutator::between(&current, &layout);
        let mut stage = StageConfig {
            stage_index: sp.stage_index,
            mode,
            commutator,
            layout: layout.clone(),
            rotators: Vec::new(),
            allocated_exponents: vec![BTreeSet::new(); PATHS],
            lower_only: sp.lower_only(),
        };
        for path in 0..PATHS {
            for slot in 0..SLOTS {
                if stage.uses_rotator(slot) {
                    stage.allocated_exponents[path].insert(sp.exponent(layout.position(path, slot)));
                }
            }
        }
        if let Some(expected) = expected_allocation(sp.stage_index) {
            for (path, (derived, want)) in stage.allocated_exponents.iter().zip(&expected).enumerate() {
                if derived != want {
                    return Err(PipeError::Infeasible {
                        stage: sp.stage_index,
                        path: path + 1,
                        derived: fmt_set(derived),
                        expected: fmt_set(want),
                    });
                }
            }
        }
        stage.rotators = stage
            .allocated_exponents
            .iter()
            .map(|set| match twiddler.table(sp.stage_index) {
                Some(table) => RotatorKind::GeneralTw(table.clone()),
                None => RotatorKind::cheapest_specialized(set).expect("specialized stage base"),
            })
            .collect();
        debug_assert!(sp.twiddle_base > MAX_SPECIALIZED_BASE || twiddler.table(sp.stage_index).is_none());
        current = layout;
        stages.push(stage);
    }
    Ok(ArchitecturePlan {
        n: N,
        paths: PATHS,
        plan: plan.clone(),
        input_layout,
        stages,
    })
}

/// One sample on one path at one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamEvent {
    /// 1-based path number.
    pub path: usize,
    pub cycle: u64,
    pub sample: CFx,
    pub frame_id: u64,
    /// Cycle within the frame.
    pub slot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Token {
    frame_id: u64,
    slot: usize,
    sample: CFx,
}

/// A rotation request served by a path rotator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RotationRecord {
    pub cycle: u64,
    pub stage: u32,
    /// 1-based.
    pub path: usize,
    pub frame_id: u64,
    pub exponent: TwiddleExponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    Butterfly,
    Rotate,
}

/// `cycle path stage event raw_re raw_im exponent`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub cycle: u64,
    pub path: usize,
    pub stage: u32,
    pub event: TraceEvent,
    pub sample: CFx,
    pub exponent: Option<TwiddleExponent>,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let event = match self.event {
            TraceEvent::Butterfly => "bfly",
            TraceEvent::Rotate => "rot",
        };
        let (re, im) = self.sample.raw();
        let exp = self.exponent.map(|t| t.to_string()).unwrap_or_else(|| "-".into());
        write!(
            f,
            "{} {} {} {} {} {} {}",
            self.cycle, self.path, self.stage, event, re, im, exp
        )
    }
}

#[derive(Debug, Clone, Default)]
struct HalfButterfly {
    held: Option<Token>,
    pending: Option<(Token, Token)>,
}

#[derive(Debug, Clone)]
enum ButterflyState {
    Serial(Vec<HalfButterfly>),
    Cross(Vec<Option<Token>>),
}

#[derive(Debug, Clone, Default)]
struct BusyCounter {
    busy: u64,
    first: Option<u64>,
    last: u64,
}

impl BusyCounter {
    fn mark(&mut self, cycle: u64) {
        self.busy += 1;
        self.first.get_or_insert(cycle);
        self.last = cycle;
    }

    fn window(&self) -> u64 {
        self.first.map(|f| self.last - f + 1).unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
struct StageState {
    queues: Vec<BTreeMap<u64, Token>>,
    butterfly: ButterflyState,
    adders: Vec<BusyCounter>,
    rotators: Vec<BusyCounter>,
}

#[derive(Debug, Clone)]
struct InputTracker {
    frame_id: u64,
    start: u64,
    next_slot: usize,
}

/// Cycle-stepped pipeline instance. Single-writer: `step` mutates state.
#[derive(Debug, Clone)]
pub struct MscPipeline {
    arch: ArchitecturePlan,
    config: FixedConfig,
    twiddler: Twiddler,
    cycle: u64,
    input: Option<InputTracker>,
    stages: Vec<StageState>,
    rotations: Vec<RotationRecord>,
    trace: Option<Vec<TraceRecord>>,
    overflows: u64,
}

impl MscPipeline {
    pub fn new(arch: &ArchitecturePlan, config: &FixedConfig) -> Result<Self, PipeError> {
        let twiddler = Twiddler::new(&arch.plan, config)?;
        let stages = arch
            .stages
            .iter()
            .map(|s| StageState {
                queues: vec![BTreeMap::new(); PATHS],
                butterfly: match s.mode {
                    ButterflyMode::Serial => ButterflyState::Serial(vec![HalfButterfly::default(); PATHS]),
                    ButterflyMode::CrossPath { .. } => ButterflyState::Cross(vec![None; PATHS]),
                },
                adders: vec![BusyCounter::default(); PATHS],
                rotators: vec![BusyCounter::default(); PATHS],
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            config: config.clone(),
            twiddler,
            cycle: 0,
            input: None,
            stages,
            rotations: Vec::new(),
            trace: None,
            overflows: 0,
        })
    }

    /// Record every butterfly and rotator output.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn rotations(&self) -> &[RotationRecord] {
        &self.rotations
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }

    pub fn overflows(&self) -> u64 {
        self.overflows
    }

    fn protocol(&self, reason: impl Into<String>) -> PipeError {
        PipeError::Protocol {
            cycle: self.cycle,
            reason: reason.into(),
        }
    }

    /// True when no sample is inside the pipeline.
    pub fn is_idle(&self) -> bool {
        self.stages.iter().all(|s| {
            s.queues.iter().all(|q| q.is_empty())
                && match &s.butterfly {
                    ButterflyState::Serial(h) => h.iter().all(|h| h.held.is_none() && h.pending.is_none()),
                    ButterflyState::Cross(r) => r.iter().all(|r| r.is_none()),
                }
        }) && self.input.as_ref().is_none_or(|t| t.next_slot == SLOTS)
    }

    fn accept_inputs(&mut self, inputs: &[Option<StreamEvent>; PATHS]) -> Result<Vec<Option<Token>>, PipeError> {
        if inputs.iter().all(|e| e.is_none()) {
            if let Some(t) = &self.input {
                if t.next_slot != SLOTS {
                    return Err(self.protocol(format!("frame {} interrupted at slot {}", t.frame_id, t.next_slot)));
                }
            }
            return Ok(vec![None; PATHS]);
        }
        let mut frame = None;
        for (p, e) in inputs.iter().enumerate() {
            let e = e.ok_or_else(|| self.protocol(format!("path {} idle while others carry data", p + 1)))?;
            if e.path != p + 1 || e.cycle != self.cycle {
                return Err(self.protocol(format!(
                    "event for path {} cycle {} presented on path {} cycle {}",
                    e.path,
                    e.cycle,
                    p + 1,
                    self.cycle
                )));
            }
            if e.sample.format() != self.config.format {
                return Err(self.protocol("sample format differs from pipeline format"));
            }
            match frame {
                None => frame = Some(e.frame_id),
                Some(f) if f != e.frame_id => return Err(self.protocol("paths carry different frames")),
                _ => {}
            }
        }
        let frame_id = frame.expect("at least one event");
        let slot = match &mut self.input {
            Some(t) if t.frame_id == frame_id => {
                if t.next_slot >= SLOTS {
                    return Err(PipeError::Protocol {
                        cycle: self.cycle,
                        reason: format!("frame {frame_id} longer than {SLOTS} cycles"),
                    });
                }
                t.next_slot
            }
            Some(t) if t.next_slot != SLOTS || frame_id <= t.frame_id => {
                return Err(PipeError::Protocol {
                    cycle: self.cycle,
                    reason: format!("frame {frame_id} out of order after frame {}", t.frame_id),
                })
            }
            _ => {
                self.input = Some(InputTracker {
                    frame_id,
                    start: self.cycle,
                    next_slot: 0,
                });
                0
            }
        };
        let tracker = self.input.as_mut().expect("tracker set");
        debug_assert_eq!(tracker.start + slot as u64, self.cycle);
        tracker.next_slot += 1;
        for e in inputs.iter().flatten() {
            if e.slot != slot {
                return Err(self.protocol(format!("expected slot {slot}, event says {}", e.slot)));
            }
        }
        Ok(inputs
            .iter()
            .map(|e| {
                e.map(|e| Token {
                    frame_id: e.frame_id,
                    slot,
                    sample: e.sample,
                })
            })
            .collect())
    }

    /// Advance every stage by one clock.
    pub fn step(&mut self, inputs: &[Option<StreamEvent>; PATHS]) -> Result<[Option<StreamEvent>; PATHS], PipeError> {
        let mut tokens = self.accept_inputs(inputs)?;
        for s in 0..self.stages.len() {
            tokens = self.step_stage(s, tokens)?;
        }
        let layout = self.arch.output_layout();
        let mut out = [None; PATHS];
        for (p, t) in tokens.into_iter().enumerate() {
            out[p] = t.map(|t| {
                debug_assert_eq!(layout.path_of(layout.position(p, t.slot)), p);
                StreamEvent {
                    path: p + 1,
                    cycle: self.cycle,
                    sample: t.sample,
                    frame_id: t.frame_id,
                    slot: t.slot,
                }
            });
        }
        self.cycle += 1;
        Ok(out)
    }

    fn step_stage(&mut self, s: usize, inputs: Vec<Option<Token>>) -> Result<Vec<Option<Token>>, PipeError> {
        let cycle = self.cycle;
        let cfg = &self.arch.stages[s];
        let plan: &StagePlan = &self.arch.plan.stages[s];
        let scale = self.config.scaling.scales(cfg.stage_index);

        // commutator
        let permuted: Vec<Option<Token>> = if cfg.commutator.is_identity() {
            inputs
        } else {
            let mut out = Vec::with_capacity(PATHS);
            for (p, tok) in inputs.into_iter().enumerate() {
                let queue = &mut self.stages[s].queues[p];
                if let Some(t) = tok {
                    let start = cycle - t.slot as u64;
                    let slot = cfg.commutator.perm[t.slot];
                    let leave = start + cfg.commutator.delay + slot as u64;
                    if queue.insert(leave, Token { slot, ..t }).is_some() {
                        return Err(PipeError::Protocol {
                            cycle,
                            reason: format!("stage {} commutator slot collision", cfg.stage_index),
                        });
                    }
                }
                out.push(queue.remove(&cycle));
            }
            out
        };

        // butterfly
        let mut outputs: Vec<Option<Token>> = vec![None; PATHS];
        let state = &mut self.stages[s];
        let mut overflows = 0u64;
        match &mut state.butterfly {
            ButterflyState::Serial(units) => {
                for (p, (unit, tok)) in units.iter_mut().zip(permuted).enumerate() {
                    if let Some((a, b)) = unit.pending.take() {
                        let (d, o) = butterfly_diff(a.sample, b.sample, scale);
                        overflows += o as u64;
                        outputs[p] = Some(Token { sample: d, ..b });
                        state.adders[p].mark(cycle);
                    }
                    let Some(t) = tok else { continue };
                    if t.slot % 2 == 0 {
                        if unit.held.replace(t).is_some() {
                            return Err(PipeError::Protocol {
                                cycle,
                                reason: format!("stage {} path {}: unpaired sample", cfg.stage_index, p + 1),
                            });
                        }
                    } else {
                        let a = unit
                            .held
                            .take()
                            .filter(|a| a.frame_id == t.frame_id && a.slot + 1 == t.slot)
                            .ok_or_else(|| PipeError::Protocol {
                                cycle,
                                reason: format!(
                                    "stage {} path {}: second sample of pair without its partner",
                                    cfg.stage_index,
                                    p + 1
                                ),
                            })?;
                        if outputs[p].is_some() {
                            return Err(PipeError::Protocol {
                                cycle,
                                reason: format!("stage {} path {}: output collision", cfg.stage_index, p + 1),
                            });
                        }
                        let (sum, o) = butterfly_sum(a.sample, t.sample, scale);
                        overflows += o as u64;
                        outputs[p] = Some(Token { sample: sum, ..a });
                        unit.pending = Some((a, t));
                        state.adders[p].mark(cycle);
                    }
                }
            }
            ButterflyState::Cross(regs) => {
                let ButterflyMode::CrossPath { path_bit } = cfg.mode else {
                    unreachable!("cross state implies cross mode")
                };
                for (p, r) in regs.iter_mut().enumerate() {
                    outputs[p] = r.take();
                }
                for p in 0..PATHS {
                    let logical = cfg.layout.path_map[p];
                    if (logical >> path_bit) & 1 == 1 {
                        continue;
                    }
                    let partner_logical = logical | (1 << path_bit);
                    let q = cfg
                        .layout
                        .path_map
                        .iter()
                        .position(|&l| l == partner_logical)
                        .expect("bijective");
                    match (permuted[p], permuted[q]) {
                        (None, None) => {}
                        (Some(a), Some(b)) if a.frame_id == b.frame_id && a.slot == b.slot => {
                            let (sum, o1) = butterfly_sum(a.sample, b.sample, scale);
                            let (diff, o2) = butterfly_diff(a.sample, b.sample, scale);
                            overflows += o1 as u64 + o2 as u64;
                            regs[p] = Some(Token { sample: sum, ..a });
                            regs[q] = Some(Token { sample: diff, ..b });
                            state.adders[p].mark(cycle);
                            state.adders[q].mark(cycle);
                        }
                        _ => {
                            return Err(PipeError::Protocol {
                                cycle,
                                reason: format!("stage {}: paths {} and {} misaligned", cfg.stage_index, p + 1, q + 1),
                            })
                        }
                    }
                }
            }
        }

        // rotators
        for (p, out) in outputs.iter_mut().enumerate() {
            let Some(tok) = out.as_mut() else { continue };
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceRecord {
                    cycle,
                    path: p + 1,
                    stage: cfg.stage_index,
                    event: TraceEvent::Butterfly,
                    sample: tok.sample,
                    exponent: None,
                });
            }
            if !cfg.uses_rotator(tok.slot) {
                continue;
            }
            let t = plan.exponent(cfg.layout.position(p, tok.slot));
            let kind = &cfg.rotators[p];
            self.rotations.push(RotationRecord {
                cycle,
                stage: cfg.stage_index,
                path: p + 1,
                frame_id: tok.frame_id,
                exponent: t,
            });
            if *kind != RotatorKind::NoRotation {
                state.rotators[p].mark(cycle);
            }
            // An uncovered request is recorded above for check_allocation and
            // then served by the reference datapath.
            let (r, o) = match kind.rotate(tok.sample, t, self.twiddler.datapaths()) {
                Ok(v) => v,
                Err(RotorError::AllocationViolation { .. }) => self.twiddler.rotate(cfg.stage_index, tok.sample, t)?,
                Err(e) => return Err(e.into()),
            };
            overflows += o as u64;
            tok.sample = r;
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceRecord {
                    cycle,
                    path: p + 1,
                    stage: cfg.stage_index,
                    event: TraceEvent::Rotate,
                    sample: r,
                    exponent: Some(t),
                });
            }
        }
        self.overflows += overflows;
        Ok(outputs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageUtilization {
    pub stage_index: u32,
    pub adder_busy_cycles: u64,
    pub adder_window_cycles: u64,
    pub adder_utilization: f64,
    pub rotator_busy_cycles: u64,
    pub rotator_utilization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilizationReport {
    pub stages: Vec<StageUtilization>,
    /// First input cycle of a frame to its first output cycle.
    pub latency_cycles: u64,
    pub frame_latencies: Vec<u64>,
    pub cycles_per_frame: u64,
    pub total_cycles: u64,
    /// Output samples per cycle while the output stream is active.
    pub throughput_samples_per_cycle: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outputs: Vec<FixedFrame>,
    pub report: UtilizationReport,
    pub rotations: Vec<RotationRecord>,
    pub trace: Option<Vec<TraceRecord>>,
    pub overflows: u64,
}

/// Stream frames back to back through a fresh pipeline and collect outputs.
pub fn run_frames(
    frames: &[FixedFrame],
    arch: &ArchitecturePlan,
    config: &FixedConfig,
) -> Result<RunResult, PipeError> {
    run_frames_traced(frames, arch, config, false)
}

pub fn run_frames_traced(
    frames: &[FixedFrame],
    arch: &ArchitecturePlan,
    config: &FixedConfig,
    trace: bool,
) -> Result<RunResult, PipeError> {
    for f in frames {
        if f.len() != arch.n || f.order != Order::Natural {
            return Err(PipeError::Plan(PlanError::LengthMismatch {
                expected: arch.n,
                got: f.len(),
            }));
        }
    }
    let mut pipe = MscPipeline::new(arch, config)?;
    if trace {
        pipe.enable_trace();
    }
    let zero = CFx::zero(config.format);
    let mut outputs: Vec<FixedFrame> = frames
        .iter()
        .map(|_| Frame {
            samples: vec![zero; arch.n],
            order: Order::BitReversed,
        })
        .collect();
    let mut received = vec![0usize; frames.len()];
    let mut first_in = vec![None; frames.len()];
    let mut first_out: Vec<Option<u64>> = vec![None; frames.len()];
    let mut out_first = None;
    let mut out_last = 0u64;
    let mut out_count = 0u64;
    let feed_cycles = (frames.len() * SLOTS) as u64;
    let horizon = feed_cycles + arch.latency() + 4 * SLOTS as u64;
    let out_layout = arch.output_layout().clone();

    while pipe.cycle() < horizon {
        let c = pipe.cycle();
        let mut inputs = [None; PATHS];
        if c < feed_cycles {
            let f = (c / SLOTS as u64) as usize;
            let slot = (c % SLOTS as u64) as usize;
            first_in[f].get_or_insert(c);
            for (p, input) in inputs.iter_mut().enumerate() {
                *input = Some(StreamEvent {
                    path: p + 1,
                    cycle: c,
                    sample: frames[f].samples[arch.input_layout.position(p, slot)],
                    frame_id: f as u64,
                    slot,
                });
            }
        }
        let outs = pipe.step(&inputs)?;
        for e in outs.into_iter().flatten() {
            let f = e.frame_id as usize;
            let pos = out_layout.position(e.path - 1, e.slot);
            outputs[f].samples[pos] = e.sample;
            received[f] += 1;
            if e.slot == 0 {
                first_out[f].get_or_insert(e.cycle);
            }
            out_first.get_or_insert(e.cycle);
            out_last = e.cycle;
            out_count += 1;
        }
        if c >= feed_cycles && received.iter().all(|&r| r == arch.n) && pipe.is_idle() {
            break;
        }
    }
    if let Some(f) = received.iter().position(|&r| r != arch.n) {
        return Err(PipeError::Protocol {
            cycle: pipe.cycle(),
            reason: format!("frame {f} produced {} of {} samples", received[f], arch.n),
        });
    }
    let frame_latencies: Vec<u64> = first_in
        .iter()
        .zip(&first_out)
        .map(|(i, o)| o.expect("frame emitted") - i.expect("frame fed"))
        .collect();
    let stages = pipe
        .stages
        .iter()
        .zip(&arch.stages)
        .map(|(st, cfg)| {
            let busy: u64 = st.adders.iter().map(|c| c.busy).sum();
            let window: u64 = st.adders.iter().map(|c| c.window()).sum();
            let rot_busy: u64 = st.rotators.iter().map(|c| c.busy).sum();
            StageUtilization {
                stage_index: cfg.stage_index,
                adder_busy_cycles: busy,
                adder_window_cycles: window,
                adder_utilization: if window == 0 { 0.0 } else { busy as f64 / window as f64 },
                rotator_busy_cycles: rot_busy,
                rotator_utilization: if window == 0 {
                    0.0
                } else {
                    rot_busy as f64 / window as f64
                },
            }
        })
        .collect();
    let total_cycles = out_first.map(|_| out_last + 1).unwrap_or(0);
    let report = UtilizationReport {
        stages,
        latency_cycles: frame_latencies.first().copied().unwrap_or(0),
        frame_latencies,
        cycles_per_frame: SLOTS as u64,
        total_cycles,
        throughput_samples_per_cycle: out_first
            .map(|f| out_count as f64 / (out_last - f + 1) as f64)
            .unwrap_or(0.0),
    };
    Ok(RunResult {
        outputs,
        report,
        rotations: pipe.rotations.clone(),
        trace: pipe.trace.clone(),
        overflows: pipe.overflows,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationReport {
    pub checked: u64,
    pub violations: Vec<RotationRecord>,
    /// `(stage, path)` → exponent counts.
    pub histograms: BTreeMap<(u32, usize), BTreeMap<TwiddleExponent, u64>>,
}

impl AllocationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// Histogram keys equal the allocated set on every checked path.
    pub fn matches_allocation(&self, arch: &ArchitecturePlan) -> bool {
        (4..=6).all(|stage| {
            let cfg = &arch.stages[stage as usize - 1];
            (0..arch.paths).all(|p| {
                let keys: BTreeSet<TwiddleExponent> = self
                    .histograms
                    .get(&(stage, p + 1))
                    .map(|h| h.keys().copied().collect())
                    .unwrap_or_default();
                keys == cfg.allocated_exponents[p]
            })
        })
    }
}

/// Verify that every rotation served at stages 4–6 on path `p` is in that
/// path's allocated set.
pub fn check_allocation(arch: &ArchitecturePlan, trace: &[RotationRecord]) -> AllocationReport {
    let mut report = AllocationReport {
        checked: 0,
        violations: Vec::new(),
        histograms: BTreeMap::new(),
    };
    for r in trace.iter().filter(|r| (4..=6).contains(&r.stage)) {
        report.checked += 1;
        *report
            .histograms
            .entry((r.stage, r.path))
            .or_default()
            .entry(r.exponent)
            .or_default() += 1;
        let allowed = &arch.stages[r.stage as usize - 1].allocated_exponents[r.path - 1];
        if !allowed.contains(&r.exponent) {
            report.violations.push(*r);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowgraph::{build_plan, fft_fixed, DecompositionSpec};

    fn arch() -> (ArchitecturePlan, FixedConfig) {
        let cfg = FixedConfig::default();
        let plan = build_plan(&DecompositionSpec::msc128()).unwrap();
        (build_architecture(&plan, &cfg).unwrap(), cfg)
    }

    fn kinds(a: &ArchitecturePlan, stage: usize) -> Vec<&'static str> {
        a.stages[stage - 1].rotators.iter().map(|k| k.name()).collect()
    }

    #[test]
    fn rotator_census() {
        let (a, _) = arch();
        assert_eq!(kinds(&a, 1), ["W4"; 4]);
        assert_eq!(kinds(&a, 2), ["W8"; 4]);
        assert_eq!(kinds(&a, 3), ["TW"; 4]);
        assert_eq!(kinds(&a, 4), ["W4", "W16", "W8", "W16"]);
        assert_eq!(kinds(&a, 5), ["none", "W8", "W4", "W8"]);
        assert_eq!(kinds(&a, 6), ["none", "none", "none", "W4"]);
        assert_eq!(kinds(&a, 7), ["none"; 4]);
    }

    #[test]
    fn schedule_is_bijective() {
        let (a, _) = arch();
        for stage in a.permutation_schedule() {
            let mut seen: Vec<usize> = stage.into_iter().flatten().collect();
            seen.sort();
            assert_eq!(seen, (0..N).collect::<Vec<_>>());
        }
    }

    #[test]
    fn other_plans_rejected() {
        let cfg = FixedConfig::default();
        let plan = build_plan(&DecompositionSpec::new(128, vec![4, 3]).unwrap()).unwrap();
        assert!(matches!(
            build_architecture(&plan, &cfg),
            Err(PipeError::UnsupportedPlan { .. })
        ));
    }

    #[test]
    fn single_frame_matches_golden() {
        let (a, cfg) = arch();
        let f = cfg.format;
        let x = Frame::natural(
            (0..128)
                .map(|i| CFx::from_raw((i * 37 % 200) - 100, 50 - i, f))
                .collect(),
        );
        let run = run_frames(std::slice::from_ref(&x), &a, &cfg).unwrap();
        let golden = fft_fixed(&x, &a.plan, &cfg).unwrap();
        assert_eq!(run.outputs[0], golden.frame);
        assert_eq!(run.report.latency_cycles, a.latency());
    }

    #[test]
    fn idle_pipeline_stays_idle() {
        let (a, cfg) = arch();
        let mut p = MscPipeline::new(&a, &cfg).unwrap();
        for _ in 0..200 {
            assert_eq!(p.step(&[None; PATHS]).unwrap(), [None; PATHS]);
        }
        assert!(p.is_idle());
    }

    #[test]
    fn protocol_errors() {
        let (a, cfg) = arch();
        let mut p = MscPipeline::new(&a, &cfg).unwrap();
        let ev = |path, cycle, frame_id, slot| {
            Some(StreamEvent {
                path,
                cycle,
                sample: CFx::zero(cfg.format),
                frame_id,
                slot,
            })
        };
        // one path missing
        assert!(p.step(&[ev(1, 0, 0, 0), None, ev(3, 0, 0, 0), ev(4, 0, 0, 0)]).is_err());
        let mut p = MscPipeline::new(&a, &cfg).unwrap();
        p.step(&[ev(1, 0, 0, 0), ev(2, 0, 0, 0), ev(3, 0, 0, 0), ev(4, 0, 0, 0)])
            .unwrap();
        // gap inside a frame
        assert!(p.step(&[None; PATHS]).is_err());
        let mut p = MscPipeline::new(&a, &cfg).unwrap();
        // wrong cycle stamp
        assert!(p
            .step(&[ev(1, 5, 0, 0), ev(2, 5, 0, 0), ev(3, 5, 0, 0), ev(4, 5, 0, 0)])
            .is_err());
    }
}
