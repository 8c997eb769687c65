//! Bit-accurate and cycle-accurate model of a 128-point, 4-parallel
//! multi-path serial-commutator (MSC) FFT built from radix-2^3 and radix-2^4
//! stages, with its hardware cost census and quantization-noise harness.
//!
//! Layering, bottom up:
//!
//! * [`fxnum`]: fixed-point scalars and complex samples,
//! * [`rotor`]: angle-set bookkeeping and the rotator datapaths,
//! * [`flowgraph`]: stage plans, reference transforms, the fixed-point golden model,
//! * [`mscpipe`]: the clocked 4-path pipeline,
//! * [`metrics`]: SQNR, cost census and normalization utilities,
//! * [`frame_io`]: the text frame format.

pub mod flowgraph;
pub mod frame_io;
pub mod fxnum;
pub mod metrics;
pub mod mscpipe;
pub mod rotor;

pub use flowgraph::{build_plan, DecompositionSpec, FftPlan, FixedConfig, Frame, Order, ScalingPolicy};
pub use fxnum::{CFx, FixedFormat, Fx, Overflow, Rounding};
pub use rotor::{RotatorKind, TwiddleExponent};
