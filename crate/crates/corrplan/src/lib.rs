//! Fast correlation of signals against template banks.
//!
//! The library turns a quantized template matrix into a shift-add
//! multiplication plan, evaluates that plan exactly in batch or sliding
//! window mode, classifies windows by maximum correlation, and tallies
//! operation counts against reference cost models.

pub mod bench;
pub mod classify;
pub mod error;
pub mod exact;
pub mod exec;
pub mod io;
pub mod plan;
pub mod quantize;
pub mod stream;
pub mod synth;

pub use bench::{bench_sweep, direct_cost, viterbi_alpha, BenchConfig, BenchRow, ViterbiFlag};
pub use classify::{classify, run_detection, ClassificationEvent, EventDetector};
pub use error::{Error, ErrorKind, Result};
pub use exact::Exact;
pub use exec::{direct_multiply, evaluate_plan, verify_equivalence};
pub use plan::{CostPolicy, CostTally, MultiplicationPlan, NodeId, NodeKind, PlanNode, Sign};
pub use quantize::{normalize_rows, quantize, QuantizedMatrix, QuantizedScalar};
pub use stream::{stream_init, StreamState, StreamSummary};
pub use synth::{naive_plan, synthesize_plan, total_distinct_magnitudes};
