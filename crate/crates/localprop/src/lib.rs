//! Dense-network training with local credit assignment.
//!
//! Six training strategies behind one interface — backprop, error-driven
//! local representation alignment (LRA-E), difference target propagation
//! (DTP) and its adaptive-noise variant (DTP-sigma), and the two feedback
//! alignment schemes (RFA, DFA) — plus the local losses, initializers and
//! optimizers they need, diagnostics (update angles against backprop, total
//! discrepancy, matmul accounting) and an MNIST/Fashion-MNIST experiment
//! harness.
//!
//! Everything is deterministic given the configured seeds: same config, same
//! seeds, bit-identical metrics.

pub mod algos;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod net;
pub mod optim;

pub use error::{Error, Result};
