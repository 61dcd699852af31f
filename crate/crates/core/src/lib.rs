//! Correlation-optimized wind speed forecasting.
//!
//! The crate is organised bottom-up:
//!
//! * [`series`] loads, validates, summarises, splits and synthesises
//!   multi-site 10-minute wind records.
//! * [`correlation`] holds the covariance / Pearson primitives and the
//!   moving-window scan for historically correlated sequences.
//! * [`fracprog`] completes an unknown tail by maximizing the absolute
//!   Pearson correlation against a fully known reference sequence, either in
//!   closed form (one unknown) or by bisection over second-order-cone
//!   feasibility problems (several unknowns).
//! * [`knowledge`] builds the layered, pruned knowledge tree of correlated
//!   historical sequences and attaches a completion to each node.
//! * [`neural`] implements RNN/LSTM/GRU cells, the dual-encoder Seq2Seq model,
//!   its losses, backpropagation through time and the optimizers.
//! * [`harness`] contains the metrics, the multi-trial experiment protocol and
//!   report emission.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlation;
pub mod error;
pub mod fracprog;
pub mod harness;
pub mod knowledge;
pub mod neural;
pub mod series;

pub use error::{Error, Result};
