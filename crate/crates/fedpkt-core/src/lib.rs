//! Simulation toolkit for on-device classification of outgoing mobile HTTP
//! packets.
//!
//! The crate covers the full pipeline:
//!
//! * [`trace`] parses packet traces in a canonical line-delimited JSON format
//!   and computes corpus summaries.
//! * [`features`] extracts privacy-preserving "HTTP key" features (query
//!   keys, cookie keys, custom header names, a file-request flag) and
//!   maintains frozen vocabularies for multi-hot encoding. Two word-based
//!   feature modes are included for comparison.
//! * [`partition`] splits encoded examples across simulated clients and into
//!   train/test sets, with class balancing.
//! * [`svm`] trains linear SVMs with subgradient descent on the hinge loss.
//! * [`fed`] simulates federated averaging across clients, including client
//!   sampling, weighted aggregation, convergence sweeps, and a crowdsourcing
//!   curve.
//! * [`tree`] grows CART-style decision trees and distills trained SVMs into
//!   trees via knowledge transfer.
//! * [`eval`] computes confusion-matrix metrics and renders reports.
//! * [`experiment`] orchestrates end-to-end experiments from a declarative
//!   spec, with derived per-run seeds.
//! * [`synth`] generates synthetic labeled corpora with a planted rule, for
//!   testing and benchmarks.
//!
//! All randomized steps are driven by explicitly seeded generators; repeated
//! runs with the same configuration produce identical results regardless of
//! worker thread count.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod fed;
pub mod partition;
pub mod rng;
pub mod svm;
pub mod synth;
pub mod trace;
pub mod tree;

pub use error::{Error, Result};
