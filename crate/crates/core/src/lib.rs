//! Core of a coverage-guided greybox fuzzer for firmware-like targets that
//! consume their input as a byte stream over peripheral register reads.
//!
//! The crate is `no_std` (it needs `alloc`) and contains no IO. It provides:
//!
//! - [`vm`]: a deterministic virtual microcontroller executing scenario
//!   bytecode, one input byte per MMIO register read.
//! - [`coverage`]: the virgin bitmap holding edge bits and string-length
//!   feedback bits.
//! - [`cmplog`]: detection of string-comparison call sites and snapshots of
//!   the compared buffers together with the stream read cursor.
//! - [`solver`]: feedback-guided search and replacement of non-contiguous
//!   string bytes, string contraction, alignment retries, colorization and
//!   the naive combinatorial baseline.
//! - [`engine`]: the fuzzing loop tying the above together.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod cmplog;
pub mod coverage;
pub mod engine;
pub mod hash;
pub mod solver;
pub mod vm;

pub use cmplog::{CmpKey, ComparisonRecord, MAX_STRLEN};
pub use coverage::{CoverageMap, Novelty};
pub use engine::{run_campaign, Campaign, CampaignConfig, CampaignObserver, CampaignStats, QueueEntry};
pub use solver::{solve, solve_with_alignments, SolveResult, SolveStatus};
pub use vm::{execute, ExecutionTrace, ExitReason, FuzzInput, TargetProgram};
