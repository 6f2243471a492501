//! Timing simulator and bound verifier for shared-L2 interference on
//! multicore platforms with a direct-mapped, MSHR-less L2, single-bank
//! memory and a fixed miss latency.
//!
//! For a target task `T` with critical accesses `P_crit` on `N` cores, every
//! admissible adversarial configuration is claimed to impose at most
//! `|P_crit| * (N-1) * L_mem` cycles of stall on `T`, and the phase-locked
//! congruent-different-tag mirror of `T` attains that value. This crate
//! simulates both sides and searches configuration spaces for
//! counterexamples.

pub mod adversary;
pub mod cli;
pub mod engine;
pub mod model;
pub mod verify;

pub use engine::{classify_conflict, isolation_run, simulate, ConflictClass, SimResult};
pub use model::{
    AdversarialConfig, Adversary, ArbitrationPolicy, CacheGeometry, HardwareConfig, SyncMode,
    TaskTrace,
};
pub use verify::miub_bound;
