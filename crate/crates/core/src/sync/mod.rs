//! Synchronization of skin, skeleton and cage across rest and current pose.
//!
//! Edits enter at one of three places (joint rotations, rest cage, current
//! cage) and are propagated around the cycle
//! `C_rest → S_rest → S_curr → C_curr`, with current-cage edits first
//! converted into rest-cage edits by inverting that cycle.

pub mod b_topo;
mod session;

pub use b_topo::{assemble_a_r, build_b_topo, BTopo};
pub use session::{Audit, EditDelta, SessionConfig, SetupTimings, Snapshot, SyncSession, UpdateTimings};
