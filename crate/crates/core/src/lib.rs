//! Simulation and resource scheduling for IRS- and UAV-assisted mobile edge
//! computing.
//!
//! The crate is organised bottom-up:
//!
//! - [`env`]: geometry, tasks, the energy model, the objective and constraint
//!   checking/repair.
//! - [`channel`]: cascaded UE→IRS→UAV channels and quantized passive
//!   beamforming.
//! - [`placement`]: path-loss fuzzy c-means UAV placement.
//! - [`nn`]: a small dense-network engine with sliced (growable) layers.
//! - [`agent`]: the two-head scheduling agent, replay pool and progressive
//!   structure adjustment.
//! - [`search`]: light taboo search, classical TS/SA/ASA and an exhaustive
//!   oracle.
//! - [`runtime`]: the online scheduling loop, baselines and metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod channel;
pub mod env;
mod error;
pub mod nn;
pub mod placement;
pub mod runtime;
pub mod search;

pub use error::{Error, Result};
