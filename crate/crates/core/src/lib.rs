//! Trace-driven simulator of a DRAM cache that shares its channels with
//! 3D-XPoint main memory.
//!
//! The pipeline per access is `traces` → [`llc::L3`] → [`policies::Controller`]
//! → [`channel::ChannelModel`], driven by [`harness::Simulation`], which also
//! checks every run against a flat reference memory.

pub mod channel;
pub mod config;
pub mod geometry;
pub mod harness;
pub mod ledger;
pub mod llc;
pub mod metadata;
pub mod policies;
pub mod predictors;
pub mod rng;
pub mod storage;
pub mod traces;
