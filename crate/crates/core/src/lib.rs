#![no_std]

extern crate alloc;

pub mod benchmark;
pub mod cohort;
pub mod confidence;
pub mod cost;
pub mod dkd;
pub mod engine;
pub mod error;
pub mod gate_hard;
pub mod gate_soft;
pub mod math;
pub mod metrics;
pub mod policy;
pub mod scores;
pub mod sweep;
pub mod synth;
pub mod table;
pub mod thresholds;
pub mod train;
pub mod zoo;

pub use error::{Error, ErrorClass, Result};
