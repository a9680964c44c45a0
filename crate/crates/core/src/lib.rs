//! Detector-aware hard-anomaly synthesis for tabular one-class anomaly
//! detection.

pub mod data;
pub mod detectors;
pub mod enhance;
pub mod harness;
pub mod kv;
pub mod prompt;
pub mod rng;
pub mod stats;
pub mod synthesis;
