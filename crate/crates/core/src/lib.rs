//! Dependency-aware self-training for entity alignment between two knowledge
//! graphs.
//!
//! A base alignment model produces similarity matrices. [`normalizer`] turns
//! them into calibrated probabilities, [`compat`] folds in the alignment
//! decisions of neighbouring entities, [`pseudo`] picks new training pairs and
//! [`selftrain`] drives the loop. [`run`] and [`cli`] add files on disk.

pub mod cli;
pub mod compat;
pub mod config;
pub mod error;
pub mod kg;
pub mod metrics;
pub mod model;
pub mod normalizer;
pub mod pseudo;
pub mod run;
pub mod selftrain;
pub mod synth;

pub use error::{Error, Result};
