//! Demographic alignment auditing for annotated NLP datasets and models.
//!
//! Annotations collected from demographically diverse participants are
//! grouped by demographic, averaged per instance, and correlated against
//! dataset labels and model predictions. The crate also contains the study
//! serving policy, its event-sourced persistence, report rendering, and a
//! synthetic population generator used to check the pipeline end to end.

pub mod demographics;
pub mod domain;
pub mod error;
pub mod report;
pub mod sampling;
pub mod scale;
pub mod stats;
pub mod storage;
pub mod study;
pub mod synth;

pub use error::{Error, Result};
