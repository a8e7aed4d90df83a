//! Interpretable spoken-proficiency scoring.
//!
//! Aligned responses go in, five families of hand-crafted features come out,
//! tree ensembles are fitted on them, and every prediction can be traced back
//! to feature contributions.

pub mod corpus;
pub mod error;
pub mod explain;
pub mod features;
pub mod harness;
pub mod learner;
pub mod matrix;
pub mod metrics;
pub mod seeding;

pub use error::{Error, Result};
