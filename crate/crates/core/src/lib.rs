//! Building blocks for parallel-passage reading-comprehension datasets:
//! passage pairing, annotation storage, and lexical diagnostics of
//! span-extraction QA data and predictions.

pub mod datastore;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod lexmetrics;
pub mod pairing;
pub mod textproc;
pub mod topicmodel;

pub use error::{Error, Result};
