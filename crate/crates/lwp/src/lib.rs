//! Files, configuration and the experiment runner around `lwp-core`.
//!
//! Output layout of a run:
//!
//! ```text
//! <out>/<mode>/seed<k>/metrics.json
//! <out>/<mode>/seed<k>/checkpoint_task<t>.json
//! <out>/<mode>/seed<k>/timing.json
//! <out>/aggregate.csv
//! <out>/plots/*.svg
//! ```

pub mod checkpoint;
pub mod config;
pub mod csv_stream;
pub mod embeddings;
pub mod error;
pub mod plot;
pub mod results;
pub mod runner;

pub use crate::error::{Error, Result};
