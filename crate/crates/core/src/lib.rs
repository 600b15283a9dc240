//! Citation-advantage analysis toolkit.
//!
//! * [`corpus`]: article and citation-edge ingestion plus month-window counts
//! * [`pstat`]: the age-windowed citation probability and its time series
//! * [`concordance`]: preprint to journal-article matching
//! * [`sbtest`]: Monte Carlo self-selection test on top-K citation ranks
//! * [`synthgen`]: synthetic corpora with tunable access and selection effects
//! * [`cli`]: the `citadv` command-line front end

pub mod cli;
pub mod concordance;
pub mod corpus;
pub mod error;
pub mod pstat;
pub mod registry;
pub mod sbtest;
pub mod synthgen;

pub use error::{Error, Result};
