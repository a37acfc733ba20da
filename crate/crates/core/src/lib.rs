//! Data pipeline and analysis toolkit for "Us vs. Them" rhetoric.
//!
//! The crate covers everything up to (but not including) model training:
//!
//! * [`archive_client`] pages through a Pushshift-compatible comment archive.
//! * [`corpus`] applies the keyword, length and multi-group filters and draws
//!   the stratified group × news-bias sample.
//! * [`crowdtruth`] computes disagreement-aware worker / unit / annotation
//!   quality scores and applies the worker and unit removal rules.
//! * [`aggregate`] turns filtered annotations into labelled comments with a
//!   continuous attitude score, a binary label, an emotion set and splits.
//! * [`stats`] holds the statistical procedures used in the analysis.
//! * [`embedviz`] runs exact t-SNE and writes scatter-plot data.

pub mod aggregate;
pub mod archive_client;
pub mod corpus;
pub mod crowdtruth;
pub mod embedviz;
pub mod error;
pub mod io;
pub mod stats;
pub mod types;

pub use error::{Error, Result};
pub use types::{AttitudeLabel, BiasLabel, Emotion, Group};
