//! Common task framework harness for spatio-temporal wavefield forecasting
//! and reconstruction.
//!
//! The crate is organized around the life cycle of a benchmark:
//!
//! * [`matrix`] and [`io`] hold the `(timesteps x sensors)` data carrier and
//!   its binary container format.
//! * [`synth`] generates desk-scale datasets with known ground truth.
//! * [`splits`] and [`bundle`] cut a source trajectory into the train/test
//!   matrices of the twelve tasks.
//! * [`metrics`] scores predictions against hidden truths.
//! * [`baselines`] and [`tuner`] produce reference submissions.
//! * [`referee`] ingests submissions, keeps an append-only ledger and builds
//!   the leaderboard.

pub mod baselines;
pub mod bundle;
pub mod error;
pub mod io;
pub mod json;
pub mod matrix;
pub mod metrics;
pub mod referee;
pub mod splits;
pub mod synth;
pub mod task;
pub mod tuner;

pub use error::{Error, Result};
pub use matrix::{NoiseSpec, NormStats, TimeSeriesMatrix};
pub use task::{ScoreId, TaskSpec};
