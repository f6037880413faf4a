//! Bayesian decision curve analysis.
//!
//! Estimates posterior net-benefit curves for clinical decision strategies
//! (prediction models and binary tests) on binary or right-censored
//! survival outcomes. Posterior draws are summarized into probabilities
//! of usefulness and superiority together with the expected value of
//! perfect information.
//!
//! ```
//! use dca_core::binary::{self, BinaryDataset, BinaryPriorTable};
//! use dca_core::interrogation::summarize;
//! use dca_core::model::{Strategy, ThresholdGrid};
//!
//! let data = BinaryDataset::new(
//!     vec![true, true, false, false, false],
//!     vec![(Strategy::model("model"), vec![0.9, 0.6, 0.4, 0.2, 0.1])],
//! )?;
//! let grid = ThresholdGrid::range(0.0, 0.5, 0.1)?;
//! let post = binary::fit(&data, &grid, &BinaryPriorTable::uniform(grid.len(), 1))?;
//! let cube = binary::sample_joint(&post, 1000, 42)?;
//! let report = summarize(&cube, 0.95, &[])?;
//! assert_eq!(report.evpi.len(), grid.len());
//! # Ok::<(), dca_core::DcaError>(())
//! ```

pub mod analysis;
pub mod binary;
pub mod comparators;
pub mod error;
pub mod interrogation;
pub mod io;
pub mod model;
pub mod prior;
pub mod sampling;
pub mod simulation;
pub mod stats;
pub mod survival;

pub use error::{DcaError, Result};
