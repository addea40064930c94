//! Markov-blanket information bottlenecks for imputing a target variable that
//! is missing in a shifted deployment domain.
//!
//! The crate is `no_std` and needs only `alloc`. It holds the graph and SEM
//! machinery, the numerical kernel, the closed-form Gaussian bottleneck, the
//! variational bottleneck, evaluation baselines and the numerical checks of
//! the underlying identities and rates. File formats and the command-line
//! harness live in the `mbib` crate.

#![no_std]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod gib;
pub mod graph;
pub mod linalg;
pub mod numstats;
pub mod predictor;
pub mod rng;
pub mod sem;
pub mod theorycheck;
pub mod vib;

pub use error::{Error, Result};
pub use graph::Dag;
pub use linalg::Matrix;
pub use predictor::{AffinePredictor, Imputer};
pub use sem::{Dataset, SemSpec, ShiftSpec};
