//! Symbolic regression and classification over expression trees that may
//! contain split-wise (decision) operators.
//!
//! The engine evolves a population of trees under two objectives (training
//! loss and linear complexity). Continuous parameters are fitted with
//! Levenberg-Marquardt and split thresholds with a one-dimensional
//! variance-minimizing scan.
//!
//! Module map:
//!
//! - [`expr`]: tree representation, evaluation, random generation, documents
//! - [`optimize`]: parameter fitting and split-threshold selection
//! - [`search`]: the generational loop (lexicase selection, NSGA-II survival)
//! - [`simplify`]: post-hoc inexact simplification
//! - [`data`]: datasets, splitting, noise and metrics
//! - [`clinical`]: clinical score definitions and synthetic vitals
//! - [`bench`]: experiment harness and reports

pub mod bench;
pub mod clinical;
pub mod data;
pub mod error;
pub mod expr;
pub mod optimize;
pub mod search;
pub mod simplify;

pub use data::{Dataset, FeatureMatrix, TaskKind};
pub use error::{Error, Result};
pub use expr::{ComplexityTable, Node, NodeKind, Program, Symbol};
pub use search::{SearchConfig, SearchResult};
