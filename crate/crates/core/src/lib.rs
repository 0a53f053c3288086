//! Corporate failure prediction on firm-year panels with missing accounts.
//!
//! The crate covers synthetic panel generation, tree ensembles that learn
//! from missingness directly, econometric baselines, classic credit scores,
//! evaluation metrics, zombie-firm classification from predicted risk, and
//! Shapley attributions.

pub mod baselines;
pub mod error;
pub mod horse_race;
pub mod metrics;
pub mod model;
pub mod panel;
pub mod rng;
pub mod scores;
pub mod shapley;
pub mod synth;
pub mod tree_boost;
pub mod zombie;

pub use error::{Error, Result};
pub use model::Classifier;
pub use panel::{FirmPanel, FirmYearRecord, FoldPlan, SupervisedTable};
pub use tree_boost::{BoostConfig, BoostedEnsemble, MissingStrategy};
pub use zombie::{RiskPanel, RiskRow};
