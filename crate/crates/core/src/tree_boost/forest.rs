//! Bagged CART forest built on the same tree learner.
//!
//! With gradients −y and unit hessians, λ = 0 and γ = 0, the second-order
//! gain is exactly the reduction in squared error (Gini impurity for 0/1
//! labels) and each leaf weight is the in-bag positive rate.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binning::BinnedFeatures;
use super::booster::check_labels;
use super::tree::{fit_tree, FeatureSampling, MissingStrategy, TreeNode, TreeParams};
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::panel::SupervisedTable;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Minimum rows per leaf (the unit hessian makes this a count).
    pub min_leaf: usize,
    pub n_bins: usize,
    /// Feature fraction drawn at every split.
    pub colsample: f64,
    /// Draw a bootstrap sample per tree; off means every tree sees all rows.
    pub bootstrap: bool,
    pub missing_strategy: MissingStrategy,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 5,
            n_bins: 64,
            colsample: 0.5,
            bootstrap: true,
            missing_strategy: MissingStrategy::DefaultDirections,
        }
    }
}

impl ForestConfig {
    /// Single unrandomized tree.
    pub fn cart(max_depth: usize, min_leaf: usize, missing_strategy: MissingStrategy) -> Self {
        Self {
            n_trees: 1,
            max_depth,
            min_leaf,
            colsample: 1.0,
            bootstrap: false,
            missing_strategy,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub config: ForestConfig,
    pub feature_names: Vec<String>,
    pub trees: Vec<TreeNode>,
}

pub fn fit_forest(table: &SupervisedTable, config: &ForestConfig, seed: u64) -> Result<Forest> {
    if config.n_trees == 0 {
        return Err(Error::BadConfig("n_trees must be >= 1".into()));
    }
    if !(config.colsample > 0.0 && config.colsample <= 1.0) {
        return Err(Error::BadConfig("colsample must lie in (0, 1]".into()));
    }
    check_labels(&table.labels)?;
    if config.missing_strategy == MissingStrategy::RequireComplete && table.has_missing() {
        return Err(Error::MissingNotAllowed);
    }
    let n = table.len();
    let p = table.n_features();
    let data = BinnedFeatures::new(&table.features, p, config.n_bins);
    let grads: Vec<f64> = table.labels.iter().map(|&y| if y { -1.0 } else { 0.0 }).collect();
    let hess = vec![1.0; n];
    let params = TreeParams {
        max_depth: config.max_depth,
        lambda: 0.0,
        gamma: 0.0,
        min_child_hessian: config.min_leaf.max(1) as f64,
        strategy: config.missing_strategy,
    };
    let take = ((config.colsample * p as f64).round() as usize).clamp(1, p.max(1));

    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, "forest_tree", t as u64);
            let rows: Vec<usize> = if config.bootstrap {
                let mut v: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
                v.sort_unstable();
                v
            } else {
                (0..n).collect()
            };
            let mut sampling = if take >= p {
                FeatureSampling::All((0..p).collect())
            } else {
                FeatureSampling::PerNode {
                    n_features: p,
                    take,
                    rng: &mut r,
                }
            };
            fit_tree(&data, &rows, &grads, &hess, &params, &mut sampling)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        config: config.clone(),
        feature_names: table.feature_names.clone(),
        trees,
    })
}

impl Classifier for Forest {
    fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn predict_proba(&self, row: &[Option<f64>]) -> Result<f64> {
        if row.len() != self.feature_names.len() {
            return Err(Error::ArityMismatch {
                expected: self.feature_names.len(),
                found: row.len(),
            });
        }
        if self.config.missing_strategy == MissingStrategy::RequireComplete && row.iter().any(Option::is_none) {
            return Err(Error::MissingNotAllowed);
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        Ok(sum / self.trees.len() as f64)
    }
}
