//! Second-order gradient boosting under binary log-loss.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::binning::BinnedFeatures;
use super::tree::{fit_tree, predict_binned, FeatureSampling, MissingStrategy, TreeNode, TreeParams};
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::panel::SupervisedTable;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Penalty per leaf; a split must gain more than this.
    pub gamma: f64,
    pub min_child_hessian: f64,
    /// Target number of percentile split candidates per feature.
    pub n_bins: usize,
    /// Row fraction drawn (without replacement) per round.
    pub subsample: f64,
    /// Feature fraction drawn per tree.
    pub colsample: f64,
    pub missing_strategy: MissingStrategy,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 4,
            lambda: 1.0,
            gamma: 0.0,
            min_child_hessian: 1.0,
            n_bins: 64,
            subsample: 1.0,
            colsample: 1.0,
            missing_strategy: MissingStrategy::DefaultDirections,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(self.lambda >= 0.0 && self.gamma >= 0.0 && self.min_child_hessian >= 0.0) {
            return bad("lambda, gamma and min_child_hessian must be nonnegative");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) || !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return bad("subsample and colsample must lie in (0, 1]");
        }
        if self.n_bins < 2 {
            return bad("n_bins must be >= 2");
        }
        Ok(())
    }

    pub(crate) fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            lambda: self.lambda,
            gamma: self.gamma,
            min_child_hessian: self.min_child_hessian,
            strategy: self.missing_strategy,
        }
    }
}

/// Additive tree model: margin = base_margin + learning_rate · Σ tree outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub config: BoostConfig,
    pub base_margin: f64,
    pub feature_names: Vec<String>,
    pub trees: Vec<TreeNode>,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gradient and hessian of the log-loss with respect to the margin.
#[inline]
pub fn logistic_grad_hess(margin: f64, label: bool) -> (f64, f64) {
    let p = sigmoid(margin);
    let y = if label { 1.0 } else { 0.0 };
    (p - y, p * (1.0 - p))
}

/// Per-round diagnostics from a boosting run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostTrace {
    /// Mean training log-loss before round 1 and after every round.
    pub train_loss: Vec<f64>,
    /// Training margins after the final round.
    pub final_margins: Vec<f64>,
}

pub(crate) fn check_labels(labels: &[bool]) -> Result<()> {
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

fn margin_log_loss(margins: &[f64], labels: &[bool]) -> f64 {
    let p: Vec<f64> = margins.iter().map(|&m| sigmoid(m)).collect();
    crate::metrics::log_loss(&p, labels)
}

pub fn fit_boosted(table: &SupervisedTable, config: &BoostConfig, seed: u64) -> Result<BoostedEnsemble> {
    fit_boosted_traced(table, config, seed).map(|(m, _)| m)
}

pub fn fit_boosted_traced(
    table: &SupervisedTable,
    config: &BoostConfig,
    seed: u64,
) -> Result<(BoostedEnsemble, BoostTrace)> {
    config.validate()?;
    check_labels(&table.labels)?;
    if config.missing_strategy == MissingStrategy::RequireComplete && table.has_missing() {
        return Err(Error::MissingNotAllowed);
    }
    let n = table.len();
    let p = table.n_features();
    let data = BinnedFeatures::new(&table.features, p, config.n_bins);
    let prevalence = table.prevalence();
    let base_margin = (prevalence / (1.0 - prevalence)).ln();
    let params = config.tree_params();

    let mut margins = vec![base_margin; n];
    let mut grads = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.n_rounds);
    let mut train_loss = vec![margin_log_loss(&margins, &table.labels)];
    let n_rows_round = ((config.subsample * n as f64).round() as usize).clamp(1, n);
    let n_cols_tree = ((config.colsample * p as f64).round() as usize).clamp(1, p.max(1));

    for round in 0..config.n_rounds {
        for i in 0..n {
            let (g, h) = logistic_grad_hess(margins[i], table.labels[i]);
            grads[i] = g;
            hess[i] = h;
        }
        let rows: Vec<usize> = if n_rows_round == n {
            (0..n).collect()
        } else {
            let mut r = rng::stream(seed, "boost_rows", round as u64);
            let mut v = sample(&mut r, n, n_rows_round).into_vec();
            v.sort_unstable();
            v
        };
        let features: Vec<usize> = if n_cols_tree >= p {
            (0..p).collect()
        } else {
            let mut r = rng::stream(seed, "boost_cols", round as u64);
            let mut v = sample(&mut r, p, n_cols_tree).into_vec();
            v.sort_unstable();
            v
        };
        let tree = fit_tree(&data, &rows, &grads, &hess, &params, &mut FeatureSampling::All(features))?;
        for (i, m) in margins.iter_mut().enumerate() {
            *m += config.learning_rate * predict_binned(&tree, &data, i);
        }
        train_loss.push(margin_log_loss(&margins, &table.labels));
        trees.push(tree);
    }
    let model = BoostedEnsemble {
        config: config.clone(),
        base_margin,
        feature_names: table.feature_names.clone(),
        trees,
    };
    Ok((
        model,
        BoostTrace {
            train_loss,
            final_margins: margins,
        },
    ))
}

impl BoostedEnsemble {
    pub fn margin(&self, row: &[Option<f64>]) -> Result<f64> {
        if row.len() != self.feature_names.len() {
            return Err(Error::ArityMismatch {
                expected: self.feature_names.len(),
                found: row.len(),
            });
        }
        if self.config.missing_strategy == MissingStrategy::RequireComplete && row.iter().any(Option::is_none) {
            return Err(Error::MissingNotAllowed);
        }
        let mut m = self.base_margin;
        for t in &self.trees {
            m += self.config.learning_rate * t.predict(row);
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

impl Classifier for BoostedEnsemble {
    fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn predict_proba(&self, row: &[Option<f64>]) -> Result<f64> {
        self.margin(row).map(sigmoid)
    }
}
