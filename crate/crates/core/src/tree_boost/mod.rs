//! Tree learners: boosted ensembles and bagged forests sharing one
//! missing-aware split finder.

pub mod binning;
pub mod booster;
pub mod forest;
pub mod tree;

pub use binning::{BinnedFeatures, MISSING_BIN};
pub use booster::{
    fit_boosted, fit_boosted_traced, logistic_grad_hess, sigmoid, BoostConfig, BoostTrace, BoostedEnsemble,
};
pub use forest::{fit_forest, Forest, ForestConfig};
pub use tree::{
    find_best_split, fit_tree, leaf_weight, split_gain, FeatureSampling, MissingPolicy, MissingStrategy,
    SplitCandidate, SplitRule, TreeNode, TreeParams,
};
