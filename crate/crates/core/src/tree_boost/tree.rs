//! Second-order regression trees with native missing-value split policies.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::binning::{BinnedFeatures, MISSING_BIN};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// How the missing-value strategy enumerates split candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MissingStrategy {
    /// Missing rows follow a learned default branch.
    #[default]
    DefaultDirections,
    /// Missing rows join either branch, or the split is on missingness alone.
    MIA,
    /// Training and prediction reject missing values.
    RequireComplete,
}

/// Routing of missing values at a split. Variant order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MissingPolicy {
    DefaultLeft,
    DefaultRight,
    MissingIsLeft,
    MissingIsRight,
    /// Missing rows go left, observed rows right; the threshold is unused.
    MissingOnly,
}

impl MissingPolicy {
    pub fn missing_goes_left(self) -> bool {
        matches!(
            self,
            MissingPolicy::DefaultLeft | MissingPolicy::MissingIsLeft | MissingPolicy::MissingOnly
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub feature: usize,
    pub threshold: f64,
    pub policy: MissingPolicy,
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, value: Option<f64>) -> bool {
        match value {
            None => self.policy.missing_goes_left(),
            Some(_) if self.policy == MissingPolicy::MissingOnly => false,
            Some(x) => x < self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        #[serde(flatten)]
        rule: SplitRule,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        leaf: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, row: &[Option<f64>]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { leaf } => return *leaf,
                TreeNode::Split { rule, left, right } => {
                    node = if rule.goes_left(row[rule.feature]) { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn leaves(&self) -> Vec<f64> {
        match self {
            TreeNode::Leaf { leaf } => vec![*leaf],
            TreeNode::Split { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }

    pub fn uses_missing_policy(&self, policy: MissingPolicy) -> bool {
        match self {
            TreeNode::Leaf { .. } => false,
            TreeNode::Split { rule, left, right } => {
                rule.policy == policy
                    || left.uses_missing_policy(policy)
                    || right.uses_missing_policy(policy)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_hessian: f64,
    pub strategy: MissingStrategy,
}

#[inline]
fn structure_score(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        g * g / d
    } else {
        0.0
    }
}

/// Regularized second-order gain of splitting a node into two children.
/// A zero denominator contributes zero.
pub fn split_gain(
    grad_left: f64,
    hess_left: f64,
    grad_right: f64,
    hess_right: f64,
    lambda: f64,
    gamma: f64,
) -> f64 {
    0.5 * (structure_score(grad_left, hess_left, lambda)
        + structure_score(grad_right, hess_right, lambda)
        - structure_score(grad_left + grad_right, hess_left + hess_right, lambda))
        - gamma
}

/// Optimal leaf weight −G/(H+λ), zero when the denominator vanishes.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        -g / d
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub rule: SplitRule,
    pub gain: f64,
    /// Index of the cut in the feature's cut list (unused for MissingOnly).
    pub cut: usize,
}

#[derive(Clone, Copy, Default)]
struct Stat {
    g: f64,
    h: f64,
    n: u32,
}

impl Stat {
    #[inline]
    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
        self.n += 1;
    }

    #[inline]
    fn plus(self, o: Stat) -> Stat {
        Stat {
            g: self.g + o.g,
            h: self.h + o.h,
            n: self.n + o.n,
        }
    }

    #[inline]
    fn minus(self, o: Stat) -> Stat {
        Stat {
            g: self.g - o.g,
            h: self.h - o.h,
            n: self.n - o.n,
        }
    }
}

/// Gain-maximizing split over `features` for the node holding `rows`.
///
/// Candidates are visited feature by feature (ascending), cut by cut
/// (ascending threshold), and policy by policy in declaration order, with
/// the MissingOnly candidate last for each feature; only a strictly larger
/// gain replaces the incumbent, which realizes the documented tie-break.
/// Returns `None` when no candidate has positive gain.
pub fn find_best_split(
    data: &BinnedFeatures,
    rows: &[usize],
    grads: &[f64],
    hess: &[f64],
    params: &TreeParams,
    features: &[usize],
) -> Result<Option<SplitCandidate>> {
    let mut best: Option<SplitCandidate> = None;
    let mut best_gain = 0.0;
    let mut hist: Vec<Stat> = Vec::new();
    let policies: &[MissingPolicy] = match params.strategy {
        MissingStrategy::DefaultDirections => &[MissingPolicy::DefaultLeft, MissingPolicy::DefaultRight],
        MissingStrategy::MIA => &[MissingPolicy::MissingIsLeft, MissingPolicy::MissingIsRight],
        MissingStrategy::RequireComplete => &[MissingPolicy::DefaultLeft],
    };
    let mch = params.min_child_hessian;
    let valid = |s: &Stat| s.n > 0 && s.h >= mch;

    for &f in features {
        let cuts = data.cuts(f);
        let col = data.column(f);
        hist.clear();
        hist.resize(cuts.len() + 1, Stat::default());
        let mut missing = Stat::default();
        for &r in rows {
            let b = col[r];
            if b == MISSING_BIN {
                missing.add(grads[r], hess[r]);
            } else {
                hist[b as usize].add(grads[r], hess[r]);
            }
        }
        if missing.n > 0 && params.strategy == MissingStrategy::RequireComplete {
            return Err(Error::MissingNotAllowed);
        }
        let observed = hist.iter().fold(Stat::default(), |a, &s| a.plus(s));
        let mut left_obs = Stat::default();
        for (k, &threshold) in cuts.iter().enumerate() {
            left_obs = left_obs.plus(hist[k]);
            let right_obs = observed.minus(left_obs);
            if left_obs.n == 0 || right_obs.n == 0 {
                continue;
            }
            for &policy in policies {
                let (l, r) = if policy.missing_goes_left() {
                    (left_obs.plus(missing), right_obs)
                } else {
                    (left_obs, right_obs.plus(missing))
                };
                if !valid(&l) || !valid(&r) {
                    continue;
                }
                let gain = split_gain(l.g, l.h, r.g, r.h, params.lambda, params.gamma);
                if gain > best_gain {
                    best_gain = gain;
                    best = Some(SplitCandidate {
                        rule: SplitRule {
                            feature: f,
                            threshold,
                            policy,
                        },
                        gain,
                        cut: k,
                    });
                }
            }
        }
        if params.strategy == MissingStrategy::MIA && valid(&missing) && valid(&observed) {
            let gain = split_gain(missing.g, missing.h, observed.g, observed.h, params.lambda, params.gamma);
            if gain > best_gain {
                best_gain = gain;
                best = Some(SplitCandidate {
                    rule: SplitRule {
                        feature: f,
                        threshold: 0.0,
                        policy: MissingPolicy::MissingOnly,
                    },
                    gain,
                    cut: 0,
                });
            }
        }
    }
    Ok(best)
}

/// Which features a node may split on.
pub enum FeatureSampling<'a> {
    All(Vec<usize>),
    /// Fresh random subset of the given size at every node.
    PerNode { n_features: usize, take: usize, rng: &'a mut Rng },
}

impl FeatureSampling<'_> {
    fn draw(&mut self) -> Vec<usize> {
        match self {
            FeatureSampling::All(f) => f.clone(),
            FeatureSampling::PerNode { n_features, take, rng } => {
                let mut f = sample(*rng, *n_features, (*take).clamp(1, *n_features)).into_vec();
                f.sort_unstable();
                f
            }
        }
    }
}

#[inline]
pub(crate) fn route_left(data: &BinnedFeatures, c: &SplitCandidate, row: usize) -> bool {
    let b = data.bin(c.rule.feature, row);
    if b == MISSING_BIN {
        c.rule.policy.missing_goes_left()
    } else if c.rule.policy == MissingPolicy::MissingOnly {
        false
    } else {
        (b as usize) <= c.cut
    }
}

/// Greedy depth-first growth; leaves take the λ-regularized Newton weight.
pub fn fit_tree(
    data: &BinnedFeatures,
    rows: &[usize],
    grads: &[f64],
    hess: &[f64],
    params: &TreeParams,
    sampling: &mut FeatureSampling<'_>,
) -> Result<TreeNode> {
    grow(data, rows.to_vec(), grads, hess, params, sampling, 0)
}

fn grow(
    data: &BinnedFeatures,
    rows: Vec<usize>,
    grads: &[f64],
    hess: &[f64],
    params: &TreeParams,
    sampling: &mut FeatureSampling<'_>,
    depth: usize,
) -> Result<TreeNode> {
    let (g, h) = rows
        .iter()
        .fold((0.0, 0.0), |(g, h), &r| (g + grads[r], h + hess[r]));
    let leaf = TreeNode::Leaf {
        leaf: leaf_weight(g, h, params.lambda),
    };
    if depth >= params.max_depth || rows.len() < 2 || !(h > 0.0) {
        return Ok(leaf);
    }
    let features = sampling.draw();
    let Some(best) = find_best_split(data, &rows, grads, hess, params, &features)? else {
        return Ok(leaf);
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&r| route_left(data, &best, r));
    drop(rows);
    let left = grow(data, left_rows, grads, hess, params, sampling, depth + 1)?;
    let right = grow(data, right_rows, grads, hess, params, sampling, depth + 1)?;
    Ok(TreeNode::Split {
        rule: best.rule,
        left: Box::new(left),
        right: Box::new(right),
    })
}

/// Leaf value reached by a training row, routed through its bins.
pub(crate) fn predict_binned(tree: &TreeNode, data: &BinnedFeatures, row: usize) -> f64 {
    let mut node = tree;
    loop {
        match node {
            TreeNode::Leaf { leaf } => return *leaf,
            TreeNode::Split { rule, left, right } => {
                let b = data.bin(rule.feature, row);
                let go_left = if b == MISSING_BIN {
                    rule.policy.missing_goes_left()
                } else if rule.policy == MissingPolicy::MissingOnly {
                    false
                } else {
                    // Cut k sits between bins k and k+1; thresholds are cut values.
                    let cut = data.cuts(rule.feature).partition_point(|&c| c < rule.threshold);
                    (b as usize) <= cut
                };
                node = if go_left { left } else { right };
            }
        }
    }
}
