//! Independent reference implementations shared by the integration tests.
//! Everything here is deliberately naive: quadratic loops, no sorting
//! tricks, nothing borrowed from the library under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use distress_core::baselines::LassoPath;
use distress_core::tree_boost::{find_best_split, BinnedFeatures, MissingPolicy, MissingStrategy, TreeParams};
use distress_core::zombie::{RiskPanel, RiskRow};
use distress_core::SupervisedTable;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random binary instance with both labels; scores drawn from a coarse
/// grid half the time so ties are common.
pub fn scored_instance(r: &mut ChaCha8Rng, max_n: usize) -> (Vec<f64>, Vec<bool>) {
    let n = r.random_range(2..=max_n);
    let coarse = r.random_bool(0.5);
    let mut scores: Vec<f64> = (0..n)
        .map(|_| if coarse { f64::from(r.random_range(0..5u8)) / 4.0 } else { r.random() })
        .collect();
    let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    // keep the forced labels from always sitting at the front
    for i in (1..n).rev() {
        let j = r.random_range(0..=i);
        labels.swap(i, j);
        scores.swap(i, j);
    }
    (scores, labels)
}

/// P(s⁺ > s⁻) + ½P(s⁺ = s⁻) by enumerating every pair.
pub fn auc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

/// Σ (R_k − R_{k−1})·P_k over distinct thresholds, descending; each
/// threshold's counts found by a full pass.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> f64 {
    let pos = labels.iter().filter(|&&y| y).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let mut tp = 0.0;
        let mut fp = 0.0;
        for (s, y) in scores.iter().zip(labels) {
            if *s >= t {
                if *y {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / pos;
        ap += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
    }
    ap
}

pub fn counts(scores: &[f64], labels: &[bool], threshold: f64) -> (f64, f64, f64, f64) {
    let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
    for (s, y) in scores.iter().zip(labels) {
        match (*s >= threshold, *y) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, false) => tn += 1.0,
            (false, true) => fn_ += 1.0,
        }
    }
    (tp, fp, tn, fn_)
}

pub fn f1_oracle(tp: f64, fp: f64, fn_: f64) -> f64 {
    if tp + fp + fn_ == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

pub fn bacc_oracle(tp: f64, fp: f64, tn: f64, fn_: f64) -> f64 {
    let tpr = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let tnr = if tn + fp > 0.0 { tn / (tn + fp) } else { 0.0 };
    0.5 * (tpr + tnr)
}

pub fn efron_r2(p: &[f64], y: &[bool]) -> f64 {
    let yv: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mean = yv.iter().sum::<f64>() / yv.len() as f64;
    let mut sse = 0.0;
    let mut sst = 0.0;
    for i in 0..p.len() {
        sse += (yv[i] - p[i]) * (yv[i] - p[i]);
        sst += (yv[i] - mean) * (yv[i] - mean);
    }
    1.0 - sse / sst
}

pub fn pearson_2x2(t: [[f64; 2]; 2]) -> f64 {
    let n: f64 = t.iter().flatten().sum();
    let mut stat = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = (t[i][0] + t[i][1]) * (t[0][j] + t[1][j]) / n;
            stat += (t[i][j] - e).powi(2) / e;
        }
    }
    stat
}

pub fn log_loss(p: &[f64], y: &[bool]) -> f64 {
    p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(1e-12, 1.0 - 1e-12);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / p.len() as f64
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// ---- split search ----------------------------------------------------------

pub struct SplitInstance {
    pub rows: Vec<Vec<Option<f64>>>,
    pub grads: Vec<f64>,
    pub hess: Vec<f64>,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_hessian: f64,
}

/// Exhaustive split over every midpoint between distinct observed values
/// and every policy the strategy allows, in the documented tie order.
/// Returns (feature, threshold, policy, gain).
pub fn best_split_oracle(inst: &SplitInstance, strategy: MissingStrategy) -> Option<(usize, f64, MissingPolicy, f64)> {
    let p = inst.rows[0].len();
    let n = inst.rows.len();
    let score = |g: f64, h: f64| if h + inst.lambda > 0.0 { g * g / (h + inst.lambda) } else { 0.0 };
    let policies: Vec<MissingPolicy> = match strategy {
        MissingStrategy::DefaultDirections => vec![MissingPolicy::DefaultLeft, MissingPolicy::DefaultRight],
        MissingStrategy::MIA => vec![MissingPolicy::MissingIsLeft, MissingPolicy::MissingIsRight],
        MissingStrategy::RequireComplete => vec![MissingPolicy::DefaultLeft],
    };
    let mut best: Option<(usize, f64, MissingPolicy, f64)> = None;
    let consider = |left: &[bool], f: usize, t: f64, pol: MissingPolicy, best: &mut Option<(usize, f64, MissingPolicy, f64)>| {
        let (mut gl, mut hl, mut nl, mut gr, mut hr, mut nr) = (0.0, 0.0, 0, 0.0, 0.0, 0);
        for i in 0..n {
            if left[i] {
                gl += inst.grads[i];
                hl += inst.hess[i];
                nl += 1;
            } else {
                gr += inst.grads[i];
                hr += inst.hess[i];
                nr += 1;
            }
        }
        if nl == 0 || nr == 0 || hl < inst.min_child_hessian || hr < inst.min_child_hessian {
            return;
        }
        let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - inst.gamma;
        let incumbent = best.map_or(0.0, |b| b.3);
        if gain > incumbent {
            *best = Some((f, t, pol, gain));
        }
    };
    for f in 0..p {
        let mut vals: Vec<f64> = inst.rows.iter().filter_map(|r| r[f]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        for w in vals.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            for &pol in &policies {
                let left: Vec<bool> = inst
                    .rows
                    .iter()
                    .map(|r| match r[f] {
                        Some(x) => x < t,
                        None => pol.missing_goes_left(),
                    })
                    .collect();
                consider(&left, f, t, pol, &mut best);
            }
        }
        if strategy == MissingStrategy::MIA {
            let left: Vec<bool> = inst.rows.iter().map(|r| r[f].is_none()).collect();
            consider(&left, f, 0.0, MissingPolicy::MissingOnly, &mut best);
        }
    }
    best
}

pub fn split_params(inst: &SplitInstance, strategy: MissingStrategy, max_depth: usize) -> TreeParams {
    TreeParams {
        max_depth,
        lambda: inst.lambda,
        gamma: inst.gamma,
        min_child_hessian: inst.min_child_hessian,
        strategy,
    }
}

/// Dyadic gradients and hessians keep every partial sum exact, so equal
/// gains really are equal and the tie order is what gets tested.
pub fn random_split_instance(r: &mut ChaCha8Rng, with_missing: bool) -> SplitInstance {
    let n = r.random_range(2..=12);
    let p = r.random_range(1..=3);
    let miss = if with_missing { r.random_range(0.1..0.5) } else { 0.0 };
    let rows = (0..n)
        .map(|_| {
            (0..p)
                .map(|_| (!r.random_bool(miss)).then(|| f64::from(r.random_range(0..6u8))))
                .collect()
        })
        .collect();
    SplitInstance {
        rows,
        grads: (0..n).map(|_| f64::from(r.random_range(-16..=16i8)) / 8.0).collect(),
        hess: (0..n).map(|_| f64::from(r.random_range(1..=8u8)) / 8.0).collect(),
        lambda: [0.0, 1.0][r.random_range(0..2)],
        gamma: [0.0, 0.25][r.random_range(0..2)],
        min_child_hessian: [0.0, 0.5][r.random_range(0..2)],
    }
}

/// Library split search against the exhaustive oracle; Err describes the
/// first disagreement.
pub fn split_matches_oracle(inst: &SplitInstance, strategy: MissingStrategy) -> Result<(), String> {
    let p = inst.rows[0].len();
    let data = BinnedFeatures::new(&inst.rows, p, 64);
    let rows: Vec<usize> = (0..inst.rows.len()).collect();
    let features: Vec<usize> = (0..p).collect();
    let got = find_best_split(&data, &rows, &inst.grads, &inst.hess, &split_params(inst, strategy, 1), &features)
        .map_err(|e| e.to_string())?;
    match (got, best_split_oracle(inst, strategy)) {
        (None, None) => Ok(()),
        (Some(g), Some((f, t, pol, gain))) => {
            let threshold_ok = pol == MissingPolicy::MissingOnly || g.rule.threshold == t;
            if g.rule.feature == f && g.rule.policy == pol && threshold_ok && (g.gain - gain).abs() < 1e-12 {
                Ok(())
            } else {
                Err(format!("library {:?} gain {} vs oracle ({f}, {t}, {pol:?}) gain {gain}", g.rule, g.gain))
            }
        }
        (g, w) => Err(format!("library {g:?} vs oracle {w:?}")),
    }
}

/// Random table with a logistic signal in the feature sum; missing
/// entries push toward failure.
pub fn random_table(r: &mut ChaCha8Rng, n: usize, p: usize, miss: f64) -> SupervisedTable {
    let rows: Vec<Vec<Option<f64>>> = (0..n)
        .map(|_| (0..p).map(|_| (!r.random_bool(miss)).then(|| r.random::<f64>() * 4.0 - 2.0)).collect())
        .collect();
    let mut labels: Vec<bool> = rows
        .iter()
        .map(|x| {
            let s: f64 = x.iter().map(|v| v.unwrap_or(1.5)).sum();
            r.random::<f64>() < sigmoid(s)
        })
        .collect();
    labels[0] = true;
    labels[1] = false;
    let names = (0..p).map(|j| format!("x{j}")).collect();
    SupervisedTable::from_rows(names, rows, labels).unwrap()
}

/// Largest violation of the LASSO stationarity conditions at path point
/// `k`, on the standardized scale: |score_j| ≤ λ where β_j = 0 and
/// score_j = λ·sign(β_j) otherwise. Needs a fully observed table.
pub fn kkt_residual(t: &SupervisedTable, path: &LassoPath, k: usize) -> f64 {
    let x: Vec<Vec<f64>> = t.features.iter().map(|r| r.iter().map(|v| v.unwrap()).collect()).collect();
    let n = x.len() as f64;
    let st = &path.standardizer;
    let m = &path.models[k];
    let lambda = path.lambdas[k];
    let resid: Vec<f64> = x
        .iter()
        .zip(&t.labels)
        .map(|(r, &y)| {
            let eta = m.intercept + r.iter().zip(&m.coefficients).map(|(a, b)| a * b).sum::<f64>();
            f64::from(u8::from(y)) - sigmoid(eta)
        })
        .collect();
    let mut worst: f64 = 0.0;
    for j in 0..x[0].len() {
        let score = x.iter().zip(&resid).map(|(r, e)| (r[j] - st.means[j]) / st.scales[j] * e).sum::<f64>() / n;
        let b = path.standardized[k][j];
        let v = if b == 0.0 { (score.abs() - lambda).max(0.0) } else { (score - lambda * b.signum()).abs() };
        worst = worst.max(v);
    }
    worst
}

/// Gains computed by a different formula path: parent and child structure
/// scores subtracted after summation.
pub fn structure_score(g: f64, h: f64, lambda: f64) -> f64 {
    0.5 * g * g / (h + lambda)
}

// ---- zombie ---------------------------------------------------------------

/// Random risk panel: firms with random start years, random lengths, a
/// random chance of gaps, and an absorbing failure.
pub fn random_risk_panel(r: &mut ChaCha8Rng, n_firms: usize, years: std::ops::Range<i32>) -> RiskPanel {
    let mut rows = Vec::new();
    for f in 0..n_firms {
        let start = r.random_range(years.start..years.end);
        let len = r.random_range(1..=(years.end - start) as usize);
        let level: f64 = r.random();
        for k in 0..len {
            let year = start + k as i32;
            if k > 0 && r.random_bool(0.05) {
                continue;
            }
            let failed = r.random_bool(0.05);
            let p = (level + 0.3 * (r.random::<f64>() - 0.5)).clamp(0.001, 0.999);
            // a few exact ties
            let p = if r.random_bool(0.1) { 0.5 } else { p };
            rows.push(RiskRow {
                firm_id: format!("f{f}"),
                year,
                probability: p,
                failed,
                fold: None,
            });
            if failed {
                break;
            }
        }
    }
    RiskPanel::new("random", rows).unwrap()
}

/// Nearest-rank deciles per year, by sorting each year's values.
pub fn deciles_oracle(risk: &RiskPanel) -> BTreeMap<i32, [f64; 9]> {
    let mut by_year: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for r in risk.rows() {
        by_year.entry(r.year).or_default().push(r.probability);
    }
    by_year
        .into_iter()
        .map(|(y, mut v)| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = v.len();
            let mut q = [0.0; 9];
            for j in 1..=9 {
                let k = (j * n + 9) / 10;
                q[j - 1] = v[k.max(1) - 1];
            }
            (y, q)
        })
        .collect()
}

/// Zombie at t iff the firm has rows at t, t−1, t−2 and is top-decile
/// and alive in all three.
pub fn zombie_window_oracle(risk: &RiskPanel, q9: &BTreeMap<i32, f64>, window: i32) -> Vec<bool> {
    let mut q: HashMap<(String, i32), bool> = HashMap::new();
    for r in risk.rows() {
        q.insert((r.firm_id.clone(), r.year), r.probability >= q9[&r.year] && !r.failed);
    }
    risk.rows()
        .iter()
        .map(|r| (0..window).all(|lag| q.get(&(r.firm_id.clone(), r.year - lag)).copied().unwrap_or(false)))
        .collect()
}
