//! Classification metrics and missingness diagnostics.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::baselines::fit_logit;
use crate::error::{Error, Result};
use crate::panel::{FirmPanel, SupervisedTable};

/// Pearson chi-squared critical value at 1% with one degree of freedom.
pub const CHI2_CRITICAL_1PCT: f64 = 6.635;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    /// Predict positive when `score >= threshold`.
    pub fn at_threshold(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= threshold, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// F1 and balanced accuracy; undefined ratios contribute 0 and are flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub f1: f64,
    pub bacc: f64,
    pub f1_defined: bool,
    pub tpr_defined: bool,
    pub tnr_defined: bool,
}

pub fn f1_bacc(c: &Confusion) -> ClassScores {
    let f1_den = 2 * c.tp + c.fp + c.fn_;
    let pos = c.tp + c.fn_;
    let neg = c.tn + c.fp;
    let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    ClassScores {
        f1: ratio(2 * c.tp, f1_den),
        bacc: 0.5 * (ratio(c.tp, pos) + ratio(c.tn, neg)),
        f1_defined: f1_den > 0,
        tpr_defined: pos > 0,
        tnr_defined: neg > 0,
    }
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&y| y).count();
    (pos, labels.len() - pos)
}

fn check_len(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Exact Mann-Whitney AUC: P(pos > neg) + P(tie) / 2, via midranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_len(scores, labels)?;
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::OneClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (doubled) midranks of the positives keeps the arithmetic integral.
    let mut pos_rank2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].total_cmp(&scores[order[i]]) == Ordering::Equal {
            j += 1;
        }
        let rank2 = (i + 1 + j + 1) as u128;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        pos_rank2 += rank2 * tied_pos;
        i = j + 1;
    }
    let n_pos = n_pos as u128;
    let u2 = pos_rank2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Average precision: Σ (R_i − R_{i−1}) · P_i over distinct score thresholds.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_len(scores, labels)?;
    let (n_pos, _) = class_counts(labels);
    if n_pos == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]) == Ordering::Equal {
            if labels[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

/// Efron's pseudo-R²: 1 − Σ(y − p)² / Σ(y − ȳ)².
pub fn pseudo_r2(probabilities: &[f64], labels: &[bool]) -> Result<f64> {
    check_len(probabilities, labels)?;
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::OneClass);
    }
    let ybar = n_pos as f64 / labels.len() as f64;
    let (mut sse, mut sst) = (0.0, 0.0);
    for (&p, &y) in probabilities.iter().zip(labels) {
        let y = f64::from(u8::from(y));
        sse += (y - p) * (y - p);
        sst += (y - ybar) * (y - ybar);
    }
    Ok(1.0 - sse / sst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquared {
    pub statistic: f64,
    /// Statistic exceeds the 1% critical value (df = 1).
    pub reject_1pct: bool,
}

/// Pearson chi-squared for a 2x2 table `[[a, b], [c, d]]`, no continuity correction.
pub fn chi_squared_2x2(table: [[f64; 2]; 2]) -> Result<ChiSquared> {
    if table.iter().flatten().any(|&v| !(v >= 0.0)) {
        return Err(Error::BadDomain("contingency cells must be nonnegative".into()));
    }
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let n = rows[0] + rows[1];
    if rows.iter().chain(&cols).any(|&m| m <= 0.0) {
        return Err(Error::ZeroMargin);
    }
    let mut stat = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = rows[i] * cols[j] / n;
            stat += (o - e) * (o - e) / e;
        }
    }
    Ok(ChiSquared {
        statistic: stat,
        reject_1pct: stat > CHI2_CRITICAL_1PCT,
    })
}

/// Log-loss with probabilities clamped to [1e-12, 1 − 1e-12].
pub fn log_loss(probabilities: &[f64], labels: &[bool]) -> f64 {
    const EPS: f64 = 1e-12;
    let n = labels.len().max(1) as f64;
    probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: f64,
    pub pr_auc: f64,
    pub f1: f64,
    pub bacc: f64,
    pub pseudo_r2: f64,
    pub threshold_used: f64,
    pub confusion: Confusion,
}

impl MetricReport {
    pub fn evaluate(probabilities: &[f64], labels: &[bool], threshold: f64) -> Result<Self> {
        let confusion = Confusion::at_threshold(probabilities, labels, threshold);
        let scores = f1_bacc(&confusion);
        Ok(Self {
            auc: roc_auc(probabilities, labels)?,
            pr_auc: pr_auc(probabilities, labels)?,
            f1: scores.f1,
            bacc: scores.bacc,
            pseudo_r2: pseudo_r2(probabilities, labels)?,
            threshold_used: threshold,
            confusion,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub feature: String,
    pub odds_ratio: f64,
    pub coefficient: f64,
    /// Share of rows whose indicator is set.
    pub flagged_share: f64,
    pub chi_squared: ChiSquared,
}

/// Odds ratios of failure on "feature missing at least once in the last
/// `window` years", one logit per predictor (no fixed effects).
pub fn missingness_odds_ratios(panel: &FirmPanel, window: usize) -> Result<Vec<OddsRatio>> {
    if window == 0 {
        return Err(Error::BadConfig("window must be >= 1".into()));
    }
    let index: HashMap<(&str, i32), usize> = panel
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.firm_id.as_str(), r.year), i))
        .collect();
    let p = panel.n_features();
    let mut indicators: Vec<Vec<bool>> = vec![Vec::new(); p];
    let mut labels = Vec::new();
    for r in panel.records() {
        if !index.contains_key(&(r.firm_id.as_str(), r.year - 1)) {
            continue;
        }
        let history: Vec<usize> = (1..=window as i32)
            .filter_map(|lag| index.get(&(r.firm_id.as_str(), r.year - lag)).copied())
            .collect();
        for (j, ind) in indicators.iter_mut().enumerate() {
            ind.push(history.iter().any(|&h| panel.records()[h].features[j].is_none()));
        }
        labels.push(r.failed);
    }
    if labels.is_empty() {
        return Err(Error::TooFewRecords("no firm observed in two consecutive years".into()));
    }
    let mut out = Vec::with_capacity(p);
    for (j, ind) in indicators.into_iter().enumerate() {
        let name = panel.feature_names()[j].clone();
        let flagged = ind.iter().filter(|&&b| b).count();
        if flagged == 0 || flagged == ind.len() {
            return Err(Error::DegenerateIndicator(name));
        }
        let mut cells = [[0.0; 2]; 2];
        for (&b, &y) in ind.iter().zip(&labels) {
            cells[usize::from(b)][usize::from(y)] += 1.0;
        }
        let table = SupervisedTable::from_rows(
            vec![format!("missing_{name}")],
            ind.iter().map(|&b| vec![Some(f64::from(u8::from(b)))]).collect(),
            labels.clone(),
        )?;
        let model = fit_logit(&table, 0.0)?;
        let coefficient = model.coefficients[0];
        out.push(OddsRatio {
            feature: name,
            odds_ratio: coefficient.exp(),
            coefficient,
            flagged_share: flagged as f64 / ind.len() as f64,
            chi_squared: chi_squared_2x2(cells)?,
        });
    }
    Ok(out)
}
