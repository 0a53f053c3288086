//! Proxy credit scores (Altman-style Z-score, Merton distance-to-default)
//! and the percentile-cutoff precision report used to compare them with
//! model predictions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::SupervisedTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScoreSpec {
    pub ratio_names: Vec<String>,
    pub weights: Vec<f64>,
}

impl LinearScoreSpec {
    pub fn new(ratio_names: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if ratio_names.len() != weights.len() {
            return Err(Error::BadConfig(format!(
                "{} ratio names vs {} weights",
                ratio_names.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::BadConfig("score weights must be finite".into()));
        }
        Ok(Self { ratio_names, weights })
    }

    /// Altman (1968): WC/TA, RE/TA, EBIT/TA, MVE/TL, Sales/TA.
    pub fn altman() -> Self {
        Self {
            ratio_names: ["wc_ta", "re_ta", "ebit_ta", "mve_tl", "sales_ta"]
                .map(String::from)
                .to_vec(),
            weights: vec![1.2, 1.4, 3.3, 0.6, 1.0],
        }
    }

    /// Column index of each ratio in `feature_names`.
    pub fn resolve(&self, feature_names: &[String]) -> Result<Vec<usize>> {
        self.ratio_names
            .iter()
            .map(|r| {
                feature_names
                    .iter()
                    .position(|f| f == r)
                    .ok_or_else(|| Error::BadConfig(format!("score ratio {r} not among features")))
            })
            .collect()
    }
}

/// Weighted sum of ratios; lower means more distressed.
pub fn z_score(ratios: &[Option<f64>], spec: &LinearScoreSpec) -> Result<f64> {
    if ratios.len() != spec.weights.len() {
        return Err(Error::ArityMismatch {
            expected: spec.weights.len(),
            found: ratios.len(),
        });
    }
    let mut z = 0.0;
    for (r, w) in ratios.iter().zip(&spec.weights) {
        z += w * r.ok_or(Error::MissingInput)?;
    }
    Ok(z)
}

/// Merton distance-to-default `[ln(V/D) + (mu − σ²/2)T] / (σ√T)`; higher is safer.
pub fn distance_to_default(asset_value: f64, debt: f64, mu: f64, sigma: f64, horizon: f64) -> Result<f64> {
    if !(asset_value > 0.0 && debt > 0.0 && sigma > 0.0 && horizon > 0.0) || !mu.is_finite() {
        return Err(Error::BadDomain(
            "distance to default needs V, D, sigma, T > 0 and finite drift".into(),
        ));
    }
    Ok(((asset_value / debt).ln() + (mu - 0.5 * sigma * sigma) * horizon) / (sigma * horizon.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiskDirection {
    LowIsRisky,
    HighIsRisky,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileRow {
    pub percentile: u32,
    pub cutoff: f64,
    pub n_predicted: usize,
    /// None when nothing is predicted to fail.
    pub precision: Option<f64>,
    pub fdr: Option<f64>,
}

/// Nearest-rank percentile: the ⌈p·n/100⌉-th smallest value (1-based).
pub fn nearest_rank(sorted: &[f64], p: u32) -> f64 {
    let n = sorted.len();
    let k = (p as usize * n).div_ceil(100).clamp(1, n);
    sorted[k - 1]
}

/// Precision and FDR when the riskiest p% of in-sample scores define the
/// cutoff, for p in `percentiles`.
///
/// LowIsRisky flags scores at or below the p-th percentile; HighIsRisky
/// flags scores at or above the p-th percentile counted from the top, so
/// the two directions mirror each other exactly under negation.
pub fn percentile_cutoff_report(
    scores: &[f64],
    labels: &[bool],
    direction: RiskDirection,
    percentiles: &[u32],
    in_sample_scores: &[f64],
) -> Result<Vec<PercentileRow>> {
    if in_sample_scores.is_empty() {
        return Err(Error::BadConfig("in-sample scores are empty".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if let Some(p) = percentiles.iter().find(|p| !(1..=100).contains(*p)) {
        return Err(Error::BadConfig(format!("percentile {p} outside 1..=100")));
    }
    let mut sorted: Vec<f64> = match direction {
        RiskDirection::LowIsRisky => in_sample_scores.to_vec(),
        RiskDirection::HighIsRisky => in_sample_scores.iter().map(|s| -s).collect(),
    };
    sorted.sort_by(f64::total_cmp);
    Ok(percentiles
        .iter()
        .map(|&p| {
            let c = nearest_rank(&sorted, p);
            let (cutoff, flagged): (f64, Box<dyn Fn(f64) -> bool>) = match direction {
                RiskDirection::LowIsRisky => (c, Box::new(move |s| s <= c)),
                RiskDirection::HighIsRisky => (-c, Box::new(move |s| -s <= c)),
            };
            let (mut tp, mut fp) = (0usize, 0usize);
            for (&s, &y) in scores.iter().zip(labels) {
                if flagged(s) {
                    if y {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            let n_predicted = tp + fp;
            let precision = (n_predicted > 0).then(|| tp as f64 / n_predicted as f64);
            PercentileRow {
                percentile: p,
                cutoff,
                n_predicted,
                precision,
                fdr: precision.map(|x| 1.0 - x),
            }
        })
        .collect())
}

/// Scores for every row whose ratios are all observed; rows with a missing
/// ratio are skipped and their indices returned separately.
pub fn z_scores_for_table(table: &SupervisedTable, spec: &LinearScoreSpec) -> Result<(Vec<usize>, Vec<f64>)> {
    let cols = spec.resolve(&table.feature_names)?;
    let mut rows = Vec::new();
    let mut out = Vec::new();
    for (i, r) in table.features.iter().enumerate() {
        let ratios: Vec<Option<f64>> = cols.iter().map(|&c| r[c]).collect();
        if let Ok(z) = z_score(&ratios, spec) {
            rows.push(i);
            out.push(z);
        }
    }
    Ok((rows, out))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// CSV with columns model, percentile, cutoff, n_predicted, precision, fdr.
pub fn write_percentile_csv<W: Write>(reports: &[(String, Vec<PercentileRow>)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "percentile", "cutoff", "n_predicted", "precision", "fdr"])?;
    for (model, rows) in reports {
        for r in rows {
            w.write_record([
                model.clone(),
                r.percentile.to_string(),
                r.cutoff.to_string(),
                r.n_predicted.to_string(),
                fmt_opt(r.precision),
                fmt_opt(r.fdr),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
