//! Cross-validated comparison of failure-prediction models.
//!
//! Missing-aware models see every lagged firm-year; complete-case models
//! are cross-validated on the listwise-deleted table with their own folds;
//! imputed models fit the imputation on each training fold.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    default_lambda_grid, fit_logit, fit_logit_lasso, fit_stacker, ImputeStrategy, ImputedModel, Imputer, StackedModel,
};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::model::Classifier;
use crate::panel::{stratified_kfold_labels, SupervisedTable};
use crate::rng;
use crate::tree_boost::{fit_boosted, fit_forest, BoostConfig, ForestConfig, MissingStrategy};
use crate::zombie::{RiskPanel, RiskRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataTreatment {
    MissingAware,
    CompleteCase,
    OutOfRange,
    Median,
}

impl DataTreatment {
    fn imputation(self) -> Option<ImputeStrategy> {
        match self {
            Self::OutOfRange => Some(ImputeStrategy::OutOfRange),
            Self::Median => Some(ImputeStrategy::Median),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Boost {
        #[serde(default)]
        config: BoostConfig,
    },
    Logit {
        #[serde(default)]
        l2: f64,
    },
    Lasso {
        #[serde(default = "default_ebic_gamma")]
        ebic_gamma: f64,
        #[serde(default = "default_n_lambdas")]
        n_lambdas: usize,
    },
    Forest {
        #[serde(default)]
        config: ForestConfig,
    },
    /// Convex combination of the members, weights fitted on inner
    /// cross-fitted predictions.
    SuperLearner {
        members: Vec<ModelKind>,
        #[serde(default = "default_inner_folds")]
        inner_folds: usize,
    },
}

fn default_ebic_gamma() -> f64 {
    0.5
}

fn default_n_lambdas() -> usize {
    50
}

fn default_inner_folds() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub data: DataTreatment,
    pub model: ModelKind,
}

impl ModelSpec {
    pub fn new(name: &str, data: DataTreatment, model: ModelKind) -> Self {
        Self {
            name: name.to_string(),
            data,
            model,
        }
    }
}

pub fn boost_with(strategy: MissingStrategy) -> ModelKind {
    ModelKind::Boost {
        config: BoostConfig {
            missing_strategy: strategy,
            ..BoostConfig::default()
        },
    }
}

pub fn cart() -> ModelKind {
    ModelKind::Forest {
        config: ForestConfig::cart(6, 20, MissingStrategy::DefaultDirections),
    }
}

/// The full comparison: missing-aware boosters against complete-case and
/// imputed baselines.
pub fn default_specs() -> Vec<ModelSpec> {
    use DataTreatment::*;
    let logit = ModelKind::Logit { l2: 1e-4 };
    let lasso = ModelKind::Lasso {
        ebic_gamma: default_ebic_gamma(),
        n_lambdas: default_n_lambdas(),
    };
    let forest = ModelKind::Forest {
        config: ForestConfig::default(),
    };
    vec![
        ModelSpec::new("ma_boost_dd", MissingAware, boost_with(MissingStrategy::DefaultDirections)),
        ModelSpec::new("ma_boost_mia", MissingAware, boost_with(MissingStrategy::MIA)),
        ModelSpec::new("oor_boost", OutOfRange, boost_with(MissingStrategy::DefaultDirections)),
        ModelSpec::new("cc_boost", CompleteCase, boost_with(MissingStrategy::RequireComplete)),
        ModelSpec::new("median_logit", Median, logit.clone()),
        ModelSpec::new("cc_logit", CompleteCase, logit.clone()),
        ModelSpec::new("cc_lasso", CompleteCase, lasso.clone()),
        ModelSpec::new("cc_forest", CompleteCase, forest.clone()),
        ModelSpec::new("cc_cart", CompleteCase, cart()),
        ModelSpec::new(
            "cc_super_learner",
            CompleteCase,
            ModelKind::SuperLearner {
                members: vec![logit, lasso, forest, cart()],
                inner_folds: default_inner_folds(),
            },
        ),
    ]
}

/// Fit one model on `train` (already restricted to the right rows).
pub fn fit_model(kind: &ModelKind, train: &SupervisedTable, seed: u64) -> Result<Box<dyn Classifier>> {
    Ok(match kind {
        ModelKind::Boost { config } => Box::new(fit_boosted(train, config, seed)?),
        ModelKind::Logit { l2 } => Box::new(fit_logit(train, *l2)?),
        ModelKind::Lasso { ebic_gamma, n_lambdas } => {
            let grid = default_lambda_grid(train, *n_lambdas, 1e-3)?;
            let path = fit_logit_lasso(train, &grid, *ebic_gamma)?;
            Box::new(path.selected_model().clone())
        }
        ModelKind::Forest { config } => Box::new(fit_forest(train, config, seed)?),
        ModelKind::SuperLearner { members, inner_folds } => {
            let plan = stratified_kfold_labels(&train.labels, *inner_folds, seed)?;
            let mut base = vec![vec![0.0; train.len()]; members.len()];
            for f in 0..*inner_folds {
                let (tr, te) = plan.split(f);
                let inner_train = train.subset(&tr);
                let inner_test = train.subset(&te);
                for (k, m) in members.iter().enumerate() {
                    let fitted = fit_model(m, &inner_train, rng::derive_seed(seed, "inner", (f * 64 + k) as u64))?;
                    for (&i, p) in te.iter().zip(fitted.predict_many(&inner_test.features)?) {
                        base[k][i] = p.clamp(1e-6, 1.0 - 1e-6);
                    }
                }
            }
            let weights = fit_stacker(&base, &train.labels)?;
            let bases = members
                .iter()
                .enumerate()
                .map(|(k, m)| fit_model(m, train, rng::derive_seed(seed, "member", k as u64)))
                .collect::<Result<Vec<_>>>()?;
            Box::new(StackedModel { bases, weights })
        }
    })
}

/// Fit with the spec's data treatment applied to the training rows.
pub fn fit_spec(spec: &ModelSpec, train: &SupervisedTable, seed: u64) -> Result<Box<dyn Classifier>> {
    match spec.data.imputation() {
        Some(strategy) => {
            let imputer = Imputer::fit(&train.features, &train.feature_names, strategy)?;
            let model = fit_model(&spec.model, &imputer.apply(train), seed)?;
            Ok(Box::new(ImputedModel { imputer, model }))
        }
        None => fit_model(&spec.model, train, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutOfFold {
    /// Row in the full lagged table.
    pub row: usize,
    pub probability: f64,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub name: String,
    pub data: DataTreatment,
    pub n_rows: usize,
    pub folds: Vec<MetricReport>,
    /// Fold-average of each metric.
    pub mean: MeanMetrics,
    pub mean_fit_seconds: f64,
    pub out_of_fold: Vec<OutOfFold>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub auc: f64,
    pub pr_auc: f64,
    pub f1: f64,
    pub bacc: f64,
    pub pseudo_r2: f64,
}

impl MeanMetrics {
    pub fn of(reports: &[MetricReport]) -> Self {
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Self {
            auc: avg(|r| r.auc),
            pr_auc: avg(|r| r.pr_auc),
            f1: avg(|r| r.f1),
            bacc: avg(|r| r.bacc),
            pseudo_r2: avg(|r| r.pseudo_r2),
        }
    }
}

/// Rows of `table` a spec trains and tests on.
pub fn eligible_rows(spec: &ModelSpec, table: &SupervisedTable) -> Vec<usize> {
    match spec.data {
        DataTreatment::CompleteCase => table.complete_rows(),
        _ => (0..table.len()).collect(),
    }
}

struct FoldOutcome {
    report: MetricReport,
    seconds: f64,
    predictions: Vec<(usize, f64)>,
}

/// k-fold cross-validation of every spec. Folds are stratified on the
/// rows each spec is eligible for; work runs in parallel on the current
/// rayon pool and results come back in spec and fold order.
pub fn run_horse_race(
    table: &SupervisedTable,
    specs: &[ModelSpec],
    k: usize,
    seed: u64,
    threshold: f64,
) -> Result<Vec<ModelResult>> {
    let mut names = std::collections::HashSet::new();
    if let Some(dup) = specs.iter().find(|s| !names.insert(s.name.as_str())) {
        return Err(Error::BadConfig(format!("duplicate model name {}", dup.name)));
    }
    let prepared: Vec<(Vec<usize>, SupervisedTable, crate::panel::FoldPlan)> = specs
        .iter()
        .map(|s| {
            let rows = eligible_rows(s, table);
            let data = table.subset(&rows);
            let plan = stratified_kfold_labels(&data.labels, k, seed)?;
            Ok((rows, data, plan))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..specs.len()).flat_map(|s| (0..k).map(move |f| (s, f))).collect();
    let outcomes: Vec<FoldOutcome> = jobs
        .par_iter()
        .map(|&(s, f)| {
            let (rows, data, plan) = &prepared[s];
            let (tr, te) = plan.split(f);
            let train = data.subset(&tr);
            let test = data.subset(&te);
            let start = Instant::now();
            let model = fit_spec(&specs[s], &train, rng::derive_seed(seed, "fold_fit", f as u64))?;
            let seconds = start.elapsed().as_secs_f64();
            let probs = model.predict_many(&test.features)?;
            let report = MetricReport::evaluate(&probs, &test.labels, threshold)?;
            Ok(FoldOutcome {
                report,
                seconds,
                predictions: te.iter().map(|&i| rows[i]).zip(probs).collect(),
            })
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(specs.len());
    for (s, spec) in specs.iter().enumerate() {
        let fold_out = &outcomes[s * k..(s + 1) * k];
        let folds: Vec<MetricReport> = fold_out.iter().map(|o| o.report.clone()).collect();
        let mut oof: Vec<OutOfFold> = fold_out
            .iter()
            .enumerate()
            .flat_map(|(f, o)| {
                o.predictions.iter().map(move |&(row, probability)| OutOfFold {
                    row,
                    probability,
                    fold: f,
                })
            })
            .collect();
        oof.sort_by_key(|o| o.row);
        out.push(ModelResult {
            name: spec.name.clone(),
            data: spec.data,
            n_rows: prepared[s].0.len(),
            mean: MeanMetrics::of(&folds),
            folds,
            mean_fit_seconds: fold_out.iter().map(|o| o.seconds).sum::<f64>() / k as f64,
            out_of_fold: oof,
        });
    }
    Ok(out)
}

/// Out-of-fold predictions keyed by firm-year, ready for the zombie layer.
pub fn risk_panel(table: &SupervisedTable, result: &ModelResult) -> Result<RiskPanel> {
    let rows = result
        .out_of_fold
        .iter()
        .map(|o| RiskRow {
            firm_id: table.firm_ids[o.row].clone(),
            year: table.years[o.row],
            probability: o.probability,
            failed: table.labels[o.row],
            fold: Some(o.fold),
        })
        .collect();
    RiskPanel::new(result.name.clone(), rows)
}

/// Horse-race table: one row per model. Timing is wall-clock and therefore
/// written as "NA" unless requested, keeping the file reproducible.
pub fn write_horse_race_csv<W: Write>(results: &[ModelResult], with_timing: bool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "AUC", "PR", "F1-Score", "BACC", "R²", "time_seconds", "data", "n_rows"])?;
    for r in results {
        w.write_record([
            r.name.clone(),
            r.mean.auc.to_string(),
            r.mean.pr_auc.to_string(),
            r.mean.f1.to_string(),
            r.mean.bacc.to_string(),
            r.mean.pseudo_r2.to_string(),
            if with_timing {
                r.mean_fit_seconds.to_string()
            } else {
                "NA".to_string()
            },
            serde_json::to_value(r.data)?.as_str().unwrap_or_default().to_string(),
            r.n_rows.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_parse_from_json() {
        let js = r#"{"name":"m","data":"complete_case","model":{"kind":"logit","l2":0.5}}"#;
        let s: ModelSpec = serde_json::from_str(js).unwrap();
        assert_eq!(s.model, ModelKind::Logit { l2: 0.5 });
        assert_eq!(s.data, DataTreatment::CompleteCase);
    }

    #[test]
    fn default_names_unique() {
        let specs = default_specs();
        let mut names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), specs.len());
    }
}
