//! Firm-year panel data with first-class missing values.
//!
//! Missing entries are `None` all the way down; nothing at this layer
//! encodes them as sentinel reals. Downstream learners pick their own
//! representation (native missing-value splits, imputation, or listwise
//! deletion).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const MISSING_TOKEN: &str = "NA";
const KEY_COLUMNS: [&str; 3] = ["firm_id", "year", "failed"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmYearRecord {
    pub firm_id: String,
    pub year: i32,
    pub features: Vec<Option<f64>>,
    pub failed: bool,
}

impl FirmYearRecord {
    pub fn missing_mask(&self) -> Vec<bool> {
        self.features.iter().map(Option::is_none).collect()
    }

    pub fn has_missing(&self) -> bool {
        self.features.iter().any(Option::is_none)
    }
}

/// Longitudinal firm-year records. Immutable once built; `new` checks the
/// key, arity, and absorbing-failure invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmPanel {
    records: Vec<FirmYearRecord>,
    feature_names: Vec<String>,
    group_labels: Option<BTreeMap<String, String>>,
}

impl FirmPanel {
    pub fn new(
        records: Vec<FirmYearRecord>,
        feature_names: Vec<String>,
        group_labels: Option<BTreeMap<String, String>>,
    ) -> Result<Self> {
        let p = feature_names.len();
        let mut seen = HashSet::with_capacity(records.len());
        let mut failure_year: HashMap<&str, i32> = HashMap::new();
        let mut last_year: HashMap<&str, i32> = HashMap::new();
        for r in &records {
            if r.features.len() != p {
                return Err(Error::InvalidPanel(format!(
                    "record ({}, {}) has {} features, expected {p}",
                    r.firm_id,
                    r.year,
                    r.features.len()
                )));
            }
            if r.features.iter().flatten().any(|v| v.is_nan()) {
                return Err(Error::InvalidPanel(format!(
                    "record ({}, {}) stores NaN as an observed value",
                    r.firm_id, r.year
                )));
            }
            if !seen.insert((r.firm_id.as_str(), r.year)) {
                return Err(Error::DuplicateKey {
                    firm_id: r.firm_id.clone(),
                    year: r.year,
                });
            }
            if r.failed && failure_year.insert(&r.firm_id, r.year).is_some() {
                return Err(Error::InvalidPanel(format!(
                    "firm {} fails more than once",
                    r.firm_id
                )));
            }
            let e = last_year.entry(&r.firm_id).or_insert(r.year);
            *e = (*e).max(r.year);
        }
        for (firm, fy) in &failure_year {
            if last_year[firm] > *fy {
                return Err(Error::InvalidPanel(format!(
                    "firm {firm} has records after its failure in {fy}"
                )));
            }
        }
        Ok(Self {
            records,
            feature_names,
            group_labels,
        })
    }

    pub fn records(&self) -> &[FirmYearRecord] {
        &self.records
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn group_labels(&self) -> Option<&BTreeMap<String, String>> {
        self.group_labels.as_ref()
    }

    pub fn with_group_labels(mut self, labels: BTreeMap<String, String>) -> Self {
        self.group_labels = Some(labels);
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.failed).collect()
    }

    /// Replace the feature vectors while keeping keys and labels.
    pub(crate) fn map_features(&self, mut f: impl FnMut(&[Option<f64>]) -> Vec<Option<f64>>) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| FirmYearRecord {
                firm_id: r.firm_id.clone(),
                year: r.year,
                features: f(&r.features),
                failed: r.failed,
            })
            .collect();
        Self {
            records,
            feature_names: self.feature_names.clone(),
            group_labels: self.group_labels.clone(),
        }
    }
}

fn is_missing_token(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

/// Read a panel from CSV with header `firm_id,year,failed,<features...>`.
///
/// When `schema` is given the feature columns must match it exactly and in
/// order. Empty cells, `NA` and `NaN` (any case) are missing.
pub fn load_csv(path: impl AsRef<Path>, schema: Option<&[String]>) -> Result<FirmPanel> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_csv(&text, schema)
}

pub fn parse_csv(text: &str, schema: Option<&[String]>) -> Result<FirmPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h?,
        None => return Err(Error::BadHeader("empty file".into())),
    };
    let header: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if header.len() < 3 || header[..3] != KEY_COLUMNS {
        return Err(Error::BadHeader(format!(
            "expected leading columns firm_id,year,failed; got {:?}",
            &header[..header.len().min(3)]
        )));
    }
    let feature_names: Vec<String> = header[3..].to_vec();
    if let Some(schema) = schema {
        if schema != feature_names.as_slice() {
            return Err(Error::BadHeader(format!(
                "feature columns {feature_names:?} do not match schema {schema:?}"
            )));
        }
    }
    let width = header.len();
    let mut records = Vec::new();
    for (i, row) in rows.enumerate() {
        let line = i + 2;
        let row = row?;
        if row.len() != width {
            return Err(Error::MalformedRow {
                line,
                expected: width,
                found: row.len(),
            });
        }
        let year = row[1].trim().parse::<i32>().map_err(|_| Error::BadValue {
            line,
            column: "year".into(),
            value: row[1].to_string(),
        })?;
        let failed = match row[2].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::BadLabel {
                    line,
                    value: other.to_string(),
                })
            }
        };
        let mut features = Vec::with_capacity(width - 3);
        for (j, cell) in row.iter().enumerate().skip(3) {
            if is_missing_token(cell) {
                features.push(None);
            } else {
                let v = cell.trim().parse::<f64>().map_err(|_| Error::BadValue {
                    line,
                    column: header[j].clone(),
                    value: cell.to_string(),
                })?;
                features.push(Some(v));
            }
        }
        records.push(FirmYearRecord {
            firm_id: row[0].to_string(),
            year,
            features,
            failed,
        });
    }
    FirmPanel::new(records, feature_names, None)
}

pub fn write_csv<W: Write>(panel: &FirmPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = KEY_COLUMNS.to_vec();
    header.extend(panel.feature_names.iter().map(String::as_str));
    w.write_record(&header)?;
    for r in &panel.records {
        let mut row = Vec::with_capacity(header.len());
        row.push(r.firm_id.clone());
        row.push(r.year.to_string());
        row.push(if r.failed { "1" } else { "0" }.to_string());
        for v in &r.features {
            row.push(match v {
                Some(x) => x.to_string(),
                None => MISSING_TOKEN.to_string(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(panel: &FirmPanel, path: impl AsRef<Path>) -> Result<()> {
    write_csv(panel, File::create(path)?)
}

/// Assignment of records to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    /// (train, test) row indices for fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &a) in self.assignments.iter().enumerate() {
            if a == f {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Stratified k-fold assignment over binary labels.
///
/// Each label stratum is shuffled with its own seeded stream and dealt
/// round-robin; the second stratum continues where the first stopped so
/// overall fold sizes differ by at most one.
pub fn stratified_kfold_labels(labels: &[bool], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::BadConfig(format!("fold count must be >= 2, got {k}")));
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if !pos.is_empty() && !neg.is_empty() {
        if pos.len() < k || neg.len() < k {
            return Err(Error::TooFewRecords(format!(
                "need >= {k} records of each label, have {} positive and {} negative",
                pos.len(),
                neg.len()
            )));
        }
    } else if labels.len() < k {
        return Err(Error::TooFewRecords(format!(
            "need >= {k} records, have {}",
            labels.len()
        )));
    }
    let mut assignments = vec![0usize; labels.len()];
    let mut next = 0usize;
    for (s, mut stratum) in [pos, neg].into_iter().enumerate() {
        let mut r = rng::stream(seed, "stratified_kfold", s as u64);
        rng::shuffle(&mut r, &mut stratum);
        for i in stratum {
            assignments[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan {
        k,
        seed,
        assignments,
    })
}

pub fn stratified_kfold(panel: &FirmPanel, k: usize, seed: u64) -> Result<FoldPlan> {
    stratified_kfold_labels(&panel.labels(), k, seed)
}

/// Records with no missing feature. The input panel is untouched.
pub fn complete_case_filter(panel: &FirmPanel) -> FirmPanel {
    FirmPanel {
        records: panel
            .records
            .iter()
            .filter(|r| !r.has_missing())
            .cloned()
            .collect(),
        feature_names: panel.feature_names.clone(),
        group_labels: panel.group_labels.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessSummary {
    pub feature_names: Vec<String>,
    pub n_failed: usize,
    pub n_survived: usize,
    pub missing_failed: Vec<usize>,
    pub missing_survived: Vec<usize>,
    /// Share of all records missing each feature.
    pub rate: Vec<f64>,
    /// Share of failed records missing each feature.
    pub rate_failed: Vec<f64>,
    /// Share of surviving records missing each feature.
    pub rate_survived: Vec<f64>,
    /// Share of records with at least one missing feature.
    pub any_missing_rate: f64,
}

fn share(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn missingness_summary(panel: &FirmPanel) -> MissingnessSummary {
    let p = panel.n_features();
    let mut missing_failed = vec![0usize; p];
    let mut missing_survived = vec![0usize; p];
    let (mut n_failed, mut n_survived, mut any) = (0usize, 0usize, 0usize);
    for r in &panel.records {
        let bucket = if r.failed {
            n_failed += 1;
            &mut missing_failed
        } else {
            n_survived += 1;
            &mut missing_survived
        };
        for (j, v) in r.features.iter().enumerate() {
            if v.is_none() {
                bucket[j] += 1;
            }
        }
        if r.has_missing() {
            any += 1;
        }
    }
    let n = n_failed + n_survived;
    MissingnessSummary {
        feature_names: panel.feature_names.clone(),
        rate: (0..p)
            .map(|j| share(missing_failed[j] + missing_survived[j], n))
            .collect(),
        rate_failed: missing_failed.iter().map(|&c| share(c, n_failed)).collect(),
        rate_survived: missing_survived
            .iter()
            .map(|&c| share(c, n_survived))
            .collect(),
        any_missing_rate: share(any, n),
        n_failed,
        n_survived,
        missing_failed,
        missing_survived,
    }
}

/// Supervised rows pairing prior-year features with the current outcome.
///
/// Stored column-wise per attribute; `features[i]` belongs to the firm's
/// year `years[i] - 1` record and `labels[i]` to year `years[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedTable {
    pub feature_names: Vec<String>,
    pub group_labels: Option<BTreeMap<String, String>>,
    pub firm_ids: Vec<String>,
    pub years: Vec<i32>,
    pub features: Vec<Vec<Option<f64>>>,
    pub labels: Vec<bool>,
    /// Panel records that had no prior-year record to pair with.
    pub dropped: usize,
}

impl SupervisedTable {
    /// Build a table directly from feature rows; keys are synthesized.
    pub fn from_rows(
        feature_names: Vec<String>,
        features: Vec<Vec<Option<f64>>>,
        labels: Vec<bool>,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch(format!(
                "{} feature rows vs {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = features.iter().find(|r| r.len() != feature_names.len()) {
            return Err(Error::ArityMismatch {
                expected: feature_names.len(),
                found: bad.len(),
            });
        }
        let n = labels.len();
        Ok(Self {
            feature_names,
            group_labels: None,
            firm_ids: (0..n).map(|i| i.to_string()).collect(),
            years: vec![0; n],
            features,
            labels,
            dropped: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn has_missing(&self) -> bool {
        self.features.iter().flatten().any(Option::is_none)
    }

    pub fn prevalence(&self) -> f64 {
        share(self.labels.iter().filter(|&&y| y).count(), self.len())
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            group_labels: self.group_labels.clone(),
            firm_ids: rows.iter().map(|&i| self.firm_ids[i].clone()).collect(),
            years: rows.iter().map(|&i| self.years[i]).collect(),
            features: rows.iter().map(|&i| self.features[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            dropped: 0,
        }
    }

    /// Row indices with no missing feature.
    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.features[i].iter().all(Option::is_some))
            .collect()
    }

    pub fn complete_cases(&self) -> Self {
        self.subset(&self.complete_rows())
    }
}

/// Pair each record at year `t` with the same firm's record at `t - 1`.
///
/// Years are matched literally: a gap in a firm's history drops the row.
pub fn lag_join(panel: &FirmPanel) -> SupervisedTable {
    let index: HashMap<(&str, i32), usize> = panel
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.firm_id.as_str(), r.year), i))
        .collect();
    let mut t = SupervisedTable {
        feature_names: panel.feature_names.clone(),
        group_labels: panel.group_labels.clone(),
        firm_ids: Vec::new(),
        years: Vec::new(),
        features: Vec::new(),
        labels: Vec::new(),
        dropped: 0,
    };
    for r in &panel.records {
        match index.get(&(r.firm_id.as_str(), r.year - 1)) {
            Some(&prev) => {
                t.firm_ids.push(r.firm_id.clone());
                t.years.push(r.year);
                t.features.push(panel.records[prev].features.clone());
                t.labels.push(r.failed);
            }
            None => t.dropped += 1,
        }
    }
    t
}
