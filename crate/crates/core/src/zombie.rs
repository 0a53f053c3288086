//! Zombie-firm identification from predicted failure risk: yearly decile
//! thresholds, the decile indicator Q, the three-year persistence rule,
//! cutoff scans, transition tables and share series.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{f1_bacc, Confusion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub firm_id: String,
    pub year: i32,
    pub probability: f64,
    pub failed: bool,
    /// Cross-validation fold that produced the prediction.
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskPanel {
    pub source: String,
    rows: Vec<RiskRow>,
}

impl RiskPanel {
    pub fn new(source: impl Into<String>, rows: Vec<RiskRow>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rows.len());
        for r in &rows {
            if !(0.0..=1.0).contains(&r.probability) {
                return Err(Error::BadDomain(format!(
                    "probability {} for {} in {}",
                    r.probability, r.firm_id, r.year
                )));
            }
            if !seen.insert((r.firm_id.as_str(), r.year)) {
                return Err(Error::DuplicateKey {
                    firm_id: r.firm_id.clone(),
                    year: r.year,
                });
            }
        }
        Ok(Self {
            source: source.into(),
            rows,
        })
    }

    pub fn rows(&self) -> &[RiskRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn years(&self) -> Vec<i32> {
        let set: std::collections::BTreeSet<i32> = self.rows.iter().map(|r| r.year).collect();
        set.into_iter().collect()
    }

    fn index(&self) -> HashMap<(&str, i32), usize> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| ((r.firm_id.as_str(), r.year), i))
            .collect()
    }

    /// Row indices per firm, ordered by year.
    fn by_firm(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut m: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            m.entry(r.firm_id.as_str()).or_default().push(i);
        }
        for v in m.values_mut() {
            v.sort_by_key(|&i| self.rows[i].year);
        }
        m
    }
}

/// Per-year thresholds q_1..q_9 (index 0 holds q_1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileThresholds {
    pub by_year: BTreeMap<i32, [f64; 9]>,
}

impl DecileThresholds {
    pub fn get(&self, year: i32) -> Result<&[f64; 9]> {
        self.by_year.get(&year).ok_or(Error::MissingYearThresholds(year))
    }
}

pub const MIN_PREDICTIONS_PER_YEAR: usize = 10;

/// Nearest-rank deciles of each year's predictions.
///
/// By default every prediction of the year enters; `survivors_only` drops
/// firms that fail that year before ranking.
pub fn decile_thresholds(risk: &RiskPanel, survivors_only: bool) -> Result<DecileThresholds> {
    let mut per_year: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for r in &risk.rows {
        let v = per_year.entry(r.year).or_default();
        if !(survivors_only && r.failed) {
            v.push(r.probability);
        }
    }
    let mut by_year = BTreeMap::new();
    for (year, mut v) in per_year {
        if v.len() < MIN_PREDICTIONS_PER_YEAR {
            return Err(Error::TooFewPredictions(year));
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mut q = [0.0; 9];
        for (j, slot) in q.iter_mut().enumerate() {
            let k = ((j + 1) * n).div_ceil(10);
            *slot = v[k - 1];
        }
        by_year.insert(year, q);
    }
    Ok(DecileThresholds { by_year })
}

/// Q_{j,t}: prediction at or above q_j for its year and the firm survives that year.
pub fn q_indicator(risk: &RiskPanel, thresholds: &DecileThresholds, j: usize) -> Result<Vec<bool>> {
    if !(1..=9).contains(&j) {
        return Err(Error::BadConfig(format!("decile index {j} outside 1..=9")));
    }
    risk.rows
        .iter()
        .map(|r| Ok(!r.failed && r.probability >= thresholds.get(r.year)?[j - 1]))
        .collect()
}

/// Flag firm-years ending a run of `window` consecutive calendar years with
/// Q_9 = 1. Gaps in a firm's history break the run.
pub fn zombie_flags(risk: &RiskPanel, thresholds: &DecileThresholds, window: usize) -> Result<Vec<bool>> {
    if window == 0 {
        return Err(Error::BadConfig("zombie window must be >= 1".into()));
    }
    let q = q_indicator(risk, thresholds, 9)?;
    let mut flags = vec![false; risk.len()];
    for idx in risk.by_firm().values() {
        let mut run = 0usize;
        let mut prev_year: Option<i32> = None;
        for &i in idx {
            let year = risk.rows[i].year;
            if prev_year != Some(year - 1) {
                run = 0;
            }
            run = if q[i] { run + 1 } else { 0 };
            flags[i] = run >= window;
            prev_year = Some(year);
        }
    }
    Ok(flags)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutoffScale {
    /// Cutoffs are raw predicted probabilities.
    Probability,
    /// Cutoffs are positions in the prediction's within-year distribution
    /// (empirical CDF), so 0.9 marks the top decile.
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffScan {
    pub scale: CutoffScale,
    pub rows: Vec<(f64, f64)>,
    pub best_cutoff: f64,
    pub best_bacc: f64,
}

/// 0.50, 0.51, ..., 0.99.
pub fn default_cutoff_grid() -> Vec<f64> {
    (50..100).map(|i| f64::from(i) / 100.0).collect()
}

/// Each row's within-year empirical CDF value: share of that year's
/// predictions that are ≤ its own.
pub fn within_year_rank(risk: &RiskPanel) -> Vec<f64> {
    let mut per_year: HashMap<i32, Vec<f64>> = HashMap::new();
    for r in &risk.rows {
        per_year.entry(r.year).or_default().push(r.probability);
    }
    for v in per_year.values_mut() {
        v.sort_by(f64::total_cmp);
    }
    risk.rows
        .iter()
        .map(|r| {
            let v = &per_year[&r.year];
            v.partition_point(|&x| x <= r.probability) as f64 / v.len() as f64
        })
        .collect()
}

/// Balanced accuracy of `failed = score ≥ cutoff` for each cutoff.
/// The argmax keeps the first (lowest) cutoff among ties.
pub fn bacc_cutoff_scan(risk: &RiskPanel, grid: &[f64], scale: CutoffScale) -> Result<CutoffScan> {
    let labels: Vec<bool> = risk.rows.iter().map(|r| r.failed).collect();
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::OneClass);
    }
    let scores: Vec<f64> = match scale {
        CutoffScale::Probability => risk.rows.iter().map(|r| r.probability).collect(),
        CutoffScale::Quantile => within_year_rank(risk),
    };
    Ok(scan_scores(&scores, &labels, grid, scale))
}

pub(crate) fn scan_scores(scores: &[f64], labels: &[bool], grid: &[f64], scale: CutoffScale) -> CutoffScan {
    let rows: Vec<(f64, f64)> = grid
        .iter()
        .map(|&c| (c, f1_bacc(&Confusion::at_threshold(scores, labels, c)).bacc))
        .collect();
    let (best_cutoff, best_bacc) = rows
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, r| if r.1 > best.1 { r } else { best });
    CutoffScan {
        scale,
        rows,
        best_cutoff,
        best_bacc,
    }
}

pub const BIN_LABELS: [&str; 5] = ["9th", "8th", "7th", "6th", "below_6th"];

/// Risk bin of a prediction: 0 = at or above q_9, ..., 3 = [q_6, q_7), 4 = below q_6.
pub fn risk_bin(probability: f64, q: &[f64; 9]) -> usize {
    for (b, j) in [9usize, 8, 7, 6].into_iter().enumerate() {
        if probability >= q[j - 1] {
            return b;
        }
    }
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub counts: [[u64; 5]; 5],
}

impl TransitionMatrix {
    pub fn row_total(&self, a: usize) -> u64 {
        self.counts[a].iter().sum()
    }

    /// Row-normalized shares; rows without observations are None.
    pub fn shares(&self) -> [Option<[f64; 5]>; 5] {
        let mut out = [None; 5];
        for (a, slot) in out.iter_mut().enumerate() {
            let tot = self.row_total(a);
            if tot > 0 {
                let mut row = [0.0; 5];
                for (b, x) in row.iter_mut().enumerate() {
                    *x = self.counts[a][b] as f64 / tot as f64;
                }
                *slot = Some(row);
            }
        }
        out
    }
}

/// Counts of moves between risk bins from t to t+1 among firms surviving both years.
pub fn decile_transition_matrix(risk: &RiskPanel, thresholds: &DecileThresholds) -> Result<TransitionMatrix> {
    let index = risk.index();
    let mut counts = [[0u64; 5]; 5];
    let mut any = false;
    for r in &risk.rows {
        if r.failed {
            continue;
        }
        let Some(&next) = index.get(&(r.firm_id.as_str(), r.year + 1)) else {
            continue;
        };
        let n = &risk.rows[next];
        if n.failed {
            continue;
        }
        let a = risk_bin(r.probability, thresholds.get(r.year)?);
        let b = risk_bin(n.probability, thresholds.get(n.year)?);
        counts[a][b] += 1;
        any = true;
    }
    if !any {
        return Err(Error::NoPairs);
    }
    Ok(TransitionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub year: i32,
    pub n_zombies: usize,
    pub fail: f64,
    pub remain_zombie: f64,
    pub lower_distress: f64,
    pub no_distress: f64,
}

/// What happens the year after a zombie flag: failure, another zombie
/// year, a survivor bin from the 6th to 9th decile, or below the 6th.
/// Zombies without a next-year record (including the final year) are left out.
pub fn zombie_outcome_transitions(
    risk: &RiskPanel,
    thresholds: &DecileThresholds,
    flags: &[bool],
) -> Result<Vec<OutcomeRow>> {
    if flags.len() != risk.len() {
        return Err(Error::LengthMismatch(format!("{} flags vs {} risk rows", flags.len(), risk.len())));
    }
    let index = risk.index();
    let mut per_year: BTreeMap<i32, [usize; 4]> = BTreeMap::new();
    for (i, r) in risk.rows.iter().enumerate() {
        if !flags[i] {
            continue;
        }
        let Some(&next) = index.get(&(r.firm_id.as_str(), r.year + 1)) else {
            continue;
        };
        let n = &risk.rows[next];
        let outcome = if n.failed {
            0
        } else if flags[next] {
            1
        } else if risk_bin(n.probability, thresholds.get(n.year)?) < 4 {
            2
        } else {
            3
        };
        per_year.entry(r.year).or_default()[outcome] += 1;
    }
    Ok(per_year
        .into_iter()
        .map(|(year, c)| {
            let tot: usize = c.iter().sum();
            let s = |k: usize| c[k] as f64 / tot as f64;
            OutcomeRow {
                year,
                n_zombies: tot,
                fail: s(0),
                remain_zombie: s(1),
                lower_distress: s(2),
                no_distress: s(3),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub year: i32,
    pub active: usize,
    pub zombies: usize,
    pub share: f64,
}

/// Zombies over active firm-years, per year.
pub fn zombie_share_series(risk: &RiskPanel, flags: &[bool]) -> Result<Vec<ShareRow>> {
    if flags.len() != risk.len() {
        return Err(Error::LengthMismatch(format!("{} flags vs {} risk rows", flags.len(), risk.len())));
    }
    let mut per_year: BTreeMap<i32, (usize, usize)> = BTreeMap::new();
    for (r, &f) in risk.rows.iter().zip(flags) {
        let e = per_year.entry(r.year).or_default();
        e.0 += 1;
        e.1 += usize::from(f);
    }
    Ok(per_year
        .into_iter()
        .map(|(year, (active, zombies))| ShareRow {
            year,
            active,
            zombies,
            share: zombies as f64 / active as f64,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub common_support: f64,
    pub zombie_only: f64,
    pub indicator_only: f64,
    pub n_union: usize,
}

/// Split the union of flagged and indicator firm-years into both / only-zombie / only-indicator.
pub fn overlap_report(flags: &[bool], indicator: &[bool]) -> Result<Overlap> {
    if flags.len() != indicator.len() {
        return Err(Error::LengthMismatch(format!("{} flags vs {} indicators", flags.len(), indicator.len())));
    }
    let (mut both, mut z, mut ind) = (0usize, 0usize, 0usize);
    for (&f, &x) in flags.iter().zip(indicator) {
        match (f, x) {
            (true, true) => both += 1,
            (true, false) => z += 1,
            (false, true) => ind += 1,
            _ => {}
        }
    }
    let n = both + z + ind;
    if n == 0 {
        return Err(Error::EmptyUnion);
    }
    let d = n as f64;
    Ok(Overlap {
        common_support: both as f64 / d,
        zombie_only: z as f64 / d,
        indicator_only: ind as f64 / d,
        n_union: n,
    })
}

pub fn write_flags_csv<W: Write>(risk: &RiskPanel, flags: &[bool], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["firm_id", "year", "probability", "failed", "zombie"])?;
    for (r, &f) in risk.rows.iter().zip(flags) {
        w.write_record([
            r.firm_id.clone(),
            r.year.to_string(),
            r.probability.to_string(),
            u8::from(r.failed).to_string(),
            u8::from(f).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_thresholds_csv<W: Write>(th: &DecileThresholds, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["year".to_string()];
    header.extend((1..=9).map(|j| format!("q{j}")));
    w.write_record(&header)?;
    for (year, q) in &th.by_year {
        let mut rec = vec![year.to_string()];
        rec.extend(q.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_shares_csv<W: Write>(rows: &[ShareRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["year", "active", "zombies", "share"])?;
    for r in rows {
        w.write_record([r.year.to_string(), r.active.to_string(), r.zombies.to_string(), r.share.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per origin bin: counts, row total, then shares ("NA" for empty rows).
pub fn write_transition_csv<W: Write>(m: &TransitionMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["from".to_string()];
    header.extend(BIN_LABELS.iter().map(|b| format!("n_{b}")));
    header.push("n_total".into());
    header.extend(BIN_LABELS.iter().map(|b| format!("share_{b}")));
    w.write_record(&header)?;
    let shares = m.shares();
    for a in 0..5 {
        let mut rec = vec![BIN_LABELS[a].to_string()];
        rec.extend(m.counts[a].iter().map(u64::to_string));
        rec.push(m.row_total(a).to_string());
        match shares[a] {
            Some(row) => rec.extend(row.iter().map(f64::to_string)),
            None => rec.extend(std::iter::repeat_n("NA".to_string(), 5)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_outcomes_csv<W: Write>(rows: &[OutcomeRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["year", "n_zombies", "fail", "remain_zombie", "lower_distress", "no_distress"])?;
    for r in rows {
        w.write_record([
            r.year.to_string(),
            r.n_zombies.to_string(),
            r.fail.to_string(),
            r.remain_zombie.to_string(),
            r.lower_distress.to_string(),
            r.no_distress.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scan_csv<W: Write>(scan: &CutoffScan, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cutoff", "bacc", "is_best"])?;
    for &(c, b) in &scan.rows {
        w.write_record([c.to_string(), b.to_string(), u8::from(c == scan.best_cutoff).to_string()])?;
    }
    w.flush()?;
    Ok(())
}
