//! Shapley attributions over arbitrary coalition games: exact enumeration
//! for small player counts, permutation sampling otherwise, and additive
//! group aggregation. The model-facing value function neutralizes inactive
//! features with background rows and scores the result by AUC.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::roc_auc;
use crate::model::Classifier;
use crate::rng;

pub const MAX_EXACT_PLAYERS: usize = 14;
pub const MIN_PERMUTATIONS: usize = 30;
pub const MISSINGNESS_GROUP: &str = "Missingness";

/// Payoff of a coalition; `active[m]` says whether player m is in it.
pub trait ValueFunction: Sync {
    fn n_players(&self) -> usize;
    fn value(&self, active: &[bool]) -> Result<f64>;
}

impl<F: Fn(&[bool]) -> f64 + Sync> ValueFunction for (usize, F) {
    fn n_players(&self) -> usize {
        self.0
    }

    fn value(&self, active: &[bool]) -> Result<f64> {
        Ok((self.1)(active))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    pub players: Vec<String>,
    pub phi: Vec<f64>,
    /// Monte Carlo standard errors; None for exact values.
    pub se: Option<Vec<f64>>,
    pub v_empty: f64,
    pub v_full: f64,
}

impl ShapleyReport {
    pub fn efficiency_gap(&self) -> f64 {
        self.phi.iter().sum::<f64>() - (self.v_full - self.v_empty)
    }
}

fn mask_to_active(mask: usize, q: usize) -> Vec<bool> {
    (0..q).map(|m| mask >> m & 1 == 1).collect()
}

fn default_names(q: usize) -> Vec<String> {
    (0..q).map(|m| format!("p{m}")).collect()
}

/// φ_m = Σ_{S ∌ m} |S|!(q−|S|−1)!/q! · [v(S∪{m}) − v(S)], all 2^q coalitions
/// evaluated once.
pub fn shapley_exact(v: &dyn ValueFunction, names: Option<Vec<String>>) -> Result<ShapleyReport> {
    let q = v.n_players();
    if q > MAX_EXACT_PLAYERS {
        return Err(Error::TooManyFeatures {
            max: MAX_EXACT_PLAYERS,
            found: q,
        });
    }
    let values: Vec<f64> = (0..1usize << q)
        .into_par_iter()
        .map(|mask| v.value(&mask_to_active(mask, q)))
        .collect::<Result<_>>()?;
    // weight[s] = s!(q−s−1)!/q!, built by ratios to avoid large factorials.
    let mut weight = vec![0.0; q.max(1)];
    if q > 0 {
        weight[0] = 1.0 / q as f64;
        for s in 1..q {
            weight[s] = weight[s - 1] * s as f64 / (q - s) as f64;
        }
    }
    let mut phi = vec![0.0; q];
    for mask in 0..1usize << q {
        let size = mask.count_ones() as usize;
        for (m, p) in phi.iter_mut().enumerate() {
            if mask >> m & 1 == 0 {
                *p += weight[size] * (values[mask | 1 << m] - values[mask]);
            }
        }
    }
    Ok(ShapleyReport {
        players: names.unwrap_or_else(|| default_names(q)),
        phi,
        se: None,
        v_empty: values[0],
        v_full: values[(1usize << q) - 1],
    })
}

/// Permutation-sampling estimate; each permutation walks all players once,
/// so per-permutation contributions sum to v(full) − v(empty).
pub fn shapley_sampled(
    v: &dyn ValueFunction,
    n_permutations: usize,
    seed: u64,
    names: Option<Vec<String>>,
) -> Result<ShapleyReport> {
    if n_permutations < MIN_PERMUTATIONS {
        return Err(Error::BadConfig(format!(
            "need at least {MIN_PERMUTATIONS} permutations, got {n_permutations}"
        )));
    }
    let q = v.n_players();
    let v_empty = v.value(&vec![false; q])?;
    let v_full = v.value(&vec![true; q])?;
    let samples: Vec<Vec<f64>> = (0..n_permutations)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, "shapley_perm", k as u64);
            let mut order: Vec<usize> = (0..q).collect();
            rng::shuffle(&mut r, &mut order);
            let mut active = vec![false; q];
            let mut contrib = vec![0.0; q];
            let mut prev = v_empty;
            for (step, &m) in order.iter().enumerate() {
                active[m] = true;
                let cur = if step + 1 == q { v_full } else { v.value(&active)? };
                contrib[m] = cur - prev;
                prev = cur;
            }
            Ok(contrib)
        })
        .collect::<Result<_>>()?;
    let n = n_permutations as f64;
    let mut phi = vec![0.0; q];
    let mut se = vec![0.0; q];
    for m in 0..q {
        let mean = samples.iter().map(|s| s[m]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[m] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        phi[m] = mean;
        se[m] = (var / n).sqrt();
    }
    Ok(ShapleyReport {
        players: names.unwrap_or_else(|| default_names(q)),
        phi,
        se: Some(se),
        v_empty,
        v_full,
    })
}

/// Group values as sums of member φ, in order of first appearance.
pub fn group_shapley(report: &ShapleyReport, group_labels: &BTreeMap<String, String>) -> Result<Vec<(String, f64)>> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for (name, phi) in report.players.iter().zip(&report.phi) {
        let g = group_labels
            .get(name)
            .ok_or_else(|| Error::UnlabeledFeature(name.clone()))?;
        match out.iter_mut().find(|(k, _)| k == g) {
            Some(e) => e.1 += phi,
            None => out.push((g.clone(), *phi)),
        }
    }
    Ok(out)
}

/// A coalition member in the model-facing game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Player {
    /// Feature j, value and missingness together.
    Feature(usize),
    /// The observed value of feature j.
    Value(usize),
    /// Whether feature j is reported at all.
    Mask(usize),
}

/// Interventional AUC game: inactive inputs of each evaluation row are
/// taken from its paired background row, and v(S) is the AUC of the
/// resulting predictions.
pub struct AucGame<'a> {
    model: &'a dyn Classifier,
    rows: &'a [Vec<Option<f64>>],
    labels: &'a [bool],
    background: Vec<Vec<Option<f64>>>,
    pairing: Vec<usize>,
    players: Vec<Player>,
}

pub const DEFAULT_BACKGROUND: usize = 256;

impl<'a> AucGame<'a> {
    /// `background_pool` supplies up to `n_background` rows drawn without
    /// replacement; each evaluation row is paired with one of them at random.
    pub fn new(
        model: &'a dyn Classifier,
        rows: &'a [Vec<Option<f64>>],
        labels: &'a [bool],
        background_pool: &[Vec<Option<f64>>],
        n_background: usize,
        players: Vec<Player>,
        seed: u64,
    ) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch(format!("{} rows vs {} labels", rows.len(), labels.len())));
        }
        if background_pool.is_empty() || n_background == 0 {
            return Err(Error::BadConfig("background sample is empty".into()));
        }
        let p = model.n_features();
        for pl in &players {
            let (Player::Feature(j) | Player::Value(j) | Player::Mask(j)) = *pl;
            if j >= p {
                return Err(Error::BadConfig(format!("player refers to feature {j} of {p}")));
            }
        }
        let mut r = rng::stream(seed, "shapley_background", 0);
        let take = n_background.min(background_pool.len());
        let background = rand::seq::index::sample(&mut r, background_pool.len(), take)
            .into_iter()
            .map(|i| background_pool[i].clone())
            .collect();
        let mut r = rng::stream(seed, "shapley_pairing", 0);
        let pairing = (0..rows.len()).map(|_| r.random_range(0..take)).collect();
        Ok(Self {
            model,
            rows,
            labels,
            background,
            pairing,
            players,
        })
    }

    /// One player per feature.
    pub fn feature_players(p: usize) -> Vec<Player> {
        (0..p).map(Player::Feature).collect()
    }

    /// Separate value and missingness players for every feature.
    pub fn split_players(p: usize) -> Vec<Player> {
        (0..p).map(Player::Value).chain((0..p).map(Player::Mask)).collect()
    }

    pub fn player_names(&self, feature_names: &[String]) -> Vec<String> {
        self.players
            .iter()
            .map(|pl| match *pl {
                Player::Feature(j) | Player::Value(j) => feature_names[j].clone(),
                Player::Mask(j) => format!("missing:{}", feature_names[j]),
            })
            .collect()
    }

    /// Group labels for the player names: value players inherit their
    /// feature's group; missingness players share one group.
    pub fn player_groups(
        &self,
        feature_names: &[String],
        feature_groups: &BTreeMap<String, String>,
    ) -> BTreeMap<String, String> {
        let names = self.player_names(feature_names);
        self.players
            .iter()
            .zip(names)
            .filter_map(|(pl, name)| match *pl {
                Player::Mask(_) => Some((name, MISSINGNESS_GROUP.to_string())),
                Player::Feature(j) | Player::Value(j) => {
                    feature_groups.get(&feature_names[j]).map(|g| (name, g.clone()))
                }
            })
            .collect()
    }

    fn compose(&self, row: &[Option<f64>], bg: &[Option<f64>], active: &[bool]) -> Vec<Option<f64>> {
        let p = row.len();
        // Per feature: which source supplies the value and which the mask.
        let mut own_value = vec![false; p];
        let mut own_mask = vec![false; p];
        for (pl, &on) in self.players.iter().zip(active) {
            if !on {
                continue;
            }
            match *pl {
                Player::Feature(j) => {
                    own_value[j] = true;
                    own_mask[j] = true;
                }
                Player::Value(j) => own_value[j] = true,
                Player::Mask(j) => own_mask[j] = true,
            }
        }
        (0..p)
            .map(|j| {
                let observed = if own_mask[j] { row[j].is_some() } else { bg[j].is_some() };
                if !observed {
                    return None;
                }
                let (first, second) = if own_value[j] { (row[j], bg[j]) } else { (bg[j], row[j]) };
                first.or(second)
            })
            .collect()
    }
}

impl ValueFunction for AucGame<'_> {
    fn n_players(&self) -> usize {
        self.players.len()
    }

    fn value(&self, active: &[bool]) -> Result<f64> {
        let preds: Vec<f64> = self
            .rows
            .iter()
            .zip(&self.pairing)
            .map(|(row, &b)| self.model.predict_proba(&self.compose(row, &self.background[b], active)))
            .collect::<Result<_>>()?;
        roc_auc(&preds, self.labels)
    }
}

/// CSV with columns feature, phi, se, group.
pub fn write_report_csv<W: Write>(
    report: &ShapleyReport,
    groups: Option<&BTreeMap<String, String>>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "phi", "se", "group"])?;
    for (m, name) in report.players.iter().enumerate() {
        let se = report.se.as_ref().map_or_else(|| "NA".to_string(), |s| s[m].to_string());
        let group = groups.and_then(|g| g.get(name)).cloned().unwrap_or_else(|| "NA".into());
        w.write_record([name.clone(), report.phi[m].to_string(), se, group])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_groups_csv<W: Write>(groups: &[(String, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "phi"])?;
    for (g, v) in groups {
        w.write_record([g.clone(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(a: &[bool]) -> f64 {
        a.iter().filter(|&&x| x).count() as f64
    }

    #[test]
    fn additive_pair() {
        let r = shapley_exact(&(2, count), None).unwrap();
        assert_eq!(r.phi, vec![1.0, 1.0]);
    }

    #[test]
    fn squared_size_game() {
        let r = shapley_exact(&(3, |a: &[bool]| count(a).powi(2)), None).unwrap();
        for p in &r.phi {
            assert!((p - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dummy_player_is_zero() {
        let r = shapley_exact(&(3, |a: &[bool]| f64::from(u8::from(a[0])) * 2.0 + f64::from(u8::from(a[1]))), None)
            .unwrap();
        assert_eq!(r.phi[2], 0.0);
    }

    #[test]
    fn too_many_players() {
        let err = shapley_exact(&(15, count), None).unwrap_err();
        assert!(matches!(err, Error::TooManyFeatures { max: 14, found: 15 }));
    }

    #[test]
    fn sampled_is_reproducible() {
        let g = (4, |a: &[bool]| count(a).sqrt());
        let a = shapley_sampled(&g, 40, 3, None).unwrap();
        let b = shapley_sampled(&g, 40, 3, None).unwrap();
        assert_eq!(a, b);
        assert!(a.efficiency_gap().abs() < 1e-12);
        assert!(matches!(shapley_sampled(&g, 29, 3, None), Err(Error::BadConfig(_))));
    }

    #[test]
    fn groups() {
        let r = shapley_exact(&(3, |a: &[bool]| count(a).powi(2)), None).unwrap();
        let one: BTreeMap<String, String> = r.players.iter().map(|p| (p.clone(), "g".into())).collect();
        let g = group_shapley(&r, &one).unwrap();
        assert!((g[0].1 - 9.0).abs() < 1e-12);
        let mut partial = one.clone();
        partial.remove("p1");
        assert!(matches!(group_shapley(&r, &partial), Err(Error::UnlabeledFeature(_))));
    }
}
