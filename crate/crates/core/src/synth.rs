//! Synthetic firm panels with a latent distress process.
//!
//! Each firm carries an AR(1) distress state. Prior-year distress drives the
//! failure hazard; signal features are noisy (partly nonlinear) readouts of
//! the current state; the remaining features are pure noise. Missing
//! accounts are drawn per feature with log-odds rising in distress (MNAR)
//! plus an independent MCAR channel. A share of "planted" firms can be held
//! at high distress while their hazard ignores it, which is what a zombie
//! looks like from the outside.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{FirmPanel, FirmYearRecord};
use crate::rng;

pub const SIGNAL_GROUP: &str = "distress";
pub const NOISE_GROUP: &str = "noise";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_firms: usize,
    pub n_years: usize,
    pub n_features: usize,
    /// Baseline yearly failure probability at zero distress.
    pub hazard_base: f64,
    /// Effect of prior-year distress on failure log-odds.
    pub distress_loading: f64,
    /// Extra log-odds per squared unit of positive prior-year distress;
    /// gives the right-skewed risk distribution of real firm populations.
    pub hazard_convexity: f64,
    /// Effect of distress on each feature's missing log-odds. Zero disables
    /// the distress-driven channel entirely.
    pub mnar_strength: f64,
    pub mcar_rate: f64,
    pub seed: u64,
    /// Number of leading features that read out distress.
    pub n_signal: usize,
    pub persistence: f64,
    pub missing_intercept: f64,
    pub readout_noise: f64,
    /// Share of firms planted as persistently distressed survivors.
    pub zombie_share: f64,
    pub zombie_distress: f64,
    pub start_year: i32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_firms: 2000,
            n_years: 10,
            n_features: 10,
            hazard_base: 0.003,
            distress_loading: 1.0,
            hazard_convexity: 1.0,
            mnar_strength: 2.0,
            mcar_rate: 0.02,
            seed: 0,
            n_signal: 3,
            persistence: 0.8,
            missing_intercept: -4.0,
            readout_noise: 1.0,
            zombie_share: 0.0,
            zombie_distress: 2.5,
            start_year: 2008,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadConfig(m.to_string()));
        if self.n_firms == 0 || self.n_years == 0 || self.n_features == 0 {
            return bad("n_firms, n_years and n_features must be >= 1");
        }
        if !(self.hazard_base > 0.0 && self.hazard_base < 1.0) {
            return bad("hazard_base must lie in (0, 1)");
        }
        if !(self.distress_loading >= 0.0 && self.hazard_convexity >= 0.0 && self.mnar_strength >= 0.0) {
            return bad("distress_loading, hazard_convexity and mnar_strength must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.mcar_rate) {
            return bad("mcar_rate must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return bad("persistence must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.zombie_share) {
            return bad("zombie_share must lie in [0, 1]");
        }
        if self.n_signal > self.n_features {
            return bad("n_signal cannot exceed n_features");
        }
        if !(self.readout_noise >= 0.0) {
            return bad("readout_noise must be nonnegative");
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        (0..self.n_features)
            .map(|k| {
                if k < self.n_signal {
                    format!("sig{k}")
                } else {
                    format!("noise{}", k - self.n_signal)
                }
            })
            .collect()
    }

    pub fn group_labels(&self) -> BTreeMap<String, String> {
        self.feature_names()
            .into_iter()
            .enumerate()
            .map(|(k, n)| {
                let g = if k < self.n_signal { SIGNAL_GROUP } else { NOISE_GROUP };
                (n, g.to_string())
            })
            .collect()
    }
}

/// Hidden state for one firm-year; never part of the panel itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub firm_id: String,
    pub year: i32,
    pub distress: f64,
    pub planted: bool,
    /// Planted firm alive for at least three consecutive years up to now.
    pub zombie: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanel {
    pub panel: FirmPanel,
    pub truth: Vec<TruthRecord>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Signal readout `k` of distress `z`; lower values mean more distress.
fn readout(k: usize, z: f64) -> f64 {
    let slope = 1.0 / (1.0 + 0.25 * k as f64);
    match k % 3 {
        0 => -slope * z,
        1 => -slope * (z + 0.3 * (z * z - 1.0)),
        _ => -1.5 * slope * z.tanh(),
    }
}

/// Probability of failing this year given last year's distress. Planted
/// firms keep the baseline hazard whatever their distress.
pub fn failure_probability(config: &SynthConfig, planted: bool, prev_distress: f64) -> f64 {
    let mut log_odds = logit(config.hazard_base);
    if !planted {
        let excess = prev_distress.max(0.0);
        log_odds += config.distress_loading * prev_distress + config.hazard_convexity * excess * excess;
    }
    sigmoid(log_odds)
}

pub fn generate_panel(config: &SynthConfig) -> Result<SyntheticPanel> {
    config.validate()?;
    let c = config;
    let innovation_scale = (1.0 - c.persistence * c.persistence).sqrt();
    let mut records = Vec::with_capacity(c.n_firms * c.n_years);
    let mut truth = Vec::with_capacity(c.n_firms * c.n_years);

    for i in 0..c.n_firms {
        // Every draw happens unconditionally so that configurations sharing
        // a seed consume identical random streams.
        let mut r = rng::stream(c.seed, "synth_firm", i as u64);
        let firm_id = format!("F{i:06}");
        let planted = r.random::<f64>() < c.zombie_share;
        let mut ar: f64 = StandardNormal.sample(&mut r);
        let mut prev_distress = f64::NAN;
        for t in 0..c.n_years {
            if t > 0 {
                let e: f64 = StandardNormal.sample(&mut r);
                ar = c.persistence * ar + innovation_scale * e;
            }
            let distress = if planted {
                c.zombie_distress + 0.5 * ar
            } else {
                ar
            };
            let u_fail: f64 = r.random();
            let failed = if t == 0 {
                false
            } else {
                u_fail < failure_probability(c, planted, prev_distress)
            };
            let p_mnar = if c.mnar_strength > 0.0 {
                sigmoid(c.missing_intercept + c.mnar_strength * distress)
            } else {
                0.0
            };
            let mut features = Vec::with_capacity(c.n_features);
            for k in 0..c.n_features {
                let e: f64 = StandardNormal.sample(&mut r);
                let u_mnar: f64 = r.random();
                let u_mcar: f64 = r.random();
                let value = if k < c.n_signal {
                    readout(k, distress) + c.readout_noise * e
                } else {
                    e
                };
                let missing = u_mnar < p_mnar || u_mcar < c.mcar_rate;
                features.push(if missing { None } else { Some(value) });
            }
            let year = c.start_year + t as i32;
            truth.push(TruthRecord {
                firm_id: firm_id.clone(),
                year,
                distress,
                planted,
                zombie: planted && !failed && t >= 2,
            });
            records.push(FirmYearRecord {
                firm_id: firm_id.clone(),
                year,
                features,
                failed,
            });
            if failed {
                break;
            }
            prev_distress = distress;
        }
    }
    let panel = FirmPanel::new(records, c.feature_names(), Some(c.group_labels()))?;
    Ok(SyntheticPanel { panel, truth })
}

pub fn write_truth_csv<W: Write>(truth: &[TruthRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["firm_id", "year", "distress", "planted", "zombie"])?;
    for t in truth {
        w.write_record([
            t.firm_id.clone(),
            t.year.to_string(),
            t.distress.to_string(),
            u8::from(t.planted).to_string(),
            u8::from(t.zombie).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_truth_csv(truth: &[TruthRecord], path: impl AsRef<Path>) -> Result<()> {
    write_truth_csv(truth, File::create(path)?)
}
