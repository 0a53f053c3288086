use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use distress_core::horse_race::{default_specs, ModelSpec};
use distress_core::scores::LinearScoreSpec;
use distress_core::synth::SynthConfig;
use distress_core::zombie::CutoffScale;

/// Everything a run needs. Loaded from TOML; command-line flags override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub folds: usize,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
    /// Probability cutoff for F1 and BACC in the horse race.
    pub threshold: f64,
    pub synth: SynthConfig,
    pub models: Vec<ModelSpec>,
    pub scores: ScoresConfig,
    pub zombie: ZombieConfig,
    pub shap: ShapConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            folds: 5,
            out: None,
            input: None,
            threshold: 0.5,
            synth: SynthConfig {
                zombie_share: 0.02,
                ..SynthConfig::default()
            },
            models: default_specs(),
            scores: ScoresConfig::default(),
            zombie: ZombieConfig::default(),
            shap: ShapConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoresConfig {
    /// Linear proxy score; Altman's weights when unset. Skipped if its
    /// ratios are not panel features.
    pub z_spec: Option<LinearScoreSpec>,
    /// Model whose out-of-fold probabilities are reported alongside.
    pub model: String,
    pub percentiles: Vec<u32>,
    pub merton: Option<MertonColumns>,
}

impl Default for ScoresConfig {
    fn default() -> Self {
        Self {
            z_spec: None,
            model: "ma_boost_dd".into(),
            percentiles: (1..=10).collect(),
            merton: None,
        }
    }
}

/// Panel columns holding the Merton inputs, plus a common horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MertonColumns {
    pub asset_value: String,
    pub debt: String,
    pub drift: String,
    pub volatility: String,
    #[serde(default = "one")]
    pub horizon: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZombieConfig {
    /// Model whose out-of-fold risk defines the deciles.
    pub model: String,
    pub window: usize,
    pub survivors_only: bool,
    pub cutoff_scale: CutoffScale,
    pub cutoff_grid: Option<Vec<f64>>,
    /// Classic proxy to compare against, e.g. ICR below 1.
    pub indicator: Option<IndicatorRule>,
}

impl Default for ZombieConfig {
    fn default() -> Self {
        Self {
            model: "ma_boost_dd".into(),
            window: 3,
            survivors_only: false,
            cutoff_scale: CutoffScale::Quantile,
            cutoff_grid: None,
            indicator: None,
        }
    }
}

/// Firm-year indicator `feature < below`, read from the same year's record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorRule {
    pub feature: String,
    pub below: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapConfig {
    /// Model refit on the first training fold and explained on its test fold.
    pub model: String,
    pub max_rows: usize,
    pub background: usize,
    /// Give every feature's missingness its own player.
    pub missingness_players: bool,
    pub n_permutations: usize,
    /// Largest player count solved by full enumeration.
    pub exact_max_players: usize,
    /// Feature to group map; the panel's own labels when unset.
    pub groups: Option<BTreeMap<String, String>>,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self {
            model: "ma_boost_dd".into(),
            max_rows: 2000,
            background: 256,
            missingness_players: true,
            n_permutations: 60,
            exact_max_players: 10,
            groups: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.folds < 2 {
            bail!(ConfigError("folds must be >= 2".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for m in &self.models {
            if !seen.insert(m.name.as_str()) {
                bail!(ConfigError(format!("duplicate model name {}", m.name)));
            }
        }
        self.synth.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(())
    }

    pub fn model(&self, name: &str) -> anyhow::Result<&ModelSpec> {
        match self.models.iter().find(|m| m.name == name) {
            Some(m) => Ok(m),
            None => bail!(ConfigError(format!("model {name} is not configured"))),
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}
