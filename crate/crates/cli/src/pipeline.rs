use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;

use distress_core::horse_race::{fit_spec, risk_panel, run_horse_race, ModelResult, ModelSpec};
use distress_core::metrics::missingness_odds_ratios;
use distress_core::panel::{lag_join, load_csv, save_csv, stratified_kfold_labels, FirmPanel, SupervisedTable};
use distress_core::scores::{
    distance_to_default, percentile_cutoff_report, write_percentile_csv, z_scores_for_table, LinearScoreSpec,
    PercentileRow, RiskDirection,
};
use distress_core::shapley::{
    group_shapley, shapley_exact, shapley_sampled, write_groups_csv, write_report_csv, AucGame, DEFAULT_BACKGROUND,
};
use distress_core::synth::{generate_panel, save_truth_csv, SIGNAL_GROUP};
use distress_core::zombie::{
    bacc_cutoff_scan, decile_thresholds, decile_transition_matrix, default_cutoff_grid, overlap_report,
    write_flags_csv, write_outcomes_csv, write_scan_csv, write_shares_csv, write_thresholds_csv,
    write_transition_csv, zombie_flags, zombie_outcome_transitions, zombie_share_series, CutoffScale,
};
use distress_core::{rng, Classifier};

use crate::config::{ConfigError, RunConfig};
use crate::plot;

pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub timing: bool,
    panel: Option<FirmPanel>,
    table: Option<SupervisedTable>,
    results: Vec<ModelResult>,
}

impl Run {
    pub fn new(cfg: RunConfig, out: PathBuf, timing: bool) -> anyhow::Result<Self> {
        cfg.validate()?;
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            cfg,
            out,
            timing,
            panel: None,
            table: None,
            results: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let p = self.path(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
    }

    /// The input panel, or a freshly synthesized one when no input is set.
    fn panel(&mut self) -> anyhow::Result<&FirmPanel> {
        if self.panel.is_none() {
            let panel = match &self.cfg.input {
                Some(path) => load_csv(path, None)?,
                None => {
                    let cfg = distress_core::synth::SynthConfig {
                        seed: self.cfg.seed,
                        ..self.cfg.synth.clone()
                    };
                    generate_panel(&cfg)?.panel
                }
            };
            self.panel = Some(panel);
        }
        Ok(self.panel.as_ref().unwrap())
    }

    fn table(&mut self) -> anyhow::Result<&SupervisedTable> {
        if self.table.is_none() {
            let t = lag_join(self.panel()?);
            self.table = Some(t);
        }
        Ok(self.table.as_ref().unwrap())
    }

    /// Out-of-fold results for `name`, cross-validating it alone if the
    /// full horse race has not run.
    fn result(&mut self, name: &str) -> anyhow::Result<ModelResult> {
        if let Some(r) = self.results.iter().find(|r| r.name == name) {
            return Ok(r.clone());
        }
        let spec = self.cfg.model(name)?.clone();
        let (folds, seed, thr) = (self.cfg.folds, self.cfg.seed, self.cfg.threshold);
        self.table()?;
        let table = self.table.as_ref().expect("table built above");
        let r = run_horse_race(table, &[spec], folds, seed, thr)?.remove(0);
        self.results.push(r.clone());
        Ok(r)
    }

    pub fn synth(&mut self) -> anyhow::Result<()> {
        let cfg = distress_core::synth::SynthConfig {
            seed: self.cfg.seed,
            ..self.cfg.synth.clone()
        };
        let s = generate_panel(&cfg)?;
        save_csv(&s.panel, self.path("panel.csv"))?;
        save_truth_csv(&s.truth, self.path("panel_truth.csv"))?;
        self.panel = Some(s.panel);
        self.table = None;
        Ok(())
    }

    pub fn cv(&mut self) -> anyhow::Result<()> {
        let (folds, seed, thr) = (self.cfg.folds, self.cfg.seed, self.cfg.threshold);
        let specs = self.cfg.models.clone();
        let table = self.table()?.clone();
        let results = run_horse_race(&table, &specs, folds, seed, thr)?;
        distress_core::horse_race::write_horse_race_csv(&results, self.timing, self.create("horse_race.csv")?)?;
        let mut w = csv_writer(self.create("oof_predictions.csv")?);
        w.write_record(["model", "firm_id", "year", "fold", "probability", "failed"])?;
        for r in &results {
            for o in &r.out_of_fold {
                w.write_record([
                    r.name.clone(),
                    table.firm_ids[o.row].clone(),
                    table.years[o.row].to_string(),
                    o.fold.to_string(),
                    o.probability.to_string(),
                    u8::from(table.labels[o.row]).to_string(),
                ])?;
            }
        }
        w.flush()?;
        self.results = results;

        match missingness_odds_ratios(self.panel()?, 3) {
            Ok(rows) => {
                let mut w = csv_writer(self.create("missingness_odds.csv")?);
                w.write_record(["feature", "odds_ratio", "coefficient", "flagged_share", "chi2", "reject_1pct"])?;
                for r in rows {
                    w.write_record([
                        r.feature,
                        r.odds_ratio.to_string(),
                        r.coefficient.to_string(),
                        r.flagged_share.to_string(),
                        r.chi_squared.statistic.to_string(),
                        u8::from(r.chi_squared.reject_1pct).to_string(),
                    ])?;
                }
                w.flush()?;
            }
            Err(e) => eprintln!("skipping missingness odds ratios: {e}"),
        }
        Ok(())
    }

    pub fn scores(&mut self) -> anyhow::Result<()> {
        let percentiles = self.cfg.scores.percentiles.clone();
        let model_name = self.cfg.scores.model.clone();
        let merton = self.cfg.scores.merton.clone();
        let result = self.result(&model_name)?;
        self.table()?;
        let table = self.table.as_ref().expect("table built above");
        let mut reports: Vec<(String, Vec<PercentileRow>)> = Vec::new();

        let spec = match &self.cfg.scores.z_spec {
            Some(s) => Some(s.clone()),
            None => default_z_spec(table),
        };
        match spec {
            Some(spec) => {
                let (rows, z) = z_scores_for_table(table, &spec)?;
                let labels: Vec<bool> = rows.iter().map(|&i| table.labels[i]).collect();
                let rep = percentile_cutoff_report(&z, &labels, RiskDirection::LowIsRisky, &percentiles, &z)?;
                reports.push(("z_score".into(), rep));
            }
            None => eprintln!("skipping z-score: no configured ratios among the panel features"),
        }

        if let Some(m) = merton {
            let col = |name: &str| {
                table
                    .feature_names
                    .iter()
                    .position(|f| f == name)
                    .ok_or_else(|| ConfigError(format!("merton column {name} not among features")))
            };
            let (v, d, mu, s) = (col(&m.asset_value)?, col(&m.debt)?, col(&m.drift)?, col(&m.volatility)?);
            let mut dtd = Vec::new();
            let mut labels = Vec::new();
            for (r, &y) in table.features.iter().zip(&table.labels) {
                if let (Some(v), Some(d), Some(mu), Some(s)) = (r[v], r[d], r[mu], r[s]) {
                    if let Ok(x) = distance_to_default(v, d, mu, s, m.horizon) {
                        dtd.push(x);
                        labels.push(y);
                    }
                }
            }
            if dtd.is_empty() {
                eprintln!("skipping distance to default: no row has valid Merton inputs");
            } else {
                let rep = percentile_cutoff_report(&dtd, &labels, RiskDirection::LowIsRisky, &percentiles, &dtd)?;
                reports.push(("distance_to_default".into(), rep));
            }
        }

        let probs: Vec<f64> = result.out_of_fold.iter().map(|o| o.probability).collect();
        let labels: Vec<bool> = result.out_of_fold.iter().map(|o| table.labels[o.row]).collect();
        let rep = percentile_cutoff_report(&probs, &labels, RiskDirection::HighIsRisky, &percentiles, &probs)?;
        reports.push((result.name.clone(), rep));
        write_percentile_csv(&reports, self.create("percentile_report.csv")?)?;
        Ok(())
    }

    pub fn zombie(&mut self) -> anyhow::Result<()> {
        let zc = self.cfg.zombie.clone();
        let result = self.result(&zc.model)?;
        self.table()?;
        let table = self.table.as_ref().expect("table built above");
        let risk = risk_panel(table, &result)?;
        let th = decile_thresholds(&risk, zc.survivors_only)?;
        let flags = zombie_flags(&risk, &th, zc.window)?;
        write_thresholds_csv(&th, self.create("decile_thresholds.csv")?)?;
        write_flags_csv(&risk, &flags, self.create("zombie_flags.csv")?)?;
        write_shares_csv(&zombie_share_series(&risk, &flags)?, self.create("zombie_shares.csv")?)?;
        write_transition_csv(&decile_transition_matrix(&risk, &th)?, self.create("decile_transitions.csv")?)?;
        write_outcomes_csv(
            &zombie_outcome_transitions(&risk, &th, &flags)?,
            self.create("zombie_outcomes.csv")?,
        )?;
        let grid = zc.cutoff_grid.clone().unwrap_or_else(default_cutoff_grid);
        let scan = bacc_cutoff_scan(&risk, &grid, zc.cutoff_scale)?;
        write_scan_csv(&scan, self.create("bacc_scan.csv")?)?;
        let best = scan.rows.iter().position(|r| r.0 == scan.best_cutoff);
        let x_label = match zc.cutoff_scale {
            CutoffScale::Quantile => "cutoff (within-year quantile of predicted risk)",
            CutoffScale::Probability => "cutoff (predicted probability)",
        };
        let svg = plot::line_chart("BACC at different cutoffs", x_label, "BACC", &scan.rows, best);
        fs::write(self.path("bacc_scan.svg"), svg)?;

        if let Some(rule) = &zc.indicator {
            let j = table
                .feature_names
                .iter()
                .position(|f| *f == rule.feature)
                .ok_or_else(|| ConfigError(format!("indicator feature {} not among features", rule.feature)))?;
            let panel = self.panel.as_ref().unwrap();
            let current: std::collections::HashMap<(&str, i32), Option<f64>> = panel
                .records()
                .iter()
                .map(|r| ((r.firm_id.as_str(), r.year), r.features[j]))
                .collect();
            let indicator: Vec<bool> = risk
                .rows()
                .iter()
                .map(|r| {
                    current
                        .get(&(r.firm_id.as_str(), r.year))
                        .copied()
                        .flatten()
                        .is_some_and(|v| v < rule.below)
                })
                .collect();
            let o = overlap_report(&flags, &indicator)?;
            let mut w = csv_writer(self.create("zombie_overlap.csv")?);
            w.write_record(["common_support", "zombie_only", "indicator_only", "n_union"])?;
            w.write_record([
                o.common_support.to_string(),
                o.zombie_only.to_string(),
                o.indicator_only.to_string(),
                o.n_union.to_string(),
            ])?;
            w.flush()?;
        }
        Ok(())
    }

    pub fn shap(&mut self) -> anyhow::Result<()> {
        let sc = self.cfg.shap.clone();
        let spec: ModelSpec = self.cfg.model(&sc.model)?.clone();
        let (folds, seed) = (self.cfg.folds, self.cfg.seed);
        let groups = match &sc.groups {
            Some(g) => Some(g.clone()),
            None => self.panel()?.group_labels().cloned(),
        };
        self.table()?;
        let table = self.table.as_ref().expect("table built above");
        let plan = stratified_kfold_labels(&table.labels, folds, seed)?;
        let (tr, te) = plan.split(0);
        let train = table.subset(&tr);
        let model = fit_spec(&spec, &train, rng::derive_seed(seed, "fold_fit", 0))?;

        let mut eval_rows = te.clone();
        if eval_rows.len() > sc.max_rows {
            let mut r = rng::stream(seed, "shap_rows", 0);
            rng::shuffle(&mut r, &mut eval_rows);
            eval_rows.truncate(sc.max_rows);
            eval_rows.sort_unstable();
        }
        let eval = table.subset(&eval_rows);
        let p = table.n_features();
        let players = if sc.missingness_players {
            AucGame::split_players(p)
        } else {
            AucGame::feature_players(p)
        };
        let background = if sc.background == 0 { DEFAULT_BACKGROUND } else { sc.background };
        let model_ref: &dyn Classifier = model.as_ref();
        let game = AucGame::new(model_ref, &eval.features, &eval.labels, &train.features, background, players, seed)?;
        let names = game.player_names(&table.feature_names);
        let report = if names.len() <= sc.exact_max_players {
            shapley_exact(&game, Some(names))?
        } else {
            shapley_sampled(&game, sc.n_permutations, seed, Some(names))?
        };
        let feature_groups: BTreeMap<String, String> =
            groups.unwrap_or_else(|| table.feature_names.iter().map(|f| (f.clone(), f.clone())).collect());
        let player_groups = game.player_groups(&table.feature_names, &feature_groups);
        write_report_csv(&report, Some(&player_groups), self.create("shapley.csv")?)?;
        let grouped = group_shapley(&report, &player_groups)?;
        write_groups_csv(&grouped, self.create("shapley_groups.csv")?)?;

        let mut bars: Vec<(String, f64)> = report.players.iter().cloned().zip(report.phi.iter().copied()).collect();
        bars.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
        bars.truncate(20);
        fs::write(
            self.path("shapley.svg"),
            plot::bar_chart("Shapley values (AUC attribution)", &bars),
        )?;
        fs::write(
            self.path("shapley_groups.svg"),
            plot::bar_chart("Shapley values by group", &grouped),
        )?;
        Ok(())
    }

    /// Record the resolved configuration next to the artifacts.
    pub fn write_manifest(&self) -> anyhow::Result<()> {
        let mut w = self.create("run_config.toml")?;
        w.write_all(toml::to_string(&self.cfg)?.as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

/// Altman's ratios when present; otherwise an equal-weight score over the
/// panel's distress-group features, if it has such labels.
fn default_z_spec(table: &SupervisedTable) -> Option<LinearScoreSpec> {
    let altman = LinearScoreSpec::altman();
    if altman.resolve(&table.feature_names).is_ok() {
        return Some(altman);
    }
    let labels = table.group_labels.as_ref()?;
    let names: Vec<String> = table
        .feature_names
        .iter()
        .filter(|f| labels.get(*f).is_some_and(|g| g == SIGNAL_GROUP))
        .cloned()
        .collect();
    if names.is_empty() {
        return None;
    }
    let weights = vec![1.0; names.len()];
    LinearScoreSpec::new(names, weights).ok()
}
