mod common;

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rand::seq::SliceRandom;

use distress_core::zombie::{
    bacc_cutoff_scan, decile_thresholds, decile_transition_matrix, default_cutoff_grid, overlap_report, q_indicator,
    within_year_rank, zombie_flags, zombie_outcome_transitions, zombie_share_series, CutoffScale, RiskPanel, RiskRow,
};
use distress_core::Error;

fn row(firm: &str, year: i32, p: f64, failed: bool) -> RiskRow {
    RiskRow {
        firm_id: firm.to_string(),
        year,
        probability: p,
        failed,
        fold: None,
    }
}

/// Ten low-risk filler firms in each year so every year has enough
/// predictions; the filler ranking rotates each year so no filler firm
/// stays on top long enough to become a zombie itself.
fn with_filler(mut rows: Vec<RiskRow>, years: std::ops::RangeInclusive<i32>) -> RiskPanel {
    for y in years {
        for k in 0..10 {
            let rank = (k + y).rem_euclid(10);
            rows.push(row(&format!("filler{k}"), y, 0.01 * f64::from(rank + 1), false));
        }
    }
    RiskPanel::new("test", rows).unwrap()
}

fn flags_for(risk: &RiskPanel, firm: &str) -> Vec<(i32, bool)> {
    let th = decile_thresholds(risk, false).unwrap();
    let f = zombie_flags(risk, &th, 3).unwrap();
    risk.rows().iter().zip(f).filter(|(r, _)| r.firm_id == firm).map(|(r, f)| (r.year, f)).collect()
}

#[test]
fn zombie_window_examples() {
    let risk = with_filler((2012..=2014).map(|y| row("z", y, 0.9, false)).collect(), 2012..=2014);
    assert_eq!(flags_for(&risk, "z"), vec![(2012, false), (2013, false), (2014, true)]);

    let risk = with_filler(
        [0.9, 0.9, 0.001, 0.9].iter().enumerate().map(|(k, &p)| row("z", 2012 + k as i32, p, false)).collect(),
        2012..=2015,
    );
    assert!(flags_for(&risk, "z").iter().all(|(_, f)| !f));

    let risk = with_filler([2012, 2013, 2015].iter().map(|&y| row("z", y, 0.9, false)).collect(), 2012..=2015);
    assert!(flags_for(&risk, "z").iter().all(|(_, f)| !f));

    // rolling: a fourth year re-flags
    let risk = with_filler((2012..=2015).map(|y| row("z", y, 0.9, false)).collect(), 2012..=2015);
    assert_eq!(flags_for(&risk, "z").iter().filter(|(_, f)| *f).count(), 2);
}

#[test]
fn q_indicator_examples() {
    let mut rows: Vec<RiskRow> = (1..=100).map(|i| row(&format!("f{i}"), 2000, f64::from(i) / 100.0, false)).collect();
    rows[99].failed = true;
    let risk = RiskPanel::new("u", rows).unwrap();
    let th = decile_thresholds(&risk, false).unwrap();
    assert!((th.get(2000).unwrap()[8] - 0.90).abs() <= 0.01 + 1e-12);
    let q9 = q_indicator(&risk, &th, 9).unwrap();
    // 0.90 is exactly q_9: inclusive
    assert!(q9[89]);
    assert!(!q9[88]);
    // failing firm at the top is excluded
    assert!(!q9[99]);
    assert!(matches!(q_indicator(&risk, &th, 10), Err(Error::BadConfig(_))));

    let flat = RiskPanel::new("flat", (0..20).map(|i| row(&format!("f{i}"), 2001, 0.3, false)).collect()).unwrap();
    assert!(decile_thresholds(&flat, false).unwrap().get(2001).unwrap().iter().all(|&q| q == 0.3));

    let few = RiskPanel::new("few", (0..5).map(|i| row(&format!("f{i}"), 2001, 0.3, false)).collect()).unwrap();
    assert!(matches!(decile_thresholds(&few, false), Err(Error::TooFewPredictions(2001))));
}

#[test]
fn deciles_and_flags_match_brute_force() {
    let mut r = common::rng(2024);
    for trial in 0..1000 {
        let n_firms = r.random_range(12..40);
        let risk = common::random_risk_panel(&mut r, n_firms, 2000..2008);
        let Ok(th) = decile_thresholds(&risk, false) else {
            // a thin year; the oracle agrees it is thin
            let oracle = common::deciles_oracle(&risk);
            assert!(risk.years().iter().any(|y| risk.rows().iter().filter(|r| r.year == *y).count() < 10));
            assert!(!oracle.is_empty());
            continue;
        };
        let oracle = common::deciles_oracle(&risk);
        assert_eq!(th.by_year, oracle, "trial {trial}");
        let q9: BTreeMap<i32, f64> = oracle.iter().map(|(y, q)| (*y, q[8])).collect();
        let want = common::zombie_window_oracle(&risk, &q9, 3);
        assert_eq!(zombie_flags(&risk, &th, 3).unwrap(), want, "trial {trial}");
    }
}

#[test]
fn q_is_nested_across_deciles() {
    let mut r = common::rng(5);
    let risk = common::random_risk_panel(&mut r, 400, 2000..2010);
    let th = decile_thresholds(&risk, false).unwrap();
    let qs: Vec<Vec<bool>> = (1..=9).map(|j| q_indicator(&risk, &th, j).unwrap()).collect();
    for j in 1..9 {
        for i in 0..risk.len() {
            assert!(!qs[j][i] || qs[j - 1][i]);
        }
    }
}

#[test]
fn raising_a_prediction_never_unflags_that_firm() {
    let mut r = common::rng(6);
    for _ in 0..100 {
        let risk = common::random_risk_panel(&mut r, 60, 2000..2006);
        let Ok(th) = decile_thresholds(&risk, false) else { continue };
        let before = zombie_flags(&risk, &th, 3).unwrap();
        let i = r.random_range(0..risk.len());
        let mut rows = risk.rows().to_vec();
        rows[i].probability = (rows[i].probability + r.random::<f64>()).min(1.0);
        let firm = rows[i].firm_id.clone();
        let raised = RiskPanel::new("raised", rows).unwrap();
        let th2 = decile_thresholds(&raised, false).unwrap();
        let after = zombie_flags(&raised, &th2, 3).unwrap();
        for k in 0..risk.len() {
            if risk.rows()[k].firm_id == firm {
                assert!(!before[k] || after[k]);
            }
        }
        // with thresholds held fixed, no firm loses a flag
        let fixed = zombie_flags(&raised, &th, 3).unwrap();
        assert!(before.iter().zip(&fixed).all(|(b, a)| !b || *a));
    }
}

#[test]
fn transition_rows_sum_to_one() {
    let mut r = common::rng(7);
    for _ in 0..20 {
        let risk = common::random_risk_panel(&mut r, 300, 2000..2010);
        let th = decile_thresholds(&risk, false).unwrap();
        let m = decile_transition_matrix(&risk, &th).unwrap();
        for (a, row) in m.shares().iter().enumerate() {
            match row {
                Some(s) => assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12),
                None => assert_eq!(m.row_total(a), 0),
            }
        }
    }
}

#[test]
fn transition_single_firm_stays_on_top() {
    // static filler ranking: whatever shares the top bin with z stays there too
    let mut rows: Vec<RiskRow> = (2000..=2002).map(|y| row("z", y, 0.9, false)).collect();
    for y in 2000..=2002 {
        for k in 0..10 {
            rows.push(row(&format!("filler{k}"), y, 0.01 * f64::from(k + 1), false));
        }
    }
    let risk = RiskPanel::new("static", rows).unwrap();
    let th = decile_thresholds(&risk, false).unwrap();
    let m = decile_transition_matrix(&risk, &th).unwrap();
    assert_eq!(m.shares()[0], Some([1.0, 0.0, 0.0, 0.0, 0.0]));
}

#[test]
fn outcome_examples_and_sums() {
    let mut rows: Vec<RiskRow> = (2000..=2002).map(|y| row("z", y, 0.9, false)).collect();
    rows.push(row("z", 2003, 0.9, true));
    let risk = with_filler(rows, 2000..=2003);
    let th = decile_thresholds(&risk, false).unwrap();
    let flags = zombie_flags(&risk, &th, 3).unwrap();
    let out = zombie_outcome_transitions(&risk, &th, &flags).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!((out[0].year, out[0].fail, out[0].remain_zombie, out[0].lower_distress, out[0].no_distress), (2002, 1.0, 0.0, 0.0, 0.0));

    let mut r = common::rng(8);
    let risk = common::random_risk_panel(&mut r, 500, 2000..2012);
    let th = decile_thresholds(&risk, false).unwrap();
    let flags = zombie_flags(&risk, &th, 3).unwrap();
    for o in zombie_outcome_transitions(&risk, &th, &flags).unwrap() {
        assert!((o.fail + o.remain_zombie + o.lower_distress + o.no_distress - 1.0).abs() < 1e-12);
        assert!(o.n_zombies > 0);
    }
}

#[test]
fn share_series_examples() {
    let mut r = common::rng(9);
    let risk = common::random_risk_panel(&mut r, 200, 2000..2008);
    let none = zombie_share_series(&risk, &vec![false; risk.len()]).unwrap();
    assert!(none.iter().all(|s| s.share == 0.0 && s.zombies == 0));
    let all: Vec<bool> = risk.rows().iter().map(|r| r.year == 2003).collect();
    let s = zombie_share_series(&risk, &all).unwrap();
    for row in s {
        assert_eq!(row.share, if row.year == 2003 { 1.0 } else { 0.0 });
        assert_eq!(row.active, risk.rows().iter().filter(|r| r.year == row.year).count());
    }
    assert!(zombie_share_series(&risk, &[true]).is_err());
}

#[test]
fn overlap_examples_and_set_oracle() {
    let a = [true, true, false, false];
    let o = overlap_report(&a, &a).unwrap();
    assert_eq!((o.common_support, o.zombie_only, o.indicator_only), (1.0, 0.0, 0.0));
    let o = overlap_report(&a, &[false, false, true, true]).unwrap();
    assert_eq!((o.common_support, o.zombie_only, o.indicator_only), (0.0, 0.5, 0.5));
    assert!(matches!(overlap_report(&[false], &[false]), Err(Error::EmptyUnion)));

    let mut r = common::rng(10);
    let n = 5000;
    let flags: Vec<bool> = (0..n).map(|_| r.random_bool(0.1)).collect();
    let indicator: Vec<bool> = flags.iter().map(|&f| if r.random_bool(0.9) { f } else { r.random_bool(0.1) }).collect();
    let fs: HashSet<usize> = (0..n).filter(|&i| flags[i]).collect();
    let is: HashSet<usize> = (0..n).filter(|&i| indicator[i]).collect();
    let union = fs.union(&is).count() as f64;
    let o = overlap_report(&flags, &indicator).unwrap();
    assert_eq!(o.common_support, fs.intersection(&is).count() as f64 / union);
    assert_eq!(o.zombie_only, fs.difference(&is).count() as f64 / union);
    assert_eq!(o.indicator_only, is.difference(&fs).count() as f64 / union);
}

#[test]
fn constant_predictions_give_two_bacc_values() {
    let rows: Vec<RiskRow> = (0..40).map(|i| row(&format!("f{i}"), 2000, 0.5, i % 4 == 0)).collect();
    let risk = RiskPanel::new("flat", rows).unwrap();
    let grid: Vec<f64> = (1..100).map(|i| f64::from(i) / 100.0).collect();
    let scan = bacc_cutoff_scan(&risk, &grid, CutoffScale::Probability).unwrap();
    for (c, b) in scan.rows {
        assert_eq!(b, 0.5, "cutoff {c}");
    }
}

#[test]
fn shuffled_labels_give_chance_bacc() {
    for seed in 0..10 {
        let mut r = common::rng(100 + seed);
        let risk = common::random_risk_panel(&mut r, 3000, 2000..2010);
        let mut failed: Vec<bool> = risk.rows().iter().map(|r| r.failed).collect();
        failed.shuffle(&mut r);
        let rows = risk.rows().iter().zip(failed).map(|(x, f)| RiskRow { failed: f, ..x.clone() }).collect();
        let shuffled = RiskPanel::new("shuffled", rows).unwrap();
        for scale in [CutoffScale::Probability, CutoffScale::Quantile] {
            let scan = bacc_cutoff_scan(&shuffled, &default_cutoff_grid(), scale).unwrap();
            assert!(scan.best_bacc <= 0.55, "seed {seed}: {}", scan.best_bacc);
        }
    }
}

#[test]
fn scan_invariant_under_increasing_transform() {
    let mut r = common::rng(11);
    let risk = common::random_risk_panel(&mut r, 500, 2000..2010);
    let f = |p: f64| p.sqrt();
    let rows = risk.rows().iter().map(|x| RiskRow { probability: f(x.probability), ..x.clone() }).collect();
    let transformed = RiskPanel::new("sqrt", rows).unwrap();
    let grid = default_cutoff_grid();
    let mapped: Vec<f64> = grid.iter().map(|&c| f(c)).collect();
    let a = bacc_cutoff_scan(&risk, &grid, CutoffScale::Probability).unwrap();
    let b = bacc_cutoff_scan(&transformed, &mapped, CutoffScale::Probability).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.1, y.1);
    }
    // the quantile scale does not need the grid mapped at all
    assert_eq!(within_year_rank(&risk), within_year_rank(&transformed));
    let qa = bacc_cutoff_scan(&risk, &grid, CutoffScale::Quantile).unwrap();
    let qb = bacc_cutoff_scan(&transformed, &grid, CutoffScale::Quantile).unwrap();
    assert_eq!(qa, qb);
}

#[test]
fn scan_argmax_keeps_first_tie() {
    let rows: Vec<RiskRow> = (0..20).map(|i| row(&format!("f{i}"), 2000, if i < 5 { 0.9 } else { 0.1 }, i < 5)).collect();
    let risk = RiskPanel::new("sep", rows).unwrap();
    let scan = bacc_cutoff_scan(&risk, &default_cutoff_grid(), CutoffScale::Probability).unwrap();
    assert_eq!((scan.best_cutoff, scan.best_bacc), (0.5, 1.0));
}
