//! Econometric and ensemble baselines: ridge-able logit, logit-LASSO path
//! with EBIC selection, imputation, and convex stacking.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::panel::{FirmPanel, SupervisedTable};
use crate::tree_boost::sigmoid;

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_GRAD_TOL: f64 = 1e-8;
const SEPARATION_NORM: f64 = 1e6;
/// Unpenalized fits pushing some fitted probability this close to 0 or 1
/// (|η| beyond it) are treated as quasi-separated.
const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl LogitModel {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

impl Classifier for LogitModel {
    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn predict_proba(&self, row: &[Option<f64>]) -> Result<f64> {
        if row.len() != self.coefficients.len() {
            return Err(Error::ArityMismatch {
                expected: self.coefficients.len(),
                found: row.len(),
            });
        }
        let mut eta = self.intercept;
        for (b, x) in self.coefficients.iter().zip(row) {
            eta += b * x.ok_or(Error::MissingInput)?;
        }
        Ok(sigmoid(eta))
    }
}

fn dense_rows(table: &SupervisedTable) -> Result<Vec<Vec<f64>>> {
    table
        .features
        .iter()
        .map(|r| r.iter().map(|v| v.ok_or(Error::MissingInput)).collect())
        .collect()
}

fn check_both_labels(labels: &[bool]) -> Result<()> {
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

/// Log-likelihood of a logit with linear predictors `eta`.
fn log_likelihood(eta: &[f64], labels: &[bool]) -> f64 {
    eta.iter()
        .zip(labels)
        .map(|(&e, &y)| {
            // log σ(e) = −log(1 + e^{−e}), computed stably.
            let log1pexp = |t: f64| if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
            if y {
                -log1pexp(-e)
            } else {
                -log1pexp(e)
            }
        })
        .sum()
}

fn solve_spd(h: DMatrix<f64>, g: DVector<f64>) -> DVector<f64> {
    match h.clone().cholesky() {
        Some(c) => c.solve(&g),
        None => h
            .svd(true, true)
            .solve(&g, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(g.len())),
    }
}

/// Maximize ℓ(θ) − ½·l2·‖β‖² by damped Newton (intercept unpenalized).
///
/// Stops when the per-observation gradient ∞-norm drops below 1e-8, when
/// no step improves the objective, or after 100 steps. Without a penalty, a
/// diverging, unconverged or (quasi-)separating fit is reported as
/// separation.
pub fn fit_logit(table: &SupervisedTable, l2: f64) -> Result<LogitModel> {
    if !(l2 >= 0.0) {
        return Err(Error::BadConfig("l2 must be nonnegative".into()));
    }
    check_both_labels(&table.labels)?;
    let x = dense_rows(table)?;
    let n = x.len();
    let p = table.n_features();
    let d = p + 1;
    let y: Vec<f64> = table.labels.iter().map(|&b| f64::from(u8::from(b))).collect();
    let ybar = y.iter().sum::<f64>() / n as f64;

    let mut theta = vec![0.0; d];
    theta[0] = (ybar / (1.0 - ybar)).ln();
    let eta_of = |theta: &[f64]| -> Vec<f64> {
        x.iter()
            .map(|r| theta[0] + r.iter().zip(&theta[1..]).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    };
    let objective = |theta: &[f64], eta: &[f64]| {
        log_likelihood(eta, &table.labels) - 0.5 * l2 * theta[1..].iter().map(|b| b * b).sum::<f64>()
    };
    let mut eta = eta_of(&theta);
    let mut obj = objective(&theta, &eta);
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITER {
        let mut grad = DVector::<f64>::zeros(d);
        let mut hess = DMatrix::<f64>::zeros(d, d);
        for i in 0..n {
            let pi = sigmoid(eta[i]);
            let resid = y[i] - pi;
            let w = pi * (1.0 - pi);
            grad[0] += resid;
            hess[(0, 0)] += w;
            for j in 0..p {
                let xj = x[i][j];
                grad[j + 1] += resid * xj;
                hess[(0, j + 1)] += w * xj;
                for k in j..p {
                    hess[(j + 1, k + 1)] += w * xj * x[i][k];
                }
            }
        }
        for j in 1..d {
            grad[j] -= l2 * theta[j];
            hess[(j, j)] += l2;
        }
        for j in 0..d {
            for k in 0..j {
                hess[(j, k)] = hess[(k, j)];
            }
        }
        if grad.amax() < NEWTON_GRAD_TOL * n as f64 {
            converged = true;
            break;
        }
        let step = solve_spd(hess, grad);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let cand_eta = eta_of(&cand);
            let cand_obj = objective(&cand, &cand_eta);
            if cand_obj > obj {
                theta = cand;
                eta = cand_eta;
                obj = cand_obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let norm = theta[1..].iter().map(|b| b * b).sum::<f64>().sqrt();
        if l2 == 0.0 && norm > SEPARATION_NORM {
            return Err(Error::Separation(norm));
        }
        if !accepted {
            // No ascent along the Newton direction: numerically at the optimum.
            converged = true;
            break;
        }
    }
    if l2 == 0.0 {
        // The unpenalized MLE cannot exist when its own linear predictor
        // separates the classes; the gradient then vanishes only at infinity.
        let norm = theta[1..].iter().map(|b| b * b).sum::<f64>().sqrt();
        let min_pos = eta.iter().zip(&table.labels).filter(|(_, y)| **y).map(|(e, _)| *e).fold(f64::INFINITY, f64::min);
        let max_neg = eta.iter().zip(&table.labels).filter(|(_, y)| !**y).map(|(e, _)| *e).fold(f64::NEG_INFINITY, f64::max);
        let extreme = eta.iter().any(|e| e.abs() > SEPARATION_ETA);
        if !converged || (p > 0 && (min_pos > max_neg || extreme)) {
            return Err(Error::Separation(norm));
        }
    }
    Ok(LogitModel {
        intercept: theta[0],
        coefficients: theta[1..].to_vec(),
        feature_names: table.feature_names.clone(),
    })
}

/// Column means and population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>], p: usize) -> Self {
        let n = x.len().max(1) as f64;
        let means: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scales = (0..p)
            .map(|j| (x.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Self { means, scales }
    }

    /// Standardized column-major copy; constant columns become zeros.
    fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (0..self.means.len())
            .map(|j| {
                x.iter()
                    .map(|r| {
                        if self.scales[j] > 0.0 {
                            (r[j] - self.means[j]) / self.scales[j]
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Map standardized (intercept, slopes) back to the original scale.
    fn to_original(&self, b0: f64, beta: &[f64]) -> (f64, Vec<f64>) {
        let mut intercept = b0;
        let mut coef = vec![0.0; beta.len()];
        for j in 0..beta.len() {
            if self.scales[j] > 0.0 {
                coef[j] = beta[j] / self.scales[j];
                intercept -= coef[j] * self.means[j];
            }
        }
        (intercept, coef)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    /// Descending penalty grid.
    pub lambdas: Vec<f64>,
    /// Fitted models on the original feature scale.
    pub models: Vec<LogitModel>,
    /// Slopes on the internal standardized scale, per λ.
    pub standardized: Vec<Vec<f64>>,
    pub log_likelihood: Vec<f64>,
    pub support_size: Vec<usize>,
    pub ebic: Vec<f64>,
    pub ebic_gamma: f64,
    pub selected: usize,
    pub standardizer: Standardizer,
}

/// One row of the predictor ranking export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPredictor {
    pub rank: usize,
    pub feature: String,
    /// Index along the path where the coefficient first becomes nonzero.
    pub entry_index: Option<usize>,
    pub selected_coefficient: f64,
}

impl LassoPath {
    pub fn selected_model(&self) -> &LogitModel {
        &self.models[self.selected]
    }

    /// Indices of nonzero slopes at the selected penalty.
    pub fn selected_support(&self) -> Vec<usize> {
        self.standardized[self.selected]
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    /// Rank by order of entry along the path, then by |standardized β| at
    /// the selected penalty; features that never enter come last.
    pub fn ranking(&self) -> Vec<RankedPredictor> {
        let p = self.standardizer.means.len();
        let names = &self.models[0].feature_names;
        let mut items: Vec<(Option<usize>, f64, usize)> = (0..p)
            .map(|j| {
                let entry = self.standardized.iter().position(|b| b[j] != 0.0);
                (entry, self.standardized[self.selected][j].abs(), j)
            })
            .collect();
        items.sort_by(|a, b| {
            let ka = a.0.unwrap_or(usize::MAX);
            let kb = b.0.unwrap_or(usize::MAX);
            ka.cmp(&kb).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2))
        });
        items
            .into_iter()
            .enumerate()
            .map(|(r, (entry, _, j))| RankedPredictor {
                rank: r + 1,
                feature: names[j].clone(),
                entry_index: entry,
                selected_coefficient: self.models[self.selected].coefficients[j],
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// EBIC = −2ℓ + k·ln n + 2·γ·k·ln p.
pub fn ebic(log_likelihood: f64, support: usize, n: usize, p: usize, gamma: f64) -> f64 {
    let k = support as f64;
    -2.0 * log_likelihood + k * (n as f64).ln() + 2.0 * gamma * k * (p as f64).ln()
}

/// Largest useful penalty: max_j |x̃_j'(y − ȳ)| / n on standardized columns.
pub fn lambda_max(table: &SupervisedTable) -> Result<f64> {
    let x = dense_rows(table)?;
    let st = Standardizer::fit(&x, table.n_features());
    let cols = st.transform(&x);
    let n = x.len() as f64;
    let y: Vec<f64> = table.labels.iter().map(|&b| f64::from(u8::from(b))).collect();
    let ybar = y.iter().sum::<f64>() / n;
    Ok(cols
        .iter()
        .map(|c| (c.iter().zip(&y).map(|(a, yi)| a * (yi - ybar)).sum::<f64>() / n).abs())
        .fold(0.0, f64::max))
}

/// Conventional grid: `n_points` log-spaced values from λ_max down to
/// `ratio`·λ_max.
pub fn default_lambda_grid(table: &SupervisedTable, n_points: usize, ratio: f64) -> Result<Vec<f64>> {
    let lmax = lambda_max(table)?;
    if n_points <= 1 {
        return Ok(vec![lmax]);
    }
    Ok((0..n_points)
        .map(|i| lmax * ratio.powf(i as f64 / (n_points - 1) as f64))
        .collect())
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

struct LassoProblem<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    labels: &'a [bool],
}

impl LassoProblem<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn eta(&self, b0: f64, beta: &[f64]) -> Vec<f64> {
        let mut eta = vec![b0; self.n()];
        for (c, &b) in self.cols.iter().zip(beta) {
            if b != 0.0 {
                for (e, x) in eta.iter_mut().zip(c) {
                    *e += b * x;
                }
            }
        }
        eta
    }

    fn objective(&self, b0: f64, beta: &[f64], lambda: f64) -> f64 {
        -log_likelihood(&self.eta(b0, beta), self.labels) / self.n() as f64
            + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Largest violation of the stationarity conditions.
    fn kkt_violation(&self, b0: f64, beta: &[f64], lambda: f64) -> f64 {
        let eta = self.eta(b0, beta);
        let n = self.n() as f64;
        let resid: Vec<f64> = eta.iter().zip(self.y).map(|(&e, &y)| y - sigmoid(e)).collect();
        let mut worst = (resid.iter().sum::<f64>() / n).abs();
        for (c, &b) in self.cols.iter().zip(beta) {
            let score = c.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / n;
            let v = if b == 0.0 {
                (score.abs() - lambda).max(0.0)
            } else {
                (score - lambda * b.signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Proximal Newton with coordinate descent on each quadratic model.
    fn solve(&self, lambda: f64, b0: &mut f64, beta: &mut [f64]) {
        let n = self.n();
        let nf = n as f64;
        let mut obj = self.objective(*b0, beta, lambda);
        for _ in 0..500 {
            if self.kkt_violation(*b0, beta, lambda) < 1e-10 {
                return;
            }
            let eta = self.eta(*b0, beta);
            let w: Vec<f64> = eta
                .iter()
                .map(|&e| {
                    let p = sigmoid(e);
                    (p * (1.0 - p)).max(1e-10)
                })
                .collect();
            let z: Vec<f64> = eta
                .iter()
                .zip(self.y)
                .zip(&w)
                .map(|((&e, &y), &wi)| e + (y - sigmoid(e)) / wi)
                .collect();
            let mut nb0 = *b0;
            let mut nbeta = beta.to_vec();
            let mut r: Vec<f64> = z.iter().zip(&eta).map(|(zi, e)| zi - e).collect();
            let wsum: f64 = w.iter().sum();
            let curv: Vec<f64> = self
                .cols
                .iter()
                .map(|c| c.iter().zip(&w).map(|(x, wi)| wi * x * x).sum::<f64>() / nf)
                .collect();
            for _sweep in 0..10_000 {
                let mut max_delta: f64 = 0.0;
                let d0 = r.iter().zip(&w).map(|(ri, wi)| ri * wi).sum::<f64>() / wsum;
                if d0 != 0.0 {
                    nb0 += d0;
                    r.iter_mut().for_each(|ri| *ri -= d0);
                    max_delta = max_delta.max(d0.abs());
                }
                for (j, c) in self.cols.iter().enumerate() {
                    if curv[j] <= 0.0 {
                        continue;
                    }
                    let rho = c.iter().zip(&r).zip(&w).map(|((x, ri), wi)| wi * x * ri).sum::<f64>() / nf
                        + curv[j] * nbeta[j];
                    let new = soft_threshold(rho, lambda) / curv[j];
                    let delta = new - nbeta[j];
                    if delta != 0.0 {
                        for (ri, x) in r.iter_mut().zip(c) {
                            *ri -= delta * x;
                        }
                        nbeta[j] = new;
                        max_delta = max_delta.max(delta.abs());
                    }
                }
                if max_delta < 1e-14 {
                    break;
                }
            }
            // Backtracking along the proximal Newton direction.
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..50 {
                let cb0 = *b0 + t * (nb0 - *b0);
                let cbeta: Vec<f64> = beta.iter().zip(&nbeta).map(|(o, nw)| o + t * (nw - o)).collect();
                let cobj = self.objective(cb0, &cbeta, lambda);
                if cobj <= obj {
                    moved = cobj < obj || t == 1.0;
                    *b0 = cb0;
                    beta.copy_from_slice(&cbeta);
                    obj = cobj;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                return;
            }
        }
    }
}

/// L1-penalized logit path over `lambdas` (sorted descending internally),
/// warm-started, with EBIC selection.
pub fn fit_logit_lasso(table: &SupervisedTable, lambdas: &[f64], ebic_gamma: f64) -> Result<LassoPath> {
    check_both_labels(&table.labels)?;
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::BadConfig("lambda grid must be nonempty and nonnegative".into()));
    }
    let x = dense_rows(table)?;
    let p = table.n_features();
    let n = x.len();
    let st = Standardizer::fit(&x, p);
    let cols = st.transform(&x);
    let y: Vec<f64> = table.labels.iter().map(|&b| f64::from(u8::from(b))).collect();
    let problem = LassoProblem {
        cols: &cols,
        y: &y,
        labels: &table.labels,
    };
    let mut grid = lambdas.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));

    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut b0 = (ybar / (1.0 - ybar)).ln();
    let mut beta = vec![0.0; p];
    let mut path = LassoPath {
        lambdas: grid.clone(),
        models: Vec::with_capacity(grid.len()),
        standardized: Vec::with_capacity(grid.len()),
        log_likelihood: Vec::with_capacity(grid.len()),
        support_size: Vec::with_capacity(grid.len()),
        ebic: Vec::with_capacity(grid.len()),
        ebic_gamma,
        selected: 0,
        standardizer: st.clone(),
    };
    for &lambda in &grid {
        problem.solve(lambda, &mut b0, &mut beta);
        let ll = log_likelihood(&problem.eta(b0, &beta), &table.labels);
        let k = beta.iter().filter(|b| **b != 0.0).count();
        let (intercept, coefficients) = st.to_original(b0, &beta);
        path.models.push(LogitModel {
            intercept,
            coefficients,
            feature_names: table.feature_names.clone(),
        });
        path.standardized.push(beta.clone());
        path.log_likelihood.push(ll);
        path.support_size.push(k);
        path.ebic.push(ebic(ll, k, n, p, ebic_gamma));
    }
    path.selected = path
        .ebic
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImputeStrategy {
    /// Fill every missing entry with 1e20.
    OutOfRange,
    /// Fill with the feature's observed median (lower middle for even counts).
    Median,
}

pub const OUT_OF_RANGE_VALUE: f64 = 1e20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    pub strategy: ImputeStrategy,
    pub fill: Vec<f64>,
}

pub fn lower_median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values[(values.len() - 1) / 2])
}

impl Imputer {
    pub fn fit(rows: &[Vec<Option<f64>>], feature_names: &[String], strategy: ImputeStrategy) -> Result<Self> {
        let fill = match strategy {
            ImputeStrategy::OutOfRange => vec![OUT_OF_RANGE_VALUE; feature_names.len()],
            ImputeStrategy::Median => feature_names
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    let mut obs: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
                    lower_median(&mut obs).ok_or_else(|| Error::AllMissingFeature(name.clone()))
                })
                .collect::<Result<_>>()?,
        };
        Ok(Self { strategy, fill })
    }

    pub fn apply_row(&self, row: &[Option<f64>]) -> Vec<Option<f64>> {
        row.iter()
            .zip(&self.fill)
            .map(|(v, f)| Some(v.unwrap_or(*f)))
            .collect()
    }

    pub fn apply(&self, table: &SupervisedTable) -> SupervisedTable {
        let mut out = table.clone();
        out.features = table.features.iter().map(|r| self.apply_row(r)).collect();
        out
    }
}

/// Fill every missing entry of the panel; the returned panel has no missing values.
pub fn impute(panel: &FirmPanel, strategy: ImputeStrategy) -> Result<FirmPanel> {
    let rows: Vec<Vec<Option<f64>>> = panel.records().iter().map(|r| r.features.clone()).collect();
    let imp = Imputer::fit(&rows, panel.feature_names(), strategy)?;
    Ok(panel.map_features(|f| imp.apply_row(f)))
}

/// A classifier applied after a fitted imputation.
pub struct ImputedModel<M> {
    pub imputer: Imputer,
    pub model: M,
}

impl<M: Classifier> Classifier for ImputedModel<M> {
    fn n_features(&self) -> usize {
        self.model.n_features()
    }

    fn predict_proba(&self, row: &[Option<f64>]) -> Result<f64> {
        self.model.predict_proba(&self.imputer.apply_row(row))
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn stack_loss(base: &[Vec<f64>], labels: &[bool], w: &[f64]) -> f64 {
    let n = labels.len() as f64;
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let q: f64 = base.iter().zip(w).map(|(b, wk)| wk * b[i]).sum();
        loss -= if y { q.ln() } else { (1.0 - q).ln() };
    }
    loss / n
}

fn stack_grad(base: &[Vec<f64>], labels: &[bool], w: &[f64]) -> Vec<f64> {
    let n = labels.len() as f64;
    let mut g = vec![0.0; w.len()];
    for (i, &y) in labels.iter().enumerate() {
        let q: f64 = base.iter().zip(w).map(|(b, wk)| wk * b[i]).sum();
        let d = if y { -1.0 / q } else { 1.0 / (1.0 - q) };
        for (gk, b) in g.iter_mut().zip(base) {
            *gk += d * b[i];
        }
    }
    g.iter_mut().for_each(|x| *x /= n);
    g
}

/// Simplex weights minimizing the log-loss of Σ w_k·p_k.
///
/// `base[k]` holds model k's cross-fitted probabilities. Projected gradient
/// with backtracking; stops after 1,000 iterations or when the projected
/// gradient step is shorter than 1e-8.
pub fn fit_stacker(base: &[Vec<f64>], labels: &[bool]) -> Result<Vec<f64>> {
    if base.len() < 2 {
        return Err(Error::BadConfig("stacking needs at least two base models".into()));
    }
    if base.iter().any(|b| b.len() != labels.len()) {
        return Err(Error::LengthMismatch("base predictions vs labels".into()));
    }
    if base.iter().flatten().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::BadDomain("base probabilities must lie in (0, 1)".into()));
    }
    let m = base.len();
    let mut w = vec![1.0 / m as f64; m];
    let mut loss = stack_loss(base, labels, &w);
    let mut step = 1.0;
    for _ in 0..1000 {
        let g = stack_grad(base, labels, &w);
        let full: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - b).collect();
        let pg = project_simplex(&full);
        let gap = pg.iter().zip(&w).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if gap < 1e-8 {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let cand = project_simplex(&w.iter().zip(&g).map(|(a, b)| a - step * b).collect::<Vec<_>>());
            let cand_loss = stack_loss(base, labels, &cand);
            let decrease: f64 = g.iter().zip(cand.iter().zip(&w)).map(|(gk, (c, o))| gk * (c - o)).sum();
            let dist2: f64 = cand.iter().zip(&w).map(|(c, o)| (c - o).powi(2)).sum();
            if cand_loss <= loss + decrease + dist2 / (2.0 * step) {
                w = cand;
                loss = cand_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    Ok(w)
}

/// Convex combination of fitted base classifiers.
pub struct StackedModel {
    pub bases: Vec<Box<dyn Classifier>>,
    pub weights: Vec<f64>,
}

impl Classifier for StackedModel {
    fn n_features(&self) -> usize {
        self.bases.first().map_or(0, |b| b.n_features())
    }

    fn predict_proba(&self, row: &[Option<f64>]) -> Result<f64> {
        let mut q = 0.0;
        for (b, w) in self.bases.iter().zip(&self.weights) {
            if *w > 0.0 {
                q += w * b.predict_proba(row)?;
            }
        }
        Ok(q)
    }
}
