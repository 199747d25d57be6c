use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folds::grouped_stratified_folds;
use crate::metrics::auroc;

use super::vocab::CountMatrix;

pub const DEFAULT_MAX_ITER: usize = 2000;
pub const DEFAULT_GRID: [f64; 4] = [0.001, 0.01, 0.1, 1.0];

/// L2-regularized logistic model over term counts. `coefficients[i]` belongs
/// to `tokens[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRiskModel {
    pub tokens: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub regularization: f64,
}

impl LinearRiskModel {
    pub fn coefficient(&self, token: &str) -> Option<f64> {
        self.tokens
            .iter()
            .position(|t| t == token)
            .map(|i| self.coefficients[i])
    }

    pub fn logit(&self, row: &[(usize, f64)]) -> f64 {
        self.intercept
            + row
                .iter()
                .map(|&(c, v)| self.coefficients[c] * v)
                .sum::<f64>()
    }

    pub fn predict(&self, row: &[(usize, f64)]) -> f64 {
        logistic(self.logit(row))
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop once the max-norm of the gradient falls below this.
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: DEFAULT_MAX_ITER,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Mean log-loss plus `(λ/2)·‖w‖²`; the intercept is not penalized.
pub fn regularized_loss(x: &CountMatrix, y: &[bool], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = x.n_rows() as f64;
    let data: f64 = x
        .rows
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let z = b + row.iter().map(|&(c, v)| w[c] * v).sum::<f64>();
            softplus(z) - if yi { z } else { 0.0 }
        })
        .sum::<f64>()
        / n;
    data + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

fn gradient(x: &CountMatrix, y: &[bool], w: &[f64], b: f64, lambda: f64) -> (Vec<f64>, f64) {
    let n = x.n_rows() as f64;
    let mut gw: Vec<f64> = w.iter().map(|v| lambda * v).collect();
    let mut gb = 0.0;
    for (row, &yi) in x.rows.iter().zip(y) {
        let z = b + row.iter().map(|&(c, v)| w[c] * v).sum::<f64>();
        let r = (logistic(z) - if yi { 1.0 } else { 0.0 }) / n;
        gb += r;
        for &(c, v) in row {
            gw[c] += r * v;
        }
    }
    (gw, gb)
}

/// Full-batch gradient descent with Armijo backtracking, starting from zero.
pub fn fit_logistic(x: &CountMatrix, y: &[bool], lambda: f64, opts: FitOptions) -> Result<FitResult> {
    if x.n_rows() != y.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    if x.n_rows() == 0 {
        return Err(Error::InsufficientData("no training rows".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::Config(format!(
            "regularization must be positive, got {lambda}"
        )));
    }
    let mut w = vec![0.0; x.n_cols];
    let mut b = 0.0;
    let mut loss = regularized_loss(x, y, &w, b, lambda);
    // Nesterov extrapolation point, restarted whenever the loss goes up
    let (mut vw, mut vb, mut vloss) = (w.clone(), b, loss);
    let mut t = 1.0f64;
    let mut step = 1.0;
    for iter in 0..opts.max_iter {
        let (gw, gb) = gradient(x, y, &vw, vb, lambda);
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax < opts.tol {
            return Ok(FitResult {
                coefficients: vw,
                intercept: vb,
                iterations: iter,
                converged: true,
            });
        }
        let gsq = gb * gb + gw.iter().map(|g| g * g).sum::<f64>();
        step *= 2.0;
        let (nw, nb, nl) = loop {
            let nw: Vec<f64> = vw.iter().zip(&gw).map(|(wi, gi)| wi - step * gi).collect();
            let nb = vb - step * gb;
            let nl = regularized_loss(x, y, &nw, nb, lambda);
            if nl <= vloss - 0.5 * step * gsq {
                break (nw, nb, nl);
            }
            step *= 0.5;
            if step < 1e-20 {
                return Ok(FitResult {
                    coefficients: vw,
                    intercept: vb,
                    iterations: iter,
                    converged: gmax < opts.tol.sqrt(),
                });
            }
        };
        if nl > loss {
            t = 1.0;
            vw = w.clone();
            vb = b;
            vloss = loss;
            continue;
        }
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / tn;
        vw = nw.iter().zip(&w).map(|(a, o)| a + beta * (a - o)).collect();
        vb = nb + beta * (nb - b);
        vloss = regularized_loss(x, y, &vw, vb, lambda);
        w = nw;
        b = nb;
        loss = nl;
        t = tn;
    }
    Ok(FitResult {
        coefficients: w,
        intercept: b,
        iterations: opts.max_iter,
        converged: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub regularization: f64,
    /// Held-out AUROC per fold; `None` for single-class folds.
    pub fold_auroc: Vec<Option<f64>>,
    pub mean_auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: LinearRiskModel,
    pub cv: Vec<CvRow>,
    pub best: usize,
    /// Out-of-fold predictions at the selected regularization, in input order.
    pub oof_scores: Vec<f64>,
    pub fold_of: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            grid: DEFAULT_GRID.to_vec(),
            folds: 5,
            seed: 0,
            fit: FitOptions::default(),
        }
    }
}

/// Grid search over regularization strength by mean held-out AUROC on
/// grouped-stratified folds, then a refit on all rows at the winning value.
/// Equal mean AUROCs resolve to the stronger regularization.
pub fn train_risk_model<G: AsRef<str>>(
    counts: &CountMatrix,
    tokens: &[String],
    targets: &[bool],
    groups: &[G],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if tokens.len() != counts.n_cols {
        return Err(Error::Shape(format!(
            "{} tokens for {} columns",
            tokens.len(),
            counts.n_cols
        )));
    }
    if counts.n_rows() != targets.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} targets",
            counts.n_rows(),
            targets.len()
        )));
    }
    if config.grid.is_empty() {
        return Err(Error::Config("empty regularization grid".into()));
    }
    let fold_of = grouped_stratified_folds(groups, targets, config.folds, config.seed)?;
    let mut warnings = Vec::new();

    let mut cv = Vec::with_capacity(config.grid.len());
    let mut oof_by_grid = Vec::with_capacity(config.grid.len());
    for &lambda in &config.grid {
        let mut oof = vec![0.0; targets.len()];
        let mut fold_auroc = Vec::with_capacity(config.folds);
        for fold in 0..config.folds {
            let train: Vec<usize> = (0..targets.len()).filter(|&i| fold_of[i] != fold).collect();
            let test: Vec<usize> = (0..targets.len()).filter(|&i| fold_of[i] == fold).collect();
            let x_train = counts.select(&train);
            let y_train: Vec<bool> = train.iter().map(|&i| targets[i]).collect();
            let fit = fit_logistic(&x_train, &y_train, lambda, config.fit)?;
            if !fit.converged {
                warnings.push(format!(
                    "lambda={lambda} fold={fold}: no convergence after {} iterations",
                    fit.iterations
                ));
            }
            let model = LinearRiskModel {
                tokens: Vec::new(),
                coefficients: fit.coefficients,
                intercept: fit.intercept,
                regularization: lambda,
            };
            let mut ys = Vec::with_capacity(test.len());
            let mut ss = Vec::with_capacity(test.len());
            for &i in &test {
                let p = model.predict(&counts.rows[i]);
                oof[i] = p;
                ys.push(targets[i]);
                ss.push(p);
            }
            fold_auroc.push(auroc(&ys, &ss)?.value);
        }
        let defined: Vec<f64> = fold_auroc.iter().flatten().copied().collect();
        let mean_auroc =
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        cv.push(CvRow {
            regularization: lambda,
            fold_auroc,
            mean_auroc,
        });
        oof_by_grid.push(oof);
    }

    let mut best = 0;
    for (i, row) in cv.iter().enumerate().skip(1) {
        let cur = cv[best].mean_auroc.unwrap_or(f64::NEG_INFINITY);
        let cand = row.mean_auroc.unwrap_or(f64::NEG_INFINITY);
        if cand > cur || (cand == cur && row.regularization > cv[best].regularization) {
            best = i;
        }
    }

    let lambda = cv[best].regularization;
    let fit = fit_logistic(counts, targets, lambda, config.fit)?;
    if !fit.converged {
        warnings.push(format!(
            "final refit at lambda={lambda}: no convergence after {} iterations",
            fit.iterations
        ));
    }
    Ok(TrainOutcome {
        model: LinearRiskModel {
            tokens: tokens.to_vec(),
            coefficients: fit.coefficients,
            intercept: fit.intercept,
            regularization: lambda,
        },
        cv,
        best,
        oof_scores: oof_by_grid.swap_remove(best),
        fold_of,
        warnings,
    })
}

/// The `k` tokens with the largest absolute coefficients; ties resolve by
/// token string.
pub fn top_features(model: &LinearRiskModel, k: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = model
        .tokens
        .iter()
        .zip(&model.coefficients)
        .map(|(t, c)| (t.clone(), c.abs()))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}
