//! Isotonic calibration: weighted pool-adjacent-violators and a grouped
//! cross-validated wrapper.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folds::grouped_stratified_folds;

/// Monotone piecewise-linear map; queries outside the breakpoint range clamp
/// to the end values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicMap {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl IsotonicMap {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} breakpoints and {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidValue(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidValue("values must be nondecreasing".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidValue("values must lie in [0, 1]".into()));
        }
        Ok(IsotonicMap {
            breakpoints,
            values,
        })
    }

    pub fn apply(&self, x: f64) -> f64 {
        let bp = &self.breakpoints;
        let last = bp.len() - 1;
        if x <= bp[0] {
            return self.values[0];
        }
        if x >= bp[last] {
            return self.values[last];
        }
        // first breakpoint strictly greater than x
        let hi = bp.partition_point(|&b| b <= x);
        let lo = hi - 1;
        let t = (x - bp[lo]) / (bp[hi] - bp[lo]);
        self.values[lo] + t * (self.values[hi] - self.values[lo])
    }
}

/// Weighted least-squares nondecreasing fit of `targets` ordered by `scores`.
///
/// Points with equal scores are pooled first, so the returned map has one
/// breakpoint per distinct score.
pub fn fit_pava(scores: &[f64], targets: &[f64], weights: &[f64]) -> Result<IsotonicMap> {
    if scores.is_empty() {
        return Err(Error::InsufficientData("isotonic fit needs at least one point".into()));
    }
    if scores.len() != targets.len() || scores.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} scores, {} targets, {} weights",
            scores.len(),
            targets.len(),
            weights.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidValue("scores must be finite".into()));
    }
    if targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidValue("targets must lie in [0, 1]".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidValue("weights must be positive".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // pooled distinct scores: (x, Σw·t, Σw)
    let mut points: Vec<(f64, f64, f64)> = Vec::new();
    for &i in &order {
        match points.last_mut() {
            Some(p) if p.0 == scores[i] => {
                p.1 += weights[i] * targets[i];
                p.2 += weights[i];
            }
            _ => points.push((scores[i], weights[i] * targets[i], weights[i])),
        }
    }

    // blocks: (Σw·t, Σw, number of pooled points)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(points.len());
    for &(_, swt, sw) in &points {
        blocks.push((swt, sw, 1));
        while blocks.len() > 1 {
            let b = blocks[blocks.len() - 1];
            let a = blocks[blocks.len() - 2];
            if a.0 / a.1 <= b.0 / b.1 {
                break;
            }
            blocks.pop();
            let merged = blocks.last_mut().expect("len > 1");
            merged.0 += b.0;
            merged.1 += b.1;
            merged.2 += b.2;
        }
    }

    let mut values = Vec::with_capacity(points.len());
    for (swt, sw, count) in blocks {
        let v = (swt / sw).clamp(0.0, 1.0);
        values.extend(std::iter::repeat_n(v, count));
    }
    // guard against rounding producing a tiny decrease between blocks
    for i in 1..values.len() {
        if values[i] < values[i - 1] {
            values[i] = values[i - 1];
        }
    }
    let breakpoints = points.into_iter().map(|p| p.0).collect();
    Ok(IsotonicMap {
        breakpoints,
        values,
    })
}

/// One record fed to [`calibrate_cv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub group: String,
    pub score: f64,
    pub target: bool,
}

/// Fits one isotonic map per grouped-stratified fold (each on the other
/// `k − 1` folds) and returns their pointwise average over the union of
/// their breakpoints.
pub fn calibrate_cv(points: &[CalibrationPoint], k: usize, seed: u64) -> Result<IsotonicMap> {
    let groups: Vec<&str> = points.iter().map(|p| p.group.as_str()).collect();
    let targets: Vec<bool> = points.iter().map(|p| p.target).collect();
    let folds = grouped_stratified_folds(&groups, &targets, k, seed)?;

    let mut maps = Vec::with_capacity(k);
    for fold in 0..k {
        let (mut s, mut t) = (Vec::new(), Vec::new());
        for (p, &f) in points.iter().zip(&folds) {
            if f != fold {
                s.push(p.score);
                t.push(if p.target { 1.0 } else { 0.0 });
            }
        }
        let w = vec![1.0; s.len()];
        maps.push(fit_pava(&s, &t, &w)?);
    }
    Ok(average_maps(&maps))
}

/// Pointwise mean of monotone maps, exact on the merged breakpoint grid.
pub fn average_maps(maps: &[IsotonicMap]) -> IsotonicMap {
    let mut grid: Vec<f64> = maps.iter().flat_map(|m| m.breakpoints.iter().copied()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut values: Vec<f64> = grid
        .iter()
        .map(|&x| maps.iter().map(|m| m.apply(x)).sum::<f64>() / maps.len() as f64)
        .collect();
    for i in 1..values.len() {
        if values[i] < values[i - 1] {
            values[i] = values[i - 1];
        }
    }
    IsotonicMap {
        breakpoints: grid,
        values,
    }
}
