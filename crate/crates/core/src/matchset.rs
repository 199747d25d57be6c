//! Context-balanced matched evaluation sets.
//!
//! Positives and negatives are paired 1:1 so that the summed absolute gap in
//! pre-test probability is minimal. With a scalar cost `|a − b|` an optimal
//! assignment never crosses in sorted order, so after sorting both sides the
//! smaller side is matched into the larger by a match-or-skip recurrence.
//! Element `i` of the smaller side can only pair with elements
//! `i ..= i + (n_large − n_small)` of the larger one, which bounds the table
//! to `n_small × (n_large − n_small + 1)`. A general rectangular Hungarian
//! solver is available as [`Solver::Hungarian`].

use serde::{Deserialize, Serialize};

use crate::dataset::StudyRecord;
use crate::error::{Error, Result};
use crate::metrics::{auroc, AurocResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    SortedDp,
    Hungarian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pos_study_id: String,
    pub neg_study_id: String,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedSet {
    /// Sorted by `(pos_study_id, neg_study_id)`.
    pub pairs: Vec<MatchedPair>,
    pub total_cost: f64,
    /// Majority-class records left without a partner.
    pub unmatched: usize,
    /// Pairs removed by the optional caliper.
    pub dropped: usize,
}

impl MatchedSet {
    pub fn max_gap(&self) -> f64 {
        self.pairs.iter().map(|p| p.gap).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MatchOptions {
    pub solver: Solver,
    /// Drop pairs whose gap exceeds this.
    pub max_gap: Option<f64>,
}

/// Optimal pairing of the ascending-sorted `small` side into the
/// ascending-sorted `large` side. Returns `(i_small, j_large)` in order.
pub fn assign_sorted(small: &[f64], large: &[f64]) -> Vec<(usize, usize)> {
    let ns = small.len();
    let nl = large.len();
    assert!(ns <= nl, "small side must not exceed large side");
    if ns == 0 {
        return Vec::new();
    }
    let band = nl - ns;
    if band == 0 {
        return (0..ns).map(|i| (i, i)).collect();
    }
    let width = band + 1;
    // prev[d] = best cost of matching small[..i] into large[..i + d]
    let mut prev = vec![0.0f64; width];
    let mut cur = vec![0.0f64; width];
    // took_match[(i - 1) * width + d]: whether small[i-1] pairs with large[i-1+d]
    let mut took_match = vec![false; ns * width];
    for i in 1..=ns {
        for d in 0..width {
            let matched = prev[d] + (small[i - 1] - large[i - 1 + d]).abs();
            let (best, is_match) = if d > 0 && cur[d - 1] <= matched {
                (cur[d - 1], false)
            } else {
                (matched, true)
            };
            cur[d] = best;
            took_match[(i - 1) * width + d] = is_match;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let mut pairs = Vec::with_capacity(ns);
    let (mut i, mut d) = (ns, band);
    while i > 0 {
        if took_match[(i - 1) * width + d] {
            pairs.push((i - 1, i - 1 + d));
            i -= 1;
        } else {
            d -= 1;
        }
    }
    pairs.reverse();
    pairs
}

/// Minimum-cost assignment for a rectangular cost matrix (shortest
/// augmenting paths with potentials). Every row or every column, whichever
/// is fewer, is assigned. Returns `(row, col)` sorted by row.
pub fn linear_sum_assignment(cost: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    let rows = cost.len();
    if rows == 0 {
        return Ok(Vec::new());
    }
    let cols = cost[0].len();
    if cost.iter().any(|r| r.len() != cols) {
        return Err(Error::Shape("ragged cost matrix".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidValue("cost matrix must be finite".into()));
    }
    if rows > cols {
        let transposed: Vec<Vec<f64>> = (0..cols)
            .map(|j| (0..rows).map(|i| cost[i][j]).collect())
            .collect();
        let mut pairs: Vec<(usize, usize)> = linear_sum_assignment(&transposed)?
            .into_iter()
            .map(|(j, i)| (i, j))
            .collect();
        pairs.sort_unstable();
        return Ok(pairs);
    }

    let (n, m) = (rows, cols);
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    // owner[j]: 1-based row assigned to column j; 0 = free
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    Ok(pairs)
}

/// Optimal pairing of two ascending-sorted sides with the chosen solver.
pub fn assign(small: &[f64], large: &[f64], solver: Solver) -> Result<Vec<(usize, usize)>> {
    match solver {
        Solver::SortedDp => Ok(assign_sorted(small, large)),
        Solver::Hungarian => {
            let cost: Vec<Vec<f64>> = small
                .iter()
                .map(|a| large.iter().map(|b| (a - b).abs()).collect())
                .collect();
            linear_sum_assignment(&cost)
        }
    }
}

fn sorted_side<S: AsRef<str>>(side: &[(S, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..side.len()).collect();
    order.sort_by(|&a, &b| {
        side[a]
            .1
            .total_cmp(&side[b].1)
            .then_with(|| side[a].0.as_ref().cmp(side[b].0.as_ref()))
    });
    order
}

/// 1:1 minimum-total-gap matching between positive and negative studies.
pub fn match_pairs<S: AsRef<str>>(
    pos: &[(S, f64)],
    neg: &[(S, f64)],
    opts: MatchOptions,
) -> Result<MatchedSet> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyClass(format!(
            "{} positives and {} negatives; both must be non-empty",
            pos.len(),
            neg.len()
        )));
    }
    if pos.iter().chain(neg).any(|(_, p)| !p.is_finite()) {
        return Err(Error::InvalidValue("non-finite pre-test probability".into()));
    }
    let pos_is_small = pos.len() <= neg.len();
    let (small, large) = if pos_is_small { (pos, neg) } else { (neg, pos) };
    let small_order = sorted_side(small);
    let large_order = sorted_side(large);

    let s: Vec<f64> = small_order.iter().map(|&i| small[i].1).collect();
    let l: Vec<f64> = large_order.iter().map(|&j| large[j].1).collect();
    let index_pairs: Vec<(usize, usize)> = assign(&s, &l, opts.solver)?
        .into_iter()
        .map(|(a, b)| (small_order[a], large_order[b]))
        .collect();

    let mut pairs: Vec<MatchedPair> = index_pairs
        .into_iter()
        .map(|(si, lj)| {
            let (p, n) = if pos_is_small {
                (&pos[si], &neg[lj])
            } else {
                (&pos[lj], &neg[si])
            };
            MatchedPair {
                pos_study_id: p.0.as_ref().to_string(),
                neg_study_id: n.0.as_ref().to_string(),
                gap: (p.1 - n.1).abs(),
            }
        })
        .collect();
    pairs.sort_by(|a, b| {
        a.pos_study_id
            .cmp(&b.pos_study_id)
            .then_with(|| a.neg_study_id.cmp(&b.neg_study_id))
    });
    let before = pairs.len();
    if let Some(max_gap) = opts.max_gap {
        pairs.retain(|p| p.gap <= max_gap);
    }
    let dropped = before - pairs.len();
    Ok(MatchedSet {
        total_cost: pairs.iter().map(|p| p.gap).sum(),
        unmatched: large.len() - small.len(),
        dropped,
        pairs,
    })
}

/// Splits records into `(id, pretest)` by class for one label.
pub fn split_by_class<'a>(
    records: &'a [StudyRecord],
    label: &str,
) -> Result<(Vec<(&'a str, f64)>, Vec<(&'a str, f64)>)> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for r in records {
        let Some(&y) = r.y.get(label) else { continue };
        let p = r.pretest_for(label).ok_or_else(|| Error::MissingPretest {
            label: label.to_string(),
        })?;
        if y {
            pos.push((r.study_id.as_str(), p));
        } else {
            neg.push((r.study_id.as_str(), p));
        }
    }
    Ok((pos, neg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedEval {
    pub matched: MatchedSet,
    pub auroc: AurocResult,
}

/// AUROC of the label's scores restricted to the matched studies.
pub fn matched_eval(records: &[StudyRecord], label: &str, opts: MatchOptions) -> Result<MatchedEval> {
    let (pos, neg) = split_by_class(records, label)?;
    let matched = match_pairs(&pos, &neg, opts)?;
    let by_id: std::collections::HashMap<&str, &StudyRecord> =
        records.iter().map(|r| (r.study_id.as_str(), r)).collect();
    let mut y = Vec::with_capacity(2 * matched.pairs.len());
    let mut s = Vec::with_capacity(2 * matched.pairs.len());
    for pair in &matched.pairs {
        for (id, class) in [(&pair.pos_study_id, true), (&pair.neg_study_id, false)] {
            y.push(class);
            s.push(by_id[id.as_str()].score[label]);
        }
    }
    let auroc = if y.is_empty() {
        AurocResult {
            value: None,
            n_pos: 0,
            n_neg: 0,
        }
    } else {
        auroc(&y, &s)?
    };
    Ok(MatchedEval { matched, auroc })
}
