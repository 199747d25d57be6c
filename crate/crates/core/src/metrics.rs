//! ROC statistics.
//!
//! AUROC is computed as the Mann–Whitney statistic with mid-rank tie credit.
//! All counting is done on doubled integer counts so that the sort-based
//! route and pair enumeration produce bit-identical values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AurocResult {
    /// `None` when one of the classes is absent.
    pub value: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl AurocResult {
    pub fn is_defined(&self) -> bool {
        self.value.is_some()
    }
}

/// AUROC of scores `s` against binary labels `y`.
pub fn auroc(y: &[bool], s: &[f64]) -> Result<AurocResult> {
    if y.len() != s.len() {
        return Err(Error::Shape(format!(
            "{} labels but {} scores",
            y.len(),
            s.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Shape("empty input".into()));
    }
    if s.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidValue("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_unstable_by(|&a, &b| s[a].total_cmp(&s[b]));

    let n_pos = y.iter().filter(|&&v| v).count();
    let n_neg = y.len() - n_pos;

    // 2·U accumulated tie group by tie group: each positive gains 2 per
    // negative strictly below and 1 per negative in its own tie group.
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < order.len() && s[order[j]] == s[order[i]] {
            if y[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(from_twice_u(twice_u, n_pos as u128, n_neg as u128))
}

fn from_twice_u(twice_u: u128, n_pos: u128, n_neg: u128) -> AurocResult {
    let value = (n_pos > 0 && n_neg > 0).then(|| twice_u as f64 / (2 * n_pos * n_neg) as f64);
    AurocResult {
        value,
        n_pos: n_pos as usize,
        n_neg: n_neg as usize,
    }
}

/// Scores pre-sorted once so that AUROC of any multiset drawn from them
/// (a bootstrap resample, a matched subset) costs a single linear pass.
#[derive(Debug, Clone)]
pub struct RankedScores {
    order: Vec<usize>,
    /// Tie-group boundaries into `order`.
    groups: Vec<usize>,
    y: Vec<bool>,
}

impl RankedScores {
    pub fn new(y: &[bool], s: &[f64]) -> Result<Self> {
        if y.len() != s.len() {
            return Err(Error::Shape(format!(
                "{} labels but {} scores",
                y.len(),
                s.len()
            )));
        }
        if s.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidValue("NaN score".into()));
        }
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_unstable_by(|&a, &b| s[a].total_cmp(&s[b]));
        let mut groups = vec![0];
        for k in 1..order.len() {
            if s[order[k]] != s[order[k - 1]] {
                groups.push(k);
            }
        }
        groups.push(order.len());
        Ok(RankedScores {
            order,
            groups,
            y: y.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// AUROC of the multiset in which item `i` appears `counts[i]` times.
    pub fn auroc_weighted(&self, counts: &[u32]) -> AurocResult {
        debug_assert_eq!(counts.len(), self.y.len());
        let mut twice_u: u128 = 0;
        let mut neg_below: u128 = 0;
        let (mut n_pos, mut n_neg) = (0u128, 0u128);
        for w in self.groups.windows(2) {
            let (mut pos, mut neg) = (0u128, 0u128);
            for &idx in &self.order[w[0]..w[1]] {
                let c = counts[idx] as u128;
                if self.y[idx] {
                    pos += c;
                } else {
                    neg += c;
                }
            }
            twice_u += pos * (2 * neg_below + neg);
            neg_below += neg;
            n_pos += pos;
            n_neg += neg;
        }
        from_twice_u(twice_u, n_pos, n_neg)
    }
}

/// Per-label AUROCs with their macro mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAuroc {
    pub per_label: BTreeMap<String, AurocResult>,
    /// Mean over labels whose AUROC is defined.
    pub macro_mean: f64,
    /// Labels left out of the mean because one class was absent.
    pub skipped: Vec<String>,
}

pub fn macro_auroc<'a, I>(per_label: I) -> Result<MacroAuroc>
where
    I: IntoIterator<Item = (&'a str, &'a [bool], &'a [f64])>,
{
    let mut results = BTreeMap::new();
    for (label, y, s) in per_label {
        results.insert(label.to_string(), auroc(y, s)?);
    }
    let defined: Vec<f64> = results.values().filter_map(|r| r.value).collect();
    if defined.is_empty() {
        return Err(Error::UndefinedMetric(
            "no label has both classes present".into(),
        ));
    }
    let skipped = results
        .iter()
        .filter(|(_, r)| !r.is_defined())
        .map(|(l, _)| l.clone())
        .collect();
    Ok(MacroAuroc {
        macro_mean: defined.iter().sum::<f64>() / defined.len() as f64,
        per_label: results,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// O(P·N) pair enumeration.
    fn brute(y: &[bool], s: &[f64]) -> Option<f64> {
        let mut twice = 0u64;
        let (mut p, mut n) = (0u64, 0u64);
        for (i, &yi) in y.iter().enumerate() {
            if yi {
                p += 1;
            } else {
                n += 1;
            }
            if !yi {
                continue;
            }
            for (j, &yj) in y.iter().enumerate() {
                if yj {
                    continue;
                }
                if s[i] > s[j] {
                    twice += 2;
                } else if s[i] == s[j] {
                    twice += 1;
                }
            }
        }
        (p > 0 && n > 0).then(|| twice as f64 / (2 * p * n) as f64)
    }

    #[test]
    fn perfect_separation() {
        let r = auroc(&[true, true, false, false], &[0.9, 0.8, 0.2, 0.1]).unwrap();
        assert_eq!(r.value, Some(1.0));
        assert_eq!((r.n_pos, r.n_neg), (2, 2));
    }

    #[test]
    fn full_tie() {
        assert_eq!(auroc(&[true, false], &[0.5, 0.5]).unwrap().value, Some(0.5));
    }

    #[test]
    fn mixed_ties_match_enumeration() {
        let y = [true, false, true, false, false];
        let s = [0.7, 0.7, 0.2, 0.1, 0.9];
        // pairs: (0.7 vs 0.7)=0.5, (0.7 vs 0.1)=1, (0.7 vs 0.9)=0,
        //        (0.2 vs 0.7)=0, (0.2 vs 0.1)=1, (0.2 vs 0.9)=0 → 2.5 / 6
        assert_eq!(brute(&y, &s), Some(2.5 / 6.0));
        assert_eq!(auroc(&y, &s).unwrap().value, Some(2.5 / 6.0));
    }

    #[test]
    fn single_class_is_undefined() {
        let r = auroc(&[true, true], &[0.1, 0.2]).unwrap();
        assert!(r.value.is_none());
        assert_eq!(r.n_neg, 0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(auroc(&[true], &[0.1, 0.2]), Err(Error::Shape(_))));
    }

    #[test]
    fn macro_skips_degenerate_labels() {
        let y1 = [true, false, true, false];
        let s1 = [0.9, 0.1, 0.2, 0.3];
        let y2 = [true, true, true, true];
        let s2 = [0.1, 0.2, 0.3, 0.4];
        let m = macro_auroc([("A", &y1[..], &s1[..]), ("B", &y2[..], &s2[..])]).unwrap();
        let a = auroc(&y1, &s1).unwrap().value.unwrap();
        assert_eq!(m.macro_mean, a);
        assert_eq!(m.skipped, vec!["B".to_string()]);
    }

    #[test]
    fn macro_of_perfect_labels() {
        let y = [true, false];
        let s = [0.9, 0.1];
        let m = macro_auroc([("A", &y[..], &s[..]), ("B", &y[..], &s[..])]).unwrap();
        assert_eq!(m.macro_mean, 1.0);
        assert!(m.skipped.is_empty());
    }

    #[test]
    fn macro_all_degenerate_is_error() {
        let y = [true, true];
        let s = [0.9, 0.1];
        assert!(matches!(
            macro_auroc([("A", &y[..], &s[..])]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    fn instance() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
        (1usize..=200).prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<bool>(), n),
                // coarse grid forces ties
                proptest::collection::vec((0u8..20).prop_map(|v| v as f64 / 19.0), n),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_pair_enumeration((y, s) in instance()) {
            prop_assert_eq!(auroc(&y, &s).unwrap().value, brute(&y, &s));
        }

        #[test]
        fn weighted_matches_expanded((y, s) in instance(), seed in any::<u64>()) {
            let counts: Vec<u32> = (0..y.len()).map(|i| ((seed >> (i % 60)) & 3) as u32).collect();
            let (mut ey, mut es) = (Vec::new(), Vec::new());
            for i in 0..y.len() {
                for _ in 0..counts[i] {
                    ey.push(y[i]);
                    es.push(s[i]);
                }
            }
            let ranked = RankedScores::new(&y, &s).unwrap();
            let w = ranked.auroc_weighted(&counts);
            let expected = if ey.is_empty() { None } else { auroc(&ey, &es).unwrap().value };
            prop_assert_eq!(w.value, expected);
        }

        #[test]
        fn reversal_complements(y in proptest::collection::vec(any::<bool>(), 2..100), seed in any::<u64>()) {
            // distinct scores
            let s: Vec<f64> = (0..y.len()).map(|i| ((i as u64 * 2654435761 + seed) % 100_003) as f64 + i as f64 / 1e6).collect();
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            if let (Some(a), Some(b)) = (auroc(&y, &s).unwrap().value, auroc(&y, &neg).unwrap().value) {
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn invariant_under_monotone_transform((y, s) in instance()) {
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert_eq!(auroc(&y, &s).unwrap().value, auroc(&y, &t).unwrap().value);
        }
    }
}
