//! Grouped, class-stratified k-fold assignment.
//!
//! All records of a group (subject) land in one fold. Groups are packed
//! greedily: groups holding positives go to the fold with the fewest
//! positives so far, negative-only groups to the fold with the fewest
//! negatives, ties broken by fold size and then fold index. The seed only
//! permutes groups that are otherwise indistinguishable.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fold index in `0..k` for each record.
pub fn grouped_stratified_folds<G: AsRef<str>>(
    groups: &[G],
    targets: &[bool],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if groups.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} groups but {} targets",
            groups.len(),
            targets.len()
        )));
    }
    if k < 2 {
        return Err(Error::Config(format!("fold count must be at least 2, got {k}")));
    }
    let n_pos = targets.iter().filter(|&&t| t).count();
    if n_pos == 0 || n_pos == targets.len() {
        return Err(Error::DegenerateTarget(
            "targets must contain both classes".into(),
        ));
    }

    // (positives, negatives) per group
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (g, &t) in groups.iter().zip(targets) {
        let e = tally.entry(g.as_ref()).or_default();
        if t {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    if tally.len() < k {
        return Err(Error::InsufficientGroups {
            groups: tally.len(),
            folds: k,
        });
    }

    let mut order: Vec<(&str, usize, usize)> =
        tally.iter().map(|(g, &(p, n))| (*g, p, n)).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by_key(|o| std::cmp::Reverse((o.1, o.1 + o.2)));

    let mut fold_pos = vec![0usize; k];
    let mut fold_neg = vec![0usize; k];
    let mut group_fold: BTreeMap<&str, usize> = BTreeMap::new();
    for (g, p, n) in order {
        let fold = (0..k)
            .min_by_key(|&f| {
                let primary = if p > 0 { fold_pos[f] } else { fold_neg[f] };
                (primary, fold_pos[f] + fold_neg[f], f)
            })
            .expect("k >= 2");
        fold_pos[fold] += p;
        fold_neg[fold] += n;
        group_fold.insert(g, fold);
    }
    Ok(groups.iter().map(|g| group_fold[g.as_ref()]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn subject_with_all_positives_stays_together() {
        let groups = ["a", "a", "a", "b", "c", "d", "e", "f"];
        let targets = [true, true, true, false, false, false, false, false];
        let folds = grouped_stratified_folds(&groups, &targets, 5, 3).unwrap();
        assert!(folds[..3].iter().all(|&f| f == folds[0]));
    }

    #[test]
    fn too_few_groups() {
        let groups = ["a", "b", "c", "d"];
        let targets = [true, false, true, false];
        assert!(matches!(
            grouped_stratified_folds(&groups, &targets, 5, 0),
            Err(Error::InsufficientGroups { groups: 4, folds: 5 })
        ));
    }

    #[test]
    fn single_class() {
        let groups = ["a", "b", "c"];
        assert!(matches!(
            grouped_stratified_folds(&groups, &[false; 3], 2, 0),
            Err(Error::DegenerateTarget(_))
        ));
    }

    #[test]
    fn positives_are_balanced() {
        let groups: Vec<String> = (0..500).map(|i| format!("g{}", i / 2)).collect();
        let targets: Vec<bool> = (0..500).map(|i| i % 5 == 0).collect();
        let folds = grouped_stratified_folds(&groups, &targets, 5, 11).unwrap();
        let mut pos = [0usize; 5];
        for (f, t) in folds.iter().zip(&targets) {
            if *t {
                pos[*f] += 1;
            }
        }
        let (lo, hi) = (pos.iter().min().unwrap(), pos.iter().max().unwrap());
        assert!(hi - lo <= 2, "{pos:?}");
    }

    proptest! {
        #[test]
        fn groups_never_split(
            assign in proptest::collection::vec((0usize..30, any::<bool>()), 10..200),
            k in 2usize..6,
            seed in any::<u64>(),
        ) {
            let groups: Vec<String> = assign.iter().map(|(g, _)| format!("s{g}")).collect();
            let targets: Vec<bool> = assign.iter().map(|(_, t)| *t).collect();
            match grouped_stratified_folds(&groups, &targets, k, seed) {
                Ok(folds) => {
                    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
                    for (g, f) in groups.iter().zip(&folds) {
                        prop_assert!(*f < k);
                        prop_assert_eq!(*seen.entry(g.as_str()).or_insert(*f), *f);
                    }
                    // every fold non-empty
                    for f in 0..k {
                        prop_assert!(folds.contains(&f));
                    }
                }
                Err(Error::InsufficientGroups { .. }) | Err(Error::DegenerateTarget(_)) => {}
                Err(e) => prop_assert!(false, "unexpected {e:?}"),
            }
        }
    }
}
