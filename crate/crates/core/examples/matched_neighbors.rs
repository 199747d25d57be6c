//! Optimal one-to-one pairing of positives and negatives on the pre-test
//! probability, with both solvers.

use ctx_strata::matchset::{match_pairs, MatchOptions, Solver};

fn main() -> ctx_strata::error::Result<()> {
    let pos = [("p1", 0.9), ("p2", 0.6), ("p3", 0.35)];
    let neg = [("n1", 0.1), ("n2", 0.3), ("n3", 0.55), ("n4", 0.7), ("n5", 0.2)];

    for solver in [Solver::SortedDp, Solver::Hungarian] {
        let m = match_pairs(&pos, &neg, MatchOptions { solver, max_gap: None })?;
        println!("{solver:?}: total gap {:.2}, unmatched {}", m.total_cost, m.unmatched);
        for p in &m.pairs {
            println!("  {} - {}  {:.2}", p.pos_study_id, p.neg_study_id, p.gap);
        }
    }

    let caliper = MatchOptions { solver: Solver::SortedDp, max_gap: Some(0.15) };
    let m = match_pairs(&pos, &neg, caliper)?;
    println!("caliper 0.15 keeps {} pairs, drops {}", m.pairs.len(), m.dropped);
    Ok(())
}
