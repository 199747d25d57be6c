//! AUROC from labels and scores, with ties and a missing class.

use ctx_strata::metrics::{auroc, macro_auroc, RankedScores};

fn main() -> ctx_strata::error::Result<()> {
    let y = [true, false, true, false, false, true];
    let s = [0.9, 0.1, 0.4, 0.4, 0.3, 0.8];
    let r = auroc(&y, &s)?;
    // one tied pos/neg pair counts as half
    println!("auroc {:?} ({} pos, {} neg)", r.value, r.n_pos, r.n_neg);

    let only_neg = auroc(&[false, false], &[0.2, 0.7])?;
    println!("single class defined: {}", only_neg.is_defined());

    // resampled multiset: counts per original row
    let ranked = RankedScores::new(&y, &s)?;
    let w = ranked.auroc_weighted(&[2, 1, 0, 1, 1, 1]);
    println!("weighted auroc {:?}", w.value);

    let (y2, s2) = ([true, false, false], [0.2, 0.6, 0.1]);
    let m = macro_auroc([("A", &y[..], &s[..]), ("B", &y2[..], &s2[..])])?;
    println!("macro {m:?}");
    Ok(())
}
