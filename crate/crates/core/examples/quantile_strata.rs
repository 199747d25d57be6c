//! Quartile strata of the pre-test probability.

use ctx_strata::stratify::{quantile_strata, QuantileStratum};

fn main() -> ctx_strata::error::Result<()> {
    let pretest = [
        ("a", 0.05), ("b", 0.10), ("c", 0.20), ("d", 0.35),
        ("e", 0.50), ("f", 0.60), ("g", 0.80), ("h", 0.95),
    ];
    let strata = quantile_strata(pretest, "Edema")?;
    println!("q25 {} q75 {}", strata.q25, strata.q75);
    for q in QuantileStratum::ALL {
        println!("{:<9} {:?}", q.name(), strata.members(q));
    }

    // too few studies to cut
    let err = quantile_strata([("x", 0.1), ("y", 0.2), ("z", 0.3)], "Edema").unwrap_err();
    println!("3 studies: {err}");
    Ok(())
}
