//! A scorer that only reads the pre-test probability scores 0.83 overall and
//! much lower inside each quartile stratum. A scorer that sees the finding
//! is unaffected.

use ctx_strata::evaluate::{eval_matched, eval_strata};
use ctx_strata::matchset::MatchOptions;
use ctx_strata::resample::{BootstrapConfig, StratumReport};
use ctx_strata::synthlab::{generate, Scorer, SynthConfig};

fn show(report: &StratumReport) {
    for l in &report.labels {
        for g in &l.groups {
            println!("  {:<10} auroc {:.3}", g.group, g.point.unwrap_or(f64::NAN));
        }
        for d in &l.differences {
            println!(
                "  {} - {}: {:+.3} [{:+.3}, {:+.3}]",
                d.minuend,
                d.subtrahend,
                d.point.unwrap_or(f64::NAN),
                d.ci_low.unwrap_or(f64::NAN),
                d.ci_high.unwrap_or(f64::NAN)
            );
        }
    }
}

fn main() -> ctx_strata::error::Result<()> {
    let labels = vec!["Edema".to_string()];
    let config = BootstrapConfig::with_level(500, 2, 95.0)?;
    for scorer in [Scorer::Shortcut, Scorer::Signal] {
        let ds = generate(&SynthConfig::new(4000, 1.0, scorer, 0.05, 13))?;
        println!("{scorer:?}");
        show(&eval_strata(&ds.records, &labels, &config)?);
        show(&eval_matched(&ds.records, &labels, MatchOptions::default(), &config)?);
    }
    Ok(())
}
