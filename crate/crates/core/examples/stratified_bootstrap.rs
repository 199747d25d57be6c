//! Class-stratified bootstrap of two subgroups and their AUROC difference.

use ctx_strata::resample::{bootstrap_subgroup_diff, long_form, stratified_resample, BootstrapConfig, Subgroup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn group(name: &str, n: usize, separation: f64, rng: &mut ChaCha8Rng) -> Subgroup {
    let y: Vec<bool> = (0..n).map(|i| i % 4 == 0).collect();
    let s = y
        .iter()
        .map(|&yi| rng.random::<f64>() + if yi { separation } else { 0.0 })
        .collect();
    Subgroup::new(name, y, s)
}

fn main() -> ctx_strata::error::Result<()> {
    let y = [true, false, false, false, false, true, false, false, false, false];
    let idx = stratified_resample(&y, 0, 0)?;
    let pos = idx.iter().filter(|&&i| y[i]).count();
    println!("resample {idx:?} keeps {pos} positives");

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let easy = group("easy", 400, 0.8, &mut rng);
    let hard = group("hard", 400, 0.2, &mut rng);
    let config = BootstrapConfig::with_level(2000, 1, 95.0)?;
    let report = bootstrap_subgroup_diff("demo", &easy, &hard, &config)?;
    for row in long_form_of(&report) {
        println!("{row}");
    }
    Ok(())
}

fn long_form_of(label: &ctx_strata::resample::LabelReport) -> Vec<String> {
    let report = ctx_strata::resample::StratumReport {
        analysis: "example".into(),
        iterations: 2000,
        seed: 1,
        ci: (2.5, 97.5),
        labels: vec![label.clone()],
        macro_average: None,
        errors: Vec::new(),
    };
    long_form(&report)
        .iter()
        .map(|r| format!("{:<10} {:<10} {:?} [{:?}, {:?}] sig={:?}", r.kind, r.group, r.point, r.ci_low, r.ci_high, r.significant))
        .collect()
}
