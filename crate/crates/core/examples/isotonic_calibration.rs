//! Pool-adjacent-violators fit, then a grouped cross-validated map.

use ctx_strata::calibration::{calibrate_cv, fit_pava, CalibrationPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ctx_strata::error::Result<()> {
    let scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let targets = [0.0, 1.0, 0.0, 0.0, 1.0, 1.0];
    let map = fit_pava(&scores, &targets, &[1.0; 6])?;
    for x in [0.0, 0.15, 0.35, 0.55, 1.0] {
        println!("f({x:.2}) = {:.3}", map.apply(x));
    }

    // overconfident scores: true risk is sqrt(score)
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let points: Vec<CalibrationPoint> = (0..5000)
        .map(|i| {
            let score: f64 = rng.random();
            CalibrationPoint {
                group: format!("p{}", i / 3),
                score,
                target: rng.random::<f64>() < score.sqrt(),
            }
        })
        .collect();
    let cv = calibrate_cv(&points, 5, 0)?;
    for x in [0.04, 0.25, 0.64] {
        println!("cv f({x}) = {:.3}  (truth {:.3})", cv.apply(x), f64::sqrt(x));
    }
    Ok(())
}
