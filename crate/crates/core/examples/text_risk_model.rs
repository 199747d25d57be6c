//! Trains the bag-of-words pre-test model on synthetic notes and scores a
//! held-out split.

use ctx_strata::dataset::{split_by_subject, Split};
use ctx_strata::metrics::auroc;
use ctx_strata::synthlab::{generate, NoteConfig, Scorer, SynthConfig};
use ctx_strata::textrisk::{predict_records, top_features, train_text_model, NoContextPolicy, TextTrainConfig};

fn main() -> ctx_strata::error::Result<()> {
    let mut config = SynthConfig::new(1500, 1.0, Scorer::Shortcut, 0.1, 21);
    config.notes = Some(NoteConfig::default());
    let ds = generate(&config)?;

    let split = split_by_subject(&ds.records, (0.8, 0.1, 0.1), 3)?;
    let (train, test): (Vec<_>, Vec<_>) = ds
        .records
        .iter()
        .cloned()
        .partition(|r| split.of(&r.subject_id) == Some(Split::Train));

    let (artifact, outcome) = train_text_model(&train, &ds.notes, "Edema", &TextTrainConfig::default())?;
    for row in &outcome.cv {
        println!("lambda {:<6} cv auroc {:?}", row.regularization, row.mean_auroc);
    }
    for (token, w) in top_features(&artifact.model, 5) {
        println!("  {token:<12} {w:+.3}");
    }

    let p = predict_records(&artifact, &test, &ds.notes, NoContextPolicy::Error)?;
    let y: Vec<bool> = test.iter().map(|r| r.y["Edema"]).collect();
    println!("held-out auroc {:?} on {} studies", auroc(&y, &p)?.value, test.len());
    Ok(())
}
