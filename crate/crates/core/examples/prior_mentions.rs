//! Splits studies by whether earlier notes mention the finding.

use ctx_strata::stratify::{mention_strata, MentionStratum, PhraseList};

fn main() -> ctx_strata::error::Result<()> {
    let phrases = PhraseList::chexpert_adapted();
    println!("Edema phrases: {:?}", phrases.phrases("Edema")?);

    let prior = vec![
        ("s1", vec!["Pt with known  CHF, on lasix."]),
        ("s2", vec!["Fell at home.", "Wrist pain"]),
        ("s3", vec!["Worsening pulmonary\nedema overnight"]),
        ("s4", vec![]),
    ];
    let strict = mention_strata(prior.clone(), &phrases, "Edema", false)?;
    println!("mentioned {:?}", strict.members(MentionStratum::Mentioned));
    println!("not mentioned {:?}", strict.members(MentionStratum::NotMentioned));
    println!("excluded {:?}", strict.excluded);

    let loose = mention_strata(prior, &phrases, "Edema", true)?;
    println!("with empty context allowed: {:?}", loose.members(MentionStratum::NotMentioned));
    Ok(())
}
