//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use ctx_strata::calibration::fit_pava;
use ctx_strata::dataset::{split_by_subject, Split, StudyRecord};
use ctx_strata::evaluate::{eval_matched, eval_mentions, eval_strata};
use ctx_strata::matchset::{match_pairs, MatchOptions};
use ctx_strata::metrics::auroc;
use ctx_strata::resample::{bootstrap_subgroup_diff, stratified_resample, BootstrapConfig, Subgroup, FULL, MATCHED};
use ctx_strata::stratify::PhraseList;
use ctx_strata::synthlab::{generate, NoteConfig, Scorer, SynthConfig};
use ctx_strata::textrisk::{predict_records, top_features, train_text_model, NoContextPolicy, TextTrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn labels() -> Vec<String> {
    vec!["Edema".to_string()]
}

fn boot(iterations: usize, seed: u64) -> BootstrapConfig {
    BootstrapConfig {
        iterations,
        seed,
        ci: (2.5, 97.5),
    }
}

/// Pair-count AUROC, doubled to stay in integers.
fn pair_oracle(y: &[bool], s: &[f64]) -> Option<f64> {
    let (mut twice, mut p, mut n) = (0u64, 0u64, 0u64);
    for i in 0..y.len() {
        if !y[i] {
            continue;
        }
        p += 1;
        for j in 0..y.len() {
            if y[j] {
                continue;
            }
            twice += if s[i] > s[j] {
                2
            } else if s[i] == s[j] {
                1
            } else {
                0
            };
        }
    }
    n += y.iter().filter(|&&v| !v).count() as u64;
    (p > 0 && n > 0).then(|| twice as f64 / (2 * p * n) as f64)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(2..=20);
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let s: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.5) {
                    rng.random_range(0..levels) as f64 / levels as f64
                } else {
                    rng.random()
                }
            })
            .collect();
        if auroc(&y, &s).unwrap().value != pair_oracle(&y, &s) {
            mismatches += 1;
        }
    }
    let t = start.elapsed();
    outcome(
        mismatches == 0 && t < Duration::from_secs(10),
        format!("{mismatches} mismatches in 1000 instances, {t:.2?}"),
    )
}

fn permutation_min(a: &[f64], b: &[f64]) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    fn go(i: usize, small: &[f64], large: &[f64], used: &mut [bool]) -> f64 {
        if i == small.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..large.len() {
            if !used[j] {
                used[j] = true;
                best = best.min((small[i] - large[j]).abs() + go(i + 1, small, large, used));
                used[j] = false;
            }
        }
        best
    }
    go(0, small, large, &mut vec![false; large.len()])
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut bad_opt, mut bad_sorted, mut equal) = (0, 0, 0);
    let side = |p: &[f64], tag: &str| -> Vec<(String, f64)> {
        p.iter().enumerate().map(|(i, v)| (format!("{tag}{i}"), *v)).collect()
    };
    for _ in 0..500 {
        let np = rng.random_range(1..=6);
        let nn = rng.random_range(1..=6);
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            if rng.random_bool(0.3) {
                rng.random_range(0..5) as f64 / 4.0
            } else {
                rng.random()
            }
        };
        let a: Vec<f64> = (0..np).map(|_| draw(&mut rng)).collect();
        let b: Vec<f64> = (0..nn).map(|_| draw(&mut rng)).collect();
        let m = match_pairs(&side(&a, "p"), &side(&b, "n"), MatchOptions::default()).unwrap();
        if (m.total_cost - permutation_min(&a, &b)).abs() > 1e-12 {
            bad_opt += 1;
        }
        if np == nn {
            equal += 1;
            let mut sa = a.clone();
            let mut sb = b.clone();
            sa.sort_by(f64::total_cmp);
            sb.sort_by(f64::total_cmp);
            let sorted: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum();
            if (m.total_cost - sorted).abs() > 1e-12 {
                bad_sorted += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        bad_opt == 0 && bad_sorted == 0 && t < Duration::from_secs(30),
        format!("{bad_opt} non-optimal, {bad_sorted}/{equal} equal-size off sorted pairing, {t:.2?}"),
    )
}

/// Best monotone block partition of the pooled, sorted points.
fn block_oracle(scores: &[f64], targets: &[f64]) -> Vec<(f64, f64)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pts: Vec<(f64, f64, f64)> = Vec::new();
    for i in idx {
        match pts.last_mut() {
            Some(last) if last.0 == scores[i] => {
                last.1 += targets[i];
                last.2 += 1.0;
            }
            _ => pts.push((scores[i], targets[i], 1.0)),
        }
    }
    let m = pts.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (m - 1)) {
        let mut fitted = Vec::with_capacity(m);
        let mut start = 0;
        let mut sse = 0.0;
        let mut prev = f64::NEG_INFINITY;
        let mut ok = true;
        for end in 0..m {
            if end == m - 1 || mask & (1 << end) != 0 {
                let (sy, sw): (f64, f64) = pts[start..=end].iter().fold((0.0, 0.0), |a, p| (a.0 + p.1, a.1 + p.2));
                let mean = sy / sw;
                if mean < prev - 1e-15 {
                    ok = false;
                    break;
                }
                prev = mean;
                for p in &pts[start..=end] {
                    // within-cell spread is constant, so pooled sums suffice
                    sse += p.2 * (p.1 / p.2 - mean).powi(2);
                    fitted.push(mean);
                }
                start = end + 1;
            }
        }
        if ok && best.as_ref().is_none_or(|b| sse < b.0 - 1e-15) {
            best = Some((sse, fitted));
        }
    }
    let fitted = best.expect("the single-block partition is always feasible").1;
    pts.iter().map(|p| p.0).zip(fitted).collect()
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.random_range(1..=8);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 / 5.0).collect();
        let t: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.5) { f64::from(u8::from(rng.random_bool(0.5))) } else { rng.random() })
            .collect();
        let map = fit_pava(&s, &t, &vec![1.0; n]).unwrap();
        for (x, v) in block_oracle(&s, &t) {
            worst = worst.max((map.apply(x) - v).abs());
        }
    }
    let mut monotone = true;
    for &n in &[10usize, 100, 1000, 10_000] {
        let s: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let t: Vec<f64> = s.iter().map(|&x| f64::from(u8::from(rng.random_bool(x)))).collect();
        let map = fit_pava(&s, &t, &vec![1.0; n]).unwrap();
        monotone &= map.values.windows(2).all(|w| w[0] <= w[1]);
        let mut grid: Vec<f64> = s.clone();
        grid.sort_by(f64::total_cmp);
        monotone &= grid.windows(2).all(|w| map.apply(w[0]) <= map.apply(w[1]));
    }
    outcome(
        worst <= 1e-10 && monotone,
        format!("max deviation from oracle {worst:.1e}, monotone up to n=10000: {monotone}"),
    )
}

fn criterion_4() -> Outcome {
    let y: Vec<bool> = (0..100).map(|i| i < 10).collect();
    let exact = (0..1000)
        .filter(|&i| {
            let idx = stratified_resample(&y, 404, i).unwrap();
            idx.len() == 100 && idx.iter().filter(|&&k| y[k]).count() == 10
        })
        .count();

    let ds = generate(&SynthConfig::new(2_000, 1.0, Scorer::Mixed { lambda: 0.5 }, 0.1, 44)).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let strata = eval_strata(&ds.records, &labels(), &boot(500, 4)).unwrap();
                let matched = eval_matched(&ds.records, &labels(), MatchOptions::default(), &boot(200, 4)).unwrap();
                serde_json::to_string(&(strata, matched)).unwrap()
            })
    };
    let reports: Vec<String> = [1, 2, 8].iter().map(|&t| run(t)).collect();
    let identical = reports.windows(2).all(|w| w[0] == w[1]);
    outcome(
        exact == 1000 && identical,
        format!("{exact}/1000 resamples with exactly 10 positives; reports identical across 1/2/8 threads: {identical}"),
    )
}

fn matched_run(scorer: Scorer) -> (ctx_strata::resample::LabelReport, Duration) {
    let start = Instant::now();
    let ds = generate(&SynthConfig::new(10_000, 1.0, scorer, 0.05, 55)).unwrap();
    let r = eval_matched(&ds.records, &labels(), MatchOptions::default(), &boot(2_000, 5)).unwrap();
    (r.labels[0].clone(), start.elapsed())
}

fn criterion_5() -> Outcome {
    let (r, t) = matched_run(Scorer::Shortcut);
    let full = r.group(FULL).unwrap().mean.unwrap();
    let matched = r.group(MATCHED).unwrap().mean.unwrap();
    let d = &r.differences[0];
    let m = r.matching.as_ref().unwrap();
    outcome(
        full > 0.75 && (0.45..=0.55).contains(&matched) && d.significant && t < Duration::from_secs(120),
        format!(
            "full {full:.4}, matched {matched:.4} ({} pairs, mean gap {:.4}), diff {:.4} [{:.4}, {:.4}], {t:.1?}",
            m.pairs,
            m.mean_gap,
            d.mean.unwrap(),
            d.ci_low.unwrap(),
            d.ci_high.unwrap()
        ),
    )
}

fn criterion_6() -> Outcome {
    let (r, _) = matched_run(Scorer::Signal);
    let d = r.differences[0].interval().unwrap();
    outcome(
        d.mean.abs() < 0.03 && d.contains(0.0),
        format!("full-matched diff {:.4} [{:.4}, {:.4}]", d.mean, d.ci_low, d.ci_high),
    )
}

fn criterion_7() -> Outcome {
    let ds = generate(&SynthConfig::new(10_000, 1.0, Scorer::Mixed { lambda: 0.5 }, 0.1, 77)).unwrap();
    let r = eval_strata(&ds.records, &labels(), &boot(2_000, 7)).unwrap();
    let l = &r.labels[0];
    let bottom = l.group("bottom25").unwrap().point.unwrap();
    let middle = l.group("middle50").unwrap().point.unwrap();
    let top = l.group("top25").unwrap().point.unwrap();
    let d = &l.differences[0];
    outcome(
        bottom > top && d.significant,
        format!(
            "bottom25 {bottom:.4}, middle50 {middle:.4}, top25 {top:.4}; bottom-top {:.4} [{:.4}, {:.4}]",
            d.mean.unwrap(),
            d.ci_low.unwrap(),
            d.ci_high.unwrap()
        ),
    )
}

fn planted_config(n: usize, seed: u64, history: f64) -> SynthConfig {
    let mut c = SynthConfig::new(n, 1.0, Scorer::Mixed { lambda: 0.5 }, 0.2, seed);
    c.notes = Some(NoteConfig {
        prob_given_pos: 0.8,
        history_mentions: history,
        ..Default::default()
    });
    c
}

fn criterion_8() -> Outcome {
    let ds = generate(&planted_config(10_000, 88, 0.9)).unwrap();
    let r = eval_mentions(&ds.records, &ds.notes, &PhraseList::chexpert_adapted(), &labels(), false, &boot(2_000, 8)).unwrap();
    let l = &r.labels[0];
    let not_m = l.group("not_mentioned").unwrap();
    let m = l.group("mentioned").unwrap();
    let d = &l.differences[0];
    outcome(
        not_m.point.unwrap() > m.point.unwrap() && d.mean.unwrap() > 0.0 && d.significant,
        format!(
            "not_mentioned {:.4} (n={}), mentioned {:.4} (n={}); diff {:.4} [{:.4}, {:.4}]",
            not_m.point.unwrap(),
            not_m.n,
            m.point.unwrap(),
            m.n,
            d.mean.unwrap(),
            d.ci_low.unwrap(),
            d.ci_high.unwrap()
        ),
    )
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let ds = generate(&planted_config(2_000, 99, 0.0)).unwrap();
    let split = split_by_subject(&ds.records, (0.8, 0.1, 0.1), 9).unwrap();
    let (train, held): (Vec<StudyRecord>, Vec<StudyRecord>) = ds
        .records
        .iter()
        .cloned()
        .partition(|r| split.of(&r.subject_id) == Some(Split::Train));
    let (artifact, _) = train_text_model(&train, &ds.notes, "Edema", &TextTrainConfig::default()).unwrap();
    let scores: Vec<f64> = predict_records(&artifact, &held, &ds.notes, NoContextPolicy::Error).unwrap();
    let y: Vec<bool> = held.iter().map(|r| r.y["Edema"]).collect();
    let a = auroc(&y, &scores).unwrap().value.unwrap();
    let top: Vec<String> = top_features(&artifact.model, 10).into_iter().map(|(t, _)| t).collect();
    let rank = top.iter().position(|t| t == "edema");
    let t = start.elapsed();
    outcome(
        a > 0.9 && rank.is_some() && t < Duration::from_secs(60),
        format!("held-out AUROC {a:.4} on {} studies, planted term rank {:?} in top-10, {t:.1?}", held.len(), rank.map(|r| r + 1)),
    )
}

fn criterion_10() -> Outcome {
    let mut covered = 0;
    for e in 0..100u64 {
        let draw = |seed: u64| {
            let ds = generate(&SynthConfig::new(400, 1.0, Scorer::Mixed { lambda: 0.5 }, 0.2, seed)).unwrap();
            Subgroup::new(
                &format!("g{seed}"),
                ds.labels_of("Edema"),
                ds.column("Edema", |t| t.score),
            )
        };
        let a = draw(10_000 + 2 * e);
        let b = draw(10_001 + 2 * e);
        let r = bootstrap_subgroup_diff("Edema", &a, &b, &boot(1_000, 1_000 + e)).unwrap();
        if r.differences[0].interval().unwrap().contains(0.0) {
            covered += 1;
        }
    }
    outcome(covered >= 93, format!("{covered}/100 intervals contain 0"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("AUROC oracle equivalence", criterion_1),
        ("matching optimality", criterion_2),
        ("PAVA correctness", criterion_3),
        ("stratified resampling", criterion_4),
        ("shortcut collapse", criterion_5),
        ("signal preservation", criterion_6),
        ("stratum gradient", criterion_7),
        ("mention-stratification direction", criterion_8),
        ("text-risk sanity", criterion_9),
        ("null control", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let tag = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| tag.ends_with(&format!(" {p}")) || name.contains(p.as_str())) {
            continue;
        }
        let o = f();
        println!("{} {tag:>12} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
