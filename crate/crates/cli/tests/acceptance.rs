//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the libtest harness so the lines always print.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spatial_reward::annotation::{aggregate_mos, group_annotations, mitigate_outliers, CleaningConfig};
use spatial_reward::application::{
    best_of_n, grpo_advantages, grpo_surrogate, Candidate, CandidateSet, GrpoStep, RewardGroup,
};
use spatial_reward::evaluation::{fused_scores, optimize_threshold, srcc, ThresholdGrid};
use spatial_reward::fusion::{bt_gradient, bt_loss, fit_weights, FitConfig, TieMode};
use spatial_reward::scorer::{expected_score, normalize_logits};
use spatial_reward::synthetic::{cosine, PairGenerator};
use spatial_reward::{AnnotationRecord, Dimension, FusionWeights, PreferenceLabel, PreferencePair, ScoreVector};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("cleaning oracle", cleaning_oracle),
        ("srcc identity", srcc_identity),
        ("score computation", score_computation),
        ("bt gradient check", bt_gradient_check),
        ("bt recovery", bt_recovery),
        ("fusion comparison", fusion_comparison),
        ("threshold optimizer", threshold_optimizer),
        ("grpo math", grpo_math),
        ("best-of-n", best_of_n_ordering),
        ("e2e cli determinism", e2e_determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// cleaning

fn record(image: &str, dim: Dimension, rater: usize, score: i64) -> AnnotationRecord {
    AnnotationRecord {
        image_id: image.into(),
        dimension: dim,
        annotator_id: format!("r{rater}"),
        score,
        batch_id: "b".into(),
    }
}

/// Textbook z-score cleaning in floating point. `|z|` within 1e-9 of the limit
/// counts as on the boundary and is kept.
fn naive_clean(scores: &[i64]) -> (f64, usize) {
    let n = scores.len() as f64;
    let xs: Vec<f64> = scores.iter().map(|&s| s as f64).collect();
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut replaced = 0;
    let cleaned: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if std > 0.0 && ((x - mean) / std).abs() > 2.0 + 1e-9 {
                replaced += 1;
                mean
            } else {
                x
            }
        })
        .collect();
    (cleaned.iter().sum::<f64>() / n, replaced)
}

fn cleaning_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let dims = Dimension::ALL;
    let mut records = Vec::new();
    let mut injected = 0;
    for g in 0..200 {
        let image = format!("img-{g:03}");
        let dim = dims[g % 4];
        let n = rng.gen_range(6..=12);
        let centre: i64 = rng.gen_range(2..=4);
        for r in 0..n {
            let score = (centre + rng.gen_range(-1..=1)).clamp(1, 5);
            records.push(record(&image, dim, r, score));
        }
        for r in n..n + rng.gen_range(1..=2) {
            let far = if centre >= 3 { 1 } else { 5 };
            records.push(record(&image, dim, r, far));
            injected += 1;
        }
    }
    // groups of 5k ratings with k on one side sit exactly on |z| = 2
    let mut boundary = Vec::new();
    for k in 1..=4usize {
        for (a, b) in [(1, 5), (3, 4), (5, 2)] {
            let image = format!("edge-{k}-{a}{b}");
            let scores: Vec<i64> = std::iter::repeat_n(a, 4 * k).chain(std::iter::repeat_n(b, k)).collect();
            boundary.push(image.clone());
            for (r, s) in scores.iter().enumerate() {
                records.push(record(&image, Dimension::Layout, r, *s));
            }
        }
    }

    let groups = group_annotations(&records);
    let started = Instant::now();
    let (cleaned, mos) = mitigate_outliers(&groups, &CleaningConfig::default()).map_err(|e| e.to_string())?;
    let again = aggregate_mos(&cleaned).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();

    let mut worst = 0.0f64;
    let mut replaced_total = 0;
    for (group, m) in groups.iter().zip(&mos) {
        let scores: Vec<i64> = group.original_scores().collect();
        let (want, replaced) = naive_clean(&scores);
        worst = worst.max((want - m.mos).abs());
        if replaced != m.outlier_count {
            return Err(format!("{}: {} replaced, reference {replaced}", group.image_id, m.outlier_count));
        }
        replaced_total += replaced;
    }
    if mos != again {
        return Err("aggregate_mos disagrees with mitigate_outliers".into());
    }
    let boundary_hits = mos
        .iter()
        .filter(|m| boundary.contains(&m.image_id))
        .map(|m| m.outlier_count)
        .sum::<usize>();
    check(
        worst <= 1e-12 && boundary_hits == 0 && elapsed.as_secs_f64() < 1.0,
        format!(
            "{} groups, {replaced_total} replaced ({injected} injected), max |diff| {worst:.1e}, \
             {} boundary groups with {boundary_hits} replaced, {:.1} ms",
            groups.len(),
            boundary.len(),
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

// correlation

fn srcc_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let n = 10usize;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut a: Vec<usize> = (1..=n).collect();
        let mut b = a.clone();
        a.shuffle(&mut rng);
        b.shuffle(&mut rng);
        let d2: usize = a.iter().zip(&b).map(|(x, y)| x.abs_diff(*y).pow(2)).sum();
        let formula = 1.0 - 6.0 * d2 as f64 / (n * (n * n - 1)) as f64;
        // arbitrary monotone maps keep the ranks
        let fa: Vec<f64> = a.iter().map(|&x| (x as f64).ln()).collect();
        let fb: Vec<f64> = b.iter().map(|&x| (x as f64).powi(3) - 7.0).collect();
        let got = srcc(&fa, &fb).map_err(|e| e.to_string())?;
        worst = worst.max((got - formula).abs());
    }
    check(worst <= 1e-12, format!("1000 permutations of 10, max |diff| {worst:.1e}"))
}

// scoring

fn score_of(logits: [f64; 5]) -> Result<f64, String> {
    Ok(expected_score(&normalize_logits(&logits).map_err(|e| e.to_string())?))
}

fn score_computation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut out_of_range = 0;
    let mut worst_shift = 0.0f64;
    for _ in 0..1000 {
        let scale = [1.0, 10.0, 100.0][rng.gen_range(0..3)];
        let logits: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-scale..scale));
        let s = score_of(logits)?;
        if !(1.0..=5.0).contains(&s) {
            out_of_range += 1;
        }
        let c = rng.gen_range(-500.0..500.0);
        let shifted = score_of(logits.map(|l| l + c))?;
        worst_shift = worst_shift.max((shifted - s).abs());
    }
    // weights e^2, e^1, 1, 1, 1 on ratings 5, 4, 3, 2, 1
    let e = std::f64::consts::E;
    let hand = (5.0 * e * e + 4.0 * e + 3.0 + 2.0 + 1.0) / (e * e + e + 3.0);
    let got = score_of([2.0, 1.0, 0.0, 0.0, 0.0])?;
    let uniform = score_of([0.0; 5])?;
    let uniform_shifted = score_of([-3.25; 5])?;
    check(
        out_of_range == 0
            && worst_shift <= 1e-9
            && (got - hand).abs() <= 1e-12
            && (got - 4.106).abs() <= 1e-3
            && uniform == 3.0
            && uniform_shifted == 3.0,
        format!(
            "{out_of_range} of 1000 outside [1,5], max shift drift {worst_shift:.1e}, \
             [2,1,0,0,0] -> {got:.6} (reference {hand:.6}), uniform -> {uniform}"
        ),
    )
}

// fusion

fn random_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<PreferencePair> {
    (0..n)
        .map(|i| {
            let a: [f64; 4] = std::array::from_fn(|_| rng.gen_range(1.0..=5.0));
            let b: [f64; 4] = std::array::from_fn(|_| rng.gen_range(1.0..=5.0));
            let label = [PreferenceLabel::APreferred, PreferenceLabel::BPreferred, PreferenceLabel::Tie]
                [rng.gen_range(0..3)];
            PreferencePair {
                pair_id: format!("p{i}"),
                image_a_id: format!("a{i}"),
                image_b_id: format!("b{i}"),
                scores_a: ScoreVector::new(a).unwrap(),
                scores_b: ScoreVector::new(b).unwrap(),
                label,
                annotator_id: "x".into(),
            }
        })
        .collect()
}

fn bt_gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let pairs = random_pairs(&mut rng, 50);
        let config = FitConfig {
            tie_mode: if trial % 2 == 0 { TieMode::SoftHalf } else { TieMode::Drop },
            ..FitConfig::default()
        };
        let w: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let analytic = bt_gradient(&w, &pairs, &config).map_err(|e| e.to_string())?;
        for k in 0..4 {
            let mut up = w;
            let mut down = w;
            up[k] += h;
            down[k] -= h;
            let numeric = (bt_loss(&up, &pairs, &config).unwrap() - bt_loss(&down, &pairs, &config).unwrap())
                / (2.0 * h);
            let scale = analytic[k].abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((analytic[k] - numeric).abs() / scale);
        }
    }
    check(worst < 1e-6, format!("100 instances, max relative error {worst:.2e}"))
}

fn bt_recovery() -> Outcome {
    let truth = [0.2, 0.5, 0.2, 0.1];
    let pairs = PairGenerator { truth, seed: 10_000, ..PairGenerator::default() }.generate(10_000);
    let config = FitConfig { tie_mode: TieMode::Drop, ..FitConfig::default() };
    let at_zero = bt_loss(&[0.0; 4], &pairs, &config).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let fit = fit_weights(&pairs, &config).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed().as_secs_f64();
    let cos = cosine(fit.weights.raw(), &truth);
    check(
        cos >= 0.98 && (at_zero - std::f64::consts::LN_2).abs() <= 1e-12 && elapsed < 5.0,
        format!(
            "cosine {cos:.5}, loss at 0 off ln 2 by {:.1e}, {} iterations in {elapsed:.2} s",
            (at_zero - std::f64::consts::LN_2).abs(),
            fit.iterations
        ),
    )
}

fn best_accuracy(name: &str, pairs: &[PreferencePair], weights: &FusionWeights) -> Result<f64, String> {
    let scores = fused_scores(pairs, weights).map_err(|e| e.to_string())?;
    let result = optimize_threshold(name, pairs, &scores, ThresholdGrid::default()).map_err(|e| e.to_string())?;
    Ok(result.rank_accuracy)
}

fn fusion_comparison() -> Outcome {
    let generator = |seed| PairGenerator {
        truth: [0.1, 0.6, 0.25, 0.05],
        tie_margin: 0.15,
        label_noise: 0.1,
        seed,
        ..PairGenerator::default()
    };
    let train = generator(61).generate(2000);
    let held_out = generator(62).generate(2000);
    let fit = fit_weights(&train, &FitConfig::default()).map_err(|e| e.to_string())?;

    let fitted = best_accuracy("fitted", &held_out, &fit.weights)?;
    let equal = best_accuracy("equal", &held_out, &FusionWeights::equal())?;
    let mut singles = Vec::new();
    for d in Dimension::ALL {
        singles.push((d.as_str(), best_accuracy(d.as_str(), &held_out, &FusionWeights::single(d))?));
    }
    let best_single = singles.iter().map(|s| s.1).fold(f64::MIN, f64::max);
    let listed: Vec<String> = singles.iter().map(|(n, a)| format!("{n} {a:.3}")).collect();
    check(
        fitted > equal && fitted > best_single,
        format!("held-out accuracy fitted {fitted:.3}, equal {equal:.3}, {}", listed.join(", ")),
    )
}

/// Tries every grid point with the per-pair rule and keeps the first maximum.
fn grid_oracle(pairs: &[PreferencePair], scores: &HashMap<String, f64>, grid: ThresholdGrid) -> usize {
    let mut best = (0usize, usize::MAX);
    for k in 0..grid.len() {
        let t = grid.lo + k as f64 * grid.step;
        let correct = pairs
            .iter()
            .filter(|p| {
                let d = scores[&p.image_a_id] - scores[&p.image_b_id];
                let predicted = if d == 0.0 || d.abs() < t {
                    PreferenceLabel::Tie
                } else if d > 0.0 {
                    PreferenceLabel::APreferred
                } else {
                    PreferenceLabel::BPreferred
                };
                predicted == p.label
            })
            .count();
        if best.1 == usize::MAX || correct > best.0 {
            best = (correct, k);
        }
    }
    best.1
}

fn threshold_optimizer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(57);
    let grid = ThresholdGrid::default();
    for fixture in 0..100 {
        let pairs = random_pairs(&mut rng, 50);
        // quantised scores put many gaps exactly on grid points
        let quantum = [0.005, 0.05, 0.25][fixture % 3];
        let mut scores = HashMap::new();
        for p in &pairs {
            for id in [&p.image_a_id, &p.image_b_id] {
                scores.insert(id.clone(), (rng.gen_range(1.0..5.0f64) / quantum).round() * quantum);
            }
        }
        let got = optimize_threshold("t", &pairs, &scores, grid).map_err(|e| e.to_string())?;
        let k = grid_oracle(&pairs, &scores, grid);
        if got.threshold.to_bits() != grid.point(k).to_bits() {
            return Err(format!("fixture {fixture}: threshold {} vs grid point {}", got.threshold, grid.point(k)));
        }
    }
    Ok("100 fixtures of 50 pairs match the exhaustive grid exactly".into())
}

// application

fn grpo_math() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_mean = 0.0f64;
    let mut worst_std = 0.0f64;
    let mut worst_identity = 0.0f64;
    for g in 0..500 {
        let size = rng.gen_range(2..=16);
        let mut rewards: Vec<f64> = (0..size).map(|_| rng.gen_range(1.0..5.0)).collect();
        rewards[0] = 1.0;
        rewards[1] = 5.0;
        let adv = grpo_advantages(&RewardGroup::new(format!("g{g}"), rewards).unwrap()).map_err(|e| e.to_string())?;
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        worst_mean = worst_mean.max(mean.abs());
        worst_std = worst_std.max((std - 1.0).abs());

        let step = GrpoStep {
            ratios: adv.iter().map(|_| vec![1.0; rng.gen_range(1..=7)]).collect(),
            advantages: adv.clone(),
            clip_eps: 0.2,
            kl_beta: 0.0,
            ref_log_ratio: Vec::new(),
        };
        let surrogate = grpo_surrogate(&step).map_err(|e| e.to_string())?;
        worst_identity = worst_identity.max((surrogate - mean).abs());
    }
    let clip = grpo_surrogate(&GrpoStep {
        ratios: vec![vec![1.5]],
        advantages: vec![1.0],
        clip_eps: 0.2,
        kl_beta: 0.0,
        ref_log_ratio: Vec::new(),
    })
    .map_err(|e| e.to_string())?;
    check(
        worst_mean <= 1e-10 && worst_std <= 1e-6 && worst_identity == 0.0 && (clip - 1.2).abs() <= 1e-12,
        format!(
            "500 groups: max |mean| {worst_mean:.1e}, max |std - 1| {worst_std:.1e}, \
             surrogate at ratio 1 off mean by {worst_identity:.1e}, clip case {clip}"
        ),
    )
}

fn best_of_n_ordering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    for s in 0..1000 {
        let n = rng.gen_range(1..=12);
        let mut candidates: Vec<Candidate> = Vec::new();
        for i in 0..n {
            // some candidates duplicate an earlier one to force exact ties
            let scores = if i > 0 && rng.gen_bool(0.3) {
                candidates[rng.gen_range(0..i)].scores
            } else {
                ScoreVector::new(std::array::from_fn(|_| rng.gen_range(1.0..=5.0))).unwrap()
            };
            candidates.push(Candidate { candidate_id: format!("c{i}"), scores });
        }
        let set = CandidateSet::new(format!("s{s}"), candidates.clone()).unwrap();
        let weights = FusionWeights::new(std::array::from_fn(|_| rng.gen_range(0.0..1.0)));
        let ranked = best_of_n(&set, &weights).map_err(|e| e.to_string())?;

        // reference: stable sort of input positions by descending dot product
        let dot = |c: &Candidate| -> f64 { c.scores.values().iter().zip(weights.raw()).map(|(x, w)| x * w).sum() };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let (da, db) = (dot(&candidates[a]), dot(&candidates[b]));
            if candidates[a].scores == candidates[b].scores {
                std::cmp::Ordering::Equal
            } else {
                db.total_cmp(&da)
            }
        });
        let expected: Vec<String> = order.iter().map(|&i| format!("c{i}")).collect();
        let got: Vec<String> = ranked.iter().map(|r| r.candidate_id.clone()).collect();
        if got != expected {
            return Err(format!("set {s}: {got:?} vs {expected:?}"));
        }
        let factor = rng.gen_range(0.01..100.0);
        let rescaled = best_of_n(&set, &weights.scaled(factor)).map_err(|e| e.to_string())?;
        let rescaled: Vec<String> = rescaled.into_iter().map(|r| r.candidate_id).collect();
        if rescaled != got {
            return Err(format!("set {s}: order changed under scaling by {factor}"));
        }
    }
    Ok("1000 sets stable-sorted, order unchanged under positive rescaling".into())
}

// end to end

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e").join(name)
}

fn run_pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let f = |name: &str| fixture(name).to_string_lossy().into_owned();
    let o = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let steps: Vec<Vec<String>> = vec![
        vec!["clean".into(), "--input".into(), f("annotations.jsonl"), "--gold".into(), f("gold.jsonl"),
             "--out".into(), o("mos.jsonl"), "--train-out".into(), o("train.jsonl"),
             "--test-out".into(), o("test.jsonl"), "--cleaned-out".into(), o("cleaned.jsonl"),
             "--seed".into(), "7".into()],
        vec!["score".into(), "--logits".into(), f("logits.jsonl"), "--out".into(), o("pred.jsonl")],
        vec!["fit".into(), "--pairs".into(), f("pairs.jsonl"), "--out".into(), o("weights.json"),
             "--history-out".into(), o("history.json"), "--seed".into(), "7".into()],
        vec!["eval".into(), "--pred".into(), o("pred.jsonl"), "--mos".into(), o("mos.jsonl"),
             "--pairs".into(), f("pairs.jsonl"), "--weights".into(), o("weights.json"),
             "--out".into(), o("report.json")],
        vec!["bon".into(), "--candidates".into(), f("candidates.jsonl"), "--weights".into(),
             o("weights.json"), "--out".into(), o("bon.jsonl")],
    ];
    for args in &steps {
        let out = Command::new(env!("CARGO_BIN_EXE_sareward"))
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr)));
        }
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|entry| {
            let entry = entry.unwrap();
            (entry.file_name().to_string_lossy().into_owned(), fs::read(entry.path()).unwrap())
        })
        .collect();
    files.sort();
    Ok(files)
}

fn e2e_determinism() -> Outcome {
    let first = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = run_pipeline(first.path())?;
    let b = run_pipeline(second.path())?;
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        a.len() == b.len() && differing.is_empty() && a.len() >= 9,
        format!("clean, score, fit, eval, bon twice: {} files ({}), differing: {differing:?}", a.len(), names.join(" ")),
    )
}
