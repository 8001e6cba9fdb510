//! Acceptance suite: one test per release criterion, each printing a
//! [PASS] line (visible with `--nocapture`).
//!
//! Reference values are pinned here as literals and recomputed with
//! independent arithmetic (inline RLE decoding, per-pixel counting,
//! explicit formulas) rather than through the library's own aggregation
//! paths, so a regression in the library cannot silently move the goal
//! posts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use segreason_core::annotate::{
    build_chain_prompts, build_difficulty_prompt, build_reasoning_prompt, parse_score_dict,
    reference_mode, score_reasoning, AnnotateError, AnnotateOptions, DifficultyScore,
    RScoreBreakdown, ReferenceMode, SampleAnnotation,
};
use segreason_core::confidence::{ReasoningTrace, TokenStep};
use segreason_core::eval::{rst, sat, urss};
use segreason_core::grpo::{
    generate_tasks, group_advantages, simulate_training, surrogate_gradient, surrogate_objective,
    Rollout, ToyConfig, ToyPolicy, ADVANTAGE_EPSILON,
};
use segreason_core::judge::OfflineJudge;
use segreason_core::mask::{ciou, giou, Mask};
use segreason_core::reward::{level_of, soft_penalty, token_budget, BudgetPolicy, DifficultyLevel};

/// Tiny deterministic xorshift generator, independent of the library's
/// random plumbing.
struct XorShift(u64);

impl XorShift {
    fn new(seed: u64) -> Self {
        XorShift(seed.max(1))
    }

    fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Published anchor rows: mean tokens, RScore, gIoU, and the expected
/// RST / SAT / URSS at 7B parameters with gamma 0.7, all within +/-0.01.
const ANCHOR_ROWS: [(f64, f64, f64, f64, f64, f64); 4] = [
    (46.98, 6.92, 0.6381, 1.43, 1.32, 1.35),
    (90.79, 7.67, 0.6163, 1.14, 0.92, 0.99),
    (44.73, 7.56, 0.7025, 1.60, 1.48, 1.52),
    (95.37, 7.26, 0.4437, 1.06, 0.65, 0.77),
];

const PARAMS: f64 = 7.0;
const GAMMA: f64 = 0.7;
const TOLERANCE: f64 = 0.01;

#[test]
fn criterion_01_rst_and_sat_match_published_rows() {
    for &(tokens, rscore, giou_value, want_rst, want_sat, _) in &ANCHOR_ROWS {
        let divisor = PARAMS * (tokens + 1.0).sqrt();
        let rst_value = rst(rscore, PARAMS, tokens).unwrap();
        let sat_value = sat(giou_value, PARAMS, tokens).unwrap();
        assert!(
            (rst_value - 10.0 * rscore / divisor).abs() < 1e-12,
            "rst deviates from the defining formula"
        );
        assert!(
            (sat_value - 100.0 * giou_value / divisor).abs() < 1e-12,
            "sat deviates from the defining formula"
        );
        assert!(
            (rst_value - want_rst).abs() <= TOLERANCE,
            "rst({tokens}, {rscore}) = {rst_value}, want {want_rst} +/- {TOLERANCE}"
        );
        assert!(
            (sat_value - want_sat).abs() <= TOLERANCE,
            "sat({tokens}, {giou_value}) = {sat_value}, want {want_sat} +/- {TOLERANCE}"
        );
    }
    println!("[PASS] criterion 1: RST and SAT reproduce all published rows within 0.01");
}

#[test]
fn criterion_02_urss_blend_matches_published_rows() {
    for &(tokens, rscore, giou_value, _, _, want_urss) in &ANCHOR_ROWS {
        let rst_value = rst(rscore, PARAMS, tokens).unwrap();
        let sat_value = sat(giou_value, PARAMS, tokens).unwrap();
        let blended = urss(rst_value, sat_value, GAMMA).unwrap();
        let inline = (1.0 - GAMMA) * rst_value + GAMMA * sat_value;
        assert!((blended - inline).abs() < 1e-12);
        assert!(
            (blended - want_urss).abs() <= TOLERANCE,
            "urss = {blended}, want {want_urss} +/- {TOLERANCE}"
        );
    }
    println!("[PASS] criterion 2: URSS blend reproduces all published rows within 0.01");
}

#[test]
fn criterion_03_overlap_metrics_match_brute_force_on_random_pairs() {
    let mut rng = XorShift::new(0x5eed);
    let mut masks = Vec::new();
    for _ in 0..200 {
        let width = 1 + rng.below(16) as u32;
        let height = 1 + rng.below(16) as u32;
        let density = rng.unit();
        let mut build = |density: f64| {
            let mut pixels = Vec::new();
            for x in 0..width {
                for y in 0..height {
                    if rng.unit() < density {
                        pixels.push((x, y));
                    }
                }
            }
            Mask::from_pixels(width, height, &pixels).unwrap()
        };
        let a = build(density);
        let b = build(1.0 - density);
        masks.push((a, b));
    }
    let pairs: Vec<(&Mask, &Mask)> = masks.iter().map(|(a, b)| (a, b)).collect();

    // Brute force: per-pixel membership tests, no packed words involved.
    let mut iou_sum = 0.0;
    let mut inter_total = 0u64;
    let mut union_total = 0u64;
    for (a, b) in &pairs {
        let mut inter = 0u64;
        let mut union = 0u64;
        for x in 0..a.width() {
            for y in 0..a.height() {
                let pa = a.get(x, y).unwrap();
                let pb = b.get(x, y).unwrap();
                if pa && pb {
                    inter += 1;
                }
                if pa || pb {
                    union += 1;
                }
            }
        }
        iou_sum += if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        };
        inter_total += inter;
        union_total += union;
    }
    let oracle_giou = iou_sum / pairs.len() as f64;
    let oracle_ciou = inter_total as f64 / union_total as f64;

    assert_eq!(giou(&pairs).unwrap(), oracle_giou);
    assert_eq!(ciou(&pairs).unwrap(), oracle_ciou);
    println!("[PASS] criterion 3: gIoU and cIoU agree exactly with brute force on 200 random pairs");
}

#[test]
fn criterion_04_uncertainty_is_the_mean_margin_complement() {
    // Hand-checked example: margins 0.85, 0.7, 0.3, 0.0, 0.95 average to
    // 0.56, so the uncertainty is 0.44.
    let steps = vec![
        TokenStep::new(0.9, 0.05),
        TokenStep::new(0.8, 0.1),
        TokenStep::new(0.55, 0.25),
        TokenStep::new(0.4, 0.4),
        TokenStep::new(0.95, 0.0),
    ];
    let trace = ReasoningTrace::new(steps).unwrap();
    assert!((trace.uncertainty() - 0.44).abs() < 1e-12);

    let one_hot = ReasoningTrace::new(vec![TokenStep::new(1.0, 0.0); 4]).unwrap();
    assert_eq!(one_hot.uncertainty(), 0.0);
    let tied = ReasoningTrace::new(vec![TokenStep::new(0.5, 0.5); 4]).unwrap();
    assert_eq!(tied.uncertainty(), 1.0);

    let mut rng = XorShift::new(41);
    for _ in 0..1000 {
        let len = 1 + rng.below(64) as usize;
        let steps: Vec<TokenStep> = (0..len)
            .map(|_| {
                let p1 = rng.unit();
                let p2 = rng.unit() * p1.min(1.0 - p1);
                TokenStep::new(p1, p2)
            })
            .collect();
        let trace = ReasoningTrace::new(steps).unwrap();
        let u = trace.uncertainty();
        assert!((0.0..=1.0).contains(&u), "uncertainty {u} out of range");
        assert_eq!(trace.mean_margin() + u, 1.0);
    }
    println!("[PASS] criterion 4: uncertainty matches hand value, stays in [0,1], complements the margin");
}

#[test]
fn criterion_05_budgets_follow_the_difficulty_bands() {
    let policy = BudgetPolicy::default();

    assert_eq!(level_of(5.0, &policy).unwrap(), DifficultyLevel::Hard);
    assert_eq!(level_of(4.999, &policy).unwrap(), DifficultyLevel::Medium);
    assert_eq!(level_of(3.5, &policy).unwrap(), DifficultyLevel::Medium);
    assert_eq!(level_of(3.4, &policy).unwrap(), DifficultyLevel::Easy);

    assert_eq!(token_budget(5.0, 0.5, &policy).unwrap(), Some(268.5));
    assert_eq!(token_budget(5.0, 0.0, &policy).unwrap(), Some(256.0));
    assert_eq!(token_budget(5.0, 1.0, &policy).unwrap(), Some(281.0));
    assert_eq!(token_budget(9.9, 0.5, &policy).unwrap(), Some(268.5));
    assert_eq!(token_budget(3.4, 0.9, &policy).unwrap(), Some(96.0));
    assert_eq!(token_budget(4.0, 0.9, &policy).unwrap(), None);

    assert_eq!(soft_penalty(256, Some(256.0), &policy), 1.0);
    assert_eq!(soft_penalty(100, Some(256.0), &policy), 1.0);
    assert!((soft_penalty(300, Some(256.0), &policy) - 0.912).abs() < 1e-12);
    assert_eq!(soft_penalty(10_000, None, &policy), 1.0);
    println!("[PASS] criterion 5: budgets and soft penalty follow the three-band rule");
}

#[test]
fn criterion_06_advantages_and_gradient_check_out() {
    // Hand example: rewards 1, 2, 3 have mean 2 and population std
    // sqrt(2/3); the middle advantage is exactly zero.
    let advantages = group_advantages(&[1.0, 2.0, 3.0], ADVANTAGE_EPSILON).unwrap();
    let std = (2.0f64 / 3.0).sqrt();
    for (got, reward) in advantages.iter().zip([1.0, 2.0, 3.0]) {
        let want = (reward - 2.0) / (std + ADVANTAGE_EPSILON);
        assert!((got - want).abs() < 1e-12);
    }
    assert_eq!(
        group_advantages(&[4.0; 8], ADVANTAGE_EPSILON).unwrap(),
        vec![0.0; 8]
    );

    // Finite-difference check of the surrogate gradient.
    let bins = 6;
    let mut policy = ToyPolicy::uniform(bins, 1.0);
    let mut reference = ToyPolicy::uniform(bins, 1.0);
    let mut rng = XorShift::new(97);
    for level in DifficultyLevel::ALL {
        for bin in 0..bins {
            policy.set_logit(level, bin, rng.unit() * 2.0 - 1.0);
            reference.set_logit(level, bin, rng.unit() * 2.0 - 1.0);
        }
    }
    let rollout = |level: DifficultyLevel, bin: usize, reward: f64| Rollout {
        sample_id: "task-0001".into(),
        level,
        bin,
        l_used: 64,
        correct: reward > 2.0,
        reward,
    };
    let rollouts = vec![
        rollout(DifficultyLevel::Easy, 0, 5.0),
        rollout(DifficultyLevel::Easy, 3, 1.0),
        rollout(DifficultyLevel::Medium, 2, 4.0),
        rollout(DifficultyLevel::Hard, 5, 0.5),
    ];
    let batch: Vec<(&Rollout, f64)> = rollouts
        .iter()
        .zip([1.2, -0.7, 0.4, -1.1])
        .map(|(r, a)| (r, a))
        .collect();
    let kl_coeff = 1e-3;
    let grad = surrogate_gradient(&policy, &reference, &batch, kl_coeff);
    let h = 1e-5;
    for (i, level) in DifficultyLevel::ALL.into_iter().enumerate() {
        for bin in 0..bins {
            let base = policy.logits(level)[bin];
            let mut plus = policy.clone();
            plus.set_logit(level, bin, base + h);
            let mut minus = policy.clone();
            minus.set_logit(level, bin, base - h);
            let fd = (surrogate_objective(&plus, &reference, &batch, kl_coeff)
                - surrogate_objective(&minus, &reference, &batch, kl_coeff))
                / (2.0 * h);
            let analytic = grad[i][bin];
            let denom = fd.abs().max(analytic.abs()).max(1e-8);
            assert!(
                ((fd - analytic) / denom).abs() < 1e-4,
                "gradient mismatch at level {level:?} bin {bin}: fd {fd} vs analytic {analytic}"
            );
        }
    }
    println!("[PASS] criterion 6: group advantages match hand values; gradient passes the FD check");
}

#[test]
fn criterion_07_budgeted_training_shortens_easy_reasoning_cheaply() {
    let start = Instant::now();
    let config = ToyConfig::default();
    let budgeted = BudgetPolicy::default();
    let unbudgeted = BudgetPolicy {
        beta: 0.0,
        ..BudgetPolicy::default()
    };
    let seed = 7;
    let steps = 2000;

    let tasks = generate_tasks(30, &config, &budgeted, seed).unwrap();
    let policy = ToyPolicy::uniform(config.length_bins.len(), config.answer_quality);
    let (_, trained) =
        simulate_training(&tasks, &policy, &budgeted, &config, steps, seed).unwrap();
    let baseline_tasks = generate_tasks(30, &config, &unbudgeted, seed).unwrap();
    let (_, baseline) =
        simulate_training(&baseline_tasks, &policy, &unbudgeted, &config, steps, seed).unwrap();

    let easy = &trained.summary.levels[&DifficultyLevel::Easy];
    let easy_base = &baseline.summary.levels[&DifficultyLevel::Easy];
    let hard = &trained.summary.levels[&DifficultyLevel::Hard];
    let hard_base = &baseline.summary.levels[&DifficultyLevel::Hard];

    assert!(
        easy.expected_length <= 0.6 * easy_base.expected_length,
        "easy length {} vs unregulated {}",
        easy.expected_length,
        easy_base.expected_length
    );
    let accuracy_drop = baseline.summary.overall.expected_accuracy
        - trained.summary.overall.expected_accuracy;
    assert!(
        accuracy_drop < 0.02,
        "accuracy dropped by {accuracy_drop}, more than 2 points"
    );
    let easy_cut = easy_base.expected_length - easy.expected_length;
    let hard_cut = hard_base.expected_length - hard.expected_length;
    assert!(
        easy_cut > hard_cut,
        "easy cut {easy_cut} not larger than hard cut {hard_cut}"
    );
    assert!(start.elapsed().as_secs() < 60, "took {:?}", start.elapsed());
    println!(
        "[PASS] criterion 7: 2000-step run cuts easy length {:.1} -> {:.1} with accuracy drop {:.4}",
        easy_base.expected_length, easy.expected_length, accuracy_drop
    );
}

#[test]
fn criterion_08_annotator_prompts_and_parsing_are_frozen() {
    let question = "the bowl behind the leftmost cup";
    let visual =
        "The target covers 6.2% of the image and its centroid lies in the top-left quadrant.";
    let textual = "The referring expression has 6 words, 2 of them spatial terms.";
    let reference = "The leftmost cup sits at the front; the bowl directly behind it is the target.";
    let thinking =
        "I see three cups. The leftmost one has a bowl behind it, so the bowl is the target.";

    assert_eq!(
        build_difficulty_prompt(question, visual, textual).unwrap(),
        include_str!("golden/difficulty_prompt.txt"),
        "difficulty prompt drifted from its golden file"
    );
    assert_eq!(
        build_reasoning_prompt(question, reference, thinking).unwrap(),
        include_str!("golden/reasoning_prompt.txt"),
        "reasoning prompt drifted from its golden file"
    );
    let (short, long) = build_chain_prompts(question).unwrap();
    assert_eq!(short, include_str!("golden/short_chain_prompt.txt"));
    assert_eq!(long, include_str!("golden/long_chain_prompt.txt"));

    // Score extraction from the documented reply shapes.
    let keys = ["scene", "segmentation", "language"];
    let map =
        parse_score_dict(r#"{"scene": 4, "segmentation": 6, "language": 3}"#, &keys).unwrap();
    assert_eq!(
        (map["scene"], map["segmentation"], map["language"]),
        (4.0, 6.0, 3.0)
    );
    let noisy = "Sure!\n```json\n{'scene': 4, 'segmentation': 6, 'language': 3}\n```";
    assert_eq!(parse_score_dict(noisy, &keys).unwrap(), map);
    assert!(parse_score_dict(r#"{"scene": 4, "language": 3}"#, &keys).is_err());
    let out_of_range = parse_score_dict(
        r#"{"scene": 11, "segmentation": 6, "language": 3}"#,
        &keys,
    );
    assert!(matches!(
        out_of_range,
        Err(AnnotateError::Parse { ref message, .. }) if message.contains("11")
    ));

    // Composite scoring and chain selection.
    let score = DifficultyScore::new(4.0, 6.0, 3.0).unwrap();
    assert!((score.composite() - 13.0 / 3.0).abs() < 1e-12);
    assert_eq!(
        level_of(score.composite(), &BudgetPolicy::default()).unwrap(),
        DifficultyLevel::Medium
    );
    let breakdown = RScoreBreakdown {
        completeness: 8.0,
        grounding: 7.0,
        fluency: 9.0,
        reference_mode: ReferenceMode::Short,
    };
    assert_eq!(breakdown.rscore(), 8.0);
    assert_eq!(reference_mode(DifficultyLevel::Easy), ReferenceMode::Short);
    assert_eq!(reference_mode(DifficultyLevel::Medium), ReferenceMode::Short);
    assert_eq!(reference_mode(DifficultyLevel::Hard), ReferenceMode::Long);

    // A hard sample with no long chain must be rejected, not silently
    // scored against the short one.
    let annotation = SampleAnnotation {
        sample_id: "h1".into(),
        image: "images/h1.jpg".into(),
        expression: question.into(),
        mask_rle: Some("4 4 0 2 2 2 10".into()),
        mask_path: None,
        difficulty: None,
        level: Some(DifficultyLevel::Hard),
        short_chain: Some("Short reference.".into()),
        long_chain: None,
    };
    let judge = OfflineJudge::new();
    let err = score_reasoning(
        thinking,
        &annotation,
        &judge,
        &BudgetPolicy::default(),
        &AnnotateOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(
        err,
        AnnotateError::MissingChain {
            mode: ReferenceMode::Long,
            ..
        }
    ));
    println!("[PASS] criterion 8: prompts match goldens; score parsing and chain selection hold");
}

// Everything below supports criterion 9: an independent re-computation of
// the evaluation report straight from the fixture files.

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segreason"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn evaluate_args(dir: &Path, format: &str) -> Vec<String> {
    vec![
        "evaluate".into(),
        "--predictions".into(),
        dir.join("predictions.jsonl").display().to_string(),
        "--annotations".into(),
        dir.join("annotations.jsonl").display().to_string(),
        "--offline-scores".into(),
        dir.join("scores.jsonl").display().to_string(),
        "--format".into(),
        format.into(),
    ]
}

/// Decodes the textual RLE form by hand: `"<height> <width> <counts...>"`,
/// counts alternating background/foreground in column-major order.
fn decode_rle(text: &str) -> (u32, u32, Vec<bool>) {
    let mut numbers = text.split_whitespace().map(|t| t.parse::<u64>().unwrap());
    let height = numbers.next().unwrap() as u32;
    let width = numbers.next().unwrap() as u32;
    let mut flat = Vec::with_capacity((width * height) as usize);
    let mut value = false;
    for count in numbers {
        for _ in 0..count {
            flat.push(value);
        }
        value = !value;
    }
    assert_eq!(flat.len() as u32, width * height, "rle covers the grid");
    (width, height, flat)
}

struct OracleSample {
    level: String,
    tokens: f64,
    rscore: f64,
    iou: f64,
    intersection: u64,
    union: u64,
}

fn oracle_samples() -> Vec<OracleSample> {
    let read = |name: &str| -> Vec<serde_json::Value> {
        std::fs::read_to_string(fixture(name))
            .unwrap()
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    };
    let predictions = read("predictions.jsonl");
    let annotations = read("annotations.jsonl");
    let scores = read("scores.jsonl");
    let lookup = |records: &[serde_json::Value], id: &str| -> serde_json::Value {
        records
            .iter()
            .find(|r| r["sample_id"] == id)
            .unwrap()
            .clone()
    };

    let mut ids: Vec<String> = predictions
        .iter()
        .map(|p| p["sample_id"].as_str().unwrap().to_string())
        .collect();
    ids.sort();

    let mut samples = Vec::new();
    for id in &ids {
        let prediction = lookup(&predictions, id);
        let annotation = lookup(&annotations, id);
        let score = lookup(&scores, id);

        let level = match annotation.get("level").and_then(|l| l.as_str()) {
            Some(level) => level.to_string(),
            None => {
                let d = &annotation["difficulty"];
                let composite = (d["scene"].as_f64().unwrap()
                    + d["segmentation"].as_f64().unwrap()
                    + d["language"].as_f64().unwrap())
                    / 3.0;
                if composite >= 5.0 {
                    "hard".into()
                } else if composite < 3.5 {
                    "easy".into()
                } else {
                    "medium".into()
                }
            }
        };
        let tokens = match prediction.get("token_count").and_then(|t| t.as_u64()) {
            Some(count) => count as f64,
            None => prediction["reasoning"]
                .as_str()
                .unwrap()
                .split_whitespace()
                .count() as f64,
        };
        let rscore = (score["completeness"].as_f64().unwrap()
            + score["grounding"].as_f64().unwrap()
            + score["fluency"].as_f64().unwrap())
            / 3.0;

        let (pw, ph, pred) = decode_rle(prediction["mask_rle"].as_str().unwrap());
        let (gw, gh, gt) = decode_rle(annotation["mask_rle"].as_str().unwrap());
        assert_eq!((pw, ph), (gw, gh), "fixture masks share shapes");
        let mut intersection = 0u64;
        let mut union = 0u64;
        for (a, b) in pred.iter().zip(&gt) {
            if *a && *b {
                intersection += 1;
            }
            if *a || *b {
                union += 1;
            }
        }
        let iou = if union == 0 {
            1.0
        } else {
            intersection as f64 / union as f64
        };
        samples.push(OracleSample {
            level,
            tokens,
            rscore,
            iou,
            intersection,
            union,
        });
    }
    samples
}

/// Mean computed in reverse order, deliberately different from the
/// library's forward summation.
fn reverse_mean(values: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator) -> f64 {
    let n = values.len() as f64;
    values.rev().sum::<f64>() / n
}

fn oracle_row(samples: &[&OracleSample]) -> (usize, f64, f64, f64, f64, f64, f64, f64) {
    let n = samples.len();
    let token_mean = reverse_mean(samples.iter().map(|s| s.tokens));
    let rscore = reverse_mean(samples.iter().map(|s| s.rscore));
    let giou_value = reverse_mean(samples.iter().map(|s| s.iou));
    let inter: u64 = samples.iter().map(|s| s.intersection).sum();
    let union: u64 = samples.iter().map(|s| s.union).sum();
    let ciou_value = inter as f64 / union as f64;
    let divisor = PARAMS * (token_mean + 1.0).sqrt();
    let rst_value = 10.0 * rscore / divisor;
    let sat_value = 100.0 * giou_value / divisor;
    let urss_value = (1.0 - GAMMA) * rst_value + GAMMA * sat_value;
    (
        n, token_mean, rscore, rst_value, giou_value, ciou_value, sat_value, urss_value,
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

#[test]
fn criterion_09_cli_report_matches_goldens_and_oracle() {
    let fixtures = fixture("");
    let golden_txt = include_str!("golden/golden_report.txt");
    let golden_json = include_str!("golden/golden_report.json");
    let golden_csv = include_str!("golden/golden_report.csv");

    // Byte-exact rendering in all three formats, with a clean exit.
    for (format, golden) in [
        ("text", golden_txt),
        ("json", golden_json),
        ("csv", golden_csv),
    ] {
        let args = evaluate_args(&fixtures, format);
        let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let output = run_cli(&arg_refs);
        assert_eq!(output.status.code(), Some(0), "format {format}");
        assert_eq!(
            String::from_utf8_lossy(&output.stdout),
            golden,
            "{format} output drifted from its golden file"
        );
    }

    // JSON and CSV must carry the same numbers at full precision.
    let parsed: serde_json::Value = serde_json::from_str(golden_json).unwrap();
    let rows = parsed["rows"].as_array().unwrap();
    let csv_lines: Vec<&str> = golden_csv.lines().skip(1).collect();
    assert_eq!(rows.len(), csv_lines.len());
    let columns = [
        "token_mean",
        "rscore",
        "rst",
        "giou",
        "ciou",
        "sat",
        "urss",
    ];
    for (row, line) in rows.iter().zip(&csv_lines) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], row["stratum"].as_str().unwrap());
        assert_eq!(cells[1].parse::<u64>().unwrap(), row["n"].as_u64().unwrap());
        for (cell, column) in cells[2..].iter().zip(columns) {
            assert_eq!(
                cell.parse::<f64>().unwrap(),
                row[column].as_f64().unwrap(),
                "csv and json disagree on {column}"
            );
        }
    }

    // Every reported number, recomputed from the raw fixture bytes.
    let samples = oracle_samples();
    assert_eq!(samples.len(), 12);
    let strata = [("easy", 4usize), ("medium", 5), ("hard", 3), ("all", 12)];
    assert_eq!(rows.len(), strata.len());
    for (row, (name, want_n)) in rows.iter().zip(strata) {
        let members: Vec<&OracleSample> = samples
            .iter()
            .filter(|s| name == "all" || s.level == name)
            .collect();
        let (n, token_mean, rscore, rst_value, giou_value, ciou_value, sat_value, urss_value) =
            oracle_row(&members);
        assert_eq!(row["stratum"].as_str().unwrap(), name);
        assert_eq!(n, want_n);
        assert_eq!(row["n"].as_u64().unwrap() as usize, n);
        for (column, want) in [
            ("token_mean", token_mean),
            ("rscore", rscore),
            ("rst", rst_value),
            ("giou", giou_value),
            ("ciou", ciou_value),
            ("sat", sat_value),
            ("urss", urss_value),
        ] {
            let got = row[column].as_f64().unwrap();
            assert!(
                close(got, want),
                "stratum {name} column {column}: report {got} vs oracle {want}"
            );
        }
    }
    let fallbacks = parsed["token_fallbacks"].as_u64().unwrap();
    assert_eq!(fallbacks, 1, "exactly one fixture omits its token count");
    assert_eq!(parsed["skipped"].as_array().unwrap().len(), 0);

    // Report content must not depend on input record order.
    let shuffled = tempfile::tempdir().unwrap();
    for name in ["predictions.jsonl", "annotations.jsonl", "scores.jsonl"] {
        let text = std::fs::read_to_string(fixture(name)).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.reverse();
        std::fs::write(shuffled.path().join(name), lines.join("\n") + "\n").unwrap();
    }
    let args = evaluate_args(shuffled.path(), "json");
    let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let output = run_cli(&arg_refs);
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(
        String::from_utf8_lossy(&output.stdout),
        golden_json,
        "report changed under input permutation"
    );

    // Exit codes: 3 when records were dropped, 1 on errors, 2 on usage.
    let partial = tempfile::tempdir().unwrap();
    for name in ["annotations.jsonl", "scores.jsonl"] {
        std::fs::copy(fixture(name), partial.path().join(name)).unwrap();
    }
    let mut text = std::fs::read_to_string(fixture("predictions.jsonl")).unwrap();
    text.push_str("this line is not json\n");
    std::fs::write(partial.path().join("predictions.jsonl"), text).unwrap();
    let args = evaluate_args(partial.path(), "text");
    let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let output = run_cli(&arg_refs);
    assert_eq!(output.status.code(), Some(3), "dropped line must exit 3");
    assert_eq!(
        String::from_utf8_lossy(&output.stdout),
        golden_txt,
        "the surviving records still produce the full report"
    );

    let output = run_cli(&[
        "evaluate",
        "--predictions",
        "/nonexistent/predictions.jsonl",
        "--annotations",
        "/nonexistent/annotations.jsonl",
    ]);
    assert_eq!(output.status.code(), Some(1));
    let output = run_cli(&["evaluate", "--no-such-flag"]);
    assert_eq!(output.status.code(), Some(2));
    println!("[PASS] criterion 9: CLI report matches goldens, oracle, permutations, and exit codes");
}
