//! Judge-driven annotation: difficulty scoring, reference reasoning
//! chains, and reasoning-quality scoring.
//!
//! Each sample is scored on three difficulty aspects (scene, segmentation,
//! language) whose mean places it in a difficulty stratum, and receives two
//! reference reasoning chains: a short one (essential cues, one or two
//! sentences) used to judge easy and medium samples, and a long structured
//! one used to judge hard samples. Prompts are fixed templates with three
//! substituted fields; judge replies are free text from which the first
//! well-formed score dictionary is extracted.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{
    complete_with_retry, JudgeClient, JudgeError, JudgeRequest, RequestKind, RetryPolicy,
};
use crate::mask::{Mask, MaskError};
use crate::reward::{level_of, BudgetPolicy, DifficultyLevel, RewardError};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("score parse failed: {message}; raw response: {raw:?}")]
    Parse { message: String, raw: String },
    #[error("{aspect} score {value} outside [1, 10]")]
    ScoreOutOfRange { aspect: String, value: f64 },
    #[error("referring expression is empty")]
    EmptyExpression,
    #[error("sample {0} has no mask (need mask_rle or mask_path)")]
    MissingMask(String),
    #[error("sample {sample_id} has no {mode} reference chain")]
    MissingChain {
        sample_id: String,
        mode: ReferenceMode,
    },
    #[error("sample {0} has neither a level nor a difficulty score")]
    MissingLevel(String),
    #[error("invalid annotation store: {0}")]
    Store(String),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Template for the three-aspect difficulty rating. Placeholders:
/// `{question}`, `{visual_description}`, `{textual_description}`.
pub const DIFFICULTY_PROMPT: &str = r#"You are an expert in reasoning segmentation evaluation. Given the image and the referring expression: "{question}", please assess the task difficulty based on the following three aspects:

1. Scene Complexity:
- How many objects are visible in the scene?
- How many of them are potentially related or visually similar to the target?

2. Segmentation Challenge:
- What is the size and position of the target object?
- Are there occlusions, overlaps, or visually similar objects nearby?
- Is the mask describing the whole object or just a part?
"{visual_description}"

3. Language Complexity:
- Does the referring expression explicitly point to the target object?
- Or does it require additional reasoning to infer which object is referred to?
"{textual_description}"

For each aspect, please provide a difficulty rating from 1 (very easy) to 10 (very hard), and summarize in the following Python dictionary format.

i.e., {"scene": 4, "segmentation": 6, "language": 3}"#;

/// Template for scoring predicted reasoning against a reference chain.
/// Placeholders: `{question}`, `{reference_text}`, `{thinking_text}`.
pub const REASONING_SCORE_PROMPT: &str = r#"You are an expert in evaluating reasoning quality for reasoning segmentation tasks. Given the following predicted reasoning and reference reasoning, please score the prediction in three aspects from 1 to 10:

1. Completeness: Does it include all necessary steps and important information?
2. Object Grounding: Is it aligned with the referred object in the question?
3. Fluency & Clarity: Is the reasoning coherent, fluent, and grammatically correct?

The question is: "{question}"
Reference Reasoning: "{reference_text}"
Predicted Reasoning: "{thinking_text}"

Return a Python dictionary with keys "completeness", "grounding", and "fluency".

i.e., {"completeness": 8, "grounding": 7, "fluency": 9}"#;

/// Template requesting the short reference chain. Placeholder: `{question}`.
pub const SHORT_CHAIN_PROMPT: &str = r#"You are writing reference reasoning for a reasoning segmentation task. Given the image and the referring expression: "{question}", write the reasoning that identifies the target object. Convey only the essential visual cues and a confident identification, in 1-2 sentences."#;

/// Template requesting the long reference chain. Placeholder: `{question}`.
pub const LONG_CHAIN_PROMPT: &str = r#"You are writing reference reasoning for a reasoning segmentation task. Given the image and the referring expression: "{question}", write a detailed reasoning chain that works from the visual evidence to the target object. Use an explicit multi-step structure ("Step 1: ..., Step 2: ..., ..."), covering scene analysis, candidate elimination, and the final identification."#;

/// Appended to the prompt when a parse failure triggers one reprompt.
pub const REPROMPT_SUFFIX: &str = "\n\nRespond with only the dictionary.";

/// Per-aspect difficulty ratings in `[1, 10]`; the composite is their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDifficulty", into = "RawDifficulty")]
pub struct DifficultyScore {
    pub scene: f64,
    pub segmentation: f64,
    pub language: f64,
}

impl DifficultyScore {
    pub fn new(scene: f64, segmentation: f64, language: f64) -> Result<Self, AnnotateError> {
        for (aspect, value) in [
            ("scene", scene),
            ("segmentation", segmentation),
            ("language", language),
        ] {
            if !(1.0..=10.0).contains(&value) {
                return Err(AnnotateError::ScoreOutOfRange {
                    aspect: aspect.into(),
                    value,
                });
            }
        }
        Ok(DifficultyScore {
            scene,
            segmentation,
            language,
        })
    }

    /// Composite difficulty: the mean of the three aspects.
    pub fn composite(&self) -> f64 {
        (self.scene + self.segmentation + self.language) / 3.0
    }
}

/// Serialized form; carries the composite for readability and checks it on
/// the way back in.
#[derive(Serialize, Deserialize, Clone)]
struct RawDifficulty {
    scene: f64,
    segmentation: f64,
    language: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    composite: Option<f64>,
}

impl From<DifficultyScore> for RawDifficulty {
    fn from(s: DifficultyScore) -> Self {
        RawDifficulty {
            scene: s.scene,
            segmentation: s.segmentation,
            language: s.language,
            composite: Some(s.composite()),
        }
    }
}

impl TryFrom<RawDifficulty> for DifficultyScore {
    type Error = String;

    fn try_from(raw: RawDifficulty) -> Result<Self, Self::Error> {
        let score = DifficultyScore::new(raw.scene, raw.segmentation, raw.language)
            .map_err(|e| e.to_string())?;
        if let Some(composite) = raw.composite {
            if (composite - score.composite()).abs() > 1e-9 {
                return Err(format!(
                    "stored composite {composite} disagrees with aspect mean {}",
                    score.composite()
                ));
            }
        }
        Ok(score)
    }
}

/// Which reference chain a stratum is judged against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceMode {
    Short,
    Long,
}

impl fmt::Display for ReferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceMode::Short => "short",
            ReferenceMode::Long => "long",
        })
    }
}

/// Easy and medium samples are judged against the short chain; hard samples
/// against the long one.
pub fn reference_mode(level: DifficultyLevel) -> ReferenceMode {
    match level {
        DifficultyLevel::Easy | DifficultyLevel::Medium => ReferenceMode::Short,
        DifficultyLevel::Hard => ReferenceMode::Long,
    }
}

/// Reasoning-quality scores in `[1, 10]`; the RScore is their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RScoreBreakdown {
    pub completeness: f64,
    pub grounding: f64,
    pub fluency: f64,
    pub reference_mode: ReferenceMode,
}

impl RScoreBreakdown {
    pub fn rscore(&self) -> f64 {
        (self.completeness + self.grounding + self.fluency) / 3.0
    }
}

/// One benchmark sample with whatever annotation it has accumulated.
/// A raw sample carries only id, image, expression, and mask; annotation
/// fills in the difficulty, level, and the two reference chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleAnnotation {
    pub sample_id: String,
    pub image: String,
    pub expression: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_rle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<DifficultyScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<DifficultyLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub short_chain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_chain: Option<String>,
}

impl SampleAnnotation {
    /// Resolves the ground-truth mask, from the inline RLE string or from a
    /// file (relative paths join `base_dir`) containing one.
    pub fn mask(&self, base_dir: Option<&Path>) -> Result<Mask, AnnotateError> {
        if let Some(rle) = &self.mask_rle {
            return Ok(Mask::from_rle(rle)?);
        }
        if let Some(path) = &self.mask_path {
            let mut full = PathBuf::from(path);
            if full.is_relative() {
                if let Some(base) = base_dir {
                    full = base.join(full);
                }
            }
            let text = std::fs::read_to_string(&full)?;
            return Ok(Mask::from_rle(&text)?);
        }
        Err(AnnotateError::MissingMask(self.sample_id.clone()))
    }

    /// The sample's stratum: the stored level, or the one the composite
    /// difficulty falls into under `policy`.
    pub fn level_under(&self, policy: &BudgetPolicy) -> Result<DifficultyLevel, AnnotateError> {
        if let Some(level) = self.level {
            return Ok(level);
        }
        if let Some(difficulty) = &self.difficulty {
            return Ok(level_of(difficulty.composite(), policy)?);
        }
        Err(AnnotateError::MissingLevel(self.sample_id.clone()))
    }

    /// The reference chain for `mode`, which must be present and nonempty.
    pub fn reference_chain(&self, mode: ReferenceMode) -> Result<&str, AnnotateError> {
        let chain = match mode {
            ReferenceMode::Short => self.short_chain.as_deref(),
            ReferenceMode::Long => self.long_chain.as_deref(),
        };
        match chain {
            Some(text) if !text.trim().is_empty() => Ok(text),
            _ => Err(AnnotateError::MissingChain {
                sample_id: self.sample_id.clone(),
                mode,
            }),
        }
    }
}

/// Parses an annotation store: one JSON object per line. The store is
/// ground truth, so every line must parse.
pub fn read_annotations(text: &str) -> Result<Vec<SampleAnnotation>, AnnotateError> {
    let mut annotations = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let annotation: SampleAnnotation = serde_json::from_str(line)
            .map_err(|e| AnnotateError::Store(format!("line {}: {e}", i + 1)))?;
        annotations.push(annotation);
    }
    Ok(annotations)
}

/// The spatial vocabulary used by [`textual_description`]. The default set
/// ships with the crate as a data file; deployments can load their own.
#[derive(Debug, Clone)]
pub struct SpatialTerms {
    terms: HashSet<String>,
}

impl Default for SpatialTerms {
    fn default() -> Self {
        SpatialTerms::from_text(include_str!("../data/spatial_terms.txt"))
    }
}

impl SpatialTerms {
    /// One term per line; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Self {
        let terms = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        SpatialTerms { terms }
    }

    pub fn from_file(path: &Path) -> Result<Self, AnnotateError> {
        Ok(SpatialTerms::from_text(&std::fs::read_to_string(path)?))
    }

    /// Counts expression words (lowercased, stripped of surrounding
    /// punctuation) that appear in the vocabulary.
    pub fn count_in(&self, expression: &str) -> usize {
        expression
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .filter(|w| self.terms.contains(w))
            .count()
    }
}

/// Summarizes the ground-truth mask for the segmentation-challenge aspect:
/// covered area and centroid quadrant.
pub fn visual_description(mask: &Mask) -> String {
    let area = mask.area();
    let total = mask.width() as u64 * mask.height() as u64;
    if area == 0 {
        return "The target mask is empty.".into();
    }
    let mut sum_x = 0u64;
    let mut sum_y = 0u64;
    for x in 0..mask.width() {
        for y in 0..mask.height() {
            if mask.get(x, y).expect("in bounds") {
                sum_x += x as u64;
                sum_y += y as u64;
            }
        }
    }
    let cx = sum_x as f64 / area as f64;
    let cy = sum_y as f64 / area as f64;
    let horizontal = if cx * 2.0 < (mask.width() - 1) as f64 {
        "left"
    } else {
        "right"
    };
    let vertical = if cy * 2.0 < (mask.height() - 1) as f64 {
        "top"
    } else {
        "bottom"
    };
    format!(
        "The target covers {:.1}% of the image and its centroid lies in the {vertical}-{horizontal} quadrant.",
        100.0 * area as f64 / total as f64
    )
}

/// Summarizes the referring expression for the language-complexity aspect:
/// length and spatial-vocabulary usage.
pub fn textual_description(expression: &str, terms: &SpatialTerms) -> String {
    let words = expression.split_whitespace().count();
    let spatial = terms.count_in(expression);
    format!("The referring expression has {words} words, {spatial} of them spatial terms.")
}

fn fill(template: &str, substitutions: &[(&str, &str)]) -> String {
    let mut text = template.to_string();
    for (placeholder, value) in substitutions {
        text = text.replace(placeholder, value);
    }
    text
}

/// Renders the difficulty prompt for one sample.
pub fn build_difficulty_prompt(
    question: &str,
    visual: &str,
    textual: &str,
) -> Result<String, AnnotateError> {
    if question.trim().is_empty() {
        return Err(AnnotateError::EmptyExpression);
    }
    Ok(fill(
        DIFFICULTY_PROMPT,
        &[
            ("{question}", question),
            ("{visual_description}", visual),
            ("{textual_description}", textual),
        ],
    ))
}

/// Renders the short- and long-chain generation prompts for one sample.
pub fn build_chain_prompts(question: &str) -> Result<(String, String), AnnotateError> {
    if question.trim().is_empty() {
        return Err(AnnotateError::EmptyExpression);
    }
    Ok((
        fill(SHORT_CHAIN_PROMPT, &[("{question}", question)]),
        fill(LONG_CHAIN_PROMPT, &[("{question}", question)]),
    ))
}

/// Renders the reasoning-quality prompt for one prediction.
pub fn build_reasoning_prompt(
    question: &str,
    reference_text: &str,
    thinking_text: &str,
) -> Result<String, AnnotateError> {
    if question.trim().is_empty() {
        return Err(AnnotateError::EmptyExpression);
    }
    Ok(fill(
        REASONING_SCORE_PROMPT,
        &[
            ("{question}", question),
            ("{reference_text}", reference_text),
            ("{thinking_text}", thinking_text),
        ],
    ))
}

/// Byte range of the brace span opening at `open`, honoring quoted strings.
fn matching_brace(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote: Option<u8> = None;
    let mut i = open;
    while i < bytes.len() {
        let b = bytes[i];
        match quote {
            Some(q) => {
                if b == b'\\' {
                    i += 1; // skip the escaped byte
                } else if b == q {
                    quote = None;
                }
            }
            None => match b {
                b'"' | b'\'' => quote = Some(b),
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i);
                    }
                }
                _ => {}
            },
        }
        i += 1;
    }
    None
}

/// Parses one flat `{key: number, ...}` object with single- or
/// double-quoted keys. Returns `None` for anything else.
fn parse_flat_dict(text: &str) -> Option<BTreeMap<String, f64>> {
    let mut chars = text.trim().chars().peekable();
    if chars.next()? != '{' {
        return None;
    }
    let mut map = BTreeMap::new();
    loop {
        while chars.peek()?.is_whitespace() {
            chars.next();
        }
        if *chars.peek()? == '}' {
            chars.next();
            break;
        }
        let quote = chars.next()?;
        if quote != '"' && quote != '\'' {
            return None;
        }
        let mut key = String::new();
        loop {
            let c = chars.next()?;
            if c == quote {
                break;
            }
            key.push(c);
        }
        while chars.peek()?.is_whitespace() {
            chars.next();
        }
        if chars.next()? != ':' {
            return None;
        }
        while chars.peek()?.is_whitespace() {
            chars.next();
        }
        let mut number = String::new();
        while let Some(&c) = chars.peek() {
            if c.is_ascii_digit() || "+-.eE".contains(c) {
                number.push(c);
                chars.next();
            } else {
                break;
            }
        }
        let value: f64 = number.parse().ok()?;
        if !value.is_finite() {
            return None;
        }
        map.insert(key, value);
        while chars.peek()?.is_whitespace() {
            chars.next();
        }
        match chars.next()? {
            ',' => continue,
            '}' => break,
            _ => return None,
        }
    }
    // Nothing but whitespace may follow within the candidate span.
    if chars.any(|c| !c.is_whitespace()) {
        return None;
    }
    Some(map)
}

/// Extracts the first well-formed score dictionary from free-form judge
/// output.
///
/// The scan tolerates surrounding prose, code fences, and single-quoted
/// Python-style dicts. The first brace span that parses as a flat
/// key-number object and contains every expected key decides the result;
/// its expected values must all lie in `[1, 10]` or the whole parse fails.
pub fn parse_score_dict(
    raw: &str,
    expected_keys: &[&str],
) -> Result<BTreeMap<String, f64>, AnnotateError> {
    let bytes = raw.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = matching_brace(bytes, i) {
                if let Some(map) = parse_flat_dict(&raw[i..=end]) {
                    if expected_keys.iter().all(|k| map.contains_key(*k)) {
                        for key in expected_keys {
                            let value = map[*key];
                            if !(1.0..=10.0).contains(&value) {
                                return Err(AnnotateError::Parse {
                                    message: format!("{key} = {value} outside [1, 10]"),
                                    raw: raw.to_string(),
                                });
                            }
                        }
                        return Ok(map);
                    }
                }
            }
        }
        i += 1;
    }
    Err(AnnotateError::Parse {
        message: format!("no dictionary with keys {expected_keys:?} found"),
        raw: raw.to_string(),
    })
}

/// How annotation runs behave: retries, reprompting, concurrency, and the
/// descriptor vocabulary.
#[derive(Debug, Clone)]
pub struct AnnotateOptions {
    pub retry: RetryPolicy,
    /// After a score parse failure, re-ask once with [`REPROMPT_SUFFIX`]
    /// appended instead of failing immediately.
    pub reprompt_on_parse_error: bool,
    /// Maximum samples annotated concurrently.
    pub concurrency: usize,
    pub spatial_terms: SpatialTerms,
    /// Base directory for relative `mask_path` references.
    pub base_dir: Option<PathBuf>,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        AnnotateOptions {
            retry: RetryPolicy::default(),
            reprompt_on_parse_error: false,
            concurrency: 4,
            spatial_terms: SpatialTerms::default(),
            base_dir: None,
        }
    }
}

/// Calls the judge and extracts a score dictionary, optionally reprompting
/// once on parse failure.
fn judged_scores(
    judge: &dyn JudgeClient,
    request: JudgeRequest,
    expected_keys: &[&str],
    opts: &AnnotateOptions,
) -> Result<BTreeMap<String, f64>, AnnotateError> {
    let raw = complete_with_retry(judge, &request, &opts.retry)?;
    match parse_score_dict(&raw, expected_keys) {
        Ok(map) => Ok(map),
        Err(_) if opts.reprompt_on_parse_error => {
            let mut retry_request = request;
            retry_request.prompt.push_str(REPROMPT_SUFFIX);
            let raw = complete_with_retry(judge, &retry_request, &opts.retry)?;
            parse_score_dict(&raw, expected_keys)
        }
        Err(e) => Err(e),
    }
}

/// Scores one sample's difficulty and classifies it under `policy`.
pub fn score_difficulty(
    sample: &SampleAnnotation,
    judge: &dyn JudgeClient,
    policy: &BudgetPolicy,
    opts: &AnnotateOptions,
) -> Result<(DifficultyScore, DifficultyLevel), AnnotateError> {
    let mask = sample.mask(opts.base_dir.as_deref())?;
    let visual = visual_description(&mask);
    let textual = textual_description(&sample.expression, &opts.spatial_terms);
    let prompt = build_difficulty_prompt(&sample.expression, &visual, &textual)?;
    let request = JudgeRequest {
        sample_id: sample.sample_id.clone(),
        kind: RequestKind::Difficulty,
        prompt,
    };
    let scores = judged_scores(judge, request, &["scene", "segmentation", "language"], opts)?;
    let score = DifficultyScore::new(scores["scene"], scores["segmentation"], scores["language"])?;
    let level = level_of(score.composite(), policy)?;
    Ok((score, level))
}

/// Generates the short and long reference chains for one sample.
pub fn generate_chains(
    sample: &SampleAnnotation,
    judge: &dyn JudgeClient,
    opts: &AnnotateOptions,
) -> Result<(String, String), AnnotateError> {
    let (short_prompt, long_prompt) = build_chain_prompts(&sample.expression)?;
    let mut chains = Vec::with_capacity(2);
    for (kind, prompt) in [
        (RequestKind::ShortChain, short_prompt),
        (RequestKind::LongChain, long_prompt),
    ] {
        let request = JudgeRequest {
            sample_id: sample.sample_id.clone(),
            kind,
            prompt,
        };
        let text = complete_with_retry(judge, &request, &opts.retry)?;
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(AnnotateError::Parse {
                message: format!("judge returned an empty {kind} chain"),
                raw: String::new(),
            });
        }
        chains.push(text);
    }
    let long = chains.pop().expect("two chains");
    let short = chains.pop().expect("two chains");
    Ok((short, long))
}

/// Fully annotates one sample: difficulty, level, and both chains.
pub fn annotate_sample(
    sample: &SampleAnnotation,
    judge: &dyn JudgeClient,
    policy: &BudgetPolicy,
    opts: &AnnotateOptions,
) -> Result<SampleAnnotation, AnnotateError> {
    let (difficulty, level) = score_difficulty(sample, judge, policy, opts)?;
    let (short_chain, long_chain) = generate_chains(sample, judge, opts)?;
    let mut annotated = sample.clone();
    annotated.difficulty = Some(difficulty);
    annotated.level = Some(level);
    annotated.short_chain = Some(short_chain);
    annotated.long_chain = Some(long_chain);
    Ok(annotated)
}

/// Annotates a batch with at most `opts.concurrency` samples in flight.
/// Results come back in input order; failures are per-sample.
pub fn annotate_batch(
    samples: &[SampleAnnotation],
    judge: &dyn JudgeClient,
    policy: &BudgetPolicy,
    opts: &AnnotateOptions,
) -> Vec<Result<SampleAnnotation, AnnotateError>> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let slots: Vec<Mutex<Option<Result<SampleAnnotation, AnnotateError>>>> =
        samples.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = opts.concurrency.clamp(1, samples.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= samples.len() {
                    break;
                }
                let result = annotate_sample(&samples[i], judge, policy, opts);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}

/// Scores predicted reasoning against the stratum-appropriate reference
/// chain of an annotated sample.
pub fn score_reasoning(
    thinking_text: &str,
    annotation: &SampleAnnotation,
    judge: &dyn JudgeClient,
    policy: &BudgetPolicy,
    opts: &AnnotateOptions,
) -> Result<RScoreBreakdown, AnnotateError> {
    let level = annotation.level_under(policy)?;
    let mode = reference_mode(level);
    let reference = annotation.reference_chain(mode)?;
    let prompt = build_reasoning_prompt(&annotation.expression, reference, thinking_text)?;
    let request = JudgeRequest {
        sample_id: annotation.sample_id.clone(),
        kind: RequestKind::ReasoningScore,
        prompt,
    };
    let scores = judged_scores(
        judge,
        request,
        &["completeness", "grounding", "fluency"],
        opts,
    )?;
    Ok(RScoreBreakdown {
        completeness: scores["completeness"],
        grounding: scores["grounding"],
        fluency: scores["fluency"],
        reference_mode: mode,
    })
}
