//! Benchmark evaluation: reasoning-aware segmentation metrics aggregated
//! per difficulty stratum.
//!
//! Mask quality (gIoU, cIoU) and reasoning quality (RScore) are combined
//! with the token count into efficiency-normalized scores. Both divide by
//! the model scale and by the square root of the mean token count, so a
//! model only gains by spending tokens that buy real quality:
//!
//! * `SAT  = 100 * gIoU   / (P * sqrt(T + 1))`
//! * `RST  = 10  * RScore / (P * sqrt(T + 1))`
//! * `URSS = (1 - gamma) * RST + gamma * SAT`
//!
//! where `P` is the parameter count in billions, `T` the mean token count
//! of the stratum, and `gamma` weights segmentation against reasoning.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{score_reasoning, AnnotateError, AnnotateOptions, SampleAnnotation};
use crate::judge::JudgeClient;
use crate::mask::{IoUStats, Mask};
use crate::reward::{BudgetPolicy, DifficultyLevel, SegReference};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no annotations for predicted samples: {}", .0.join(", "))]
    MissingAnnotations(Vec<String>),
    #[error("duplicate annotation for sample {0}")]
    DuplicateAnnotation(String),
    #[error("no reasoning scores for samples: {}", .0.join(", "))]
    MissingScores(Vec<String>),
    #[error("bad reasoning score for sample {sample_id}: {message}")]
    BadScore { sample_id: String, message: String },
    #[error("bad annotation for sample {sample_id}: {message}")]
    BadAnnotation { sample_id: String, message: String },
    #[error("no predictions survived filtering")]
    EmptyDataset,
    #[error("invalid metric input: {0}")]
    InvalidMetricInput(String),
    #[error("invalid model profile: {0}")]
    InvalidProfile(String),
    #[error("invalid score store: {0}")]
    BadScoreStore(String),
}

/// The evaluated model's scale and the segmentation-vs-reasoning weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelProfile {
    /// Parameter count in billions.
    pub params_billions: f64,
    /// Weight of SAT in URSS; RST gets the complement.
    pub gamma: f64,
}

impl Default for ModelProfile {
    fn default() -> Self {
        ModelProfile {
            params_billions: 7.0,
            gamma: 0.7,
        }
    }
}

impl ModelProfile {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.params_billions.is_finite() && self.params_billions > 0.0) {
            return Err(EvalError::InvalidProfile(format!(
                "params_billions must be positive, got {}",
                self.params_billions
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(EvalError::InvalidProfile(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

fn scale_factor(params_billions: f64, tokens: f64) -> Result<f64, EvalError> {
    if !(params_billions.is_finite() && params_billions > 0.0) {
        return Err(EvalError::InvalidMetricInput(format!(
            "params_billions must be positive, got {params_billions}"
        )));
    }
    if !(tokens.is_finite() && tokens >= 0.0) {
        return Err(EvalError::InvalidMetricInput(format!(
            "token count must be non-negative, got {tokens}"
        )));
    }
    Ok(params_billions * (tokens + 1.0).sqrt())
}

/// Segmentation accuracy per unit of scale and thinking time.
pub fn sat(giou: f64, params_billions: f64, tokens: f64) -> Result<f64, EvalError> {
    if !(0.0..=1.0).contains(&giou) {
        return Err(EvalError::InvalidMetricInput(format!(
            "gIoU must lie in [0, 1], got {giou}"
        )));
    }
    Ok(100.0 * giou / scale_factor(params_billions, tokens)?)
}

/// Reasoning quality per unit of scale and thinking time.
pub fn rst(rscore: f64, params_billions: f64, tokens: f64) -> Result<f64, EvalError> {
    if !(0.0..=10.0).contains(&rscore) {
        return Err(EvalError::InvalidMetricInput(format!(
            "RScore must lie in [0, 10], got {rscore}"
        )));
    }
    Ok(10.0 * rscore / scale_factor(params_billions, tokens)?)
}

/// Blend of the two efficiency scores, weighted toward segmentation by
/// `gamma`.
pub fn urss(rst: f64, sat: f64, gamma: f64) -> Result<f64, EvalError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(EvalError::InvalidMetricInput(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    if !rst.is_finite() || !sat.is_finite() {
        return Err(EvalError::InvalidMetricInput(format!(
            "component scores must be finite, got rst={rst} sat={sat}"
        )));
    }
    Ok((1.0 - gamma) * rst + gamma * sat)
}

/// One model output for one sample, as stored in a predictions file.
/// Unknown fields are ignored so richer dumps stay readable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    /// The model's reasoning text (contents of its think block).
    #[serde(default)]
    pub reasoning: String,
    /// Reasoning token count; when absent, whitespace-delimited words of
    /// `reasoning` are counted instead and the fallback is tallied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<u64>,
    /// The structured answer, used to rasterize a box when no mask is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<SegReference>,
    /// Predicted mask in RLE text form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_rle: Option<String>,
}

/// Pre-computed reasoning scores keyed by sample, for judge-free runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineScore {
    pub sample_id: String,
    pub completeness: f64,
    pub grounding: f64,
    pub fluency: f64,
}

impl OfflineScore {
    pub fn rscore(&self) -> f64 {
        (self.completeness + self.grounding + self.fluency) / 3.0
    }
}

/// Where reasoning scores come from during evaluation.
pub enum ScoreSource<'a> {
    Offline(&'a [OfflineScore]),
    Judge {
        judge: &'a dyn JudgeClient,
        opts: &'a AnnotateOptions,
    },
}

/// Parses a predictions file: one JSON object per line. Bad lines are
/// dropped with a warning rather than failing the run.
pub fn read_predictions(text: &str) -> (Vec<PredictionRecord>, Vec<String>) {
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<PredictionRecord>(line) {
            Ok(record) => records.push(record),
            Err(e) => warnings.push(format!("skipped predictions line {}: {e}", i + 1)),
        }
    }
    (records, warnings)
}

/// Parses an offline score file: one JSON object per line. Scores stand in
/// for ground truth, so every line must parse and lie in range.
pub fn read_offline_scores(text: &str) -> Result<Vec<OfflineScore>, EvalError> {
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let score: OfflineScore = serde_json::from_str(line)
            .map_err(|e| EvalError::BadScoreStore(format!("line {}: {e}", i + 1)))?;
        for (aspect, value) in [
            ("completeness", score.completeness),
            ("grounding", score.grounding),
            ("fluency", score.fluency),
        ] {
            if !(1.0..=10.0).contains(&value) {
                return Err(EvalError::BadScore {
                    sample_id: score.sample_id,
                    message: format!("{aspect} = {value} outside [1, 10]"),
                });
            }
        }
        scores.push(score);
    }
    Ok(scores)
}

/// A difficulty stratum of the report; `All` pools every sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Easy,
    Medium,
    Hard,
    All,
}

impl std::fmt::Display for Stratum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stratum::Easy => "easy",
            Stratum::Medium => "medium",
            Stratum::Hard => "hard",
            Stratum::All => "all",
        })
    }
}

impl From<DifficultyLevel> for Stratum {
    fn from(level: DifficultyLevel) -> Self {
        match level {
            DifficultyLevel::Easy => Stratum::Easy,
            DifficultyLevel::Medium => Stratum::Medium,
            DifficultyLevel::Hard => Stratum::Hard,
        }
    }
}

/// Aggregated metrics for one stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub stratum: Stratum,
    pub n: usize,
    pub token_mean: f64,
    pub rscore: f64,
    pub rst: f64,
    pub giou: f64,
    pub ciou: f64,
    pub sat: f64,
    pub urss: f64,
}

/// A prediction dropped from aggregation, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSample {
    pub sample_id: String,
    pub reason: String,
}

/// The full evaluation result: per-stratum rows (present strata in
/// easy/medium/hard order, then the pooled `all` row) plus data-quality
/// counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<StratumRow>,
    /// Samples whose token count fell back to a whitespace word count.
    pub token_fallbacks: usize,
    pub skipped: Vec<SkippedSample>,
}

/// Report plus non-fatal diagnostics accumulated along the way.
#[derive(Debug)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub warnings: Vec<String>,
}

impl EvalOutcome {
    /// True when every input record made it into the aggregates.
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty() && self.report.skipped.is_empty()
    }
}

/// One scored sample, ready for aggregation.
struct ScoredSample {
    level: DifficultyLevel,
    tokens: f64,
    rscore: f64,
    iou: f64,
    stats: IoUStats,
}

fn annotation_error(sample_id: &str, err: AnnotateError) -> EvalError {
    EvalError::BadAnnotation {
        sample_id: sample_id.to_string(),
        message: err.to_string(),
    }
}

/// Evaluates predictions against annotations and produces the stratified
/// report.
///
/// Defects on the annotation or score side are hard errors: they corrupt
/// the ground truth every row depends on. Defects on the prediction side
/// (missing or malformed masks, judge failures) drop only the affected
/// sample, with the skip recorded in the report.
pub fn evaluate(
    predictions: &[PredictionRecord],
    annotations: &[SampleAnnotation],
    scores: &ScoreSource<'_>,
    policy: &BudgetPolicy,
    profile: &ModelProfile,
    base_dir: Option<&Path>,
) -> Result<EvalOutcome, EvalError> {
    profile.validate()?;

    let mut by_id: BTreeMap<&str, &SampleAnnotation> = BTreeMap::new();
    for annotation in annotations {
        if by_id.insert(&annotation.sample_id, annotation).is_some() {
            return Err(EvalError::DuplicateAnnotation(annotation.sample_id.clone()));
        }
    }

    // Canonical processing order: sorted by sample id, first record wins.
    let mut warnings = Vec::new();
    let mut ordered: Vec<&PredictionRecord> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut sorted: Vec<&PredictionRecord> = predictions.iter().collect();
    sorted.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    for prediction in sorted {
        if seen.insert(&prediction.sample_id) {
            ordered.push(prediction);
        } else {
            warnings.push(format!(
                "duplicate prediction for sample {} ignored",
                prediction.sample_id
            ));
        }
    }

    let missing: Vec<String> = ordered
        .iter()
        .filter(|p| !by_id.contains_key(p.sample_id.as_str()))
        .map(|p| p.sample_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingAnnotations(missing));
    }

    let offline: Option<BTreeMap<&str, &OfflineScore>> = match scores {
        ScoreSource::Offline(list) => {
            let mut map = BTreeMap::new();
            for score in *list {
                if map.insert(score.sample_id.as_str(), score).is_some() {
                    return Err(EvalError::BadScore {
                        sample_id: score.sample_id.clone(),
                        message: "duplicate sample id".into(),
                    });
                }
            }
            let unscored: Vec<String> = ordered
                .iter()
                .filter(|p| !map.contains_key(p.sample_id.as_str()))
                .map(|p| p.sample_id.clone())
                .collect();
            if !unscored.is_empty() {
                return Err(EvalError::MissingScores(unscored));
            }
            Some(map)
        }
        ScoreSource::Judge { .. } => None,
    };

    let mut scored = Vec::new();
    let mut skipped = Vec::new();
    let mut token_fallbacks = 0usize;
    for prediction in ordered {
        let id = prediction.sample_id.as_str();
        let annotation = by_id[id];
        let level = annotation
            .level_under(policy)
            .map_err(|e| annotation_error(id, e))?;
        let gt_mask = annotation
            .mask(base_dir)
            .map_err(|e| annotation_error(id, e))?;

        let pred_mask = if let Some(rle) = &prediction.mask_rle {
            match Mask::from_rle(rle) {
                Ok(mask) => mask,
                Err(e) => {
                    skipped.push(SkippedSample {
                        sample_id: id.to_string(),
                        reason: format!("bad predicted mask: {e}"),
                    });
                    continue;
                }
            }
        } else if let Some(answer) = &prediction.answer {
            let mut mask = Mask::new(gt_mask.width(), gt_mask.height())
                .map_err(|e| annotation_error(id, e.into()))?;
            match mask.fill_box(&answer.bbox) {
                Ok(()) => mask,
                Err(e) => {
                    skipped.push(SkippedSample {
                        sample_id: id.to_string(),
                        reason: format!("answer box could not be rasterized: {e}"),
                    });
                    continue;
                }
            }
        } else {
            skipped.push(SkippedSample {
                sample_id: id.to_string(),
                reason: "no predicted mask or answer box".into(),
            });
            continue;
        };

        let (iou, stats) = match crate::mask::iou(&pred_mask, &gt_mask) {
            Ok(pair) => pair,
            Err(e) => {
                skipped.push(SkippedSample {
                    sample_id: id.to_string(),
                    reason: format!("mask comparison failed: {e}"),
                });
                continue;
            }
        };

        let rscore = match (&offline, scores) {
            (Some(map), _) => map[id].rscore(),
            (None, ScoreSource::Judge { judge, opts }) => {
                match score_reasoning(&prediction.reasoning, annotation, *judge, policy, opts) {
                    Ok(breakdown) => breakdown.rscore(),
                    Err(AnnotateError::MissingChain { sample_id, mode }) => {
                        return Err(annotation_error(
                            id,
                            AnnotateError::MissingChain { sample_id, mode },
                        ));
                    }
                    Err(e) => {
                        skipped.push(SkippedSample {
                            sample_id: id.to_string(),
                            reason: format!("reasoning scoring failed: {e}"),
                        });
                        continue;
                    }
                }
            }
            (None, ScoreSource::Offline(_)) => unreachable!("offline map built above"),
        };

        let tokens = match prediction.token_count {
            Some(count) => count as f64,
            None => {
                token_fallbacks += 1;
                prediction.reasoning.split_whitespace().count() as f64
            }
        };

        scored.push(ScoredSample {
            level,
            tokens,
            rscore,
            iou,
            stats,
        });
    }

    if scored.is_empty() {
        return Err(EvalError::EmptyDataset);
    }

    let mut rows = Vec::new();
    for level in DifficultyLevel::ALL {
        let members: Vec<&ScoredSample> = scored.iter().filter(|s| s.level == level).collect();
        if members.is_empty() {
            continue;
        }
        rows.push(aggregate(Stratum::from(level), &members, profile)?);
    }
    let everyone: Vec<&ScoredSample> = scored.iter().collect();
    rows.push(aggregate(Stratum::All, &everyone, profile)?);

    for skip in &skipped {
        warnings.push(format!("skipped sample {}: {}", skip.sample_id, skip.reason));
    }

    Ok(EvalOutcome {
        report: EvalReport {
            rows,
            token_fallbacks,
            skipped,
        },
        warnings,
    })
}

fn aggregate(
    stratum: Stratum,
    members: &[&ScoredSample],
    profile: &ModelProfile,
) -> Result<StratumRow, EvalError> {
    let n = members.len();
    let token_mean = members.iter().map(|s| s.tokens).sum::<f64>() / n as f64;
    let rscore = members.iter().map(|s| s.rscore).sum::<f64>() / n as f64;
    let giou = members.iter().map(|s| s.iou).sum::<f64>() / n as f64;
    let pooled = members.iter().fold(IoUStats::default(), |acc, s| IoUStats {
        intersection: acc.intersection + s.stats.intersection,
        union: acc.union + s.stats.union,
    });
    let ciou = pooled.value();
    let rst_value = rst(rscore, profile.params_billions, token_mean)?;
    let sat_value = sat(giou, profile.params_billions, token_mean)?;
    let urss_value = urss(rst_value, sat_value, profile.gamma)?;
    Ok(StratumRow {
        stratum,
        n,
        token_mean,
        rscore,
        rst: rst_value,
        giou,
        ciou,
        sat: sat_value,
        urss: urss_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::{JudgeError, JudgeRequest, OfflineJudge, RequestKind};
    use crate::mask::BBox;

    fn annotation(id: &str, level: DifficultyLevel, rle: &str) -> SampleAnnotation {
        SampleAnnotation {
            sample_id: id.into(),
            image: format!("images/{id}.jpg"),
            expression: format!("target for {id}"),
            mask_rle: Some(rle.into()),
            mask_path: None,
            difficulty: None,
            level: Some(level),
            short_chain: Some("Short reference.".into()),
            long_chain: Some("Step 1: look. Step 2: decide.".into()),
        }
    }

    fn prediction(id: &str, tokens: u64, rle: &str) -> PredictionRecord {
        PredictionRecord {
            sample_id: id.into(),
            reasoning: "it is the one on the left".into(),
            token_count: Some(tokens),
            answer: None,
            mask_rle: Some(rle.into()),
        }
    }

    fn score(id: &str, c: f64, g: f64, f: f64) -> OfflineScore {
        OfflineScore {
            sample_id: id.into(),
            completeness: c,
            grounding: g,
            fluency: f,
        }
    }

    #[test]
    fn efficiency_scores_match_hand_computation() {
        // gIoU 0.5, P = 7, T = 48: divisor 7 * sqrt(49) = 49.
        let sat_value = sat(0.5, 7.0, 48.0).unwrap();
        assert!((sat_value - 50.0 / 49.0).abs() < 1e-12);
        let rst_value = rst(7.0, 7.0, 48.0).unwrap();
        assert!((rst_value - 70.0 / 49.0).abs() < 1e-12);
        let blended = urss(rst_value, sat_value, 0.7).unwrap();
        assert!((blended - (0.3 * 70.0 / 49.0 + 0.7 * 50.0 / 49.0)).abs() < 1e-12);
    }

    #[test]
    fn efficiency_scores_reject_out_of_range_inputs() {
        assert!(sat(1.5, 7.0, 48.0).is_err());
        assert!(sat(0.5, 0.0, 48.0).is_err());
        assert!(sat(0.5, 7.0, -1.0).is_err());
        assert!(rst(11.0, 7.0, 48.0).is_err());
        assert!(urss(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn zero_tokens_are_allowed() {
        // The +1 inside the square root keeps the divisor finite.
        let value = sat(1.0, 2.0, 0.0).unwrap();
        assert!((value - 50.0).abs() < 1e-12);
    }

    fn tiny_dataset() -> (Vec<PredictionRecord>, Vec<SampleAnnotation>, Vec<OfflineScore>) {
        // Two samples on 4x4 grids. s1: gt is the left 2-column band
        // (area 8), prediction matches exactly. s2: gt is the top-left
        // 2x2 square, prediction covers the left band (IoU 4/8).
        let band = "4 4 0 8 8";
        let square = "4 4 0 2 2 2 10";
        let predictions = vec![prediction("s1", 10, band), prediction("s2", 30, band)];
        let annotations = vec![
            annotation("s1", DifficultyLevel::Easy, band),
            annotation("s2", DifficultyLevel::Hard, square),
        ];
        let scores = vec![score("s1", 8.0, 8.0, 8.0), score("s2", 4.0, 5.0, 6.0)];
        (predictions, annotations, scores)
    }

    #[test]
    fn evaluate_stratifies_and_pools() {
        let (predictions, annotations, scores) = tiny_dataset();
        let outcome = evaluate(
            &predictions,
            &annotations,
            &ScoreSource::Offline(&scores),
            &BudgetPolicy::default(),
            &ModelProfile::default(),
            None,
        )
        .unwrap();
        assert!(outcome.is_clean());
        let report = outcome.report;
        assert_eq!(report.token_fallbacks, 0);
        let strata: Vec<Stratum> = report.rows.iter().map(|r| r.stratum).collect();
        assert_eq!(strata, vec![Stratum::Easy, Stratum::Hard, Stratum::All]);

        let easy = &report.rows[0];
        assert_eq!(easy.n, 1);
        assert_eq!(easy.giou, 1.0);
        assert_eq!(easy.ciou, 1.0);
        assert_eq!(easy.rscore, 8.0);
        assert_eq!(easy.token_mean, 10.0);

        let hard = &report.rows[1];
        assert_eq!(hard.giou, 0.5);
        assert_eq!(hard.ciou, 0.5);
        assert_eq!(hard.rscore, 5.0);

        // Pooled row: mean IoU (1.0 + 0.5) / 2; pooled counts (8+4)/(8+8).
        let all = &report.rows[2];
        assert_eq!(all.n, 2);
        assert_eq!(all.giou, 0.75);
        assert_eq!(all.ciou, 12.0 / 16.0);
        assert_eq!(all.token_mean, 20.0);
        assert_eq!(all.rscore, 6.5);
        let expected_rst = 10.0 * 6.5 / (7.0 * 21.0f64.sqrt());
        assert!((all.rst - expected_rst).abs() < 1e-12);
        let expected_sat = 100.0 * 0.75 / (7.0 * 21.0f64.sqrt());
        assert!((all.sat - expected_sat).abs() < 1e-12);
        assert!((all.urss - (0.3 * expected_rst + 0.7 * expected_sat)).abs() < 1e-12);
    }

    #[test]
    fn evaluate_is_permutation_invariant() {
        let (mut predictions, mut annotations, mut scores) = tiny_dataset();
        let forward = evaluate(
            &predictions,
            &annotations,
            &ScoreSource::Offline(&scores),
            &BudgetPolicy::default(),
            &ModelProfile::default(),
            None,
        )
        .unwrap();
        predictions.reverse();
        annotations.reverse();
        scores.reverse();
        let reversed = evaluate(
            &predictions,
            &annotations,
            &ScoreSource::Offline(&scores),
            &BudgetPolicy::default(),
            &ModelProfile::default(),
            None,
        )
        .unwrap();
        assert_eq!(forward.report, reversed.report);
    }

    #[test]
    fn missing_annotations_and_scores_are_hard_errors() {
        let (predictions, annotations, scores) = tiny_dataset();
        let err = evaluate(
            &predictions,
            &annotations[..1],
            &ScoreSource::Offline(&scores),
            &BudgetPolicy::default(),
            &ModelProfile::default(),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::MissingAnnotations(ids) if ids == vec!["s2"]));

        let err = evaluate(
            &predictions,
            &annotations,
            &ScoreSource::Offline(&scores[..1]),
            &BudgetPolicy::default(),
            &ModelProfile::default(),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::MissingScores(ids) if ids == vec!["s2"]));
    }

    #[test]
    fn prediction_defects_skip_only_the_affected_sample() {
        let (mut predictions, annotations, scores) = tiny_dataset();
        predictions[1].mask_rle = Some("not an rle".into());
        let outcome = evaluate(
            &predictions,
            &annotations,
            &ScoreSource::Offline(&scores),
            &BudgetPolicy::default(),
            &ModelProfile::default(),
            None,
        )
        .unwrap();
        assert!(!outcome.is_clean());
        assert_eq!(outcome.report.skipped.len(), 1);
        assert_eq!(outcome.report.skipped[0].sample_id, "s2");
        assert_eq!(outcome.report.rows.last().unwrap().n, 1);
    }

    #[test]
    fn missing_mask_falls_back_to_the_answer_box() {
        let (mut predictions, annotations, scores) = tiny_dataset();
        // Replace s1's mask with a box covering the same left band.
        predictions[0].mask_rle = None;
        predictions[0].answer = Some(SegReference {
            bbox: BBox {
                x1: 0,
                y1: 0,
                x2: 1,
                y2: 3,
            },
            point1: crate::mask::Point { x: 0, y: 0 },
            point2: crate::mask::Point { x: 1, y: 3 },
        });
        let outcome = evaluate(
            &predictions,
            &annotations,
            &ScoreSource::Offline(&scores),
            &BudgetPolicy::default(),
            &ModelProfile::default(),
            None,
        )
        .unwrap();
        assert!(outcome.is_clean());
        assert_eq!(outcome.report.rows[0].giou, 1.0);
    }

    #[test]
    fn token_fallback_counts_whitespace_words() {
        let (mut predictions, annotations, scores) = tiny_dataset();
        predictions[0].token_count = None;
        predictions[0].reasoning = "three word answer".into();
        let outcome = evaluate(
            &predictions,
            &annotations,
            &ScoreSource::Offline(&scores),
            &BudgetPolicy::default(),
            &ModelProfile::default(),
            None,
        )
        .unwrap();
        assert_eq!(outcome.report.token_fallbacks, 1);
        assert_eq!(outcome.report.rows[0].token_mean, 3.0);
    }

    #[test]
    fn judge_mode_scores_against_the_right_chain() {
        let (predictions, annotations, _) = tiny_dataset();
        let mut judge = OfflineJudge::new();
        judge.insert(
            "s1",
            RequestKind::ReasoningScore,
            r#"{"completeness": 8, "grounding": 8, "fluency": 8}"#,
        );
        judge.insert(
            "s2",
            RequestKind::ReasoningScore,
            r#"{"completeness": 4, "grounding": 5, "fluency": 6}"#,
        );
        let opts = AnnotateOptions::default();
        let outcome = evaluate(
            &predictions,
            &annotations,
            &ScoreSource::Judge {
                judge: &judge,
                opts: &opts,
            },
            &BudgetPolicy::default(),
            &ModelProfile::default(),
            None,
        )
        .unwrap();
        assert_eq!(outcome.report.rows[0].rscore, 8.0);
        assert_eq!(outcome.report.rows[1].rscore, 5.0);
    }

    #[test]
    fn judge_failures_skip_the_sample_but_bad_annotations_do_not() {
        struct Refuse;
        impl JudgeClient for Refuse {
            fn complete(&self, request: &JudgeRequest) -> Result<String, JudgeError> {
                Err(JudgeError::NoCannedResponse {
                    sample_id: request.sample_id.clone(),
                    kind: request.kind,
                })
            }
        }
        let (predictions, mut annotations, _) = tiny_dataset();
        let opts = AnnotateOptions::default();
        let source = ScoreSource::Judge {
            judge: &Refuse,
            opts: &opts,
        };
        let err = evaluate(
            &predictions[..1],
            &annotations,
            &source,
            &BudgetPolicy::default(),
            &ModelProfile::default(),
            None,
        )
        .unwrap_err();
        // Both samples fail to score, so the dataset comes up empty.
        assert!(matches!(err, EvalError::EmptyDataset));

        // A hard sample without its long chain is an annotation defect.
        annotations[1].long_chain = None;
        let err = evaluate(
            &predictions,
            &annotations,
            &source,
            &BudgetPolicy::default(),
            &ModelProfile::default(),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::BadAnnotation { sample_id, .. } if sample_id == "s2"));
    }

    #[test]
    fn duplicate_predictions_keep_the_first_record() {
        let (mut predictions, annotations, scores) = tiny_dataset();
        let mut dupe = predictions[0].clone();
        dupe.token_count = Some(9999);
        predictions.push(dupe);
        let outcome = evaluate(
            &predictions,
            &annotations,
            &ScoreSource::Offline(&scores),
            &BudgetPolicy::default(),
            &ModelProfile::default(),
            None,
        )
        .unwrap();
        assert_eq!(outcome.report.rows[0].token_mean, 10.0);
        assert_eq!(outcome.warnings.len(), 1);
        assert!(outcome.warnings[0].contains("duplicate prediction"));
    }

    #[test]
    fn prediction_lines_parse_leniently_scores_strictly() {
        let (records, warnings) = read_predictions(
            "{\"sample_id\": \"a\", \"reasoning\": \"x\"}\nnot json\n\n{\"sample_id\": \"b\"}\n",
        );
        assert_eq!(records.len(), 2);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("line 2"));

        let err = read_offline_scores(
            "{\"sample_id\": \"a\", \"completeness\": 11, \"grounding\": 5, \"fluency\": 5}",
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::BadScore { .. }));
        assert!(read_offline_scores("garbage").is_err());
    }
}
