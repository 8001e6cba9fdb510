//! Reward shaping for length-regulated reasoning segmentation.
//!
//! The unregulated reward sums five binary components: two format checks
//! (one reasoning block, one well-formed answer block) and three accuracy
//! checks (mask IoU, box error, click error), giving a raw score in
//! `[0, 5]`. Length regulation multiplies that score by a soft penalty
//! that is 1 inside a per-sample token budget and decays linearly beyond
//! it. Budgets depend on difficulty: hard samples get a base allowance
//! stretched by model uncertainty, easy samples get a tight cap, and
//! medium samples are left unconstrained.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{bbox_l1, iou, point_l1, BBox, Mask, MaskError, Point};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("difficulty {0} outside [1, 10]")]
    DifficultyOutOfRange(f64),
    #[error("uncertainty {0} outside [0, 1]")]
    UncertaintyOutOfRange(f64),
    #[error("invalid budget policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid reward weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Difficulty stratum of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyLevel {
    Easy,
    Medium,
    Hard,
}

impl DifficultyLevel {
    pub const ALL: [DifficultyLevel; 3] = [
        DifficultyLevel::Easy,
        DifficultyLevel::Medium,
        DifficultyLevel::Hard,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DifficultyLevel::Easy => "easy",
            DifficultyLevel::Medium => "medium",
            DifficultyLevel::Hard => "hard",
        }
    }
}

/// Thresholds and coefficients of the length-budget policy.
///
/// Defaults are the published training configuration: hard samples
/// (`difficulty >= tau1`) receive `l_base + alpha * uncertainty` tokens,
/// easy samples (`difficulty < tau2`) receive `l_low`, and anything in
/// between is unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetPolicy {
    /// Hard-difficulty threshold (inclusive).
    pub tau1: f64,
    /// Easy-difficulty threshold (exclusive).
    pub tau2: f64,
    /// Base token allowance for hard samples.
    pub l_base: f64,
    /// Uncertainty-scaling coefficient for hard samples.
    pub alpha: f64,
    /// Token cap for easy samples.
    pub l_low: f64,
    /// Linear decay rate of the soft penalty per token over budget.
    pub beta: f64,
    /// Optional lower bound on the penalty multiplier; by default the
    /// penalty may go negative on extreme overshoot.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamp_floor: Option<f64>,
}

impl Default for BudgetPolicy {
    fn default() -> Self {
        BudgetPolicy {
            tau1: 5.0,
            tau2: 3.5,
            l_base: 256.0,
            alpha: 25.0,
            l_low: 96.0,
            beta: 0.002,
            clamp_floor: None,
        }
    }
}

impl BudgetPolicy {
    /// Checks internal consistency. `beta == 0` is allowed and disables the
    /// penalty entirely, which is the natural unregulated baseline.
    pub fn validate(&self) -> Result<(), RewardError> {
        let err = |msg: String| Err(RewardError::InvalidPolicy(msg));
        for (name, v) in [
            ("tau1", self.tau1),
            ("tau2", self.tau2),
            ("l_base", self.l_base),
            ("alpha", self.alpha),
            ("l_low", self.l_low),
            ("beta", self.beta),
        ] {
            if !v.is_finite() {
                return err(format!("{name} is not finite"));
            }
        }
        if !(1.0..=10.0).contains(&self.tau1) || !(1.0..=10.0).contains(&self.tau2) {
            return err(format!(
                "thresholds tau1={}, tau2={} must lie in [1, 10]",
                self.tau1, self.tau2
            ));
        }
        if self.tau2 > self.tau1 {
            return err(format!("tau2={} exceeds tau1={}", self.tau2, self.tau1));
        }
        if self.l_base <= 0.0 || self.l_low <= 0.0 {
            return err("token allowances must be positive".into());
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return err("alpha and beta must be non-negative".into());
        }
        if let Some(floor) = self.clamp_floor {
            if !(0.0..=1.0).contains(&floor) {
                return err(format!("clamp floor {floor} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Thresholds for the three binary accuracy components, in IoU fraction and
/// pixels respectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    /// Minimum mask IoU counted as a hit (inclusive).
    pub iou_threshold: f64,
    /// Maximum mean box-coordinate error counted as a hit (inclusive).
    pub bbox_threshold: f64,
    /// Maximum mean click error counted as a hit (inclusive).
    pub point_threshold: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            iou_threshold: 0.5,
            bbox_threshold: 10.0,
            point_threshold: 100.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(RewardError::InvalidWeights(format!(
                "iou_threshold {} outside [0, 1]",
                self.iou_threshold
            )));
        }
        if self.bbox_threshold < 0.0 || self.point_threshold < 0.0 {
            return Err(RewardError::InvalidWeights(
                "pixel thresholds must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Classifies a difficulty score against the policy thresholds. The hard
/// boundary is inclusive: `difficulty == tau1` is hard.
pub fn level_of(difficulty: f64, policy: &BudgetPolicy) -> Result<DifficultyLevel, RewardError> {
    if !(1.0..=10.0).contains(&difficulty) {
        return Err(RewardError::DifficultyOutOfRange(difficulty));
    }
    Ok(if difficulty >= policy.tau1 {
        DifficultyLevel::Hard
    } else if difficulty < policy.tau2 {
        DifficultyLevel::Easy
    } else {
        DifficultyLevel::Medium
    })
}

/// Token budget for a sample, or `None` when the sample's difficulty level
/// leaves its length unconstrained.
pub fn token_budget(
    difficulty: f64,
    uncertainty: f64,
    policy: &BudgetPolicy,
) -> Result<Option<f64>, RewardError> {
    if !(0.0..=1.0).contains(&uncertainty) {
        return Err(RewardError::UncertaintyOutOfRange(uncertainty));
    }
    Ok(match level_of(difficulty, policy)? {
        DifficultyLevel::Hard => Some(policy.l_base + policy.alpha * uncertainty),
        DifficultyLevel::Easy => Some(policy.l_low),
        DifficultyLevel::Medium => None,
    })
}

/// Soft length penalty multiplier: 1 at or under budget (or with no budget),
/// then decaying linearly at rate `beta` per token of overshoot. With the
/// optional clamp floor disabled the multiplier may go negative.
pub fn soft_penalty(l_used: u64, budget: Option<f64>, policy: &BudgetPolicy) -> f64 {
    let Some(budget) = budget else { return 1.0 };
    let used = l_used as f64;
    if used <= budget {
        return 1.0;
    }
    let s = 1.0 - policy.beta * (used - budget);
    match policy.clamp_floor {
        Some(floor) => s.max(floor),
        None => s,
    }
}

/// The structured localization answer: one box and two clicks.
///
/// Serialization uses the exact key spellings the model is prompted to emit,
/// so a parsed reference serializes back to the canonical compact form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegReference {
    #[serde(rename = "Bbox")]
    pub bbox: BBox,
    #[serde(rename = "Point 1")]
    pub point1: Point,
    #[serde(rename = "Point 2")]
    pub point2: Point,
}

impl SegReference {
    /// Canonical compact JSON form of the answer payload.
    pub fn to_answer_json(&self) -> String {
        serde_json::to_string(self).expect("answer payload serializes")
    }
}

/// Result of scanning one model output for the reasoning and answer blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedOutput {
    /// Inner text of the reasoning block; empty unless `format_reason == 1`.
    pub think: String,
    /// The localization answer; present exactly when `format_seg == 1`.
    pub answer: Option<SegReference>,
    /// 1 iff exactly one `<think>...</think>` block exists and, when an
    /// answer block exists, the reasoning closes before it opens.
    pub format_reason: u8,
    /// 1 iff exactly one `<answer>...</answer>` block exists and its payload
    /// is a well-formed answer object.
    pub format_seg: u8,
}

/// Byte offsets of the unique well-formed `open...close` block, if any.
fn single_block(text: &str, open: &str, close: &str) -> Option<(usize, usize)> {
    let mut opens = text.match_indices(open).map(|(i, _)| i);
    let mut closes = text.match_indices(close).map(|(i, _)| i);
    let (o, c) = (opens.next()?, closes.next()?);
    if opens.next().is_some() || closes.next().is_some() || o > c {
        return None;
    }
    Some((o, c))
}

/// Parses the answer payload strictly: double-quoted JSON with the exact
/// key spellings, integer coordinates, and an ordered box. Extra keys are
/// tolerated; anything else fails.
fn parse_answer(payload: &str) -> Option<SegReference> {
    serde_json::from_str(payload.trim()).ok()
}

/// Scans a raw model output for the reasoning and answer blocks.
///
/// This function is total: malformed input yields zeroed format flags, never
/// an error. Tag matching is case-sensitive and requires exactly one
/// occurrence of each tag.
pub fn parse_output(text: &str) -> ParsedOutput {
    let think_block = single_block(text, "<think>", "</think>");
    let answer_block = single_block(text, "<answer>", "</answer>");

    let answer = answer_block
        .and_then(|(open, close)| parse_answer(&text[open + "<answer>".len()..close]));

    let format_reason = match think_block {
        Some((_, think_close)) => match answer_block {
            // The reasoning block must be finished before the answer starts.
            Some((answer_open, _)) => think_close + "</think>".len() <= answer_open,
            None => true,
        },
        None => false,
    };

    let think = if format_reason {
        let (open, close) = think_block.expect("format_reason implies a think block");
        text[open + "<think>".len()..close].to_string()
    } else {
        String::new()
    };

    ParsedOutput {
        think,
        format_reason: format_reason as u8,
        format_seg: answer.is_some() as u8,
        answer,
    }
}

/// The three binary accuracy components: mask hit, box hit, click hit.
/// All thresholds are inclusive.
pub fn accuracy_reward(
    pred: &SegReference,
    pred_mask: &Mask,
    gt: &SegReference,
    gt_mask: &Mask,
    weights: &RewardWeights,
) -> Result<(u8, u8, u8), RewardError> {
    weights.validate()?;
    let (iou_value, _) = iou(pred_mask, gt_mask)?;
    let acc_iou = iou_value >= weights.iou_threshold;
    let acc_bbox = bbox_l1(&pred.bbox, &gt.bbox) <= weights.bbox_threshold;
    let click_error =
        (point_l1(&pred.point1, &gt.point1) + point_l1(&pred.point2, &gt.point2)) / 2.0;
    let acc_point = click_error <= weights.point_threshold;
    Ok((acc_iou as u8, acc_bbox as u8, acc_point as u8))
}

/// Everything needed to score one model output against its ground truth.
///
/// `pred_mask` is the decoded mask for the predicted answer when a decoder
/// ran; without one, the predicted box is rasterized as a filled rectangle
/// on the ground-truth grid so the IoU component stays defined.
#[derive(Debug, Clone, Copy)]
pub struct SampleInputs<'a> {
    pub output_text: &'a str,
    pub pred_mask: Option<&'a Mask>,
    pub gt_reference: &'a SegReference,
    pub gt_mask: &'a Mask,
}

/// Full per-sample reward breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format_reason: u8,
    pub format_seg: u8,
    pub acc_iou: u8,
    pub acc_bbox: u8,
    pub acc_point: u8,
    /// Sum of the five components before length regulation.
    pub r_original: f64,
    pub level: DifficultyLevel,
    /// Token budget, absent for unconstrained (medium) samples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    /// The soft penalty multiplier `s`.
    pub penalty: f64,
    pub r_final: f64,
}

/// Scores one model output end to end: parse the blocks, check accuracy,
/// look up the budget, and apply the soft penalty.
pub fn final_reward(
    inputs: &SampleInputs,
    l_used: u64,
    difficulty: f64,
    uncertainty: f64,
    policy: &BudgetPolicy,
    weights: &RewardWeights,
) -> Result<RewardBreakdown, RewardError> {
    policy.validate()?;
    weights.validate()?;
    let parsed = parse_output(inputs.output_text);

    let (acc_iou, acc_bbox, acc_point) = match &parsed.answer {
        Some(pred) => {
            let rasterized;
            let pred_mask = match inputs.pred_mask {
                Some(mask) => mask,
                None => {
                    let mut filled =
                        Mask::new(inputs.gt_mask.width(), inputs.gt_mask.height())?;
                    filled.fill_box(&pred.bbox)?;
                    rasterized = filled;
                    &rasterized
                }
            };
            accuracy_reward(pred, pred_mask, inputs.gt_reference, inputs.gt_mask, weights)?
        }
        None => (0, 0, 0),
    };

    let level = level_of(difficulty, policy)?;
    let budget = token_budget(difficulty, uncertainty, policy)?;
    let penalty = soft_penalty(l_used, budget, policy);
    let r_original = (parsed.format_reason + parsed.format_seg + acc_iou + acc_bbox + acc_point)
        as f64;
    Ok(RewardBreakdown {
        format_reason: parsed.format_reason,
        format_seg: parsed.format_seg,
        acc_iou,
        acc_bbox,
        acc_point,
        r_original,
        level,
        budget,
        penalty,
        r_final: r_original * penalty,
    })
}
