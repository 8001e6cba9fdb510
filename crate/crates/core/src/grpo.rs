//! Group-relative policy optimization on a toy length-selection environment.
//!
//! The toy environment strips reasoning generation down to the one choice
//! the length penalty is supposed to shape: how many tokens to spend. A
//! policy keeps one categorical distribution over candidate reasoning
//! lengths per difficulty level. Rolling out a task samples a length,
//! then samples answer correctness from a saturating accuracy curve
//! (longer reasoning helps, with diminishing returns that set in sooner on
//! easy tasks). Rewards reuse the real budget and penalty rules, so a
//! training run demonstrates end to end whether the penalty shortens easy
//! reasoning without hurting accuracy.
//!
//! Updates are plain group-relative policy gradient: advantages are
//! rewards normalized within a rollout group, and the ascent direction is
//! the advantage-weighted log-probability gradient minus a scaled KL pull
//! toward the frozen reference policy. There is no ratio clipping; one
//! gradient step follows each group.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::{
    level_of, soft_penalty, token_budget, BudgetPolicy, DifficultyLevel, RewardError,
};

/// Additive stabilizer in the advantage denominator.
pub const ADVANTAGE_EPSILON: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GrpoError {
    #[error("a rollout group needs at least two rollouts, got {0}")]
    GroupTooSmall(usize),
    #[error("rollout group mixes sample ids {0} and {1}")]
    MixedGroup(String, String),
    #[error("nothing to update on: empty batch")]
    EmptyBatch,
    #[error("invalid toy config: {0}")]
    InvalidConfig(String),
    #[error("invalid training log: {0}")]
    Log(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Within-group normalized advantages: `(r - mean) / (pop_std + epsilon)`.
///
/// The standard deviation is the population form (divide by n). A
/// zero-variance group yields all-zero advantages even with `epsilon = 0`,
/// since every reward equals the baseline.
pub fn group_advantages(rewards: &[f64], epsilon: f64) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / (std + epsilon)).collect())
}

/// Tunables of the toy environment and trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    /// Candidate reasoning lengths, in tokens, strictly increasing.
    pub length_bins: Vec<u32>,
    /// Rollouts sampled per task before each update.
    pub group_size: usize,
    /// Logit-space step size.
    pub learning_rate: f64,
    /// Weight of the KL pull toward the reference policy.
    pub kl_coeff: f64,
    /// Ceiling multiplier on the accuracy curve, modeling model ability.
    pub answer_quality: f64,
    /// Accuracy curve value at zero reasoning length.
    pub accuracy_floor: f64,
    /// Curve saturation scales for easy, medium, and hard tasks. Larger
    /// scales mean accuracy keeps improving deeper into the length range.
    pub curve_scales: [f64; 3],
    /// Size of the latent answer alphabet.
    pub num_labels: usize,
    /// Reward granted for the (always satisfied) format components.
    pub format_reward: f64,
    /// Additional reward for a correct answer.
    pub accuracy_bonus: f64,
    /// Half-width of the uniform noise added to the difficulty-correlated
    /// uncertainty of generated tasks.
    pub uncertainty_jitter: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            length_bins: vec![32, 64, 96, 128, 192, 256, 320, 384],
            group_size: 8,
            learning_rate: 0.05,
            kl_coeff: 1e-3,
            answer_quality: 1.0,
            accuracy_floor: 0.25,
            curve_scales: [16.0, 48.0, 96.0],
            num_labels: 4,
            format_reward: 2.0,
            accuracy_bonus: 3.0,
            uncertainty_jitter: 0.1,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let err = |msg: String| Err(GrpoError::InvalidConfig(msg));
        if self.length_bins.is_empty() {
            return err("length_bins is empty".into());
        }
        if !self.length_bins.windows(2).all(|w| w[0] < w[1]) {
            return err("length_bins must be strictly increasing".into());
        }
        if self.length_bins[0] == 0 {
            return err("length bins must be positive".into());
        }
        if self.group_size < 2 {
            return err(format!("group_size {} below 2", self.group_size));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return err(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.kl_coeff < 0.0 {
            return err(format!("kl_coeff {} must be non-negative", self.kl_coeff));
        }
        if !(0.0 < self.answer_quality && self.answer_quality <= 1.0) {
            return err(format!("answer_quality {} outside (0, 1]", self.answer_quality));
        }
        if !(0.0..1.0).contains(&self.accuracy_floor) {
            return err(format!("accuracy_floor {} outside [0, 1)", self.accuracy_floor));
        }
        if self.curve_scales.iter().any(|s| *s <= 0.0) {
            return err("curve scales must be positive".into());
        }
        if self.num_labels < 2 {
            return err("num_labels must be at least 2".into());
        }
        if self.format_reward < 0.0 || self.accuracy_bonus <= 0.0 {
            return err("rewards must be non-negative with a positive accuracy bonus".into());
        }
        if !(0.0..=0.5).contains(&self.uncertainty_jitter) {
            return err(format!(
                "uncertainty_jitter {} outside [0, 0.5]",
                self.uncertainty_jitter
            ));
        }
        Ok(())
    }

    fn curve_scale(&self, level: DifficultyLevel) -> f64 {
        self.curve_scales[level_index(level)]
    }
}

fn level_index(level: DifficultyLevel) -> usize {
    match level {
        DifficultyLevel::Easy => 0,
        DifficultyLevel::Medium => 1,
        DifficultyLevel::Hard => 2,
    }
}

/// Probability of a correct answer after `length` reasoning tokens:
/// a saturating exponential rising from `floor` toward 1 with scale `scale`.
pub fn accuracy_curve(length: u32, scale: f64, floor: f64) -> f64 {
    1.0 - (1.0 - floor) * (-(length as f64) / scale).exp()
}

/// One synthetic task: a difficulty score, a per-task uncertainty, and a
/// latent answer the policy is trying to hit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyTask {
    pub sample_id: String,
    pub difficulty: f64,
    pub uncertainty: f64,
    pub latent_label: usize,
}

/// Generates `n` tasks cycling through the three difficulty levels, with
/// difficulty drawn uniformly inside each level's band and uncertainty
/// correlated with difficulty plus bounded jitter.
pub fn generate_tasks(
    n: usize,
    config: &ToyConfig,
    policy: &BudgetPolicy,
    seed: u64,
) -> Result<Vec<ToyTask>, GrpoError> {
    config.validate()?;
    policy.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bands = [
        (1.0, policy.tau2),
        (policy.tau2, policy.tau1),
        (policy.tau1, 10.0),
    ];
    let mut tasks = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = bands[i % 3];
        let difficulty = if lo < hi { rng.gen_range(lo..hi) } else { lo };
        let jitter = rng.gen_range(-config.uncertainty_jitter..=config.uncertainty_jitter);
        let uncertainty = ((difficulty - 1.0) / 9.0 + jitter).clamp(0.0, 1.0);
        let latent_label = rng.gen_range(0..config.num_labels);
        tasks.push(ToyTask {
            sample_id: format!("task-{i:04}"),
            difficulty,
            uncertainty,
            latent_label,
        });
    }
    Ok(tasks)
}

/// A categorical distribution over length bins for each difficulty level,
/// parameterized in logit space, plus the fixed answer-quality ability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    logits: Vec<Vec<f64>>,
    pub answer_quality: f64,
}

impl ToyPolicy {
    /// Uniform distribution over `num_bins` lengths at every level.
    pub fn uniform(num_bins: usize, answer_quality: f64) -> Self {
        ToyPolicy {
            logits: vec![vec![0.0; num_bins]; 3],
            answer_quality,
        }
    }

    pub fn num_bins(&self) -> usize {
        self.logits[0].len()
    }

    pub fn logits(&self, level: DifficultyLevel) -> &[f64] {
        &self.logits[level_index(level)]
    }

    /// Overwrites one logit, for external gradient checks and probes.
    pub fn set_logit(&mut self, level: DifficultyLevel, bin: usize, value: f64) {
        self.logits[level_index(level)][bin] = value;
    }

    /// Length-bin probabilities at one level (a proper distribution).
    pub fn probs(&self, level: DifficultyLevel) -> Vec<f64> {
        softmax(self.logits(level))
    }

    /// Expected reasoning length at one level under the current policy.
    pub fn expected_length(&self, level: DifficultyLevel, bins: &[u32]) -> f64 {
        self.probs(level)
            .iter()
            .zip(bins)
            .map(|(p, len)| p * *len as f64)
            .sum()
    }

    /// Samples a length bin using a single uniform draw.
    fn sample_bin<R: Rng>(&self, level: DifficultyLevel, rng: &mut R) -> usize {
        let probs = self.probs(level);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (bin, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return bin;
            }
        }
        probs.len() - 1
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// One sampled completion of one task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rollout {
    pub sample_id: String,
    /// The sampled policy choice that produced this rollout.
    pub level: DifficultyLevel,
    pub bin: usize,
    /// Reasoning tokens spent.
    pub l_used: u32,
    pub correct: bool,
    /// Regulated reward, budget and penalty already applied.
    pub reward: f64,
}

/// All rollouts of one task, the unit advantages are normalized within.
#[derive(Debug, Clone)]
pub struct Group {
    rollouts: Vec<Rollout>,
}

impl Group {
    pub fn new(rollouts: Vec<Rollout>) -> Result<Self, GrpoError> {
        if rollouts.len() < 2 {
            return Err(GrpoError::GroupTooSmall(rollouts.len()));
        }
        if let Some(stranger) = rollouts[1..]
            .iter()
            .find(|r| r.sample_id != rollouts[0].sample_id)
        {
            return Err(GrpoError::MixedGroup(
                rollouts[0].sample_id.clone(),
                stranger.sample_id.clone(),
            ));
        }
        Ok(Group { rollouts })
    }

    pub fn rollouts(&self) -> &[Rollout] {
        &self.rollouts
    }

    pub fn advantages(&self, epsilon: f64) -> Result<Vec<f64>, GrpoError> {
        let rewards: Vec<f64> = self.rollouts.iter().map(|r| r.reward).collect();
        group_advantages(&rewards, epsilon)
    }
}

/// The objective one update step ascends, for a fixed batch of rollouts
/// with precomputed advantages: the mean advantage-weighted log-probability
/// of each sampled bin, minus `kl_coeff` times the mean per-rollout KL from
/// the reference distribution at the rollout's level.
pub fn surrogate_objective(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    batch: &[(&Rollout, f64)],
    kl_coeff: f64,
) -> f64 {
    let mut total = 0.0;
    for (rollout, advantage) in batch {
        let probs = policy.probs(rollout.level);
        let ref_probs = reference.probs(rollout.level);
        let kl: f64 = probs
            .iter()
            .zip(&ref_probs)
            .map(|(p, q)| if *p > 0.0 { p * (p / q).ln() } else { 0.0 })
            .sum();
        total += advantage * probs[rollout.bin].ln() - kl_coeff * kl;
    }
    total / batch.len() as f64
}

/// Analytic gradient of [`surrogate_objective`] with respect to the policy
/// logits, shaped `[level][bin]`.
pub fn surrogate_gradient(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    batch: &[(&Rollout, f64)],
    kl_coeff: f64,
) -> Vec<Vec<f64>> {
    let mut grad = vec![vec![0.0; policy.num_bins()]; 3];
    let scale = 1.0 / batch.len() as f64;
    for (rollout, advantage) in batch {
        let level = level_index(rollout.level);
        let probs = policy.probs(rollout.level);
        let ref_probs = reference.probs(rollout.level);
        let kl: f64 = probs
            .iter()
            .zip(&ref_probs)
            .map(|(p, q)| if *p > 0.0 { p * (p / q).ln() } else { 0.0 })
            .sum();
        for bin in 0..probs.len() {
            let indicator = (bin == rollout.bin) as u8 as f64;
            // d/dz_j of log pi(b): indicator - pi_j.
            let logp_term = advantage * (indicator - probs[bin]);
            // d/dz_j of KL(pi || ref): pi_j * (ln(pi_j / q_j) - KL).
            let kl_term = probs[bin] * ((probs[bin] / ref_probs[bin]).ln() - kl);
            grad[level][bin] += scale * (logp_term - kl_coeff * kl_term);
        }
    }
    grad
}

/// One gradient-ascent step over a batch of groups. Advantages are
/// normalized within each group with [`ADVANTAGE_EPSILON`]; there is no
/// ratio clipping. Returns the updated policy.
pub fn policy_update(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    groups: &[Group],
    kl_coeff: f64,
    learning_rate: f64,
) -> Result<ToyPolicy, GrpoError> {
    if groups.is_empty() {
        return Err(GrpoError::EmptyBatch);
    }
    let mut advantaged: Vec<(&Rollout, f64)> = Vec::new();
    for group in groups {
        let advantages = group.advantages(ADVANTAGE_EPSILON)?;
        advantaged.extend(group.rollouts().iter().zip(advantages));
    }
    let grad = surrogate_gradient(policy, reference, &advantaged, kl_coeff);
    let mut updated = policy.clone();
    for (level, level_grad) in grad.iter().enumerate() {
        for (bin, g) in level_grad.iter().enumerate() {
            updated.logits[level][bin] += learning_rate * g;
        }
    }
    Ok(updated)
}

/// Per-step group statistics written to the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub level: DifficultyLevel,
    pub mean_length: f64,
    pub mean_reward: f64,
    pub mean_accuracy: f64,
}

/// Exact expectations under a policy, averaged over a set of tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub tasks: usize,
    pub expected_length: f64,
    pub expected_accuracy: f64,
    pub expected_reward: f64,
}

/// Final-policy expectations per level and overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub steps: u64,
    pub levels: BTreeMap<DifficultyLevel, LevelSummary>,
    pub overall: LevelSummary,
}

/// A complete training run: one record per step plus the final summary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<StepRecord>,
    pub summary: TrainingSummary,
}

#[derive(Serialize, Deserialize)]
struct SummaryLine {
    summary: TrainingSummary,
}

impl TrainingLog {
    /// One JSON object per line: every step record, then a final
    /// `{"summary": ...}` line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("step record serializes"));
            out.push('\n');
        }
        let line = SummaryLine {
            summary: self.summary.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("summary serializes"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, GrpoError> {
        let mut records = Vec::new();
        let mut summary = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if let Ok(line) = serde_json::from_str::<SummaryLine>(line) {
                summary = Some(line.summary);
            } else {
                let record: StepRecord = serde_json::from_str(line)
                    .map_err(|e| GrpoError::Log(format!("line {}: {e}", i + 1)))?;
                records.push(record);
            }
        }
        let summary = summary.ok_or_else(|| GrpoError::Log("missing summary line".into()))?;
        Ok(TrainingLog { records, summary })
    }
}

/// Expected per-task statistics under `policy`, exactly (no sampling).
fn expectation_over(
    tasks: &[&ToyTask],
    policy: &ToyPolicy,
    budget_policy: &BudgetPolicy,
    config: &ToyConfig,
) -> Result<LevelSummary, GrpoError> {
    let mut summary = LevelSummary {
        tasks: tasks.len(),
        expected_length: 0.0,
        expected_accuracy: 0.0,
        expected_reward: 0.0,
    };
    for task in tasks {
        let level = level_of(task.difficulty, budget_policy)?;
        let budget = token_budget(task.difficulty, task.uncertainty, budget_policy)?;
        let probs = policy.probs(level);
        for (bin, p) in probs.iter().enumerate() {
            let length = config.length_bins[bin];
            let acc = policy.answer_quality
                * accuracy_curve(length, config.curve_scale(level), config.accuracy_floor);
            let penalty = soft_penalty(length as u64, budget, budget_policy);
            summary.expected_length += p * length as f64;
            summary.expected_accuracy += p * acc;
            summary.expected_reward +=
                p * (config.format_reward + config.accuracy_bonus * acc) * penalty;
        }
    }
    let n = tasks.len().max(1) as f64;
    summary.expected_length /= n;
    summary.expected_accuracy /= n;
    summary.expected_reward /= n;
    Ok(summary)
}

fn simulate_rollout<R: Rng>(
    task: &ToyTask,
    level: DifficultyLevel,
    policy: &ToyPolicy,
    budget_policy: &BudgetPolicy,
    config: &ToyConfig,
    rng: &mut R,
) -> Result<Rollout, GrpoError> {
    let bin = policy.sample_bin(level, rng);
    let length = config.length_bins[bin];
    let p_correct = policy.answer_quality
        * accuracy_curve(length, config.curve_scale(level), config.accuracy_floor);
    // Both draws happen unconditionally so seed-matched runs with different
    // policies consume the random stream in lockstep.
    let hit = rng.gen::<f64>() < p_correct;
    let miss_offset = rng.gen_range(1..config.num_labels);
    let guess = if hit {
        task.latent_label
    } else {
        (task.latent_label + miss_offset) % config.num_labels
    };
    let correct = guess == task.latent_label;
    let budget = token_budget(task.difficulty, task.uncertainty, budget_policy)?;
    let penalty = soft_penalty(length as u64, budget, budget_policy);
    let raw = config.format_reward + config.accuracy_bonus * correct as u8 as f64;
    Ok(Rollout {
        sample_id: task.sample_id.clone(),
        level,
        bin,
        l_used: length,
        correct,
        reward: raw * penalty,
    })
}

/// Runs `steps` update steps: each step samples one task, rolls out a group,
/// and applies one policy update. The reference policy for the KL term is
/// the starting policy, frozen. Identical inputs and seed reproduce the
/// returned log byte for byte.
pub fn simulate_training(
    tasks: &[ToyTask],
    policy: &ToyPolicy,
    budget_policy: &BudgetPolicy,
    config: &ToyConfig,
    steps: u64,
    seed: u64,
) -> Result<(ToyPolicy, TrainingLog), GrpoError> {
    config.validate()?;
    budget_policy.validate()?;
    if tasks.is_empty() {
        return Err(GrpoError::InvalidConfig("no tasks".into()));
    }
    if policy.num_bins() != config.length_bins.len() {
        return Err(GrpoError::InvalidConfig(format!(
            "policy has {} bins, config has {}",
            policy.num_bins(),
            config.length_bins.len()
        )));
    }

    let reference = policy.clone();
    let mut policy = policy.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(steps as usize);

    for step in 1..=steps {
        let task = &tasks[rng.gen_range(0..tasks.len())];
        let level = level_of(task.difficulty, budget_policy)?;
        let mut rollouts = Vec::with_capacity(config.group_size);
        for _ in 0..config.group_size {
            rollouts.push(simulate_rollout(
                task,
                level,
                &policy,
                budget_policy,
                config,
                &mut rng,
            )?);
        }
        let g = config.group_size as f64;
        records.push(StepRecord {
            step,
            level,
            mean_length: rollouts.iter().map(|r| r.l_used as f64).sum::<f64>() / g,
            mean_reward: rollouts.iter().map(|r| r.reward).sum::<f64>() / g,
            mean_accuracy: rollouts.iter().filter(|r| r.correct).count() as f64 / g,
        });
        let group = Group::new(rollouts)?;
        policy = policy_update(&policy, &reference, &[group], config.kl_coeff, config.learning_rate)?;
    }

    let mut levels = BTreeMap::new();
    for level in DifficultyLevel::ALL {
        let of_level: Vec<&ToyTask> = tasks
            .iter()
            .filter(|t| level_of(t.difficulty, budget_policy).ok() == Some(level))
            .collect();
        if !of_level.is_empty() {
            levels.insert(
                level,
                expectation_over(&of_level, &policy, budget_policy, config)?,
            );
        }
    }
    let all: Vec<&ToyTask> = tasks.iter().collect();
    let overall = expectation_over(&all, &policy, budget_policy, config)?;
    let log = TrainingLog {
        records,
        summary: TrainingSummary {
            steps,
            levels,
            overall,
        },
    };
    Ok((policy, log))
}
