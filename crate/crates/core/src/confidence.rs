//! Token-level confidence traces and the derived uncertainty score.
//!
//! At each decoding step the policy's two largest next-token probabilities
//! are recorded. A confidently generated token has a wide top-2 margin, so
//! averaging margins over the trace and taking the complement gives a
//! sample-level uncertainty in `[0, 1]`: 0 for fully one-hot decoding, 1
//! when the top two candidates are always tied.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace has no steps")]
    Empty,
    #[error("step {index}: invalid top-2 probabilities p1={p1}, p2={p2} (need 0 <= p2 <= p1 <= 1 and p1 + p2 <= 1)")]
    InvalidStep { index: usize, p1: f64, p2: f64 },
    #[error("think span [{start}, {end}) out of range for {len} steps")]
    InvalidSpan { start: usize, end: usize, len: usize },
}

/// Top-1 and top-2 next-token probabilities at one decoding step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct TokenStep {
    pub p1: f64,
    pub p2: f64,
}

impl TokenStep {
    pub fn new(p1: f64, p2: f64) -> Self {
        TokenStep { p1, p2 }
    }

    /// The top-2 probability margin `p1 - p2`.
    pub fn margin(&self) -> f64 {
        self.p1 - self.p2
    }

    fn is_valid(&self) -> bool {
        self.p2 >= 0.0 && self.p1 >= self.p2 && self.p1 <= 1.0 && self.p1 + self.p2 <= 1.0
    }
}

impl From<(f64, f64)> for TokenStep {
    fn from((p1, p2): (f64, f64)) -> Self {
        TokenStep { p1, p2 }
    }
}

impl From<TokenStep> for (f64, f64) {
    fn from(s: TokenStep) -> Self {
        (s.p1, s.p2)
    }
}

/// A validated, nonempty sequence of [`TokenStep`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningTrace {
    steps: Vec<TokenStep>,
}

impl ReasoningTrace {
    /// Validates every step; errors carry the offending step index.
    pub fn new(steps: Vec<TokenStep>) -> Result<Self, TraceError> {
        if steps.is_empty() {
            return Err(TraceError::Empty);
        }
        for (index, step) in steps.iter().enumerate() {
            if !step.is_valid() {
                return Err(TraceError::InvalidStep {
                    index,
                    p1: step.p1,
                    p2: step.p2,
                });
            }
        }
        Ok(ReasoningTrace { steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty traces
    }

    pub fn steps(&self) -> &[TokenStep] {
        &self.steps
    }

    /// Mean top-2 margin over the trace.
    pub fn mean_margin(&self) -> f64 {
        let sum: f64 = self.steps.iter().map(TokenStep::margin).sum();
        sum / self.steps.len() as f64
    }

    /// Uncertainty score: the complement of the mean margin, so
    /// `uncertainty() + mean_margin() == 1.0` holds exactly.
    pub fn uncertainty(&self) -> f64 {
        1.0 - self.mean_margin()
    }
}

/// Which tokens of a stored trace the uncertainty is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceScope {
    /// Restrict to the recorded reasoning span when one is present, falling
    /// back to the full trace otherwise.
    #[default]
    Think,
    /// Always use the full trace.
    Full,
}

/// One line of a trace file: a sample id, per-step top-2 probabilities, and
/// an optional half-open `[start, end)` token range covering the reasoning
/// block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: String,
    pub steps: Vec<TokenStep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub think_span: Option<[usize; 2]>,
}

impl TraceRecord {
    /// Builds the validated trace this record describes under `scope`.
    pub fn trace(&self, scope: TraceScope) -> Result<ReasoningTrace, TraceError> {
        let steps = match (scope, self.think_span) {
            (TraceScope::Think, Some([start, end])) => {
                if start >= end || end > self.steps.len() {
                    return Err(TraceError::InvalidSpan {
                        start,
                        end,
                        len: self.steps.len(),
                    });
                }
                self.steps[start..end].to_vec()
            }
            _ => self.steps.clone(),
        };
        ReasoningTrace::new(steps)
    }
}
