//! Core library for length-regulated reasoning segmentation.
//!
//! A reasoning segmentation model first writes a chain of thought, then emits
//! a structured localization answer (a box plus two clicks) that a downstream
//! mask decoder turns into a binary mask. This crate provides everything
//! needed to score, regulate, and evaluate that pipeline:
//!
//! - [`mask`]: binary masks, localization geometry, and overlap metrics.
//! - [`confidence`]: token-level top-2 margin traces and the derived
//!   uncertainty score.
//! - [`reward`]: output-format parsing, accuracy rewards, and the
//!   difficulty/uncertainty-modulated soft length penalty.
//! - [`grpo`]: group-relative policy optimization on a toy length-selection
//!   environment, used to validate the reward design end to end.
//! - [`judge`]: a pluggable judge client (HTTP or file-backed) for
//!   LLM-scored annotations.
//! - [`annotate`]: difficulty scoring, reference-chain generation, and
//!   reasoning-quality scoring built on the judge.
//! - [`eval`]: the stratified evaluation protocol with efficiency-aware
//!   aggregate scores.
//! - [`report`]: text, JSON, and CSV rendering of reports and training logs.
//! - [`config`]: one config file tying the knobs together.

pub mod annotate;
pub mod config;
pub mod confidence;
pub mod eval;
pub mod grpo;
pub mod judge;
pub mod mask;
pub mod report;
pub mod reward;
