//! Command-line front end for the segmentation-reasoning pipeline:
//! evaluation, annotation, reward scoring, and the toy trainer.
//!
//! Exit codes: 0 on a clean run, 1 on errors, 2 on usage mistakes, and 3
//! when a run completed but had to drop some input records.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use segreason_core::annotate::{
    annotate_batch, read_annotations, AnnotateOptions, SpatialTerms,
};
use segreason_core::config::Config;
use segreason_core::confidence::{TraceRecord, TraceScope};
use segreason_core::eval::{
    evaluate, read_offline_scores, read_predictions, EvalReport, ScoreSource,
};
use segreason_core::grpo::{generate_tasks, simulate_training, ToyPolicy, TrainingLog};
use segreason_core::judge::{HttpJudge, JudgeClient, OfflineJudge};
use segreason_core::mask::Mask;
use segreason_core::report::{render_eval, render_training, ReportFormat};
use segreason_core::reward::{
    final_reward, level_of, parse_output, DifficultyLevel, SampleInputs, SegReference,
};

/// Exit code for runs that finished but dropped some records.
const PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "segreason",
    version,
    about = "Evaluate, annotate, and reward segmentation reasoning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a predictions file against an annotation store.
    Evaluate(EvaluateArgs),
    /// Fill in difficulty scores and reference chains for raw samples.
    Annotate(AnnotateArgs),
    /// Score a single model output end to end.
    Reward(Box<RewardArgs>),
    /// Train the toy policy against the length-budget reward.
    Simulate(SimulateArgs),
    /// Re-render a stored evaluation report or training log.
    Report(ReportArgs),
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predictions file, one JSON record per line.
    #[arg(long)]
    predictions: PathBuf,
    /// Annotation store, one JSON record per line.
    #[arg(long)]
    annotations: PathBuf,
    /// Pre-computed reasoning scores; skips the judge entirely.
    #[arg(long)]
    offline_scores: Option<PathBuf>,
    /// Model size in billions of parameters; overrides the config.
    #[arg(long)]
    model_params: Option<f64>,
    /// Weight of segmentation in the blended score; overrides the config.
    #[arg(long)]
    gamma: Option<f64>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output format: text, json, or csv.
    #[arg(long, default_value = "text")]
    format: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base directory for relative mask paths in annotations.
    #[arg(long)]
    base_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AnnotateArgs {
    /// Samples to annotate, one JSON record per line.
    #[arg(long)]
    samples: PathBuf,
    /// Canned judge responses to replay instead of a live endpoint.
    #[arg(long)]
    offline_responses: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Samples annotated concurrently; overrides the config.
    #[arg(long)]
    concurrency: Option<usize>,
    /// On a malformed score reply, re-ask once demanding bare dictionary
    /// output instead of failing the sample.
    #[arg(long)]
    reprompt_on_parse_error: bool,
    /// Write annotated records here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base directory for relative mask paths in samples.
    #[arg(long)]
    base_dir: Option<PathBuf>,
    /// Spatial vocabulary file, one term per line.
    #[arg(long)]
    spatial_terms: Option<PathBuf>,
}

#[derive(Args)]
struct RewardArgs {
    /// Model output text, inline.
    #[arg(long, conflicts_with = "text_file")]
    text: Option<String>,
    /// Model output text, read from a file.
    #[arg(long)]
    text_file: Option<PathBuf>,
    /// Ground-truth answer as the canonical JSON object.
    #[arg(long)]
    gt_answer: String,
    /// Ground-truth mask in RLE text form.
    #[arg(long, conflicts_with = "annotation")]
    gt_mask_rle: Option<String>,
    /// Annotation store to pull the ground-truth mask from.
    #[arg(long, requires = "sample_id")]
    annotation: Option<PathBuf>,
    /// Sample id within the annotation store.
    #[arg(long)]
    sample_id: Option<String>,
    /// Predicted mask in RLE text form; without it the predicted box is
    /// rasterized instead.
    #[arg(long)]
    pred_mask_rle: Option<String>,
    /// Composite difficulty in [1, 10].
    #[arg(long)]
    difficulty: f64,
    /// Decoding uncertainty in [0, 1].
    #[arg(long)]
    uncertainty: Option<f64>,
    /// Trace file to compute the uncertainty from.
    #[arg(long, conflicts_with = "uncertainty")]
    trace: Option<PathBuf>,
    /// Sample id within the trace file; defaults to its only record.
    #[arg(long)]
    trace_id: Option<String>,
    /// Token range for the uncertainty: think or full.
    #[arg(long, default_value = "think")]
    trace_scope: String,
    /// Reasoning token count; defaults to the whitespace word count of the
    /// reasoning block.
    #[arg(long)]
    tokens: Option<u64>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base directory for relative mask paths in the annotation store.
    #[arg(long)]
    base_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of synthetic tasks to generate.
    #[arg(long, default_value_t = 30)]
    tasks: usize,
    /// Training steps; each one samples a group and updates the policy.
    #[arg(long, default_value_t = 300)]
    steps: u64,
    /// Seed for task generation and rollouts.
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Length-penalty rate override; 0 disables length regulation.
    #[arg(long)]
    beta: Option<f64>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the full step log (JSONL) here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format for the summary: text, json, or csv.
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Args)]
struct ReportArgs {
    /// A stored evaluation report (JSON) or training log (JSONL).
    #[arg(long)]
    input: PathBuf,
    /// Output format: text, json, or csv.
    #[arg(long, default_value = "text")]
    format: String,
    /// Write the rendering here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Evaluate(args) => run_evaluate(args),
        Command::Annotate(args) => run_annotate(args),
        Command::Reward(args) => run_reward(*args),
        Command::Simulate(args) => run_simulate(args),
        Command::Report(args) => run_report(args),
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("could not read {}", path.display()))
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content)
            .with_context(|| format!("could not write {}", path.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn run_evaluate(args: EvaluateArgs) -> Result<u8> {
    let config = load_config(args.config.as_deref())?;
    let mut profile = config.model;
    if let Some(params) = args.model_params {
        profile.params_billions = params;
    }
    if let Some(gamma) = args.gamma {
        profile.gamma = gamma;
    }
    let format: ReportFormat = args.format.parse()?;

    let (predictions, parse_warnings) = read_predictions(&read_file(&args.predictions)?);
    let annotations = read_annotations(&read_file(&args.annotations)?)?;
    for warning in &parse_warnings {
        eprintln!("warning: {warning}");
    }

    let base_dir = args.base_dir.as_deref();
    let outcome = match &args.offline_scores {
        Some(path) => {
            let scores = read_offline_scores(&read_file(path)?)?;
            evaluate(
                &predictions,
                &annotations,
                &ScoreSource::Offline(&scores),
                &config.budget,
                &profile,
                base_dir,
            )?
        }
        None => {
            let judge = HttpJudge::from_env(config.judge.clone())?;
            let opts = AnnotateOptions {
                retry: config.judge.retry.clone(),
                base_dir: args.base_dir.clone(),
                ..AnnotateOptions::default()
            };
            evaluate(
                &predictions,
                &annotations,
                &ScoreSource::Judge {
                    judge: &judge,
                    opts: &opts,
                },
                &config.budget,
                &profile,
                base_dir,
            )?
        }
    };
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }

    emit(args.out.as_deref(), &render_eval(&outcome.report, format)?)?;
    Ok(if parse_warnings.is_empty() && outcome.is_clean() {
        0
    } else {
        PARTIAL
    })
}

fn run_annotate(args: AnnotateArgs) -> Result<u8> {
    let config = load_config(args.config.as_deref())?;
    let samples = read_annotations(&read_file(&args.samples)?)?;

    let offline;
    let http;
    let judge: &dyn JudgeClient = match &args.offline_responses {
        Some(path) => {
            offline = OfflineJudge::from_jsonl(&read_file(path)?)?;
            &offline
        }
        None => {
            http = HttpJudge::from_env(config.judge.clone())?;
            &http
        }
    };

    let spatial_terms = match &args.spatial_terms {
        Some(path) => SpatialTerms::from_file(path)?,
        None => SpatialTerms::default(),
    };
    let opts = AnnotateOptions {
        retry: config.judge.retry.clone(),
        reprompt_on_parse_error: args.reprompt_on_parse_error,
        concurrency: args.concurrency.unwrap_or(config.judge.concurrency),
        spatial_terms,
        base_dir: args.base_dir.clone(),
    };

    let results = annotate_batch(&samples, judge, &config.budget, &opts);
    let mut lines = String::new();
    let mut failures = 0usize;
    for (sample, result) in samples.iter().zip(results) {
        match result {
            Ok(annotated) => {
                lines.push_str(&serde_json::to_string(&annotated)?);
                lines.push('\n');
            }
            Err(err) => {
                failures += 1;
                eprintln!("warning: sample {} failed: {err}", sample.sample_id);
            }
        }
    }
    emit(args.out.as_deref(), &lines)?;
    if failures > 0 {
        eprintln!("{failures} of {} sample(s) failed", samples.len());
        return Ok(PARTIAL);
    }
    Ok(0)
}

fn parse_trace_scope(text: &str) -> Result<TraceScope> {
    match text.to_ascii_lowercase().as_str() {
        "think" => Ok(TraceScope::Think),
        "full" => Ok(TraceScope::Full),
        other => bail!("unknown trace scope {other:?} (expected think or full)"),
    }
}

fn trace_uncertainty(args: &RewardArgs) -> Result<Option<f64>> {
    if let Some(value) = args.uncertainty {
        return Ok(Some(value));
    }
    let Some(path) = &args.trace else {
        return Ok(None);
    };
    let text = read_file(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord = serde_json::from_str(line)
            .with_context(|| format!("trace line {}", i + 1))?;
        records.push(record);
    }
    let record = match &args.trace_id {
        Some(id) => records
            .iter()
            .find(|r| &r.id == id)
            .with_context(|| format!("no trace record with id {id:?}"))?,
        None if records.len() == 1 => &records[0],
        None => bail!(
            "trace file has {} records; pick one with --trace-id",
            records.len()
        ),
    };
    let scope = parse_trace_scope(&args.trace_scope)?;
    Ok(Some(record.trace(scope)?.uncertainty()))
}

fn run_reward(args: RewardArgs) -> Result<u8> {
    let config = load_config(args.config.as_deref())?;
    let text = match (&args.text, &args.text_file) {
        (Some(text), None) => text.clone(),
        (None, Some(path)) => read_file(path)?,
        _ => bail!("pass the model output with exactly one of --text or --text-file"),
    };

    let gt_reference: SegReference = serde_json::from_str(&args.gt_answer)
        .context("parsing --gt-answer")?;
    let gt_mask = match (&args.gt_mask_rle, &args.annotation) {
        (Some(rle), None) => Mask::from_rle(rle).context("parsing --gt-mask-rle")?,
        (None, Some(path)) => {
            let id = args.sample_id.as_deref().expect("clap enforces the pair");
            let annotations = read_annotations(&read_file(path)?)?;
            let annotation = annotations
                .iter()
                .find(|a| a.sample_id == id)
                .with_context(|| format!("no annotation with sample id {id:?}"))?;
            annotation.mask(args.base_dir.as_deref())?
        }
        _ => bail!("pass the ground-truth mask with exactly one of --gt-mask-rle or --annotation"),
    };
    let pred_mask = args
        .pred_mask_rle
        .as_deref()
        .map(Mask::from_rle)
        .transpose()
        .context("parsing --pred-mask-rle")?;

    let uncertainty = trace_uncertainty(&args)?;
    let level = level_of(args.difficulty, &config.budget)?;
    if level == DifficultyLevel::Hard && uncertainty.is_none() {
        bail!("difficulty {} is in the hard band; pass --uncertainty or --trace", args.difficulty);
    }

    let l_used = match args.tokens {
        Some(count) => count,
        None => {
            let words = parse_output(&text).think.split_whitespace().count() as u64;
            eprintln!("note: token count estimated from reasoning text: {words}");
            words
        }
    };

    let inputs = SampleInputs {
        output_text: &text,
        pred_mask: pred_mask.as_ref(),
        gt_reference: &gt_reference,
        gt_mask: &gt_mask,
    };
    let breakdown = final_reward(
        &inputs,
        l_used,
        args.difficulty,
        uncertainty.unwrap_or(0.0),
        &config.budget,
        &config.weights,
    )?;
    println!("{}", serde_json::to_string_pretty(&breakdown)?);
    Ok(0)
}

fn run_simulate(args: SimulateArgs) -> Result<u8> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(beta) = args.beta {
        config.budget.beta = beta;
        config.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    let format: ReportFormat = args.format.parse()?;

    let tasks = generate_tasks(args.tasks, &config.toy, &config.budget, args.seed)?;
    let policy = ToyPolicy::uniform(config.toy.length_bins.len(), config.toy.answer_quality);
    let (_trained, log) =
        simulate_training(&tasks, &policy, &config.budget, &config.toy, args.steps, args.seed)?;

    if let Some(path) = &args.out {
        fs::write(path, log.to_jsonl())
            .with_context(|| format!("could not write {}", path.display()))?;
    }
    print!("{}", render_training(&log, format)?);
    Ok(0)
}

fn run_report(args: ReportArgs) -> Result<u8> {
    let format: ReportFormat = args.format.parse()?;
    let text = read_file(&args.input)?;
    let rendered = if let Ok(report) = serde_json::from_str::<EvalReport>(&text) {
        render_eval(&report, format)?
    } else if let Ok(log) = TrainingLog::from_jsonl(&text) {
        render_training(&log, format)?
    } else {
        bail!(
            "{} is neither an evaluation report (JSON) nor a training log (JSONL)",
            args.input.display()
        );
    };
    emit(args.out.as_deref(), &rendered)?;
    Ok(0)
}
