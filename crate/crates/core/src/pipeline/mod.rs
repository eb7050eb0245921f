//! Proof pipelines.
//!
//! A pipeline is an ordered list of steps over the nodes of one model at one
//! commit. Each step transforms the previous step's output record, the
//! output is stored and recorded as a contribution (the step's evidence),
//! and only then is the step's control point evaluated. A failed control
//! point halts the run; evidence up to and including the failing step stays
//! recorded. When every control point passes, the last output's boolean
//! `final` field is the verdict.

pub mod text;
pub mod transform;

use std::collections::BTreeSet;

use serde::Serialize;

pub use transform::{Comparator, FieldValue, Record, Registry, TransformSpec};

use crate::id::ObjectId;
use crate::model::NodeId;
use crate::provenance::{ContributionDraft, ProvenanceError, ProvenanceLog};
use crate::store::{Backend, Store, StoreError};

/// Name of the output field holding the verdict of the final step.
pub const VERDICT_FIELD: &str = "final";

#[derive(Debug, Clone, PartialEq)]
pub enum CheckKind {
    Threshold {
        metric: String,
        cmp: Comparator,
        bound: f64,
    },
    NonEmpty,
    AlwaysPass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPoint {
    pub kind: CheckKind,
    pub description: String,
}

impl ControlPoint {
    pub fn always() -> Self {
        ControlPoint {
            kind: CheckKind::AlwaysPass,
            description: "always passes".into(),
        }
    }

    pub fn non_empty() -> Self {
        ControlPoint {
            kind: CheckKind::NonEmpty,
            description: "output is nonempty".into(),
        }
    }

    /// Fails if `bound` is not finite.
    pub fn threshold(metric: impl Into<String>, cmp: Comparator, bound: f64) -> Result<Self, String> {
        if !bound.is_finite() {
            return Err(format!("threshold bound {bound} is not finite"));
        }
        let metric = metric.into();
        Ok(ControlPoint {
            description: format!("{metric} {cmp} {bound}"),
            kind: CheckKind::Threshold { metric, cmp, bound },
        })
    }

    /// A missing or non-numeric metric fails a threshold.
    pub fn passes(&self, output: &Record) -> bool {
        match &self.kind {
            CheckKind::AlwaysPass => true,
            CheckKind::NonEmpty => !output.is_empty(),
            CheckKind::Threshold { metric, cmp, bound } => output
                .get(metric)
                .and_then(FieldValue::as_number)
                .is_some_and(|v| cmp.holds(v, *bound)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub node_id: NodeId,
    pub transform: TransformSpec,
    pub validator: ControlPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProofPipeline {
    pub pipeline_id: String,
    pub model_id: String,
    pub commit_id: ObjectId,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    True,
    False,
    /// Zero-based index of the step whose control point failed.
    Halted(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum PipelineIssue {
    EmptySteps,
    UncheckoutableCommit { commit: ObjectId },
    UnknownModel { model: String },
    UnknownNode { step: usize, node: NodeId },
    UnknownTransform { step: usize, name: String },
    /// Step `later` runs after step `earlier` but its node is upstream of
    /// the earlier step's node.
    OrderViolation { earlier: usize, later: usize },
    /// Step `step`'s node is not downstream of the previous step's node, so
    /// its evidence could not depend on the previous step's evidence.
    DisconnectedSteps { step: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PipelineReport {
    pub issues: Vec<PipelineIssue>,
}

impl PipelineReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid pipeline: {} issue(s)", .0.issues.len())]
    InvalidPipeline(PipelineReport),
    #[error("unknown commit {0}")]
    UnknownCommit(ObjectId),
    #[error("step {step}: {message}")]
    TransformError { step: usize, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunOutcome {
    pub verdict: Verdict,
    /// One contribution per executed step, in step order.
    pub evidence: Vec<ObjectId>,
    pub payload_digests: Vec<ObjectId>,
}

pub fn validate_pipeline<B: Backend>(pipeline: &ProofPipeline, store: &Store<B>) -> PipelineReport {
    validate_pipeline_with(&Registry::standard(), pipeline, store)
}

pub fn validate_pipeline_with<B: Backend>(
    registry: &Registry,
    pipeline: &ProofPipeline,
    store: &Store<B>,
) -> PipelineReport {
    let mut issues = Vec::new();
    if pipeline.steps.is_empty() {
        issues.push(PipelineIssue::EmptySteps);
    }
    for (i, step) in pipeline.steps.iter().enumerate() {
        if !registry.contains(&step.transform.name) {
            issues.push(PipelineIssue::UnknownTransform {
                step: i,
                name: step.transform.name.clone(),
            });
        }
    }
    let workspace = match store.checkout(&pipeline.commit_id) {
        Ok(ws) => ws,
        Err(_) => {
            issues.push(PipelineIssue::UncheckoutableCommit {
                commit: pipeline.commit_id,
            });
            return PipelineReport { issues };
        }
    };
    let Ok(model) = workspace.model(&pipeline.model_id) else {
        issues.push(PipelineIssue::UnknownModel {
            model: pipeline.model_id.clone(),
        });
        return PipelineReport { issues };
    };
    let mut upstream: Vec<Option<BTreeSet<NodeId>>> = Vec::with_capacity(pipeline.steps.len());
    for (i, step) in pipeline.steps.iter().enumerate() {
        match model.upstream_set(&step.node_id) {
            Ok(set) => upstream.push(Some(set)),
            Err(_) => {
                issues.push(PipelineIssue::UnknownNode {
                    step: i,
                    node: step.node_id.clone(),
                });
                upstream.push(None);
            }
        }
    }
    let steps = &pipeline.steps;
    for i in 0..steps.len() {
        let Some(up_i) = &upstream[i] else { continue };
        for j in i + 1..steps.len() {
            if upstream[j].is_some() && up_i.contains(&steps[j].node_id) {
                issues.push(PipelineIssue::OrderViolation { earlier: i, later: j });
            }
        }
    }
    for i in 1..steps.len() {
        let (Some(prev_up), Some(up)) = (&upstream[i - 1], &upstream[i]) else {
            continue;
        };
        let reversed = prev_up.contains(&steps[i].node_id);
        if !reversed && !up.contains(&steps[i - 1].node_id) {
            issues.push(PipelineIssue::DisconnectedSteps { step: i });
        }
    }
    issues.sort();
    PipelineReport { issues }
}

/// Runs a pipeline with the standard transform registry.
pub fn run<B: Backend>(
    pipeline: &ProofPipeline,
    input: &[u8],
    store: &mut Store<B>,
    log: &mut ProvenanceLog,
    author: &str,
) -> Result<RunOutcome, PipelineError> {
    run_with(&Registry::standard(), pipeline, input, store, log, author)
}

pub fn run_with<B: Backend>(
    registry: &Registry,
    pipeline: &ProofPipeline,
    input: &[u8],
    store: &mut Store<B>,
    log: &mut ProvenanceLog,
    author: &str,
) -> Result<RunOutcome, PipelineError> {
    let snapshot = store.snapshot(&pipeline.commit_id).map_err(|e| match e {
        StoreError::UnknownCommit(id) => PipelineError::UnknownCommit(id),
        other => PipelineError::Store(other),
    })?;
    let report = validate_pipeline_with(registry, pipeline, store);
    if !report.is_clean() {
        return Err(PipelineError::InvalidPipeline(report));
    }
    let mut current = transform::record_from_bytes(input)
        .map_err(|message| PipelineError::TransformError { step: 0, message })?;
    let mut outcome = RunOutcome {
        verdict: Verdict::False,
        evidence: Vec::with_capacity(pipeline.steps.len()),
        payload_digests: Vec::with_capacity(pipeline.steps.len()),
    };
    let mut previous: Option<ObjectId> = None;
    for (i, step) in pipeline.steps.iter().enumerate() {
        let output = registry
            .apply(&step.transform, &current)
            .map_err(|message| PipelineError::TransformError { step: i, message })?;
        let digest = store.put_blob(&transform::record_to_bytes(&output))?;
        let id = log.record_at(
            &snapshot,
            ContributionDraft {
                author: author.to_string(),
                model_id: pipeline.model_id.clone(),
                commit_id: pipeline.commit_id,
                node_id: step.node_id.clone(),
                payload_digest: digest,
                upstream: previous.into_iter().collect(),
            },
        )?;
        outcome.evidence.push(id);
        outcome.payload_digests.push(digest);
        if !step.validator.passes(&output) {
            outcome.verdict = Verdict::Halted(i);
            return Ok(outcome);
        }
        previous = Some(id);
        current = output;
    }
    outcome.verdict = match current.get(VERDICT_FIELD) {
        Some(FieldValue::Bool(true)) => Verdict::True,
        Some(FieldValue::Bool(false)) => Verdict::False,
        _ => {
            return Err(PipelineError::TransformError {
                step: pipeline.steps.len() - 1,
                message: format!("final output has no boolean {VERDICT_FIELD:?} field"),
            })
        }
    };
    Ok(outcome)
}
