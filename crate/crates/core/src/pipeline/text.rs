//! Line-oriented pipeline definitions.
//!
//! ```text
//! pipeline <id> <model-id> <commit-hex>
//! step <node-id> <transform> [k=v ...] check always
//! step <node-id> <transform> [k=v ...] check nonempty
//! step <node-id> <transform> [k=v ...] check threshold <field> <cmp> <bound>
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;

use super::{CheckKind, ControlPoint, ProofPipeline, Step, TransformSpec};
use crate::id::ObjectId;
use crate::model::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct PipelineSyntaxError {
    pub line: usize,
    pub message: String,
}

pub fn parse_pipeline(text: &str) -> Result<ProofPipeline, PipelineSyntaxError> {
    let mut header: Option<(String, String, ObjectId)> = None;
    let mut steps = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |message: String| PipelineSyntaxError { line, message };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let words: Vec<&str> = trimmed.split_whitespace().collect();
        match words[0] {
            "pipeline" => {
                if header.is_some() {
                    return Err(err("duplicate pipeline header".into()));
                }
                let [_, id, model, commit] = words[..] else {
                    return Err(err("expected `pipeline <id> <model-id> <commit-hex>`".into()));
                };
                let commit = commit
                    .parse::<ObjectId>()
                    .map_err(|e| err(format!("commit: {e}")))?;
                header = Some((id.to_string(), model.to_string(), commit));
            }
            "step" => {
                if header.is_none() {
                    return Err(err("step before pipeline header".into()));
                }
                steps.push(parse_step(&words[1..]).map_err(err)?);
            }
            other => return Err(err(format!("unknown record `{other}`"))),
        }
    }
    let Some((pipeline_id, model_id, commit_id)) = header else {
        return Err(PipelineSyntaxError {
            line: 0,
            message: "missing pipeline header".into(),
        });
    };
    Ok(ProofPipeline {
        pipeline_id,
        model_id,
        commit_id,
        steps,
    })
}

fn parse_step(words: &[&str]) -> Result<Step, String> {
    let Some(check_at) = words.iter().position(|w| *w == "check") else {
        return Err("step has no `check` clause".into());
    };
    let (head, check) = (&words[..check_at], &words[check_at + 1..]);
    let [node, name, params @ ..] = head else {
        return Err("expected `step <node-id> <transform> [k=v ...]`".into());
    };
    let node_id = NodeId::new(*node).map_err(|e| e.to_string())?;
    let mut transform = TransformSpec::new(*name);
    for p in params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| format!("parameter `{p}` is not k=v"))?;
        if k.is_empty() || transform.params.contains_key(k) {
            return Err(format!("bad or duplicate parameter `{k}`"));
        }
        transform = transform.with(k, v);
    }
    let validator = match check {
        ["always"] => ControlPoint::always(),
        ["nonempty"] => ControlPoint::non_empty(),
        ["threshold", metric, cmp, bound] => {
            let cmp = cmp.parse()?;
            let bound: f64 = bound
                .parse()
                .map_err(|_| format!("bound `{bound}` is not a number"))?;
            ControlPoint::threshold(*metric, cmp, bound)?
        }
        _ => return Err(format!("bad check clause `{}`", check.join(" "))),
    };
    Ok(Step {
        node_id,
        transform,
        validator,
    })
}

pub fn render_pipeline(p: &ProofPipeline) -> String {
    let mut out = format!("pipeline {} {} {}\n", p.pipeline_id, p.model_id, p.commit_id);
    for step in &p.steps {
        let _ = write!(out, "step {} {}", step.node_id, step.transform.name);
        for (k, v) in &step.transform.params {
            let _ = write!(out, " {k}={v}");
        }
        out.push_str(" check ");
        match &step.validator.kind {
            CheckKind::AlwaysPass => out.push_str("always"),
            CheckKind::NonEmpty => out.push_str("nonempty"),
            CheckKind::Threshold { metric, cmp, bound } => {
                let _ = write!(out, "threshold {metric} {cmp} {bound}");
            }
        }
        out.push('\n');
    }
    out
}
