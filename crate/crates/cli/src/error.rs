use std::fmt;

use proofgraph_core::model::text::TextError;
use proofgraph_core::pipeline::text::PipelineSyntaxError;
use proofgraph_core::pipeline::PipelineError;
use proofgraph_core::provenance::ProvenanceError;
use proofgraph_core::store::StoreError;
use proofgraph_core::workspace::WorkspaceError;

/// Exit codes. Stable: scripts depend on them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Domain = 1,
    Usage = 2,
    Corrupt = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            exit: Exit::Usage,
            message: message.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        CliError {
            exit: Exit::Domain,
            message: message.into(),
        }
    }

    pub fn corrupt(message: impl Into<String>) -> Self {
        CliError {
            exit: Exit::Corrupt,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        if e.is_corruption() {
            CliError::corrupt(e.to_string())
        } else {
            CliError::domain(e.to_string())
        }
    }
}

impl From<WorkspaceError> for CliError {
    fn from(e: WorkspaceError) -> Self {
        CliError::domain(e.to_string())
    }
}

impl From<ProvenanceError> for CliError {
    fn from(e: ProvenanceError) -> Self {
        match e {
            ProvenanceError::Store(s) => s.into(),
            ProvenanceError::CorruptLog(_) | ProvenanceError::Parse { .. } => {
                CliError::corrupt(format!("provenance log: {e}"))
            }
            other => CliError::domain(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Store(s) => s.into(),
            PipelineError::Provenance(p) => p.into(),
            other => CliError::domain(other.to_string()),
        }
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        match e {
            TextError::Syntax { .. } => CliError::usage(e.to_string()),
            TextError::Graph { .. } => CliError::domain(e.to_string()),
        }
    }
}

impl From<PipelineSyntaxError> for CliError {
    fn from(e: PipelineSyntaxError) -> Self {
        CliError::usage(format!("pipeline file: {e}"))
    }
}
