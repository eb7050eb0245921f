//! Files the CLI keeps next to the object store: the staged workspace
//! (`index`, canonical workspace bytes) and the provenance log
//! (`provenance.jsonl`).

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use proofgraph_core::encoding::Canonical;
use proofgraph_core::provenance::ProvenanceLog;
use proofgraph_core::store::{write_atomic, DirBackend};
use proofgraph_core::{Store, Workspace};

use crate::error::CliError;

pub const INDEX_FILE: &str = "index";
pub const LOG_FILE: &str = "provenance.jsonl";

pub struct State {
    pub store: Store<DirBackend>,
}

fn read_optional(path: &Path) -> Result<Option<Vec<u8>>, CliError> {
    match fs::read(path) {
        Ok(bytes) => Ok(Some(bytes)),
        Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
        Err(e) => Err(CliError::domain(format!("{}: {e}", path.display()))),
    }
}

impl State {
    pub fn open(root: &Path) -> Result<Self, CliError> {
        let store = Store::open(root).map_err(|_| {
            CliError::domain(format!(
                "{} is not a proofgraph store (run `proofgraph init`)",
                root.display()
            ))
        })?;
        Ok(State { store })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.store.backend().root().join(name)
    }

    pub fn index(&self) -> Result<Workspace, CliError> {
        match read_optional(&self.path(INDEX_FILE))? {
            None => Ok(Workspace::new()),
            Some(bytes) => Workspace::from_canonical_bytes(&bytes)
                .map_err(|e| CliError::corrupt(format!("staged workspace: {e}"))),
        }
    }

    pub fn save_index(&self, ws: &Workspace) -> Result<(), CliError> {
        Ok(write_atomic(&self.path(INDEX_FILE), &ws.canonical_bytes())?)
    }

    /// The log as stored, unchecked.
    pub fn raw_log(&self) -> Result<Option<Vec<u8>>, CliError> {
        read_optional(&self.path(LOG_FILE))
    }

    /// The log, which must parse and verify.
    pub fn log(&self) -> Result<ProvenanceLog, CliError> {
        let Some(bytes) = self.raw_log()? else {
            return Ok(ProvenanceLog::new());
        };
        let report = ProvenanceLog::verify_bytes(&bytes);
        if let Some(f) = report.first_divergence {
            return Err(CliError::corrupt(format!("provenance log: {f}")));
        }
        let text = String::from_utf8(bytes).expect("verified logs are UTF-8");
        Ok(ProvenanceLog::from_jsonl(&text)?)
    }

    pub fn save_log(&self, log: &ProvenanceLog) -> Result<(), CliError> {
        Ok(write_atomic(&self.path(LOG_FILE), log.to_jsonl().as_bytes())?)
    }
}
