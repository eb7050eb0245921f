//! Versioned, provenance-tracked storage for dataflow "financial models".
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: models as acyclic dataflow graphs of source, processor and
//!   sink nodes carrying facets and subject tags.
//! - [`workspace`]: a set of models sharing a single node catalog, plus
//!   clone-chain computation over shared nodes.
//! - [`store`]: content-addressed, structurally shared versioning of
//!   workspaces (commit, checkout, clone, three-way merge).
//! - [`provenance`]: the append-only, hash-chained contribution log and the
//!   contribution graph derived from it.
//! - [`metrics`]: contribution quality, participant relevancy and influence.
//! - [`pipeline`]: proof pipelines that emit evidence at every step.

pub mod encoding;
pub mod fixtures;
pub mod id;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod provenance;
pub mod store;
pub mod workspace;

pub use id::ObjectId;
pub use model::{GraphError, ModelGraph, Node, NodeId, NodeKind};
pub use store::{CommitInfo, Store};
pub use workspace::Workspace;
