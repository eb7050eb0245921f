//! Collaboration metrics over the contribution graph.
//!
//! - quality of a contribution: its raw in-degree in φ, i.e. how many
//!   contributions depend on it;
//! - relevancy of a participant for a subject: the sum of the quality of
//!   that participant's contributions tagged with the subject;
//! - influence of a participant: the sum of their relevancy over every
//!   subject seen in the log.
//!
//! A contribution tagged with k subjects therefore adds k times its quality
//! to its author's influence. This double counting is deliberate; it is
//! what a plain summation over subjects gives.

use std::collections::{BTreeMap, BTreeSet};

use crate::id::ObjectId;
use crate::provenance::{ContributionGraph, ProvenanceLog};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("unknown contribution {0}")]
    UnknownContribution(ObjectId),
}

fn in_degrees(g: &ContributionGraph) -> BTreeMap<ObjectId, u64> {
    let mut deg: BTreeMap<ObjectId, u64> = g.vertices.iter().map(|v| (*v, 0)).collect();
    for (_, to) in &g.edges {
        *deg.entry(*to).or_default() += 1;
    }
    deg
}

pub fn quality(g: &ContributionGraph, c: &ObjectId) -> Result<u64, MetricsError> {
    if !g.vertices.contains(c) {
        return Err(MetricsError::UnknownContribution(*c));
    }
    Ok(g.edges.iter().filter(|(_, to)| to == c).count() as u64)
}

pub fn relevancy(g: &ContributionGraph, log: &ProvenanceLog, participant: &str, subject: &str) -> u64 {
    let deg = in_degrees(g);
    log.contributions()
        .filter(|c| c.author == participant && c.subjects.contains(subject))
        .map(|c| deg.get(&c.id).copied().unwrap_or(0))
        .sum()
}

/// Every subject appearing in any contribution's snapshot.
pub fn subject_universe(log: &ProvenanceLog) -> BTreeSet<String> {
    log.contributions()
        .flat_map(|c| c.subjects.iter().cloned())
        .collect()
}

pub fn influence(g: &ContributionGraph, log: &ProvenanceLog, participant: &str) -> u64 {
    subject_universe(log)
        .iter()
        .map(|s| relevancy(g, log, participant, s))
        .sum()
}

/// All three metrics at once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetricsReport {
    pub quality: BTreeMap<ObjectId, u64>,
    pub relevancy: BTreeMap<(String, String), u64>,
    pub influence: BTreeMap<String, u64>,
}

impl MetricsReport {
    /// Computes every metric in one pass over the log. Relevancy holds an
    /// entry for every (author, subject) pair seen in the log; influence
    /// holds an entry for every author.
    pub fn compute(g: &ContributionGraph, log: &ProvenanceLog) -> Self {
        let quality = in_degrees(g);
        let mut relevancy: BTreeMap<(String, String), u64> = BTreeMap::new();
        let mut influence: BTreeMap<String, u64> = BTreeMap::new();
        let subjects = subject_universe(log);
        for c in log.contributions() {
            influence.entry(c.author.clone()).or_default();
            for s in &subjects {
                relevancy.entry((c.author.clone(), s.clone())).or_default();
            }
        }
        for c in log.contributions() {
            let q = quality.get(&c.id).copied().unwrap_or(0);
            for s in &c.subjects {
                *relevancy.get_mut(&(c.author.clone(), s.clone())).unwrap() += q;
            }
        }
        for ((p, _), r) in &relevancy {
            *influence.get_mut(p).unwrap() += r;
        }
        MetricsReport {
            quality,
            relevancy,
            influence,
        }
    }
}

/// Participants by descending relevancy for `subject`, or by descending
/// influence when no subject is given. Ties go to the lexicographically
/// smaller participant id.
pub fn rank_participants(
    g: &ContributionGraph,
    log: &ProvenanceLog,
    subject: Option<&str>,
) -> Vec<(String, u64)> {
    let report = MetricsReport::compute(g, log);
    let mut ranked: Vec<(String, u64)> = report
        .influence
        .iter()
        .map(|(p, inf)| {
            let score = match subject {
                Some(s) => report
                    .relevancy
                    .get(&(p.clone(), s.to_string()))
                    .copied()
                    .unwrap_or(0),
                None => *inf,
            };
            (p.clone(), score)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}
