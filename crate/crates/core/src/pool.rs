//! Per-aspect retrieval and the deduplicating candidate pool.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::aspects::SubAspectList;
use crate::corpus::{Document, Retriever, ScoredDoc};
use crate::error::{Error, Result};

/// A pooled document together with the aspects whose retrieval lists contained it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Admission order; the `i` of the `[D{i}]` docid token.
    pub pool_index: usize,
    pub doc: Document,
    pub aspect_set: BTreeSet<usize>,
    /// aspect index -> 1-based rank in that aspect's list
    pub best_rank: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub query: String,
    pub aspects: SubAspectList,
    pub candidates: Vec<Candidate>,
    pub capacity: usize,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.candidates.iter().map(|c| c.doc.text.as_str()).collect()
    }

    pub fn doc_ids(&self) -> Vec<&str> {
        self.candidates.iter().map(|c| c.doc.doc_id.as_str()).collect()
    }

    pub fn candidate(&self, pool_index: usize) -> Result<&Candidate> {
        self.candidates
            .get(pool_index)
            .ok_or(Error::InvalidDocid(pool_index))
    }
}

/// Retrieves `n` documents for each `query + " " + aspect`.
pub fn retrieve_per_aspect(
    retriever: &dyn Retriever,
    query: &str,
    aspects: &SubAspectList,
    n: usize,
) -> Result<Vec<Vec<ScoredDoc>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    aspects
        .aspects()
        .iter()
        .map(|aspect| retriever.retrieve(&format!("{query} {aspect}"), n))
        .collect()
}

/// Resolves retrieved ids to documents.
pub fn resolve(retriever: &dyn Retriever, lists: &[Vec<ScoredDoc>]) -> Result<Vec<Vec<Document>>> {
    lists
        .iter()
        .map(|list| {
            list.iter()
                .map(|hit| {
                    retriever.document(&hit.doc_id).cloned().ok_or_else(|| {
                        Error::InvalidArgument(format!("unknown doc_id {}", hit.doc_id))
                    })
                })
                .collect()
        })
        .collect()
}

/// Round-robin merge over rank positions: rank 1 of every aspect list in
/// aspect order, then rank 2, and so on. The first sighting of a doc_id admits
/// it; later sightings only record the extra aspect. Stops after `capacity`
/// distinct documents.
pub fn merge_pool(
    query: &str,
    aspects: &SubAspectList,
    per_aspect_lists: &[Vec<Document>],
    capacity: usize,
) -> Result<CandidatePool> {
    if capacity == 0 {
        return Err(Error::InvalidArgument("pool capacity must be at least 1".into()));
    }
    if per_aspect_lists.len() != aspects.len() {
        return Err(Error::DimensionMismatch {
            expected: aspects.len(),
            actual: per_aspect_lists.len(),
        });
    }
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let depth = per_aspect_lists.iter().map(Vec::len).max().unwrap_or(0);

    'outer: for rank in 0..depth {
        for (aspect, list) in per_aspect_lists.iter().enumerate() {
            let Some(doc) = list.get(rank) else { continue };
            match seen.get(doc.doc_id.as_str()) {
                Some(&i) => {
                    let c = &mut candidates[i];
                    c.aspect_set.insert(aspect);
                    c.best_rank.entry(aspect).or_insert(rank + 1);
                }
                None => {
                    let pool_index = candidates.len();
                    seen.insert(doc.doc_id.as_str(), pool_index);
                    candidates.push(Candidate {
                        pool_index,
                        doc: doc.clone(),
                        aspect_set: BTreeSet::from([aspect]),
                        best_rank: BTreeMap::from([(aspect, rank + 1)]),
                    });
                    if candidates.len() == capacity {
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok(CandidatePool {
        query: query.to_string(),
        aspects: aspects.clone(),
        candidates,
        capacity,
    })
}

/// On-disk form of one pool entry; documents are referenced by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolCandidateRecord {
    pub pool_index: usize,
    pub doc_id: String,
    pub aspect_set: BTreeSet<usize>,
    pub best_rank: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub query_id: String,
    pub query: String,
    pub aspects: SubAspectList,
    pub capacity: usize,
    pub candidates: Vec<PoolCandidateRecord>,
    pub config_fingerprint: String,
}

impl PoolRecord {
    pub fn from_pool(query_id: &str, pool: &CandidatePool, fingerprint: &str) -> Self {
        PoolRecord {
            query_id: query_id.to_string(),
            query: pool.query.clone(),
            aspects: pool.aspects.clone(),
            capacity: pool.capacity,
            candidates: pool
                .candidates
                .iter()
                .map(|c| PoolCandidateRecord {
                    pool_index: c.pool_index,
                    doc_id: c.doc.doc_id.clone(),
                    aspect_set: c.aspect_set.clone(),
                    best_rank: c.best_rank.clone(),
                })
                .collect(),
            config_fingerprint: fingerprint.to_string(),
        }
    }

    pub fn to_pool(&self, retriever: &dyn Retriever) -> Result<CandidatePool> {
        let schema = |message: String| Error::Schema {
            record: self.query_id.clone(),
            message,
        };
        let mut candidates = Vec::with_capacity(self.candidates.len());
        for (i, c) in self.candidates.iter().enumerate() {
            if c.pool_index != i {
                return Err(schema(format!("pool_index {} at position {i}", c.pool_index)));
            }
            if c.aspect_set.is_empty() || c.aspect_set.iter().any(|&a| a >= self.aspects.len()) {
                return Err(schema(format!("bad aspect_set for {}", c.doc_id)));
            }
            let doc = retriever
                .document(&c.doc_id)
                .cloned()
                .ok_or_else(|| schema(format!("unknown doc_id {}", c.doc_id)))?;
            candidates.push(Candidate {
                pool_index: i,
                doc,
                aspect_set: c.aspect_set.clone(),
                best_rank: c.best_rank.clone(),
            });
        }
        Ok(CandidatePool {
            query: self.query.clone(),
            aspects: self.aspects.clone(),
            candidates,
            capacity: self.capacity,
        })
    }
}
