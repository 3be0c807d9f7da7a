//! Document corpus and the fixed lexical retriever.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    /// The string that gets indexed.
    pub fn indexed_text(&self) -> String {
        format!("{} {}", self.title, self.text)
    }
}

/// Reads newline-delimited `{"doc_id", "title", "text"}` records.
pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    jsonl::read(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Position of the document in [`InvertedIndex::documents`].
    pub doc: usize,
    pub tf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Anything that can return a ranked top-`n` list for a query string.
pub trait Retriever {
    fn retrieve(&self, query: &str, n: usize) -> Result<Vec<ScoredDoc>>;

    fn document(&self, doc_id: &str) -> Option<&Document>;
}

/// Immutable BM25 index. Built once by [`build_index`], then shared read-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    documents: Vec<Document>,
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<usize>,
    avg_doc_length: f64,
    params: Bm25Params,
    #[serde(skip)]
    by_id: HashMap<String, usize>,
}

pub fn build_index(documents: impl IntoIterator<Item = Document>) -> Result<InvertedIndex> {
    build_index_with(documents, Bm25Params::default())
}

pub fn build_index_with(
    documents: impl IntoIterator<Item = Document>,
    params: Bm25Params,
) -> Result<InvertedIndex> {
    let mut docs = Vec::new();
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::new();
    let mut by_id = HashMap::new();

    for doc in documents {
        if by_id.contains_key(&doc.doc_id) {
            return Err(Error::DuplicateDocId(doc.doc_id));
        }
        if tokenize(&doc.text).is_empty() {
            return Err(Error::EmptyDocument(doc.doc_id));
        }
        let idx = docs.len();
        let tokens = tokenize(&doc.indexed_text());
        let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
        for t in tokens.tokens() {
            *tf.entry(t).or_insert(0) += 1;
        }
        for (term, count) in tf {
            postings
                .entry(term.to_string())
                .or_default()
                .push(Posting { doc: idx, tf: count });
        }
        doc_lengths.push(tokens.len());
        by_id.insert(doc.doc_id.clone(), idx);
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let avg_doc_length = doc_lengths.iter().sum::<usize>() as f64 / doc_lengths.len() as f64;
    Ok(InvertedIndex {
        documents: docs,
        postings,
        doc_lengths,
        avg_doc_length,
        params,
        by_id,
    })
}

impl InvertedIndex {
    pub fn doc_count(&self) -> usize {
        self.documents.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn postings(&self) -> &BTreeMap<String, Vec<Posting>> {
        &self.postings
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).map(|&i| self.doc_lengths[i])
    }

    /// Restores the id lookup after deserialization.
    pub fn rebuild_lookup(&mut self) {
        self.by_id = self
            .documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i))
            .collect();
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.documents.len() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut index: InvertedIndex = serde_json::from_slice(&bytes)?;
        index.rebuild_lookup();
        Ok(index)
    }
}

impl Retriever for InvertedIndex {
    /// BM25 over the distinct query terms. Only documents sharing at least one
    /// term are returned; ties go to the smaller doc_id.
    fn retrieve(&self, query: &str, n: usize) -> Result<Vec<ScoredDoc>> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        let terms = tokenize(query);
        if terms.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let Bm25Params { k1, b } = self.params;
        let unique: HashSet<&str> = terms.tokens().iter().map(String::as_str).collect();
        let mut unique: Vec<&str> = unique.into_iter().collect();
        unique.sort_unstable();

        let mut scores: HashMap<usize, f64> = HashMap::new();
        for term in unique {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for p in list {
                let tf = p.tf as f64;
                let norm = 1.0 - b + b * self.doc_lengths[p.doc] as f64 / self.avg_doc_length;
                *scores.entry(p.doc).or_insert(0.0) += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.documents[a.0].doc_id.cmp(&self.documents[b.0].doc_id))
        });
        ranked.truncate(n);
        Ok(ranked
            .into_iter()
            .map(|(i, score)| ScoredDoc {
                doc_id: self.documents[i].doc_id.clone(),
                score,
            })
            .collect())
    }

    fn document(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.documents[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Document> {
        vec![
            Document::new("d1", "", "red apple pie"),
            Document::new("d2", "", "green banana bread"),
            Document::new("d3", "", "red cherry"),
        ]
    }

    #[test]
    fn counts() {
        let idx = build_index(vec![
            Document::new("a", "", "x y"),
            Document::new("b", "", "y z"),
            Document::new("c", "", "v w x"),
        ])
        .unwrap();
        assert_eq!(idx.postings().len(), 5);
        assert_eq!(idx.doc_count(), 3);
        assert!((idx.avg_doc_length() - 7.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn single_doc_average() {
        let idx = build_index(vec![Document::new("only", "", "one two three four")]).unwrap();
        assert_eq!(idx.avg_doc_length(), 4.0);
    }

    #[test]
    fn title_is_indexed() {
        let idx = build_index(vec![Document::new("t", "Heading", "body text")]).unwrap();
        assert_eq!(idx.doc_length("t"), Some(3));
        assert_eq!(idx.retrieve("heading", 5).unwrap()[0].doc_id, "t");
    }

    #[test]
    fn duplicate_and_empty() {
        let err = build_index(vec![
            Document::new("d1", "", "a"),
            Document::new("d1", "", "b"),
        ])
        .unwrap_err();
        assert_eq!(err.to_string(), "duplicate doc_id d1");
        assert!(matches!(build_index(Vec::new()), Err(Error::EmptyCorpus)));
        assert!(matches!(
            build_index(vec![Document::new("x", "title", "?!")]),
            Err(Error::EmptyDocument(_))
        ));
    }

    #[test]
    fn unique_term_wins() {
        let idx = build_index(corpus()).unwrap();
        let hits = idx.retrieve("banana", 3).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc_id, "d2");
        // hand-computed: idf = ln(1 + 2.5/1.5), dl = 3, avgdl = 8/3, tf = 1
        let norm = 1.2 * (0.25 + 0.75 * 3.0 / (8.0 / 3.0));
        let expected = (1.0f64 + 2.5 / 1.5).ln() * 2.2 / (1.0 + norm);
        assert!((hits[0].score - expected).abs() < 1e-12);
    }

    #[test]
    fn no_match_and_padding() {
        let idx = build_index(corpus()).unwrap();
        assert!(idx.retrieve("durian", 3).unwrap().is_empty());
        let hits = idx.retrieve("red", 50).unwrap();
        assert_eq!(hits.len(), 2);
        // equal scores only if lengths match; d3 is shorter so it leads
        assert_eq!(hits[0].doc_id, "d3");
    }

    #[test]
    fn ties_by_doc_id() {
        let idx = build_index(vec![
            Document::new("b", "", "same words"),
            Document::new("a", "", "same words"),
        ])
        .unwrap();
        let hits = idx.retrieve("same", 2).unwrap();
        assert_eq!(hits[0].doc_id, "a");
        assert_eq!(hits[0].score, hits[1].score);
    }

    #[test]
    fn repeated_query_terms_count_once() {
        let idx = build_index(corpus()).unwrap();
        assert_eq!(
            idx.retrieve("red apple", 3).unwrap(),
            idx.retrieve("red apple red apple", 3).unwrap()
        );
    }

    #[test]
    fn empty_query() {
        let idx = build_index(corpus()).unwrap();
        assert_eq!(idx.retrieve("  ;; ", 3).unwrap_err().to_string(), "empty query");
    }

    #[test]
    fn save_load_roundtrip() {
        let idx = build_index(corpus()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        idx.save(&path).unwrap();
        let back = InvertedIndex::load(&path).unwrap();
        assert_eq!(back.retrieve("red", 5).unwrap(), idx.retrieve("red", 5).unwrap());
        assert!(back.document("d2").is_some());
    }
}
