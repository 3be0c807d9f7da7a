//! Response metrics, ranking metrics, list comprehensiveness and the
//! reciprocal-rank-fusion baseline.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::CandidatePool;
use crate::scalar::Scalar;
use crate::silver::{coverage_matrix, cumulative_coverage};
use crate::text::{com_score, phi, rouge, tokenize, unigram_f1, RougeVariant, TokenSequence};

/// F1 / Rouge-2 / Rouge-L against the answer and their length-weighted
/// sub-answer counterparts (all F-measures).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseMetrics<T> {
    pub f1: T,
    pub r2: T,
    pub rl: T,
    pub cr2: T,
    pub crl: T,
}

impl<T: Scalar> ResponseMetrics<T> {
    pub fn named(&self) -> [(&'static str, T); 5] {
        [
            ("F1", self.f1),
            ("R2", self.r2),
            ("RL", self.rl),
            ("CR2", self.cr2),
            ("CRL", self.crl),
        ]
    }
}

pub fn evaluate_response<T: Scalar, A: AsRef<str>>(
    response: &str,
    answer: &str,
    sub_answers: &[A],
) -> Result<ResponseMetrics<T>> {
    let resp = tokenize(response);
    let ans = tokenize(answer);
    let subs: Vec<TokenSequence> = sub_answers.iter().map(|a| tokenize(a.as_ref())).collect();
    Ok(ResponseMetrics {
        f1: unigram_f1(&resp, &ans).f1,
        r2: rouge(&resp, &ans, RougeVariant::Bigram).f1,
        rl: rouge(&resp, &ans, RougeVariant::Lcs).f1,
        cr2: com_score(&subs, |a| rouge(&resp, a, RougeVariant::Bigram).f1)?,
        crl: com_score(&subs, |a| rouge(&resp, a, RougeVariant::Lcs).f1)?,
    })
}

pub const DEFAULT_RELEVANCE_THRESHOLD: f64 = 0.5;

/// Pool documents whose [`phi`] against the answer is strictly above `threshold`.
pub fn label_relevance(pool: &CandidatePool, answer: &str, threshold: f64) -> Result<BTreeSet<String>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside [0, 1]")));
    }
    Ok(pool
        .candidates
        .iter()
        .filter(|c| phi::<f64>(&c.doc.text, answer) > threshold)
        .map(|c| c.doc.doc_id.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics<T> {
    pub map: T,
    /// cutoff -> NDCG@cutoff
    pub ndcg: BTreeMap<usize, T>,
    /// False when the query had no relevant documents; every value is then 0.
    pub has_relevant: bool,
}

/// Binary-gain NDCG@k and average precision over total relevant count.
pub fn ranking_metrics<T: Scalar, S: AsRef<str>>(
    ranked_doc_ids: &[S],
    relevant: &BTreeSet<String>,
    cutoffs: &[usize],
) -> Result<RankingMetrics<T>> {
    if cutoffs.contains(&0) {
        return Err(Error::InvalidArgument("cutoffs must be positive".into()));
    }
    let gains: Vec<bool> = ranked_doc_ids
        .iter()
        .map(|d| relevant.contains(d.as_ref()))
        .collect();
    if relevant.is_empty() {
        return Ok(RankingMetrics {
            map: T::zero(),
            ndcg: cutoffs.iter().map(|&k| (k, T::zero())).collect(),
            has_relevant: false,
        });
    }

    let mut hits = 0usize;
    let mut precision_sum = T::zero();
    for (i, &g) in gains.iter().enumerate() {
        if g {
            hits += 1;
            precision_sum = precision_sum + T::from_count(hits) / T::from_count(i + 1);
        }
    }
    let map = precision_sum / T::from_count(relevant.len());

    let discount = |pos: usize| T::one() / T::from_count(pos + 2).log2();
    let ndcg = cutoffs
        .iter()
        .map(|&k| {
            let dcg: T = gains
                .iter()
                .take(k)
                .enumerate()
                .filter(|(_, &g)| g)
                .map(|(i, _)| discount(i))
                .sum();
            let ideal: T = (0..k.min(relevant.len())).map(discount).sum();
            (k, dcg / ideal)
        })
        .collect();
    Ok(RankingMetrics {
        map,
        ndcg,
        has_relevant: true,
    })
}

/// Comprehensiveness of a ranked list relative to the silver list over the same sub-answers.
///
/// Both lists are scored by cumulative weighted coverage; a silver score of
/// zero yields zero.
pub fn ncom<T: Scalar, D: AsRef<str>, S: AsRef<str>, A: AsRef<str>>(
    ranked_docs: &[D],
    silver_docs: &[S],
    sub_answers: &[A],
) -> Result<T> {
    if ranked_docs.len() != silver_docs.len() {
        return Err(Error::DimensionMismatch {
            expected: silver_docs.len(),
            actual: ranked_docs.len(),
        });
    }
    let com = cumulative_coverage(&coverage_matrix::<T, _, _>(ranked_docs, sub_answers));
    let best = cumulative_coverage(&coverage_matrix::<T, _, _>(silver_docs, sub_answers));
    if best > T::zero() {
        Ok(com / best)
    } else {
        Ok(T::zero())
    }
}

pub const DEFAULT_RRF_K: f64 = 60.0;

/// Reciprocal rank fusion, `score(d) = Σ 1 / (k_rrf + rank)` with 1-based ranks.
///
/// Per-document terms are summed in a fixed order so the result does not
/// depend on the order of the input lists. Ties go to the smaller doc id.
pub fn rrf_fuse<T: Scalar, S: AsRef<str>>(
    per_aspect_lists: &[Vec<S>],
    k_rrf: T,
    top: usize,
) -> Result<Vec<(String, T)>> {
    if !(k_rrf > T::zero()) {
        return Err(Error::InvalidArgument("k_rrf must be positive".into()));
    }
    let mut ranks: HashMap<&str, Vec<usize>> = HashMap::new();
    for list in per_aspect_lists {
        let mut seen = BTreeSet::new();
        for (i, d) in list.iter().enumerate() {
            if seen.insert(d.as_ref()) {
                ranks.entry(d.as_ref()).or_default().push(i + 1);
            }
        }
    }
    let mut fused: Vec<(String, T)> = ranks
        .into_iter()
        .map(|(d, mut rs)| {
            rs.sort_unstable_by(|a, b| b.cmp(a));
            let score = rs
                .into_iter()
                .fold(T::zero(), |acc, r| acc + T::one() / (k_rrf + T::from_count(r)));
            (d.to_string(), score)
        })
        .collect();
    fused.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    fused.truncate(top);
    Ok(fused)
}

/// Per-query metric values plus their means.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_query: BTreeMap<String, BTreeMap<String, f64>>,
    pub means: BTreeMap<String, f64>,
    pub query_count: usize,
    /// Queries without any relevant document; their ranking metrics are omitted.
    pub zero_relevance_queries: Vec<String>,
    /// Which rouge figure the response metrics report: always `"f1"`.
    pub rouge_measure: String,
    pub config_fingerprint: String,
}

impl MetricsReport {
    /// Builds the report; each mean is taken over the queries that carry that metric.
    pub fn new(
        per_query: BTreeMap<String, BTreeMap<String, f64>>,
        zero_relevance_queries: Vec<String>,
        config_fingerprint: String,
    ) -> Self {
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for metrics in per_query.values() {
            for (name, &v) in metrics {
                let e = sums.entry(name.clone()).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
        }
        MetricsReport {
            query_count: per_query.len(),
            means: sums
                .into_iter()
                .map(|(k, (s, n))| (k, s / n as f64))
                .collect(),
            per_query,
            zero_relevance_queries,
            rouge_measure: "f1".into(),
            config_fingerprint,
        }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.means.get(metric).copied()
    }

    /// `metric<TAB>mean<TAB>queries`, one line per metric, sorted by name.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tmean\tqueries\n");
        for (name, mean) in &self.means {
            let n = self
                .per_query
                .values()
                .filter(|m| m.contains_key(name))
                .count();
            let _ = writeln!(out, "{name}\t{mean:.6}\t{n}");
        }
        out
    }
}
