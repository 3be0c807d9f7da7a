//! Generative list-wise ranking over a candidate pool.
//!
//! The ranker emits one pool index per step. At step `t` a backend supplies a
//! relevance score `h^t · e_i` for every candidate `i`; the step distribution
//! is a temperature softmax over those scores with already-chosen candidates
//! masked to probability zero. Greedy decoding takes the arg-max (lowest pool
//! index on ties), sampled decoding draws from the distribution with a seeded
//! stream. [`sequence_log_prob`] replays the same distributions for a given
//! list, which is what the fine-tuning and preference losses consume.
//!
//! Backends:
//! * [`UniformBackend`]: every candidate scores the same.
//! * [`ReferenceBackend`]: term-vector encodings with an aspect-coverage
//!   weighted decoder state, needing no trained weights.
//! * [`RemoteBackend`]: asks an HTTP service for the score vector of each step.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aspects::SubAspectList;
use crate::client::{EndpointConfig, HttpJsonClient};
use crate::error::{Error, Result};
use crate::pool::{Candidate, CandidatePool};
use crate::scalar::Scalar;
use crate::silver::coverage_weights;
use crate::text::{phi_tokens, tokenize, TokenSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankerConfig<T> {
    pub k: usize,
    pub tau: T,
    pub allow_repetition: bool,
    pub seed: u64,
}

impl<T: Scalar> RankerConfig<T> {
    pub fn new(k: usize, tau: T) -> Self {
        RankerConfig {
            k,
            tau,
            allow_repetition: false,
            seed: 0,
        }
    }

    pub fn validate(&self, pool_size: usize) -> Result<()> {
        if !(self.tau > T::zero()) || !self.tau.is_finite() {
            return Err(Error::InvalidArgument("tau must be positive".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if pool_size == 0 {
            return Err(Error::NoCandidates);
        }
        if !self.allow_repetition && self.k > pool_size {
            return Err(Error::KExceedsPool {
                k: self.k,
                pool: pool_size,
            });
        }
        Ok(())
    }
}

/// One relevance vector per candidate, all of the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEncoding<T> {
    vectors: Vec<Vec<T>>,
}

impl<T: Scalar> CandidateEncoding<T> {
    pub fn new(vectors: Vec<Vec<T>>) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::InvalidArgument("encodings must be non-empty".into()));
        }
        if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Ok(CandidateEncoding { vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<T>] {
        &self.vectors
    }

    /// `h · e_i` for every candidate.
    pub fn project(&self, h: &[T]) -> Result<Vec<T>> {
        if h.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: h.len(),
            });
        }
        Ok(self.vectors.iter().map(|e| dot(e, h)).collect())
    }
}

/// Ranked pool indices with the log-probability of each choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingList<T> {
    pub docids: Vec<usize>,
    pub step_logprobs: Vec<T>,
    pub mode: DecodeMode,
}

impl<T: Scalar> RankingList<T> {
    pub fn log_prob(&self) -> T {
        self.step_logprobs.iter().copied().sum()
    }
}

/// Produces the step scores `h^t · e_i` given the already-selected prefix.
pub trait ScoringBackend<T: Scalar> {
    /// Number of candidates the backend scores.
    fn num_candidates(&self) -> usize;

    fn step_scores(&self, selected: &[usize]) -> Result<Vec<T>>;
}

/// `[D{i}] {query} [Q] {a} [E] {b} ... [S] {text}` listing the candidate's own aspects.
pub fn format_input(candidate: &Candidate, query: &str, aspects: &SubAspectList) -> String {
    let names: Vec<&str> = candidate
        .aspect_set
        .iter()
        .filter_map(|&i| aspects.aspects().get(i).map(String::as_str))
        .collect();
    format!(
        "[D{}] {} [Q] {} [S] {}",
        candidate.pool_index,
        query,
        names.join(" [E] "),
        candidate.doc.text
    )
}

/// Log-probabilities of a masked softmax over `scores / tau`. Masked entries are `-inf`.
pub fn masked_log_softmax<T: Scalar>(scores: &[T], tau: T, masked: &[bool]) -> Result<Vec<T>> {
    if scores.len() != masked.len() {
        return Err(Error::DimensionMismatch {
            expected: masked.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("step score"));
    }
    let logits: Vec<T> = scores.iter().map(|&s| s / tau).collect();
    let max = logits
        .iter()
        .zip(masked)
        .filter(|(_, &m)| !m)
        .map(|(&z, _)| z)
        .fold(None, |acc: Option<T>, z| Some(acc.map_or(z, |a| a.max(z))))
        .ok_or(Error::NoCandidates)?;
    let sum: T = logits
        .iter()
        .zip(masked)
        .filter(|(_, &m)| !m)
        .map(|(&z, _)| (z - max).exp())
        .sum();
    let log_sum = sum.ln();
    Ok(logits
        .iter()
        .zip(masked)
        .map(|(&z, &m)| if m { T::neg_infinity() } else { z - max - log_sum })
        .collect())
}

/// Probabilities of a masked softmax over `scores / tau`. Masked entries are exactly zero.
pub fn masked_softmax<T: Scalar>(scores: &[T], tau: T, masked: &[bool]) -> Result<Vec<T>> {
    let logp = masked_log_softmax(scores, tau, masked)?;
    let max = logp
        .iter()
        .copied()
        .filter(|l| l.is_finite())
        .fold(T::neg_infinity(), T::max);
    let unnorm: Vec<T> = logp
        .iter()
        .zip(masked)
        .map(|(&l, &m)| if m { T::zero() } else { (l - max).exp() })
        .collect();
    let sum: T = unnorm.iter().copied().sum();
    Ok(unnorm.into_iter().map(|u| u / sum).collect())
}

/// Step distribution from candidate encodings and a decoder state.
pub fn step_distribution<T: Scalar>(
    encodings: &CandidateEncoding<T>,
    decoder_state: &[T],
    tau: T,
    masked: &[bool],
) -> Result<Vec<T>> {
    if masked.len() != encodings.len() {
        return Err(Error::DimensionMismatch {
            expected: encodings.len(),
            actual: masked.len(),
        });
    }
    masked_softmax(&encodings.project(decoder_state)?, tau, masked)
}

pub fn rank<T: Scalar>(
    backend: &dyn ScoringBackend<T>,
    config: &RankerConfig<T>,
    mode: DecodeMode,
) -> Result<RankingList<T>> {
    let m = backend.num_candidates();
    config.validate(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut masked = vec![false; m];
    let mut docids = Vec::with_capacity(config.k);
    let mut step_logprobs = Vec::with_capacity(config.k);

    for _ in 0..config.k {
        let scores = backend.step_scores(&docids)?;
        check_len(&scores, m)?;
        let logp = masked_log_softmax(&scores, config.tau, &masked)?;
        let choice = match mode {
            DecodeMode::Greedy => argmax(&logp, &masked),
            DecodeMode::Sampled => sample(&logp, &masked, &mut rng),
        }
        .ok_or(Error::NoCandidates)?;
        docids.push(choice);
        step_logprobs.push(logp[choice]);
        if !config.allow_repetition {
            masked[choice] = true;
        }
    }
    Ok(RankingList {
        docids,
        step_logprobs,
        mode,
    })
}

/// Log-probability of generating `docids` in order under the same step distributions as [`rank`].
pub fn sequence_log_prob<T: Scalar>(
    backend: &dyn ScoringBackend<T>,
    config: &RankerConfig<T>,
    docids: &[usize],
) -> Result<T> {
    let m = backend.num_candidates();
    if docids.len() > config.k {
        return Err(Error::InvalidArgument(format!(
            "sequence of length {} exceeds k={}",
            docids.len(),
            config.k
        )));
    }
    if let Some(&bad) = docids.iter().find(|&&d| d >= m) {
        return Err(Error::InvalidDocid(bad));
    }
    let mut masked = vec![false; m];
    let mut total = T::zero();
    for (t, &d) in docids.iter().enumerate() {
        if masked[d] {
            return Err(Error::MaskedDocid(d));
        }
        let scores = backend.step_scores(&docids[..t])?;
        check_len(&scores, m)?;
        let logp = masked_log_softmax(&scores, config.tau, &masked)?;
        total = total + logp[d];
        if !config.allow_repetition {
            masked[d] = true;
        }
    }
    Ok(total)
}

fn check_len<T>(scores: &[T], m: usize) -> Result<()> {
    if scores.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: scores.len(),
        });
    }
    Ok(())
}

fn argmax<T: Scalar>(logp: &[T], masked: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&l, &m)) in logp.iter().zip(masked).enumerate() {
        if m {
            continue;
        }
        if best.is_none_or(|b| l > logp[b]) {
            best = Some(i);
        }
    }
    best
}

fn sample<T: Scalar>(logp: &[T], masked: &[bool], rng: &mut ChaCha8Rng) -> Option<usize> {
    let u = T::lit(rng.gen::<f64>());
    let mut cumulative = T::zero();
    let mut last = None;
    for (i, (&l, &m)) in logp.iter().zip(masked).enumerate() {
        if m {
            continue;
        }
        let p = l.exp();
        if p > T::zero() {
            last = Some(i);
        }
        cumulative = cumulative + p;
        if u < cumulative {
            return Some(i);
        }
    }
    // rounding left u above the accumulated mass
    last.or_else(|| argmax(logp, masked))
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn unit<T: Scalar>(mut v: Vec<T>) -> Vec<T> {
    let norm = dot(&v, &v).sqrt();
    if norm > T::zero() {
        for x in &mut v {
            *x = *x / norm;
        }
    }
    v
}

/// Every candidate gets the same score at every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformBackend {
    candidates: usize,
}

impl UniformBackend {
    pub fn new(candidates: usize) -> Self {
        UniformBackend { candidates }
    }
}

impl<T: Scalar> ScoringBackend<T> for UniformBackend {
    fn num_candidates(&self) -> usize {
        self.candidates
    }

    fn step_scores(&self, _selected: &[usize]) -> Result<Vec<T>> {
        Ok(vec![T::zero(); self.candidates])
    }
}

/// Term-vector backend.
///
/// `e_i` is the unit term-frequency vector of candidate `i`'s text. The decoder
/// state is the unit vector of `Σ_j w_j · v_j`, where `v_j` is the unit term
/// vector of `query + " " + aspect_j` and `w` down-weights aspects already
/// covered (by [`phi`](crate::text::phi) against the aspect text) by the
/// selected prefix, using the same weighting as the silver-list builder.
#[derive(Debug, Clone)]
pub struct ReferenceBackend<T> {
    encodings: CandidateEncoding<T>,
    aspect_directions: Vec<Vec<T>>,
    /// `coverage[i][j] = φ(text_i, aspect_j)`
    coverage: Vec<Vec<T>>,
}

impl<T: Scalar> ReferenceBackend<T> {
    pub fn new(pool: &CandidatePool) -> Result<Self> {
        let texts = pool.texts();
        Self::from_texts(&pool.query, &pool.aspects, &texts)
    }

    pub fn from_texts(query: &str, aspects: &SubAspectList, texts: &[&str]) -> Result<Self> {
        if texts.is_empty() {
            return Err(Error::NoCandidates);
        }
        let doc_tokens: Vec<TokenSequence> = texts.iter().map(|t| tokenize(t)).collect();
        let aspect_tokens: Vec<TokenSequence> =
            aspects.aspects().iter().map(|a| tokenize(a)).collect();
        let query_aspect_tokens: Vec<TokenSequence> = aspects
            .aspects()
            .iter()
            .map(|a| tokenize(&format!("{query} {a}")))
            .collect();

        let mut vocab: BTreeMap<&str, usize> = BTreeMap::new();
        for seq in doc_tokens.iter().chain(&query_aspect_tokens) {
            for tok in seq.tokens() {
                vocab.entry(tok.as_str()).or_insert(0);
            }
        }
        for (i, slot) in vocab.values_mut().enumerate() {
            *slot = i;
        }
        let dim = vocab.len().max(1);
        let tf_vector = |seq: &TokenSequence| {
            let mut v = vec![T::zero(); dim];
            for tok in seq.tokens() {
                let slot = vocab[tok.as_str()];
                v[slot] = v[slot] + T::one();
            }
            unit(v)
        };

        let encodings = CandidateEncoding::new(doc_tokens.iter().map(&tf_vector).collect())?;
        let aspect_directions = query_aspect_tokens.iter().map(&tf_vector).collect();
        let coverage = doc_tokens
            .iter()
            .map(|d| aspect_tokens.iter().map(|a| phi_tokens(d, a)).collect())
            .collect();
        Ok(ReferenceBackend {
            encodings,
            aspect_directions,
            coverage,
        })
    }

    pub fn encodings(&self) -> &CandidateEncoding<T> {
        &self.encodings
    }

    /// Aspect weights for the step following `selected`.
    pub fn aspect_weights(&self, selected: &[usize]) -> Result<Vec<T>> {
        let n = self.aspect_directions.len();
        let mut best = vec![T::zero(); n];
        for &d in selected {
            let row = self.coverage.get(d).ok_or(Error::InvalidDocid(d))?;
            for (b, &c) in best.iter_mut().zip(row) {
                *b = b.max(c);
            }
        }
        Ok(coverage_weights(&best))
    }

    pub fn decoder_state(&self, selected: &[usize]) -> Result<Vec<T>> {
        let weights = self.aspect_weights(selected)?;
        let mut h = vec![T::zero(); self.encodings.dim()];
        for (w, dir) in weights.iter().zip(&self.aspect_directions) {
            for (hk, &dk) in h.iter_mut().zip(dir) {
                *hk = *hk + *w * dk;
            }
        }
        Ok(unit(h))
    }
}

impl<T: Scalar> ScoringBackend<T> for ReferenceBackend<T> {
    fn num_candidates(&self) -> usize {
        self.encodings.len()
    }

    fn step_scores(&self, selected: &[usize]) -> Result<Vec<T>> {
        self.encodings.project(&self.decoder_state(selected)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub query: String,
    pub aspects: Vec<String>,
    pub candidates: Vec<String>,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

/// Backend served over HTTP: one request per decoding step.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    http: HttpJsonClient,
    query: String,
    aspects: Vec<String>,
    candidates: Vec<String>,
}

impl RemoteBackend {
    pub fn new(endpoint: EndpointConfig, pool: &CandidatePool) -> Self {
        RemoteBackend {
            http: HttpJsonClient::new(endpoint),
            query: pool.query.clone(),
            aspects: pool.aspects.aspects().to_vec(),
            candidates: pool
                .candidates
                .iter()
                .map(|c| format_input(c, &pool.query, &pool.aspects))
                .collect(),
        }
    }
}

impl<T: Scalar> ScoringBackend<T> for RemoteBackend {
    fn num_candidates(&self) -> usize {
        self.candidates.len()
    }

    fn step_scores(&self, selected: &[usize]) -> Result<Vec<T>> {
        let request = ScoreRequest {
            query: self.query.clone(),
            aspects: self.aspects.clone(),
            candidates: self.candidates.clone(),
            selected: selected.to_vec(),
        };
        let response: ScoreResponse = self.http.post(&request)?;
        check_len(&response.scores, self.candidates.len())?;
        response
            .scores
            .into_iter()
            .map(|s| T::from_f64(s).ok_or(Error::NonFinite("remote score")))
            .collect()
    }
}
