//! Tokenization and overlap metrics.
//!
//! Every text comparison in the crate goes through [`tokenize`]: lowercase,
//! split on any run of non-alphanumeric characters, no stemming and no
//! stopword removal. On top of that sit clipped n-gram overlap (Rouge-2),
//! longest-common-subsequence overlap (Rouge-L), unigram F1, the coverage
//! function [`phi`] (mean of the Rouge-2 and Rouge-L F1) and the
//! length-weighted [`com_rouge`].
//!
//! An empty candidate or reference always scores zero.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ordered lowercase tokens of a text. Never contains an empty token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn new(text: &str) -> Self {
        tokenize(text)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    /// Builds a sequence from pre-split tokens, dropping empty ones.
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSequence(
            iter.into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty())
                .collect(),
        )
    }
}

pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence(
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect(),
    )
}

/// Precision, recall and their harmonic mean, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OverlapScore<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

impl<T: Scalar> OverlapScore<T> {
    pub fn zero() -> Self {
        OverlapScore {
            precision: T::zero(),
            recall: T::zero(),
            f1: T::zero(),
        }
    }

    /// Score for `overlap` matched units out of `candidate_units` and `reference_units`.
    pub fn from_counts(overlap: usize, candidate_units: usize, reference_units: usize) -> Self {
        if overlap == 0 || candidate_units == 0 || reference_units == 0 {
            return Self::zero();
        }
        let precision = T::from_count(overlap) / T::from_count(candidate_units);
        let recall = T::from_count(overlap) / T::from_count(reference_units);
        Self::from_precision_recall(precision, recall)
    }

    pub fn from_precision_recall(precision: T, recall: T) -> Self {
        let sum = precision + recall;
        let f1 = if sum > T::zero() {
            (T::lit(2.0) * precision * recall) / sum
        } else {
            T::zero()
        };
        OverlapScore {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RougeVariant {
    /// Rouge-2: clipped bigram overlap.
    Bigram,
    /// Rouge-L: longest common subsequence.
    Lcs,
}

pub fn rouge<T: Scalar>(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    variant: RougeVariant,
) -> OverlapScore<T> {
    match variant {
        RougeVariant::Bigram => rouge_bigram(candidate.tokens(), reference.tokens()),
        RougeVariant::Lcs => rouge_lcs(candidate.tokens(), reference.tokens()),
    }
}

fn rouge_bigram<T: Scalar>(candidate: &[String], reference: &[String]) -> OverlapScore<T> {
    if candidate.is_empty() || reference.is_empty() {
        return OverlapScore::zero();
    }
    // Two single-token texts have no bigrams; their lone tokens are compared.
    if candidate.len() == 1 && reference.len() == 1 {
        let hit = usize::from(candidate[0] == reference[0]);
        return OverlapScore::from_counts(hit, 1, 1);
    }
    let cand = ngram_counts(candidate, 2);
    let refs = ngram_counts(reference, 2);
    let overlap = clipped_overlap(&cand, &refs);
    OverlapScore::from_counts(
        overlap,
        candidate.len().saturating_sub(1),
        reference.len().saturating_sub(1),
    )
}

fn rouge_lcs<T: Scalar>(candidate: &[String], reference: &[String]) -> OverlapScore<T> {
    if candidate.is_empty() || reference.is_empty() {
        return OverlapScore::zero();
    }
    let lcs = lcs_length(candidate, reference);
    OverlapScore::from_counts(lcs, candidate.len(), reference.len())
}

/// Clipped unigram overlap.
pub fn unigram_f1<T: Scalar>(candidate: &TokenSequence, reference: &TokenSequence) -> OverlapScore<T> {
    if candidate.is_empty() || reference.is_empty() {
        return OverlapScore::zero();
    }
    let cand = ngram_counts(candidate.tokens(), 1);
    let refs = ngram_counts(reference.tokens(), 1);
    let overlap = clipped_overlap(&cand, &refs);
    OverlapScore::from_counts(overlap, candidate.len(), reference.len())
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

fn clipped_overlap(a: &HashMap<&[String], usize>, b: &HashMap<&[String], usize>) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .map(|(gram, &count)| large.get(gram).map_or(0, |&other| count.min(other)))
        .sum()
}

pub(crate) fn lcs_length(a: &[String], b: &[String]) -> usize {
    let (outer, inner) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0usize; inner.len() + 1];
    let mut curr = vec![0usize; inner.len() + 1];
    for x in outer {
        for (j, y) in inner.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                curr[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[inner.len()]
}

/// Coverage function: mean of Rouge-2 F1 and Rouge-L F1.
pub fn phi<T: Scalar>(candidate_text: &str, reference_text: &str) -> T {
    phi_tokens(&tokenize(candidate_text), &tokenize(reference_text))
}

pub fn phi_tokens<T: Scalar>(candidate: &TokenSequence, reference: &TokenSequence) -> T {
    let r2: OverlapScore<T> = rouge(candidate, reference, RougeVariant::Bigram);
    let rl: OverlapScore<T> = rouge(candidate, reference, RougeVariant::Lcs);
    (r2.f1 + rl.f1) / T::lit(2.0)
}

/// Length weights of the sub-answers: token count over total token count.
pub fn sub_answer_weights<T: Scalar>(sub_answers: &[TokenSequence]) -> Result<Vec<T>> {
    let total: usize = sub_answers.iter().map(TokenSequence::len).sum();
    if total == 0 {
        return Err(Error::DegenerateSubAnswers);
    }
    let total = T::from_count(total);
    Ok(sub_answers
        .iter()
        .map(|a| T::from_count(a.len()) / total)
        .collect())
}

/// Length-weighted coverage of the sub-answers by a response, using [`phi`] per sub-answer.
pub fn com_rouge<T: Scalar, S: AsRef<str>>(response: &str, sub_answers: &[S]) -> Result<T> {
    let response = tokenize(response);
    let subs: Vec<TokenSequence> = sub_answers.iter().map(|a| tokenize(a.as_ref())).collect();
    com_score(&subs, |a| phi_tokens(&response, a))
}

/// Length-weighted sum of `score(aᵢ)` over sub-answers.
pub fn com_score<T: Scalar>(
    sub_answers: &[TokenSequence],
    mut score: impl FnMut(&TokenSequence) -> T,
) -> Result<T> {
    let weights = sub_answer_weights::<T>(sub_answers)?;
    Ok(weights
        .into_iter()
        .zip(sub_answers)
        .map(|(delta, answer)| delta * score(answer))
        .sum())
}
