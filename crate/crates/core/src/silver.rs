//! Silver target lists built by greedy coverage-utility maximization, and the
//! fine-tuning loss of a ranker against them.
//!
//! At step `t` each sub-answer `a_i` gets weight
//! `w_i = 1 - c_i / Σ_j c_j`, where `c_i` is the best [`phi`] coverage of `a_i`
//! among the documents selected so far (all weights are 1 while nothing covers
//! anything). A candidate's utility is `Σ_i w_i · φ(d, a_i)` and the step picks
//! the highest-utility remaining candidate, lowest pool index first on ties.
//! Utilities within [`Scalar::tie_tolerance`] of each other are ties, so
//! `1/3` and `1/6 + 1/6` compare equal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::CandidatePool;
use crate::ranker::{sequence_log_prob, RankerConfig, ScoringBackend};
use crate::scalar::Scalar;
use crate::text::{phi_tokens, tokenize, TokenSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilverTarget<T> {
    pub docids: Vec<usize>,
    pub step_utilities: Vec<T>,
    /// Aspect weights in force at each step.
    pub weight_trace: Vec<Vec<T>>,
}

/// `1 - Norm(c)` with sum normalization; the zero vector normalizes to zeros.
pub fn coverage_weights<T: Scalar>(coverage: &[T]) -> Vec<T> {
    let total: T = coverage.iter().copied().sum();
    if total > T::zero() {
        coverage.iter().map(|&c| T::one() - c / total).collect()
    } else {
        vec![T::one(); coverage.len()]
    }
}

pub fn aspect_weights<T: Scalar, S: AsRef<str>, A: AsRef<str>>(
    selected_docs: &[S],
    sub_answers: &[A],
) -> Result<Vec<T>> {
    if sub_answers.is_empty() {
        return Err(Error::InvalidArgument("sub_answers must be non-empty".into()));
    }
    let docs: Vec<TokenSequence> = selected_docs.iter().map(|d| tokenize(d.as_ref())).collect();
    let best: Vec<T> = sub_answers
        .iter()
        .map(|a| {
            let a = tokenize(a.as_ref());
            docs.iter()
                .map(|d| phi_tokens::<T>(d, &a))
                .fold(T::zero(), T::max)
        })
        .collect();
    Ok(coverage_weights(&best))
}

/// `Σ_i w_i · φ(doc, a_i)`.
pub fn coverage_gain<T: Scalar, A: AsRef<str>>(doc_text: &str, weights: &[T], sub_answers: &[A]) -> Result<T> {
    if weights.len() != sub_answers.len() {
        return Err(Error::DimensionMismatch {
            expected: sub_answers.len(),
            actual: weights.len(),
        });
    }
    let doc = tokenize(doc_text);
    Ok(weights
        .iter()
        .zip(sub_answers)
        .map(|(&w, a)| w * phi_tokens::<T>(&doc, &tokenize(a.as_ref())))
        .sum())
}

/// `rows[d][i] = φ(text_d, a_i)`.
pub fn coverage_matrix<T: Scalar, S: AsRef<str>, A: AsRef<str>>(texts: &[S], sub_answers: &[A]) -> Vec<Vec<T>> {
    let answers: Vec<TokenSequence> = sub_answers.iter().map(|a| tokenize(a.as_ref())).collect();
    texts
        .iter()
        .map(|t| {
            let doc = tokenize(t.as_ref());
            answers.iter().map(|a| phi_tokens(&doc, a)).collect()
        })
        .collect()
}

/// Weighted utility of each row given the selected prefix; returns the weights too.
fn step_weights<T: Scalar>(rows: &[Vec<T>], selected: &[usize], n: usize) -> Vec<T> {
    let mut best = vec![T::zero(); n];
    for &d in selected {
        for (b, &c) in best.iter_mut().zip(&rows[d]) {
            *b = b.max(c);
        }
    }
    coverage_weights(&best)
}

fn utility<T: Scalar>(row: &[T], weights: &[T]) -> T {
    row.iter().zip(weights).map(|(&c, &w)| c * w).sum()
}

/// Cumulative coverage of an ordered list: `Σ_t Σ_i w^t_i · φ(d^t, a_i)` with
/// `w^t` computed from the documents before position `t`.
pub fn cumulative_coverage<T: Scalar>(rows: &[Vec<T>]) -> T {
    let n = rows.first().map_or(0, Vec::len);
    let mut best = vec![T::zero(); n];
    let mut total = T::zero();
    for row in rows {
        let w = coverage_weights(&best);
        total = total + utility(row, &w);
        for (b, &c) in best.iter_mut().zip(row) {
            *b = b.max(c);
        }
    }
    total
}

pub fn build_silver_list<T: Scalar, A: AsRef<str>>(
    pool: &CandidatePool,
    sub_answers: &[A],
    k: usize,
) -> Result<SilverTarget<T>> {
    if sub_answers.is_empty() {
        return Err(Error::InvalidArgument(
            "silver lists need the record's sub-answers".into(),
        ));
    }
    let rows = coverage_matrix(&pool.texts(), sub_answers);
    greedy_from_rows(&rows, k)
}

/// Greedy selection over a precomputed coverage matrix.
pub fn greedy_from_rows<T: Scalar>(rows: &[Vec<T>], k: usize) -> Result<SilverTarget<T>> {
    if k > rows.len() {
        return Err(Error::KExceedsPool { k, pool: rows.len() });
    }
    let n = rows.first().map_or(0, Vec::len);
    let mut taken = vec![false; rows.len()];
    let mut target = SilverTarget {
        docids: Vec::with_capacity(k),
        step_utilities: Vec::with_capacity(k),
        weight_trace: Vec::with_capacity(k),
    };
    for _ in 0..k {
        let weights = step_weights(rows, &target.docids, n);
        let mut best: Option<(usize, T)> = None;
        for (d, row) in rows.iter().enumerate() {
            if taken[d] {
                continue;
            }
            let u = utility(row, &weights);
            if best.is_none_or(|(_, bu)| u.clearly_greater(bu)) {
                best = Some((d, u));
            }
        }
        let (d, u) = best.ok_or(Error::NoCandidates)?;
        taken[d] = true;
        target.docids.push(d);
        target.step_utilities.push(u);
        target.weight_trace.push(weights);
    }
    Ok(target)
}

/// Next-token loss of the silver list under the ranker: `-log p(L*)`.
pub fn sft_loss_value<T: Scalar>(
    target: &SilverTarget<T>,
    config: &RankerConfig<T>,
    backend: &dyn ScoringBackend<T>,
) -> Result<T> {
    Ok(-sequence_log_prob(backend, config, &target.docids)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilverRecord {
    pub query_id: String,
    pub docids: Vec<usize>,
    pub step_utilities: Vec<f64>,
    pub config_fingerprint: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aspects::SubAspectList;
    use crate::corpus::Document;
    use crate::pool::merge_pool;
    use crate::ranker::UniformBackend;

    fn pool(texts: &[&str]) -> CandidatePool {
        let docs: Vec<Document> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("d{i}"), "", *t))
            .collect();
        merge_pool("q", &SubAspectList::gold(["x"]).unwrap(), &[docs], 100).unwrap()
    }

    #[test]
    fn weight_examples() {
        let w: Vec<f64> = aspect_weights::<f64, &str, &str>(&[], &["a b", "c d"]).unwrap();
        assert_eq!(w, [1.0, 1.0]);
        let w = coverage_weights(&[0.6f64, 0.2]);
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
        let w: Vec<f64> = aspect_weights(&["a b"], &["a b", "c d"]).unwrap();
        assert_eq!(w, [0.0, 1.0]);
        assert!(aspect_weights::<f64, &str, &str>(&["a"], &[]).is_err());
    }

    #[test]
    fn gain_examples() {
        // φ("a b c d", "a b x d") = (1/3 + 3/4)/2 = 13/24
        // φ("a b c d", "c d") = (1/2 + 2/3)/2 = 7/12
        let g: f64 = coverage_gain("a b c d", &[0.25, 0.75], &["a b x d", "c d"]).unwrap();
        assert!((g - (0.25 * 13.0 / 24.0 + 0.75 * 7.0 / 12.0)).abs() < 1e-15);
        let g: f64 = coverage_gain("a b", &[0.0, 0.0], &["a b", "c"]).unwrap();
        assert_eq!(g, 0.0);
        let g: f64 = coverage_gain("zz yy", &[1.0, 1.0], &["a b", "c"]).unwrap();
        assert_eq!(g, 0.0);
        assert!(coverage_gain::<f64, &str>("a", &[1.0], &["a", "b"]).is_err());
    }

    #[test]
    fn gain_hand_value() {
        let rows = [vec![0.5f64, 0.4]];
        assert!((utility(&rows[0], &[0.25, 0.75]) - 0.425).abs() < 1e-15);
    }

    #[test]
    fn single_doc() {
        let p = pool(&["alpha beta"]);
        let t: SilverTarget<f64> = build_silver_list(&p, &["alpha beta", "gamma"], 1).unwrap();
        assert_eq!(t.docids, [0]);
        assert_eq!(t.step_utilities, [1.0]);
    }

    #[test]
    fn coverage_shift() {
        let rows = vec![vec![1.0f64, 0.0], vec![0.0, 1.0], vec![0.4, 0.4]];
        let t = greedy_from_rows(&rows, 2).unwrap();
        assert_eq!(t.docids, [0, 1]);
        assert_eq!(t.weight_trace[1], [0.0, 1.0]);
        assert_eq!(t.step_utilities, [1.0, 1.0]);
    }

    #[test]
    fn rounding_ties_go_to_lower_index() {
        let third = 1.0f64 / 3.0;
        let sixth = 1.0f64 / 6.0;
        let rows = vec![vec![third, 0.0], vec![sixth, sixth]];
        assert_eq!(greedy_from_rows(&rows, 1).unwrap().docids, [0]);
        let rows = vec![vec![sixth, sixth], vec![third, 0.0]];
        assert_eq!(greedy_from_rows(&rows, 1).unwrap().docids, [0]);
    }

    #[test]
    fn disjoint_keeps_pool_order() {
        let p = pool(&["x y", "z w", "v u"]);
        let t: SilverTarget<f64> = build_silver_list(&p, &["a b", "c d"], 3).unwrap();
        assert_eq!(t.docids, [0, 1, 2]);
        assert!(t.step_utilities.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn k_too_large() {
        let p = pool(&["x y"]);
        assert!(build_silver_list::<f64, &str>(&p, &["a"], 2).is_err());
        assert!(build_silver_list::<f64, &str>(&p, &[], 1).is_err());
    }

    #[test]
    fn sft_loss_uniform() {
        let t = SilverTarget {
            docids: vec![0, 1],
            step_utilities: vec![0.0f64; 2],
            weight_trace: vec![],
        };
        let loss = sft_loss_value(&t, &RankerConfig::new(2, 0.1), &UniformBackend::new(4)).unwrap();
        assert!((loss - 12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cumulative_of_silver_matches_utilities() {
        let rows = vec![vec![0.3f64, 0.1], vec![0.0, 0.7], vec![0.2, 0.2]];
        let t = greedy_from_rows(&rows, 3).unwrap();
        let ordered: Vec<_> = t.docids.iter().map(|&d| rows[d].clone()).collect();
        let sum: f64 = t.step_utilities.iter().sum();
        assert_eq!(cumulative_coverage(&ordered), sum);
    }
}
