//! Rewards, preference-pair construction and the DPO loss.
//!
//! A ranking list is rewarded by the response a generator writes from it:
//! `φ(response, answer) + com_rouge(response, sub_answers)`, so rewards lie in
//! `[0, 2]`. Pairs are built unilaterally: every pair holds the greedy list and
//! one sampled list, and only pairs whose reward gap exceeds `μ` are kept.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::client::{EndpointConfig, HttpJsonClient};
use crate::error::{Error, Result};
use crate::ranker::{rank, DecodeMode, RankerConfig, RankingList, ScoringBackend};
use crate::scalar::Scalar;
use crate::text::{com_rouge, phi, tokenize, unigram_f1, OverlapScore, TokenSequence};

pub fn reward<T: Scalar, A: AsRef<str>>(response: &str, answer: &str, sub_answers: &[A]) -> Result<T> {
    if tokenize(answer).is_empty() {
        return Err(Error::InvalidArgument("answer must be non-empty".into()));
    }
    Ok(phi::<T>(response, answer) + com_rouge::<T, A>(response, sub_answers)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Greedy,
    Sampled,
}

impl From<DecodeMode> for Provenance {
    fn from(mode: DecodeMode) -> Self {
        match mode {
            DecodeMode::Greedy => Provenance::Greedy,
            DecodeMode::Sampled => Provenance::Sampled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardedList<T> {
    pub list: RankingList<T>,
    pub response: String,
    pub reward: T,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair<T> {
    pub winner: RewardedList<T>,
    pub loser: RewardedList<T>,
    pub gap: T,
}

/// Writes a response for a query from ranked documents.
pub trait Generator {
    fn generate(&self, query: &str, documents: &[&str]) -> Result<String>;
}

/// Deterministic extractive generator.
///
/// Splits the ranked documents into sentences and picks `budget` of them one
/// at a time. A sentence scores its unigram F1 against the query plus its
/// novelty, `1 - max` unigram F1 against the sentences already picked. Ties go
/// to the earlier sentence in rank-then-position order. Picked sentences are
/// joined in pick order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleGenerator {
    pub budget: usize,
}

impl OracleGenerator {
    pub fn new(budget: usize) -> Result<Self> {
        if budget == 0 {
            return Err(Error::InvalidArgument("budget must be at least 1".into()));
        }
        Ok(OracleGenerator { budget })
    }
}

pub fn split_sentences(text: &str) -> Vec<&str> {
    text.split_inclusive(['.', '!', '?'])
        .map(str::trim)
        .filter(|s| !tokenize(s).is_empty())
        .collect()
}

pub fn oracle_generate(query: &str, ranked_docs: &[&str], budget: usize) -> String {
    let query = tokenize(query);
    let sentences: Vec<(&str, TokenSequence)> = ranked_docs
        .iter()
        .flat_map(|d| split_sentences(d))
        .map(|s| (s, tokenize(s)))
        .collect();
    let relevance: Vec<f64> = sentences
        .iter()
        .map(|(_, toks)| unigram_f1::<f64>(toks, &query).f1)
        .collect();

    let mut picked: Vec<usize> = Vec::new();
    let mut redundancy = vec![0.0f64; sentences.len()];
    while picked.len() < budget.min(sentences.len()) {
        let mut best: Option<(usize, f64)> = None;
        for (i, &rel) in relevance.iter().enumerate() {
            if picked.contains(&i) {
                continue;
            }
            let score = rel + (1.0 - redundancy[i]);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        let Some((choice, _)) = best else { break };
        picked.push(choice);
        for (i, r) in redundancy.iter_mut().enumerate() {
            let overlap: OverlapScore<f64> = unigram_f1(&sentences[i].1, &sentences[choice].1);
            *r = r.max(overlap.f1);
        }
    }
    picked
        .iter()
        .map(|&i| sentences[i].0)
        .collect::<Vec<_>>()
        .join(" ")
}

impl Generator for OracleGenerator {
    fn generate(&self, query: &str, documents: &[&str]) -> Result<String> {
        Ok(oracle_generate(query, documents, self.budget))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub query: String,
    pub documents: Vec<String>,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
}

/// Generator speaking `{"query","documents","max_tokens"} -> {"text"}` over HTTP.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    http: HttpJsonClient,
    max_tokens: u32,
}

impl HttpGenerator {
    pub fn new(endpoint: EndpointConfig, max_tokens: u32) -> Self {
        HttpGenerator {
            http: HttpJsonClient::new(endpoint),
            max_tokens,
        }
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, query: &str, documents: &[&str]) -> Result<String> {
        let request = GenerateRequest {
            query: query.to_string(),
            documents: documents.iter().map(|d| d.to_string()).collect(),
            max_tokens: self.max_tokens,
        };
        let response: GenerateResponse = self.http.post(&request)?;
        Ok(response.text)
    }
}

/// Inputs of one training example: the texts the ranker chooses among and the labels.
#[derive(Debug, Clone, Copy)]
pub struct RewardContext<'a, A> {
    pub query: &'a str,
    pub candidate_texts: &'a [&'a str],
    pub answer: &'a str,
    pub sub_answers: &'a [A],
}

/// One greedy list and `num_samples` sampled lists (seeds `seed + i`), each rewarded.
pub fn generate_rewarded_lists<T: Scalar, A: AsRef<str>>(
    backend: &dyn ScoringBackend<T>,
    config: &RankerConfig<T>,
    generator: &dyn Generator,
    ctx: &RewardContext<'_, A>,
    num_samples: usize,
) -> Result<Vec<RewardedList<T>>> {
    if num_samples == 0 {
        return Err(Error::InvalidArgument("num_samples must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(num_samples + 1);
    let greedy = rank(backend, config, DecodeMode::Greedy)?;
    out.push(reward_list(greedy, generator, ctx)?);
    for i in 0..num_samples {
        let mut cfg = *config;
        cfg.seed = config.seed.wrapping_add(i as u64);
        let sampled = rank(backend, &cfg, DecodeMode::Sampled)?;
        out.push(reward_list(sampled, generator, ctx)?);
    }
    Ok(out)
}

fn reward_list<T: Scalar, A: AsRef<str>>(
    list: RankingList<T>,
    generator: &dyn Generator,
    ctx: &RewardContext<'_, A>,
) -> Result<RewardedList<T>> {
    let docs: Vec<&str> = list
        .docids
        .iter()
        .map(|&d| ctx.candidate_texts.get(d).copied().ok_or(Error::InvalidDocid(d)))
        .collect::<Result<_>>()?;
    let response = generator.generate(ctx.query, &docs)?;
    let reward = reward(&response, ctx.answer, ctx.sub_answers)?;
    Ok(RewardedList {
        provenance: list.mode.into(),
        list,
        response,
        reward,
    })
}

/// Pairs every sampled list with the greedy one when `|Δreward| > mu`.
pub fn build_unilateral_pairs<T: Scalar>(lists: &[RewardedList<T>], mu: T) -> Result<Vec<PreferencePair<T>>> {
    if !(mu >= T::zero()) {
        return Err(Error::InvalidArgument("mu must be non-negative".into()));
    }
    let greedy: Vec<&RewardedList<T>> = lists
        .iter()
        .filter(|l| l.provenance == Provenance::Greedy)
        .collect();
    let [greedy] = greedy.as_slice() else {
        return Err(Error::UnilateralityViolated(greedy.len()));
    };
    Ok(lists
        .iter()
        .filter(|l| l.provenance == Provenance::Sampled)
        .filter_map(|s| ordered_pair(greedy, s).filter(|p| p.gap > mu))
        .collect())
}

/// Ablation: each sampled list is paired with a uniformly drawn other list,
/// greedy or sampled, with no significance threshold.
pub fn build_random_pairs<T: Scalar>(lists: &[RewardedList<T>], seed: u64) -> Vec<PreferencePair<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for (i, s) in lists.iter().enumerate() {
        if s.provenance != Provenance::Sampled {
            continue;
        }
        let others: Vec<usize> = (0..lists.len()).filter(|&j| j != i).collect();
        if let Some(&j) = others.choose(&mut rng) {
            pairs.extend(ordered_pair(&lists[j], s).filter(|p| p.gap > T::zero()));
        }
    }
    pairs
}

fn ordered_pair<T: Scalar>(a: &RewardedList<T>, b: &RewardedList<T>) -> Option<PreferencePair<T>> {
    let (winner, loser) = if b.reward > a.reward { (b, a) } else { (a, b) };
    let gap = winner.reward - loser.reward;
    gap.is_finite().then(|| PreferencePair {
        winner: winner.clone(),
        loser: loser.clone(),
        gap,
    })
}

/// `-log σ(β · [(lp_w - ref_w) - (lp_l - ref_l)])`.
pub fn dpo_loss_value<T: Scalar>(
    policy_logprob_w: T,
    policy_logprob_l: T,
    reference_logprob_w: T,
    reference_logprob_l: T,
    beta: T,
) -> Result<T> {
    let inputs = [policy_logprob_w, policy_logprob_l, reference_logprob_w, reference_logprob_l];
    if inputs.iter().chain([&beta]).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("dpo input"));
    }
    if inputs.iter().any(|&x| x > T::zero()) {
        return Err(Error::InvalidArgument("log-probabilities must be <= 0".into()));
    }
    if beta <= T::zero() {
        return Err(Error::InvalidArgument("beta must be positive".into()));
    }
    let margin = beta
        * ((policy_logprob_w - reference_logprob_w) - (policy_logprob_l - reference_logprob_l));
    Ok(softplus(-margin))
}

/// `ln(1 + e^x)` without overflow.
fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Serialized preference pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub query_id: String,
    pub winner_docids: Vec<usize>,
    pub loser_docids: Vec<usize>,
    pub winner_reward: f64,
    pub loser_reward: f64,
    pub gap: f64,
    pub mu: f64,
    pub beta: f64,
    pub winner_provenance: Provenance,
    pub loser_provenance: Provenance,
    pub config_fingerprint: String,
}

impl PairRecord {
    pub fn new(query_id: &str, pair: &PreferencePair<f64>, mu: f64, beta: f64, fingerprint: &str) -> Self {
        PairRecord {
            query_id: query_id.to_string(),
            winner_docids: pair.winner.list.docids.clone(),
            loser_docids: pair.loser.list.docids.clone(),
            winner_reward: pair.winner.reward,
            loser_reward: pair.loser.reward,
            gap: pair.gap,
            mu,
            beta,
            winner_provenance: pair.winner.provenance,
            loser_provenance: pair.loser.provenance,
            config_fingerprint: fingerprint.to_string(),
        }
    }
}

/// Re-checks unilaterality and significance on serialized pairs.
pub fn validate_pair_records(records: &[PairRecord]) -> Result<()> {
    for r in records {
        let fail = |message: String| Error::Schema {
            record: r.query_id.clone(),
            message,
        };
        let greedy = [r.winner_provenance, r.loser_provenance]
            .iter()
            .filter(|&&p| p == Provenance::Greedy)
            .count();
        if greedy != 1 {
            return Err(fail(format!("pair has {greedy} greedy members")));
        }
        if (r.winner_reward - r.loser_reward - r.gap).abs() > 1e-12 {
            return Err(fail("gap does not match rewards".into()));
        }
        if !(r.gap > r.mu) {
            return Err(fail(format!("gap {} not above mu {}", r.gap, r.mu)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranker::UniformBackend;

    fn rewarded(reward: f64, provenance: Provenance) -> RewardedList<f64> {
        RewardedList {
            list: RankingList {
                docids: vec![],
                step_logprobs: vec![],
                mode: match provenance {
                    Provenance::Greedy => DecodeMode::Greedy,
                    Provenance::Sampled => DecodeMode::Sampled,
                },
            },
            response: String::new(),
            reward,
            provenance,
        }
    }

    #[test]
    fn reward_examples() {
        let a = "the quick brown fox";
        assert_eq!(reward::<f64, _>(a, a, &[a]).unwrap(), 2.0);
        assert_eq!(reward::<f64, _>("zzz yyy", a, &[a]).unwrap(), 0.0);
        assert_eq!(reward::<f64, _>("", a, &[a]).unwrap(), 0.0);
        assert!(reward::<f64, _>("x", "", &["x"]).is_err());
    }

    #[test]
    fn us3_worked_example() {
        let lists = vec![
            rewarded(0.50, Provenance::Greedy),
            rewarded(0.65, Provenance::Sampled),
            rewarded(0.55, Provenance::Sampled),
            rewarded(0.30, Provenance::Sampled),
        ];
        let pairs = build_unilateral_pairs(&lists, 0.1).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].winner.reward, 0.65);
        assert_eq!(pairs[0].loser.provenance, Provenance::Greedy);
        assert_eq!(pairs[1].winner.provenance, Provenance::Greedy);
        assert_eq!(pairs[1].loser.reward, 0.30);
    }

    #[test]
    fn us3_edges() {
        let close = vec![rewarded(0.5, Provenance::Greedy), rewarded(0.55, Provenance::Sampled)];
        assert!(build_unilateral_pairs(&close, 0.1).unwrap().is_empty());
        let one = vec![rewarded(0.5, Provenance::Greedy), rewarded(0.51, Provenance::Sampled)];
        assert_eq!(build_unilateral_pairs(&one, 0.0).unwrap().len(), 1);
        let none = vec![rewarded(0.5, Provenance::Sampled)];
        assert!(matches!(
            build_unilateral_pairs(&none, 0.1),
            Err(Error::UnilateralityViolated(0))
        ));
        let two = vec![rewarded(0.5, Provenance::Greedy), rewarded(0.9, Provenance::Greedy)];
        assert_eq!(
            build_unilateral_pairs(&two, 0.1).unwrap_err().to_string(),
            "unilaterality violated: expected exactly one greedy list, found 2"
        );
    }

    #[test]
    fn dpo_examples() {
        let l = dpo_loss_value(-1.0f64, -1.0, -1.0, -1.0, 0.1).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
        let l = dpo_loss_value(-1.0f64, -1.0 - 3f64.ln(), -1.0, -1.0, 1.0).unwrap();
        assert!((l - (4.0f64 / 3.0).ln()).abs() < 1e-9);
        let a = dpo_loss_value(-2.0f64, -1.0, -1.5, -1.5, 0.5).unwrap();
        let b = dpo_loss_value(-1.0f64, -1.0, -1.5, -1.5, 0.5).unwrap();
        assert!(b < a);
        assert!(dpo_loss_value(f64::NAN, -1.0, -1.0, -1.0, 0.1).is_err());
        assert!(dpo_loss_value(0.5f64, -1.0, -1.0, -1.0, 0.1).is_err());
        assert!(dpo_loss_value(-0.5f64, -1.0, -1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn softplus_extremes() {
        assert!((softplus(800.0f64) - 800.0).abs() < 1e-9);
        assert!(softplus(-800.0f64) >= 0.0);
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(oracle_generate("q", &["Only one sentence here."], 1), "Only one sentence here.");
        let subs = ["Alpha was founded early.", "Beta grew quickly!", "Gamma declined?"];
        let out = oracle_generate("tell me", &subs, 10);
        for s in subs {
            assert!(out.contains(s));
        }
        assert_eq!(oracle_generate("q", &["", " . "], 3), "");
        assert_eq!(oracle_generate("a b", &subs, 2), oracle_generate("a b", &subs, 2));
    }

    #[test]
    fn oracle_prefers_query_terms_then_novelty() {
        let docs = ["Cats purr. Dogs bark loudly.", "Cats purr softly."];
        let out = oracle_generate("why do dogs bark", &docs, 2);
        assert!(out.starts_with("Dogs bark loudly."));
        assert_eq!(out, "Dogs bark loudly. Cats purr.");
    }

    #[test]
    fn sentence_split() {
        assert_eq!(split_sentences("A b. C? D! e"), ["A b.", "C?", "D!", "e"]);
    }

    #[test]
    fn rewarded_list_counts() {
        let texts = ["one fish.", "two fish.", "red fish.", "blue fish."];
        let ctx = RewardContext {
            query: "fish",
            candidate_texts: &texts,
            answer: "one fish two fish",
            sub_answers: &["one fish", "two fish"],
        };
        let mut cfg = RankerConfig::new(2, 1.0f64);
        cfg.seed = 3;
        let generator = OracleGenerator::new(2).unwrap();
        let lists = generate_rewarded_lists(&UniformBackend::new(4), &cfg, &generator, &ctx, 3).unwrap();
        assert_eq!(lists.len(), 4);
        assert_eq!(
            lists.iter().filter(|l| l.provenance == Provenance::Greedy).count(),
            1
        );
        let again = generate_rewarded_lists(&UniformBackend::new(4), &cfg, &generator, &ctx, 3).unwrap();
        assert_eq!(lists, again);
        for l in &lists {
            let r: f64 = reward(&l.response, ctx.answer, ctx.sub_answers).unwrap();
            assert_eq!(r, l.reward);
        }
    }

    #[test]
    fn random_pairs_ablation() {
        let lists = vec![
            rewarded(0.50, Provenance::Greedy),
            rewarded(0.65, Provenance::Sampled),
            rewarded(0.55, Provenance::Sampled),
        ];
        let pairs = build_random_pairs(&lists, 1);
        assert!(pairs.iter().all(|p| p.gap > 0.0 && p.winner.reward > p.loser.reward));
        assert_eq!(pairs, build_random_pairs(&lists, 1));
    }

    #[test]
    fn validator() {
        let lists = vec![rewarded(0.5, Provenance::Greedy), rewarded(0.9, Provenance::Sampled)];
        let pairs = build_unilateral_pairs(&lists, 0.1).unwrap();
        let recs: Vec<_> = pairs.iter().map(|p| PairRecord::new("q", p, 0.1, 0.1, "fp")).collect();
        validate_pair_records(&recs).unwrap();
        let mut bad = recs[0].clone();
        bad.winner_provenance = Provenance::Greedy;
        assert!(validate_pair_records(&[bad]).is_err());
        let mut bad = recs[0].clone();
        bad.mu = 0.5;
        assert!(validate_pair_records(&[bad]).is_err());
    }
}
