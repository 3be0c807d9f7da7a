//! Run configuration and its fingerprint.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aspects::ExplorerPrompt;
use crate::client::EndpointConfig;
use crate::corpus::Bm25Params;
use crate::error::{Error, Result};
use crate::ranker::RankerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AspectMode {
    Predicted,
    Gold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    None,
    /// Retrieve and rank with the bare query as the only aspect.
    NoSa,
    /// Pair sampled lists with random partners instead of the greedy list.
    RandomPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Reference,
    Uniform,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Oracle,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_per_aspect: usize,
    pub pool_capacity: usize,
    pub k: usize,
    pub tau: f64,
    pub mu: f64,
    pub beta: f64,
    pub num_samples: usize,
    pub allow_repetition: bool,
    pub seed: u64,
    pub aspect_mode: AspectMode,
    pub ablation: Ablation,
    pub backend: BackendKind,
    pub generator: GeneratorKind,
    /// Sentence budget of the oracle generator.
    pub generator_budget: usize,
    pub generator_max_tokens: u32,
    pub explorer_max_tokens: u32,
    pub explorer_prompt: ExplorerPrompt,
    pub bm25: Bm25Params,
    pub rrf_k: f64,
    pub relevance_threshold: f64,
    pub ndcg_cutoffs: Vec<usize>,
    pub explorer_endpoint: Option<EndpointConfig>,
    pub ranker_endpoint: Option<EndpointConfig>,
    pub generator_endpoint: Option<EndpointConfig>,
    /// Records processed concurrently within a stage. Not part of the fingerprint.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_per_aspect: 50,
            pool_capacity: 290,
            k: 10,
            tau: 0.1,
            mu: 0.1,
            beta: 0.1,
            num_samples: 4,
            allow_repetition: false,
            seed: 0,
            aspect_mode: AspectMode::Predicted,
            ablation: Ablation::None,
            backend: BackendKind::Reference,
            generator: GeneratorKind::Oracle,
            generator_budget: 5,
            generator_max_tokens: 256,
            explorer_max_tokens: 128,
            explorer_prompt: ExplorerPrompt::default(),
            bm25: Bm25Params::default(),
            rrf_k: crate::eval::DEFAULT_RRF_K,
            relevance_threshold: crate::eval::DEFAULT_RELEVANCE_THRESHOLD,
            ndcg_cutoffs: vec![1, 3, 5, 10],
            explorer_endpoint: None,
            ranker_endpoint: None,
            generator_endpoint: None,
            workers: 1,
        }
    }
}

impl RunConfig {
    /// Named presets differing only in pool capacity.
    pub fn profile(name: &str) -> Result<Self> {
        let pool_capacity = match name {
            "default" | "wikipassageqa" => 290,
            "wikiasp" => 270,
            other => return Err(Error::InvalidArgument(format!("unknown profile {other}"))),
        };
        Ok(RunConfig {
            pool_capacity,
            ..RunConfig::default()
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = serde_json::from_slice(&bytes)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_per_aspect == 0 {
            return bad("n_per_aspect must be at least 1");
        }
        if self.pool_capacity == 0 {
            return bad("pool_capacity must be at least 1");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.mu >= 0.0) {
            return bad("mu must be non-negative");
        }
        if !(self.beta > 0.0) {
            return bad("beta must be positive");
        }
        if self.num_samples == 0 {
            return bad("num_samples must be at least 1");
        }
        if self.generator_budget == 0 {
            return bad("generator_budget must be at least 1");
        }
        if !(self.rrf_k > 0.0) {
            return bad("rrf_k must be positive");
        }
        if !(0.0..=1.0).contains(&self.relevance_threshold) {
            return bad("relevance_threshold must lie in [0, 1]");
        }
        if self.ndcg_cutoffs.contains(&0) {
            return bad("ndcg cutoffs must be positive");
        }
        if self.backend == BackendKind::Remote && self.ranker_endpoint.is_none() {
            return bad("backend=remote needs ranker_endpoint");
        }
        if self.generator == GeneratorKind::Remote && self.generator_endpoint.is_none() {
            return bad("generator=remote needs generator_endpoint");
        }
        Ok(())
    }

    pub fn ranker(&self) -> RankerConfig<f64> {
        RankerConfig {
            k: self.k,
            tau: self.tau,
            allow_repetition: self.allow_repetition,
            seed: self.seed,
        }
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON of every
    /// output-affecting field.
    pub fn fingerprint(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("workers");
        }
        let canonical = serde_json::to_vec(&value).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        hex::encode(digest)[..16].to_string()
    }
}
