//! Stage orchestration with fingerprinted newline-delimited JSON caches.
//!
//! Stages form the chain `index → aspects → retrieve → pool → silver → rank →
//! pairs → eval`. Each stage reads the artifacts of the stages it needs from
//! the output directory, processes records (possibly on several workers), and
//! writes its own artifact ordered by record id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aspects::{predict_aspects, CompletionClient, HttpCompletionClient, SubAspectList};
use crate::config::{Ablation, AspectMode, BackendKind, GeneratorKind, RunConfig};
use crate::corpus::{build_index_with, load_documents, InvertedIndex, Retriever, ScoredDoc};
use crate::dataset::{load_dataset, DatasetRecord};
use crate::error::{Error, Result};
use crate::eval::{evaluate_response, label_relevance, ncom, ranking_metrics, rrf_fuse, MetricsReport};
use crate::jsonl;
use crate::pool::{merge_pool, resolve, retrieve_per_aspect, CandidatePool, PoolRecord};
use crate::preference::{
    build_random_pairs, build_unilateral_pairs, generate_rewarded_lists, validate_pair_records, Generator,
    HttpGenerator, OracleGenerator, PairRecord, RewardContext,
};
use crate::ranker::{rank, DecodeMode, RankerConfig, ReferenceBackend, RemoteBackend, ScoringBackend, UniformBackend};
use crate::silver::{build_silver_list, SilverRecord};
use crate::text::phi;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Index,
    Aspects,
    Retrieve,
    Pool,
    Silver,
    Rank,
    Pairs,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Index,
        Stage::Aspects,
        Stage::Retrieve,
        Stage::Pool,
        Stage::Silver,
        Stage::Rank,
        Stage::Pairs,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Index => "index",
            Stage::Aspects => "aspects",
            Stage::Retrieve => "retrieve",
            Stage::Pool => "pool",
            Stage::Silver => "silver",
            Stage::Rank => "rank",
            Stage::Pairs => "pairs",
            Stage::Eval => "eval",
        }
    }

    /// File name of the stage's primary artifact inside the output directory.
    pub fn artifact(self) -> &'static str {
        match self {
            Stage::Index => "index.json",
            Stage::Aspects => "aspects.jsonl",
            Stage::Retrieve => "retrieve.jsonl",
            Stage::Pool => "pool.jsonl",
            Stage::Silver => "silver.jsonl",
            Stage::Rank => "rank.jsonl",
            Stage::Pairs => "pairs.jsonl",
            Stage::Eval => "report.json",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub record: String,
    pub message: String,
}

/// Run summary of one stage. Not written to any artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: Stage,
    pub count: usize,
    pub failures: Vec<RecordFailure>,
    pub elapsed_ms: u128,
    /// Aspect count → number of records, filled by the aspects stage.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub aspect_counts: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexArtifact {
    pub config_fingerprint: String,
    pub index: InvertedIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectsRecord {
    pub query_id: String,
    pub aspects: SubAspectList,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieveRecord {
    pub query_id: String,
    pub lists: Vec<Vec<ScoredDoc>>,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub query_id: String,
    pub docids: Vec<usize>,
    pub doc_ids: Vec<String>,
    pub step_logprobs: Vec<f64>,
    pub mode: DecodeMode,
    pub config_fingerprint: String,
}

trait Fingerprinted {
    fn query_id(&self) -> &str;
    fn fingerprint(&self) -> &str;
}

macro_rules! fingerprinted {
    ($($t:ty),*) => {$(
        impl Fingerprinted for $t {
            fn query_id(&self) -> &str {
                &self.query_id
            }
            fn fingerprint(&self) -> &str {
                &self.config_fingerprint
            }
        }
    )*};
}

fingerprinted!(AspectsRecord, RetrieveRecord, PoolRecord, SilverRecord, RankRecord, PairRecord);

pub type SharedClient = Box<dyn CompletionClient + Send + Sync>;
pub type SharedGenerator = Box<dyn Generator + Send + Sync>;

/// Everything a stage needs: configuration, input paths, output directory and clients.
pub struct Pipeline {
    config: RunConfig,
    fingerprint: String,
    dataset: PathBuf,
    corpus: PathBuf,
    out: PathBuf,
    explorer: Option<SharedClient>,
    generator: SharedGenerator,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("fingerprint", &self.fingerprint)
            .field("dataset", &self.dataset)
            .field("corpus", &self.corpus)
            .field("out", &self.out)
            .finish_non_exhaustive()
    }
}

impl Pipeline {
    pub fn new(
        config: RunConfig,
        dataset: impl Into<PathBuf>,
        corpus: impl Into<PathBuf>,
        out: impl Into<PathBuf>,
    ) -> Result<Self> {
        config.validate()?;
        let explorer = config
            .explorer_endpoint
            .clone()
            .map(|e| Box::new(HttpCompletionClient::new(e)) as SharedClient);
        let generator: SharedGenerator = match config.generator {
            GeneratorKind::Oracle => Box::new(OracleGenerator::new(config.generator_budget)?),
            GeneratorKind::Remote => {
                let endpoint = config
                    .generator_endpoint
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument("generator=remote needs generator_endpoint".into()))?;
                Box::new(HttpGenerator::new(endpoint, config.generator_max_tokens))
            }
        };
        Ok(Pipeline {
            fingerprint: config.fingerprint(),
            config,
            dataset: dataset.into(),
            corpus: corpus.into(),
            out: out.into(),
            explorer,
            generator,
        })
    }

    pub fn with_explorer(mut self, client: SharedClient) -> Self {
        self.explorer = Some(client);
        self
    }

    pub fn with_generator(mut self, generator: SharedGenerator) -> Self {
        self.generator = generator;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn artifact_path(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.artifact())
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageStats> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let start = Instant::now();
        let mut stats = match stage {
            Stage::Index => self.stage_index()?,
            Stage::Aspects => self.stage_aspects()?,
            Stage::Retrieve => self.stage_retrieve()?,
            Stage::Pool => self.stage_pool()?,
            Stage::Silver => self.stage_silver()?,
            Stage::Rank => self.stage_rank()?,
            Stage::Pairs => self.stage_pairs()?,
            Stage::Eval => self.stage_eval()?.1,
        };
        stats.elapsed_ms = start.elapsed().as_millis();
        for f in &stats.failures {
            log::warn!("{stage}: record {} failed: {}", f.record, f.message);
        }
        log::info!(
            "{stage}: {} records, {} failures, {} ms",
            stats.count,
            stats.failures.len(),
            stats.elapsed_ms
        );
        Ok(stats)
    }

    /// Runs every stage in order. The first stage with a failed record aborts the run.
    pub fn run_all(&self) -> Result<(MetricsReport, Vec<StageStats>)> {
        let mut all = Vec::new();
        for stage in Stage::ALL {
            let stats = self.run_stage(stage)?;
            if let Some(f) = stats.failures.first() {
                return Err(Error::Stage {
                    stage: stage.name().into(),
                    record: f.record.clone(),
                    source: Box::new(Error::InvalidArgument(f.message.clone())),
                });
            }
            all.push(stats);
        }
        let report = self.load_report()?;
        Ok((report, all))
    }

    pub fn load_report(&self) -> Result<MetricsReport> {
        let path = self.require(Stage::Eval)?;
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let report: MetricsReport = serde_json::from_slice(&bytes)?;
        self.check_fingerprint(&path, &report.config_fingerprint)?;
        Ok(report)
    }

    fn require(&self, stage: Stage) -> Result<PathBuf> {
        let path = self.artifact_path(stage);
        if path.is_file() {
            Ok(path)
        } else {
            Err(Error::MissingArtifact(stage.name().into()))
        }
    }

    fn check_fingerprint(&self, path: &Path, found: &str) -> Result<()> {
        if found == self.fingerprint {
            Ok(())
        } else {
            Err(Error::FingerprintMismatch {
                path: path.to_path_buf(),
                expected: self.fingerprint.clone(),
                found: found.to_string(),
            })
        }
    }

    fn load_index(&self) -> Result<InvertedIndex> {
        let path = self.require(Stage::Index)?;
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let mut artifact: IndexArtifact = serde_json::from_slice(&bytes)?;
        self.check_fingerprint(&path, &artifact.config_fingerprint)?;
        artifact.index.rebuild_lookup();
        Ok(artifact.index)
    }

    fn load_records<R: DeserializeOwned + Fingerprinted>(&self, stage: Stage) -> Result<BTreeMap<String, R>> {
        let path = self.require(stage)?;
        let mut out = BTreeMap::new();
        for record in jsonl::read::<R>(&path)? {
            self.check_fingerprint(&path, record.fingerprint())?;
            out.insert(record.query_id().to_string(), record);
        }
        Ok(out)
    }

    fn dataset(&self) -> Result<Vec<DatasetRecord>> {
        let mut records = load_dataset(&self.dataset)?;
        records.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(records)
    }

    fn stage_index(&self) -> Result<StageStats> {
        let documents = load_documents(&self.corpus)?;
        let index = build_index_with(documents, self.config.bm25)?;
        let artifact = IndexArtifact {
            config_fingerprint: self.fingerprint.clone(),
            index,
        };
        let path = self.artifact_path(Stage::Index);
        let bytes = serde_json::to_vec(&artifact)?;
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(StageStats::new(Stage::Index, artifact.index.doc_count()))
    }

    fn stage_aspects(&self) -> Result<StageStats> {
        let records = self.dataset()?;
        if self.config.aspect_mode == AspectMode::Predicted
            && self.config.ablation != Ablation::NoSa
            && self.explorer.is_none()
        {
            return Err(Error::InvalidArgument(
                "aspect_mode=predicted needs explorer_endpoint".into(),
            ));
        }
        let outcome = self.process(&records, |r| {
            let aspects = match (self.config.ablation, self.config.aspect_mode) {
                (Ablation::NoSa, _) => SubAspectList::fallback(&r.question)?,
                (_, AspectMode::Gold) => SubAspectList::gold(&r.sub_aspects)?,
                (_, AspectMode::Predicted) => {
                    let client = self.explorer.as_deref().ok_or(Error::InvalidArgument(
                        "aspect_mode=predicted needs explorer_endpoint".into(),
                    ))?;
                    predict_aspects(
                        &r.question,
                        &self.config.explorer_prompt,
                        client,
                        self.config.explorer_max_tokens,
                    )?
                }
            };
            Ok(vec![AspectsRecord {
                query_id: r.id.clone(),
                aspects,
                config_fingerprint: self.fingerprint.clone(),
            }])
        })?;
        let mut stats = self.finish(Stage::Aspects, outcome)?;
        for record in jsonl::read::<AspectsRecord>(&self.artifact_path(Stage::Aspects))? {
            *stats.aspect_counts.entry(record.aspects.len()).or_default() += 1;
        }
        Ok(stats)
    }

    fn stage_retrieve(&self) -> Result<StageStats> {
        let aspects: BTreeMap<String, AspectsRecord> = self.load_records(Stage::Aspects)?;
        let index = self.load_index()?;
        let records = self.dataset()?;
        let outcome = self.process(&records, |r| {
            let a = upstream(&aspects, r, Stage::Aspects)?;
            let lists = retrieve_per_aspect(&index, &r.question, &a.aspects, self.config.n_per_aspect)?;
            Ok(vec![RetrieveRecord {
                query_id: r.id.clone(),
                lists,
                config_fingerprint: self.fingerprint.clone(),
            }])
        })?;
        self.finish(Stage::Retrieve, outcome)
    }

    fn stage_pool(&self) -> Result<StageStats> {
        let retrieved: BTreeMap<String, RetrieveRecord> = self.load_records(Stage::Retrieve)?;
        let aspects: BTreeMap<String, AspectsRecord> = self.load_records(Stage::Aspects)?;
        let index = self.load_index()?;
        let records = self.dataset()?;
        let outcome = self.process(&records, |r| {
            let a = upstream(&aspects, r, Stage::Aspects)?;
            let lists = upstream(&retrieved, r, Stage::Retrieve)?;
            let docs = resolve(&index, &lists.lists)?;
            let pool = merge_pool(&r.question, &a.aspects, &docs, self.config.pool_capacity)?;
            Ok(vec![PoolRecord::from_pool(&r.id, &pool, &self.fingerprint)])
        })?;
        self.finish(Stage::Pool, outcome)
    }

    fn stage_silver(&self) -> Result<StageStats> {
        let pools: BTreeMap<String, PoolRecord> = self.load_records(Stage::Pool)?;
        let index = self.load_index()?;
        let records = self.dataset()?;
        let outcome = self.process(&records, |r| {
            let pool = upstream(&pools, r, Stage::Pool)?.to_pool(&index)?;
            let k = self.effective_k(&r.id, &pool);
            let target = build_silver_list::<f64, _>(&pool, &r.sub_answers, k)?;
            Ok(vec![SilverRecord {
                query_id: r.id.clone(),
                docids: target.docids,
                step_utilities: target.step_utilities,
                config_fingerprint: self.fingerprint.clone(),
            }])
        })?;
        self.finish(Stage::Silver, outcome)
    }

    fn stage_rank(&self) -> Result<StageStats> {
        let pools: BTreeMap<String, PoolRecord> = self.load_records(Stage::Pool)?;
        let index = self.load_index()?;
        let records = self.dataset()?;
        let outcome = self.process(&records, |r| {
            let pool = upstream(&pools, r, Stage::Pool)?.to_pool(&index)?;
            let config = self.ranker_config(&r.id, &pool);
            let backend = self.backend(&pool)?;
            let list = rank(backend.as_ref(), &config, DecodeMode::Greedy)?;
            let doc_ids = list
                .docids
                .iter()
                .map(|&d| pool.candidate(d).map(|c| c.doc.doc_id.clone()))
                .collect::<Result<_>>()?;
            Ok(vec![RankRecord {
                query_id: r.id.clone(),
                docids: list.docids,
                doc_ids,
                step_logprobs: list.step_logprobs,
                mode: list.mode,
                config_fingerprint: self.fingerprint.clone(),
            }])
        })?;
        self.finish(Stage::Rank, outcome)
    }

    fn stage_pairs(&self) -> Result<StageStats> {
        let pools: BTreeMap<String, PoolRecord> = self.load_records(Stage::Pool)?;
        let index = self.load_index()?;
        let records = self.dataset()?;
        let outcome = self.process(&records, |r| {
            let pool = upstream(&pools, r, Stage::Pool)?.to_pool(&index)?;
            let config = self.ranker_config(&r.id, &pool);
            let backend = self.backend(&pool)?;
            let texts = pool.texts();
            let ctx = RewardContext {
                query: &r.question,
                candidate_texts: &texts,
                answer: &r.answer,
                sub_answers: &r.sub_answers,
            };
            let lists = generate_rewarded_lists(
                backend.as_ref(),
                &config,
                self.generator.as_ref(),
                &ctx,
                self.config.num_samples,
            )?;
            let pairs = match self.config.ablation {
                Ablation::RandomPairs => build_random_pairs(&lists, config.seed),
                _ => build_unilateral_pairs(&lists, self.config.mu)?,
            };
            let out: Vec<PairRecord> = pairs
                .iter()
                .map(|p| PairRecord::new(&r.id, p, self.config.mu, self.config.beta, &self.fingerprint))
                .collect();
            if self.config.ablation != Ablation::RandomPairs {
                validate_pair_records(&out)?;
            }
            Ok(out)
        })?;
        self.finish(Stage::Pairs, outcome)
    }

    fn stage_eval(&self) -> Result<(MetricsReport, StageStats)> {
        let ranked: BTreeMap<String, RankRecord> = self.load_records(Stage::Rank)?;
        let silver: BTreeMap<String, SilverRecord> = self.load_records(Stage::Silver)?;
        let pools: BTreeMap<String, PoolRecord> = self.load_records(Stage::Pool)?;
        let retrieved: BTreeMap<String, RetrieveRecord> = self.load_records(Stage::Retrieve)?;
        let index = self.load_index()?;
        let records = self.dataset()?;
        let outcome = self.process(&records, |r| {
            let pool = upstream(&pools, r, Stage::Pool)?.to_pool(&index)?;
            let lists = upstream(&retrieved, r, Stage::Retrieve)?;
            let silver = upstream(&silver, r, Stage::Silver)?;
            let ranked = upstream(&ranked, r, Stage::Rank)?;
            let k = self.effective_k(&r.id, &pool);
            let silver_texts: Vec<&str> = silver
                .docids
                .iter()
                .map(|&d| pool.candidate(d).map(|c| c.doc.text.as_str()))
                .collect::<Result<_>>()?;

            let no_ranker: Vec<String> = index.retrieve(&r.question, k)?.into_iter().map(|s| s.doc_id).collect();
            let id_lists: Vec<Vec<&str>> = lists
                .lists
                .iter()
                .map(|l| l.iter().map(|s| s.doc_id.as_str()).collect())
                .collect();
            let fused: Vec<String> = rrf_fuse::<f64, _>(&id_lists, self.config.rrf_k, k)?
                .into_iter()
                .map(|(d, _)| d)
                .collect();
            let systems: [(&str, &[String]); 3] = [
                ("ranker", &ranked.doc_ids),
                ("no_ranker", &no_ranker),
                ("rrf", &fused),
            ];

            let mut relevant = label_relevance(&pool, &r.answer, self.config.relevance_threshold)?;
            let pooled: BTreeSet<&str> = pool.doc_ids().into_iter().collect();
            for (_, ids) in &systems {
                for id in ids.iter().filter(|id| !pooled.contains(id.as_str())) {
                    let doc = document(&index, id)?;
                    if phi::<f64>(&doc.text, &r.answer) > self.config.relevance_threshold {
                        relevant.insert(id.clone());
                    }
                }
            }

            let mut metrics = BTreeMap::new();
            for (name, ids) in systems {
                let texts: Vec<&str> = ids
                    .iter()
                    .map(|id| document(&index, id).map(|d| d.text.as_str()))
                    .collect::<Result<_>>()?;
                let response = self.generator.generate(&r.question, &texts)?;
                let scores = evaluate_response::<f64, _>(&response, &r.answer, &r.sub_answers)?;
                for (metric, v) in scores.named() {
                    metrics.insert(format!("{name}.{metric}"), v);
                }
                let n = texts.len().min(silver_texts.len());
                let value = ncom::<f64, _, _, _>(&texts[..n], &silver_texts[..n], &r.sub_answers)?;
                metrics.insert(format!("{name}.NCOM"), value);
                if !relevant.is_empty() {
                    let rm = ranking_metrics::<f64, _>(ids, &relevant, &self.config.ndcg_cutoffs)?;
                    metrics.insert(format!("{name}.MAP"), rm.map);
                    for (c, v) in rm.ndcg {
                        metrics.insert(format!("{name}.NDCG@{c}"), v);
                    }
                }
            }
            Ok(vec![(r.id.clone(), metrics, relevant.is_empty())])
        })?;

        let mut stats = StageStats::new(Stage::Eval, 0);
        let mut per_query = BTreeMap::new();
        let mut zero_relevance = Vec::new();
        for (id, result) in outcome {
            match result {
                Ok(rows) => {
                    for (id, metrics, no_relevant) in rows {
                        if no_relevant {
                            zero_relevance.push(id.clone());
                        }
                        per_query.insert(id, metrics);
                        stats.count += 1;
                    }
                }
                Err(e) => stats.failures.push(RecordFailure {
                    record: id,
                    message: e.to_string(),
                }),
            }
        }
        let report = MetricsReport::new(per_query, zero_relevance, self.fingerprint.clone());
        let path = self.artifact_path(Stage::Eval);
        let mut bytes = serde_json::to_vec_pretty(&report)?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        let tsv = self.out.join("report.tsv");
        std::fs::write(&tsv, report.to_tsv()).map_err(|e| Error::io(&tsv, e))?;
        Ok((report, stats))
    }

    fn effective_k(&self, id: &str, pool: &CandidatePool) -> usize {
        if self.config.allow_repetition || self.config.k <= pool.len() {
            self.config.k
        } else {
            log::warn!("record {id}: pool has {} candidates, truncating k={}", pool.len(), self.config.k);
            pool.len()
        }
    }

    fn ranker_config(&self, id: &str, pool: &CandidatePool) -> RankerConfig<f64> {
        RankerConfig {
            k: self.effective_k(id, pool),
            seed: record_seed(self.config.seed, id),
            ..self.config.ranker()
        }
    }

    fn backend(&self, pool: &CandidatePool) -> Result<Box<dyn ScoringBackend<f64>>> {
        Ok(match self.config.backend {
            BackendKind::Reference => Box::new(ReferenceBackend::<f64>::new(pool)?),
            BackendKind::Uniform => Box::new(UniformBackend::new(pool.len())),
            BackendKind::Remote => {
                let endpoint = self
                    .config
                    .ranker_endpoint
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument("backend=remote needs ranker_endpoint".into()))?;
                Box::new(RemoteBackend::new(endpoint, pool))
            }
        })
    }

    /// Applies `f` to every record on up to `workers` threads, keeping record order.
    /// Schema errors abort; other errors are returned per record.
    #[allow(clippy::type_complexity)]
    fn process<O: Send>(
        &self,
        records: &[DatasetRecord],
        f: impl Fn(&DatasetRecord) -> Result<Vec<O>> + Sync,
    ) -> Result<Vec<(String, Result<Vec<O>>)>> {
        let workers = self.config.workers.max(1).min(records.len().max(1));
        let results: Vec<Result<Vec<O>>> = if workers == 1 {
            records.iter().map(&f).collect()
        } else {
            let next = Mutex::new(0usize);
            let slots: Vec<Mutex<Option<Result<Vec<O>>>>> = records.iter().map(|_| Mutex::new(None)).collect();
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let i = {
                            let mut n = next.lock().expect("worker lock");
                            let i = *n;
                            *n += 1;
                            i
                        };
                        let Some(record) = records.get(i) else { break };
                        let result = f(record);
                        *slots[i].lock().expect("slot lock") = Some(result);
                    });
                }
            });
            slots
                .into_iter()
                .map(|s| s.into_inner().expect("slot lock").expect("every slot filled"))
                .collect()
        };
        let mut out = Vec::with_capacity(records.len());
        for (record, result) in records.iter().zip(results) {
            if let Err(e @ Error::Schema { .. }) = result {
                return Err(Error::Stage {
                    stage: "schema".into(),
                    record: record.id.clone(),
                    source: Box::new(e),
                });
            }
            out.push((record.id.clone(), result));
        }
        Ok(out)
    }

    /// Writes successful rows in record order and collects the failures.
    fn finish<O: Serialize>(&self, stage: Stage, outcome: Vec<(String, Result<Vec<O>>)>) -> Result<StageStats> {
        let mut stats = StageStats::new(stage, 0);
        let mut rows = Vec::new();
        for (id, result) in outcome {
            match result {
                Ok(mut r) => {
                    stats.count += 1;
                    rows.append(&mut r);
                }
                Err(e) => stats.failures.push(RecordFailure {
                    record: id,
                    message: e.to_string(),
                }),
            }
        }
        jsonl::write(&self.artifact_path(stage), &rows)?;
        Ok(stats)
    }
}

impl StageStats {
    fn new(stage: Stage, count: usize) -> Self {
        StageStats {
            stage,
            count,
            failures: Vec::new(),
            elapsed_ms: 0,
            aspect_counts: BTreeMap::new(),
        }
    }
}

fn upstream<'a, R>(map: &'a BTreeMap<String, R>, record: &DatasetRecord, stage: Stage) -> Result<&'a R> {
    map.get(&record.id)
        .ok_or_else(|| Error::MissingArtifact(format!("{stage} entry for record {}", record.id)))
}

fn document<'a>(index: &'a InvertedIndex, id: &str) -> Result<&'a crate::corpus::Document> {
    index
        .document(id)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown doc_id {id}")))
}

/// Per-record sampling seed so records do not share sample streams.
pub fn record_seed(seed: u64, record_id: &str) -> u64 {
    let digest = Sha256::digest(record_id.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(bytes)
}

/// Runs every stage and returns the evaluation report.
pub fn run_pipeline(
    config: RunConfig,
    dataset: impl Into<PathBuf>,
    corpus: impl Into<PathBuf>,
    out: impl Into<PathBuf>,
) -> Result<MetricsReport> {
    Ok(Pipeline::new(config, dataset, corpus, out)?.run_all()?.0)
}
