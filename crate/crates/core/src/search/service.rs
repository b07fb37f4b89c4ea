use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::stages::{blend, build_score_request, calibrate_tasks, calibration_heads, hash_embedding, order_results};
use super::{DepthPolicy, Diagnostics, QueryEmbeddingSource, SearchConfig, SearchError, SearchRequest, SearchResponse};
use crate::calibration::{CalibrationArtifact, CalibrationHead};
use crate::midtier::{
    normalize_query, query_signature, retry_decision, CacheKey, PidState, RetryDecision, SharedScoreCache, TaskScores,
};
use crate::model::{ByteTokenizer, ModelWeights};
use crate::retrieval::{exhaustive_topk, Corpus, DocumentRecord, QuerySpec, RarWeights, ScoredDoc};
use crate::scoring::wire::WireFlops;
use crate::scoring::{ScoreResult, ScoringEngine, ScoringError};

/// Everything the service loads at start-up.
#[derive(Debug, Clone)]
pub struct ServiceAssets {
    pub corpus: Corpus<f32>,
    /// Known queries; their embeddings are used when the text matches.
    pub queries: Vec<QuerySpec<f32>>,
    pub rar: RarWeights<f32>,
    pub weights: Arc<ModelWeights<f32>>,
    pub calibration: Option<CalibrationArtifact>,
}

#[derive(Debug, Default)]
struct Stats {
    requests: u64,
    fallbacks: u64,
    shadow_checks: u64,
    shadow_deviations: u64,
    shadow_credit: f64,
    latencies: VecDeque<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthRecord {
    pub status: String,
    pub model_version: String,
    pub weights_checksum: String,
    pub corpus_docs: usize,
    pub calibrated_tasks: Vec<String>,
    pub cache_entries: usize,
    pub cache_capacity: usize,
    pub cache_lookups: u64,
    pub cache_hits: u64,
    pub depth: usize,
    pub requests: u64,
    pub fallbacks: u64,
    pub shadow_checks: u64,
    pub shadow_deviations: u64,
    pub p50_ms: Option<f64>,
    pub p99_ms: Option<f64>,
}

#[derive(Debug)]
pub struct SearchService {
    config: SearchConfig,
    corpus: Corpus<f32>,
    queries: HashMap<String, QuerySpec<f32>>,
    rar: RarWeights<f32>,
    engine: ScoringEngine<f32>,
    tokenizer: ByteTokenizer,
    heads: BTreeMap<String, CalibrationHead<f64>>,
    cache_version: String,
    checksum: String,
    cache: SharedScoreCache<CacheKey, TaskScores>,
    pid: Mutex<PidState>,
    stats: Mutex<Stats>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

impl SearchService {
    pub fn new(config: SearchConfig, assets: ServiceAssets) -> Result<Self, SearchError> {
        if config.retrieval_k == 0 {
            return Err(SearchError::Request("retrieval_k must be at least 1".into()));
        }
        if let DepthPolicy::Fixed { depth: 0 } = config.depth {
            return Err(SearchError::Request("fixed depth must be at least 1".into()));
        }
        let heads = match &assets.calibration {
            Some(a) => calibration_heads(a)?,
            None => BTreeMap::new(),
        };
        let checksum = assets.weights.checksum();
        let queries = assets
            .queries
            .into_iter()
            .filter_map(|q| q.text.as_deref().map(normalize_query).map(|t| (t, q.clone())))
            .collect();
        Ok(Self {
            tokenizer: ByteTokenizer::new(assets.weights.config.max_seq),
            engine: ScoringEngine::new(assets.weights),
            cache_version: format!("{}:{}", config.model_version, &checksum[..16]),
            checksum,
            cache: SharedScoreCache::new(config.cache_capacity),
            pid: Mutex::new(PidState::new(config.pid)?),
            stats: Mutex::new(Stats::default()),
            corpus: assets.corpus,
            queries,
            rar: assets.rar,
            heads,
            config,
        })
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus<f32> {
        &self.corpus
    }

    pub fn engine(&self) -> &ScoringEngine<f32> {
        &self.engine
    }

    pub fn tokenizer(&self) -> &ByteTokenizer {
        &self.tokenizer
    }

    pub fn current_depth(&self) -> usize {
        match self.config.depth {
            DepthPolicy::Fixed { depth } => depth,
            DepthPolicy::Pid => lock(&self.pid).depth,
        }
    }

    /// Fixture embedding when the normalized text is known, else the hashing
    /// projection.
    pub fn embed_query(&self, text: &str) -> Result<(Vec<f32>, QueryEmbeddingSource), SearchError> {
        match self.queries.get(&normalize_query(text)) {
            Some(q) => Ok((q.embedding.clone(), QueryEmbeddingSource::Fixture)),
            None => Ok((hash_embedding(text, self.corpus.dim())?, QueryEmbeddingSource::Hashed)),
        }
    }

    fn score_with_retries(
        &self,
        started: Instant,
        query: &str,
        docs: &[&DocumentRecord<f32>],
    ) -> Result<ScoreResult<f32>, String> {
        let mut attempt = 0;
        let mut last_error = String::new();
        loop {
            match retry_decision(ms_since(started), attempt, &self.config.retry) {
                RetryDecision::GiveUp => {
                    return Err(if last_error.is_empty() { "latency budget exhausted".into() } else { last_error })
                }
                RetryDecision::Proceed | RetryDecision::Retry => {}
            }
            let result = build_score_request(
                &self.tokenizer,
                self.engine.weights(),
                &self.config,
                "search",
                query,
                docs,
                self.config.mode,
            )
            .map_err(|e| e.to_string())
            .and_then(|req| self.engine.score(&req).map_err(|e: ScoringError| e.to_string()));
            match result {
                Ok(r) => return Ok(r),
                Err(e) => last_error = e,
            }
            attempt += 1;
        }
    }

    /// Decides, deterministically, whether the next cache hit is re-scored.
    fn take_shadow_slot(&self) -> bool {
        let mut stats = lock(&self.stats);
        stats.shadow_credit += self.config.shadow_fraction;
        if stats.shadow_credit >= 1.0 {
            stats.shadow_credit -= 1.0;
            true
        } else {
            false
        }
    }

    fn shadow_check(
        &self,
        query: &str,
        docs: &[&DocumentRecord<f32>],
        cached: &[TaskScores],
    ) -> Result<(), SearchError> {
        if docs.is_empty() {
            return Ok(());
        }
        let req = build_score_request(
            &self.tokenizer,
            self.engine.weights(),
            &self.config,
            "shadow",
            query,
            docs,
            self.config.mode,
        )?;
        let fresh = self.engine.score(&req)?;
        let deviations = fresh.scores.iter().zip(cached).filter(|(f, c)| &f.tasks != *c).count() as u64;
        let mut stats = lock(&self.stats);
        stats.shadow_checks += docs.len() as u64;
        stats.shadow_deviations += deviations;
        Ok(())
    }

    pub fn handle_search(&self, request: &SearchRequest) -> Result<SearchResponse, SearchError> {
        let started = Instant::now();
        if request.page_size == 0 {
            return Err(SearchError::Request("page_size must be at least 1".into()));
        }
        let mut stage = BTreeMap::new();

        let t = Instant::now();
        let (embedding, source) = self.embed_query(&request.query)?;
        stage.insert("embed".to_string(), ms_since(t));

        let t = Instant::now();
        let spec = QuerySpec {
            query_id: String::new(),
            embedding,
            filters: request.filters.clone(),
            k: self.config.retrieval_k,
            text: Some(request.query.clone()),
        };
        let candidates: Vec<ScoredDoc<f32>> = exhaustive_topk(&self.corpus, &spec, &self.rar)?;
        stage.insert("retrieve".to_string(), ms_since(t));

        let depth = self.current_depth();
        let n_scored = depth.min(candidates.len());
        let docs: Vec<&DocumentRecord<f32>> =
            candidates[..n_scored].iter().map(|c| self.corpus.get(c.doc_id).expect("retrieved id exists")).collect();

        let t = Instant::now();
        let signature = query_signature(&request.query, &request.filters);
        let keys: Vec<CacheKey> = docs
            .iter()
            .map(|d| CacheKey {
                searcher_id: request.searcher_id.clone(),
                query_signature: signature.clone(),
                entity_id: d.doc_id,
                model_version: self.cache_version.clone(),
            })
            .collect();
        let mut raw: Vec<Option<TaskScores>> = keys.iter().map(|k| self.cache.get(k)).collect();
        let hits = raw.iter().filter(|r| r.is_some()).count();
        stage.insert("cache_probe".to_string(), ms_since(t));

        let t = Instant::now();
        let miss_idx: Vec<usize> = (0..n_scored).filter(|&i| raw[i].is_none()).collect();
        let mut flops = WireFlops { attention: 0, linear: 0 };
        let mut fallback_reason = None;
        if !miss_idx.is_empty() {
            let miss_docs: Vec<&DocumentRecord<f32>> = miss_idx.iter().map(|&i| docs[i]).collect();
            match self.score_with_retries(started, &request.query, &miss_docs) {
                Ok(result) => {
                    flops = WireFlops { attention: result.flops.attention_units, linear: result.flops.linear_units };
                    for (&i, s) in miss_idx.iter().zip(result.scores) {
                        self.cache.put(keys[i].clone(), s.tasks.clone())?;
                        raw[i] = Some(s.tasks);
                    }
                }
                Err(reason) => fallback_reason = Some(reason),
            }
        }
        stage.insert("score".to_string(), ms_since(t));

        if fallback_reason.is_none() && hits > 0 {
            let shadow: Vec<usize> =
                (0..n_scored).filter(|i| !miss_idx.contains(i)).filter(|_| self.take_shadow_slot()).collect();
            let shadow_docs: Vec<&DocumentRecord<f32>> = shadow.iter().map(|&i| docs[i]).collect();
            let cached: Vec<TaskScores> = shadow.iter().map(|&i| raw[i].clone().expect("hit")).collect();
            self.shadow_check(&request.query, &shadow_docs, &cached)?;
        }

        let t = Instant::now();
        let results = if fallback_reason.is_some() {
            order_results(&candidates, Vec::new(), request.page_size)
        } else {
            let mut scored = Vec::with_capacity(n_scored);
            for r in raw.into_iter().flatten() {
                let calibrated = calibrate_tasks(&self.heads, &r)?;
                let score = blend(&self.config.blend, &calibrated);
                scored.push((r, calibrated, score));
            }
            order_results(&candidates, scored, request.page_size)
        };
        stage.insert("rank".to_string(), ms_since(t));

        let total = ms_since(started);
        stage.insert("total".to_string(), total);
        if self.config.depth == DepthPolicy::Pid {
            lock(&self.pid).update(total, self.config.target_latency_ms, 1.0)?;
        }
        {
            let mut stats = lock(&self.stats);
            stats.requests += 1;
            stats.fallbacks += u64::from(fallback_reason.is_some());
            stats.latencies.push_back(total);
            while stats.latencies.len() > self.config.latency_window.max(1) {
                stats.latencies.pop_front();
            }
        }

        Ok(SearchResponse {
            results,
            diagnostics: Diagnostics {
                depth_used: depth,
                candidates: candidates.len(),
                scored: if fallback_reason.is_some() { 0 } else { n_scored },
                cache_hits: hits,
                cache_misses: miss_idx.len(),
                flops,
                stage_latency_ms: stage,
                query_embedding: source,
                fallback: fallback_reason.is_some(),
                fallback_reason,
                model_version: self.config.model_version.clone(),
            },
        })
    }

    pub fn health_and_metrics(&self) -> HealthRecord {
        let cache = self.cache.stats();
        let stats = lock(&self.stats);
        let mut lat: Vec<f64> = stats.latencies.iter().copied().collect();
        lat.sort_by(f64::total_cmp);
        let pct =
            |q: f64| (!lat.is_empty()).then(|| lat[((q * lat.len() as f64).ceil() as usize).clamp(1, lat.len()) - 1]);
        HealthRecord {
            status: "ok".into(),
            model_version: self.config.model_version.clone(),
            weights_checksum: self.checksum.clone(),
            corpus_docs: self.corpus.len(),
            calibrated_tasks: self.heads.keys().cloned().collect(),
            cache_entries: self.cache.len(),
            cache_capacity: self.cache.capacity(),
            cache_lookups: cache.lookups,
            cache_hits: cache.hits,
            depth: self.current_depth(),
            requests: stats.requests,
            fallbacks: stats.fallbacks,
            shadow_checks: stats.shadow_checks,
            shadow_deviations: stats.shadow_deviations,
            p50_ms: pct(0.5),
            p99_ms: pct(0.99),
        }
    }
}
