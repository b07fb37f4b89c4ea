//! Synthetic corpus, queries, judgments and interaction logs with planted
//! structure, so every downstream stage has a known answer.
//!
//! Documents and queries are noisy copies of per-cluster centroids. Grades
//! are assigned by quantile of query–document cosine so the grade mixture is
//! exact. Clicks follow a position-decaying examination probability times an
//! attractiveness term driven by grade and document features.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ranking::ActionRow;
use crate::retrieval::{cosine, DocId, DocumentRecord, LabeledPair, QuerySpec, RarExample, RetrievalError};
use crate::scalar::logistic;

pub const REGIONS: [&str; 4] = ["apac", "eu", "latam", "na"];
pub const SENIORITY: [&str; 3] = ["junior", "mid", "senior"];
pub const FEATURES: [&str; 3] = ["freshness", "popularity", "proximity"];
pub const ACTIONS: [&str; 5] = ["apply", "badfit", "click", "dismiss", "shortlist"];

const SYLLABLES: [&str; 16] =
    ["ka", "ro", "mi", "te", "su", "na", "lo", "vi", "pe", "da", "zu", "fo", "ri", "ba", "ne", "go"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSizes {
    pub n_docs: usize,
    pub n_queries: usize,
    pub n_clusters: usize,
    pub dim: usize,
    /// Impressions logged per query.
    pub shown_per_query: usize,
    /// Fractions of grades 1..=4 among logged impressions.
    pub grade_mixture: [f64; 4],
    /// Share of queries that carry a region filter.
    pub filter_fraction: f64,
    pub query_k: usize,
}

impl Default for GenSizes {
    fn default() -> Self {
        Self {
            n_docs: 1000,
            n_queries: 100,
            n_clusters: 20,
            dim: 32,
            shown_per_query: 25,
            grade_mixture: [0.4, 0.3, 0.2, 0.1],
            filter_fraction: 0.3,
            query_k: 100,
        }
    }
}

/// One logged impression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionLog {
    pub query_id: String,
    pub doc_id: DocId,
    /// 1-based display position.
    pub position: usize,
    pub grade: u8,
    pub actions: BTreeMap<String, bool>,
}

impl InteractionLog {
    pub fn action_row(&self) -> ActionRow {
        ActionRow { query_id: self.query_id.clone(), doc_id: self.doc_id.to_string(), actions: self.actions.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub docs: Vec<DocumentRecord<f32>>,
    pub queries: Vec<QuerySpec<f32>>,
    pub logs: Vec<InteractionLog>,
    pub labels: Vec<LabeledPair>,
    pub doc_cluster: Vec<usize>,
    pub query_cluster: Vec<usize>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, sd: f64) -> Vec<f64> {
    (0..dim).map(|_| sd * Distribution::<f64>::sample(&StandardNormal, rng)).collect()
}

/// Unit-normalizes in f64 then rounds to f32.
fn unit_f32(v: &[f64]) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / n) as f32).collect()
}

fn noisy_copy(rng: &mut ChaCha8Rng, centroid: &[f64], noise_norm: f64) -> Vec<f32> {
    let noise = gaussian(rng, centroid.len(), noise_norm / (centroid.len() as f64).sqrt());
    unit_f32(&centroid.iter().zip(&noise).map(|(c, n)| c + n).collect::<Vec<_>>())
}

fn word(cluster: usize, j: usize) -> String {
    format!(
        "{}{}{}",
        SYLLABLES[(cluster * 7 + j) % 16],
        SYLLABLES[(cluster * 3 + j * 5 + 1) % 16],
        SYLLABLES[(cluster + j) % 16]
    )
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options[rng.random_range(0..options.len())]
}

pub fn gen_data(seed: u64, sizes: &GenSizes) -> Result<GeneratedData, RetrievalError> {
    if sizes.n_docs == 0 || sizes.n_queries == 0 || sizes.n_clusters == 0 || sizes.dim == 0 || sizes.query_k == 0 {
        return Err(RetrievalError::Input("all sizes must be at least 1".into()));
    }
    let mix_sum: f64 = sizes.grade_mixture.iter().sum();
    if sizes.grade_mixture.iter().any(|&p| p < 0.0) || (mix_sum - 1.0).abs() > 1e-9 {
        return Err(RetrievalError::Input("grade mixture must be a distribution".into()));
    }

    let mut rng = stream(seed, 1);
    let centroids: Vec<Vec<f64>> = (0..sizes.n_clusters)
        .map(|_| {
            let g = gaussian(&mut rng, sizes.dim, 1.0);
            let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            g.into_iter().map(|x| x / n).collect()
        })
        .collect();

    let mut rng = stream(seed, 2);
    let mut docs = Vec::with_capacity(sizes.n_docs);
    let mut doc_cluster = Vec::with_capacity(sizes.n_docs);
    for i in 0..sizes.n_docs {
        let c = i % sizes.n_clusters;
        let embedding = noisy_copy(&mut rng, &centroids[c], 0.3);
        let attributes: BTreeMap<String, String> = [
            ("region".to_string(), pick(&mut rng, &REGIONS).to_string()),
            ("seniority".to_string(), pick(&mut rng, &SENIORITY).to_string()),
            ("topic".to_string(), format!("t{c:02}")),
        ]
        .into();
        let popularity: f64 = rng.random::<f64>().powi(2);
        let features: BTreeMap<String, f32> = [
            ("freshness".to_string(), rng.random::<f32>()),
            ("popularity".to_string(), popularity as f32),
            ("proximity".to_string(), rng.random::<f32>()),
        ]
        .into();
        let words: Vec<String> = (0..4).map(|_| word(c, rng.random_range(0..12))).collect();
        let text = format!("{} {} role, {} team", attributes["seniority"], words[..2].join(" "), words[2..].join(" "));
        docs.push(DocumentRecord { doc_id: i as DocId + 1, attributes, embedding, features, text: Some(text) });
        doc_cluster.push(c);
    }

    let mut rng = stream(seed, 3);
    let mut queries = Vec::with_capacity(sizes.n_queries);
    let mut query_cluster = Vec::with_capacity(sizes.n_queries);
    for q in 0..sizes.n_queries {
        let c = rng.random_range(0..sizes.n_clusters);
        let embedding = noisy_copy(&mut rng, &centroids[c], 0.2);
        let mut filters = BTreeMap::new();
        if rng.random::<f64>() < sizes.filter_fraction {
            let a = pick(&mut rng, &REGIONS);
            let b = pick(&mut rng, &REGIONS);
            filters.insert("region".to_string(), BTreeSet::from([a.to_string(), b.to_string()]));
        }
        let text = format!("q{q} {} {} jobs", word(c, rng.random_range(0..12)), word(c, rng.random_range(0..12)));
        queries.push(QuerySpec {
            query_id: format!("q{q:05}"),
            embedding,
            filters,
            k: sizes.query_k,
            text: Some(text),
        });
        query_cluster.push(c);
    }

    // Production ranking: cosine plus a popularity boost and a little noise.
    let mut rng = stream(seed, 4);
    let mut impressions: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        let mut ranked: Vec<(f64, usize, f64)> = Vec::new();
        for (di, d) in docs.iter().enumerate() {
            let ok = q.filters.iter().all(|(a, allowed)| d.attributes.get(a).is_some_and(|v| allowed.contains(v)));
            if !ok {
                continue;
            }
            let cos = cosine(&q.embedding, &d.embedding)? as f64;
            let noise: f64 = StandardNormal.sample(&mut rng);
            ranked.push((cos + 0.2 * d.features["popularity"] as f64 + 0.02 * noise, di, cos));
        }
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (pos, &(_, di, cos)) in ranked.iter().take(sizes.shown_per_query).enumerate() {
            impressions.push((qi, di, pos + 1, cos));
        }
    }

    let grades = quantile_grades(&impressions.iter().map(|i| i.3).collect::<Vec<_>>(), &sizes.grade_mixture);

    let mut rng = stream(seed, 5);
    let mut logs = Vec::with_capacity(impressions.len());
    let mut labels = Vec::with_capacity(impressions.len());
    for (&(qi, di, position, _), &grade) in impressions.iter().zip(&grades) {
        let d = &docs[di];
        let examined = rng.random::<f64>() < examination(position);
        let attract = logistic(
            -2.5 + 1.2 * (grade as f64 - 1.0)
                + 1.5 * d.features["popularity"] as f64
                + 1.0 * d.features["proximity"] as f64,
        );
        let click = examined && rng.random::<f64>() < attract;
        let u: [f64; 4] = rng.random();
        let actions: BTreeMap<String, bool> = [
            ("apply", click && grade >= 3 && u[0] < 0.3),
            ("badfit", examined && grade <= 2 && u[1] < 0.15),
            ("click", click),
            ("dismiss", examined && !click && u[2] < 0.1 * (5 - grade) as f64 / 4.0),
            ("shortlist", click && u[3] < 0.08),
        ]
        .into_iter()
        .map(|(a, v)| (a.to_string(), v))
        .collect();
        let query_id = queries[qi].query_id.clone();
        labels.push(LabeledPair::new(query_id.clone(), d.doc_id, grade, click, Some(position))?);
        logs.push(InteractionLog { query_id, doc_id: d.doc_id, position, grade, actions });
    }

    Ok(GeneratedData { docs, queries, logs, labels, doc_cluster, query_cluster })
}

/// Probability that a user looks at display position `p` (1-based).
pub fn examination(position: usize) -> f64 {
    1.0 / (position as f64).powf(0.7)
}

/// Grades 1..=4 by ascending-similarity rank so the counts follow `mixture`
/// to within one per grade.
pub fn quantile_grades(similarities: &[f64], mixture: &[f64; 4]) -> Vec<u8> {
    let n = similarities.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| similarities[a].total_cmp(&similarities[b]).then(a.cmp(&b)));
    let mut bounds = [0usize; 4];
    let mut cum = 0.0;
    for (g, p) in mixture.iter().enumerate() {
        cum += p;
        bounds[g] = (cum * n as f64).round() as usize;
    }
    let mut grades = vec![0u8; n];
    for (rank, &i) in order.iter().enumerate() {
        grades[i] = bounds.iter().position(|&b| rank < b).map_or(4, |g| g as u8 + 1);
    }
    grades
}

/// The standard separable set for linear-score training: cosine and two
/// features in `[-1, 1]`, both labels equal to `1[x · w* > 0]` with
/// `w* = (1, 2, -1.5)`, points within 0.1 of the boundary dropped.
pub fn separable_rar_examples(seed: u64, n: usize) -> Vec<RarExample<f64>> {
    let mut rng = stream(seed, 6);
    let w = [1.0, 2.0, -1.5];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let margin = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        if margin.abs() < 0.1 {
            continue;
        }
        out.push(RarExample {
            cosine: x[0],
            features: x[1..].to_vec(),
            relevance: margin > 0.0,
            engagement: margin > 0.0,
        });
    }
    out
}
