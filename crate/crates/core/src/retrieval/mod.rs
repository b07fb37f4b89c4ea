//! Exhaustive filtered retrieval with a linear ranking score.
//!
//! Every candidate passing the attribute filters is scored with
//! `S(q, d) = w_0 cos(e_q, e_d) + Σ w_i f_i(d)` and the top K are kept,
//! ties broken by ascending doc id.

mod sampling;
mod scan;
mod train;

pub use sampling::{bucket_resize, mine_hard_negatives, BucketSize, ContrastiveTuple, GradedCandidate, MiningOutcome};
pub use scan::{
    cosine, exhaustive_topk, exhaustive_topk_sharded, filter_candidates, merge_ranked, rar_score, ScoredDoc,
};
pub use train::{rar_objective, rar_objective_shifted, train_rar, RarExample, RarObjective, RarTrainReport};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{read_jsonl, write_jsonl, JsonlError, RunMeta};
use crate::Scalar;

pub type DocId = u64;

/// Allowed deviation of an embedding norm from 1.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("feature alignment: {0}")]
    Alignment(String),
    #[error("unknown attribute '{0}'")]
    Schema(String),
    #[error("training diverged at epoch {epoch} (loss {loss}); try a smaller learning rate")]
    Divergence { epoch: usize, loss: f64 },
    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
}

impl From<JsonlError> for RetrievalError {
    fn from(e: JsonlError) -> Self {
        RetrievalError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DocumentRecord<T> {
    #[serde(rename = "id")]
    pub doc_id: DocId,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    pub embedding: Vec<T>,
    #[serde(default)]
    pub features: BTreeMap<String, T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct QuerySpec<T> {
    #[serde(rename = "id")]
    pub query_id: String,
    pub embedding: Vec<T>,
    /// Conjunctive: a document must carry one of the allowed values for every key.
    #[serde(default)]
    pub filters: BTreeMap<String, BTreeSet<String>>,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

fn check_unit(what: &str, v: &[impl Scalar]) -> Result<(), RetrievalError> {
    let norm = v.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(RetrievalError::Input(format!("{what}: embedding norm {norm} is not 1")));
    }
    Ok(())
}

impl<T: Scalar> QuerySpec<T> {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k == 0 {
            return Err(RetrievalError::Input(format!("query {}: k must be at least 1", self.query_id)));
        }
        check_unit(&format!("query {}", self.query_id), &self.embedding)
    }
}

/// An immutable, validated document collection.
#[derive(Debug, Clone)]
pub struct Corpus<T> {
    docs: Vec<DocumentRecord<T>>,
    feature_names: Vec<String>,
    attributes: BTreeSet<String>,
    dim: usize,
    by_id: HashMap<DocId, usize>,
}

impl<T: Scalar> Corpus<T> {
    /// Checks unit norms, a shared embedding width, one feature schema and
    /// unique ids.
    pub fn new(docs: Vec<DocumentRecord<T>>) -> Result<Self, RetrievalError> {
        let dim = docs.first().map_or(0, |d| d.embedding.len());
        let feature_names: Vec<String> = docs.first().map(|d| d.features.keys().cloned().collect()).unwrap_or_default();
        let mut attributes = BTreeSet::new();
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if d.embedding.len() != dim {
                return Err(RetrievalError::Input(format!(
                    "doc {}: embedding width {} != {dim}",
                    d.doc_id,
                    d.embedding.len()
                )));
            }
            check_unit(&format!("doc {}", d.doc_id), &d.embedding)?;
            if !d.features.keys().eq(feature_names.iter()) {
                return Err(RetrievalError::Alignment(format!("doc {}: feature names differ from corpus", d.doc_id)));
            }
            if by_id.insert(d.doc_id, i).is_some() {
                return Err(RetrievalError::Input(format!("duplicate doc id {}", d.doc_id)));
            }
            attributes.extend(d.attributes.keys().cloned());
        }
        Ok(Self { docs, feature_names, attributes, dim, by_id })
    }

    pub fn docs(&self) -> &[DocumentRecord<T>] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn attribute_names(&self) -> &BTreeSet<String> {
        &self.attributes
    }

    pub fn get(&self, id: DocId) -> Option<&DocumentRecord<T>> {
        self.by_id.get(&id).map(|&i| &self.docs[i])
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        Self::new(read_jsonl(path)?)
    }

    pub fn save(&self, path: &Path, meta: Option<&RunMeta>) -> Result<(), RetrievalError> {
        Ok(write_jsonl(path, meta, &self.docs)?)
    }
}

pub fn load_queries<T: Scalar>(path: &Path) -> Result<Vec<QuerySpec<T>>, RetrievalError> {
    let queries: Vec<QuerySpec<T>> = read_jsonl(path)?;
    for q in &queries {
        q.validate()?;
    }
    Ok(queries)
}

/// Weights of the linear retrieval score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RarWeights<T> {
    pub cosine: T,
    /// One weight per corpus feature; iteration order fixes the parameter layout.
    pub features: BTreeMap<String, T>,
    /// Relevance share of the training objective.
    pub lambda: T,
}

impl<T: Scalar> RarWeights<T> {
    /// Pure cosine scoring over the given feature schema.
    pub fn cosine_only(feature_names: &[String]) -> Self {
        Self {
            cosine: T::one(),
            features: feature_names.iter().map(|n| (n.clone(), T::zero())).collect(),
            lambda: T::lit(0.5),
        }
    }

    /// `[w_0, w_1, ..., w_n]`.
    pub fn params(&self) -> Vec<T> {
        std::iter::once(self.cosine).chain(self.features.values().copied()).collect()
    }

    pub fn with_params(&self, params: &[T]) -> Result<Self, RetrievalError> {
        if params.len() != self.features.len() + 1 {
            return Err(RetrievalError::Alignment(format!(
                "{} parameters for {} features",
                params.len(),
                self.features.len()
            )));
        }
        Ok(Self {
            cosine: params[0],
            features: self.features.keys().cloned().zip(params[1..].iter().copied()).collect(),
            lambda: self.lambda,
        })
    }

    pub fn scaled(&self, c: T) -> Self {
        let p: Vec<T> = self.params().into_iter().map(|w| w * c).collect();
        self.with_params(&p).expect("same layout")
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|w| w.is_finite()) && self.lambda.is_finite()
    }

    /// The document's features in parameter order.
    pub fn feature_vector(&self, doc: &DocumentRecord<T>) -> Result<Vec<T>, RetrievalError> {
        if doc.features.len() != self.features.len() {
            return Err(RetrievalError::Alignment(format!(
                "doc {} has {} features, weights have {}",
                doc.doc_id,
                doc.features.len(),
                self.features.len()
            )));
        }
        self.features
            .keys()
            .map(|name| {
                doc.features
                    .get(name)
                    .copied()
                    .ok_or_else(|| RetrievalError::Alignment(format!("doc {} lacks feature '{name}'", doc.doc_id)))
            })
            .collect()
    }
}

/// A judged (query, document) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub query_id: String,
    pub doc_id: DocId,
    pub relevance: bool,
    pub engagement: bool,
    pub grade: u8,
    #[serde(default)]
    pub production_rank: Option<usize>,
}

impl LabeledPair {
    /// Relevance is binarized as `grade > 2`.
    pub fn new(
        query_id: impl Into<String>,
        doc_id: DocId,
        grade: u8,
        engagement: bool,
        production_rank: Option<usize>,
    ) -> Result<Self, RetrievalError> {
        if !(1..=4).contains(&grade) {
            return Err(RetrievalError::Input(format!("grade {grade} outside 1..=4")));
        }
        Ok(Self { query_id: query_id.into(), doc_id, relevance: grade > 2, engagement, grade, production_rank })
    }
}

/// A semantic query category for quality-aware resampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBucket {
    pub bucket_id: String,
    /// Target sample count before adjustment.
    pub proportion: f64,
    pub baseline_p10: f64,
    pub treatment_p10: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: DocId, e: Vec<f64>, feats: &[(&str, f64)]) -> DocumentRecord<f64> {
        DocumentRecord {
            doc_id: id,
            attributes: BTreeMap::new(),
            embedding: e,
            features: feats.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            text: None,
        }
    }

    #[test]
    fn corpus_validation() {
        assert!(Corpus::new(vec![doc(1, vec![1.0, 0.0], &[])]).is_ok());
        assert!(matches!(Corpus::new(vec![doc(1, vec![2.0, 0.0], &[])]), Err(RetrievalError::Input(_))));
        let mixed = vec![doc(1, vec![1.0, 0.0], &[("a", 1.0)]), doc(2, vec![0.0, 1.0], &[("b", 1.0)])];
        assert!(matches!(Corpus::new(mixed), Err(RetrievalError::Alignment(_))));
        let dup = vec![doc(1, vec![1.0, 0.0], &[]), doc(1, vec![0.0, 1.0], &[])];
        assert!(Corpus::new(dup).is_err());
    }

    #[test]
    fn record_json_shape() {
        let line = r#"{"id":4,"attributes":{"region":"eu"},"embedding":[0.6,0.8],"features":{"pop":1.5}}"#;
        let d: DocumentRecord<f32> = serde_json::from_str(line).unwrap();
        assert_eq!(d.doc_id, 4);
        assert_eq!(serde_json::to_string(&d).unwrap(), line);
        let q: QuerySpec<f32> =
            serde_json::from_str(r#"{"id":"q1","embedding":[1.0,0.0],"filters":{"region":["eu","us"]},"k":5}"#)
                .unwrap();
        assert_eq!(q.filters["region"].len(), 2);
        assert!(q.validate().is_ok());
    }

    #[test]
    fn relevance_binarization() {
        assert!(!LabeledPair::new("q", 1, 2, false, None).unwrap().relevance);
        assert!(LabeledPair::new("q", 1, 3, false, None).unwrap().relevance);
        assert!(LabeledPair::new("q", 1, 5, false, None).is_err());
    }
}
