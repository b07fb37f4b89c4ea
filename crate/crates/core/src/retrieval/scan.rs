use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::{Corpus, DocId, DocumentRecord, QuerySpec, RarWeights, RetrievalError};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScoredDoc<T> {
    pub doc_id: DocId,
    pub score: T,
}

/// Result order: score descending, then doc id ascending.
pub(crate) fn rank_order<T: Scalar>(a: &ScoredDoc<T>, b: &ScoredDoc<T>) -> Ordering {
    b.score.as_f64().total_cmp(&a.score.as_f64()).then(a.doc_id.cmp(&b.doc_id))
}

pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Result<T, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::Alignment(format!("embedding widths {} and {}", a.len(), b.len())));
    }
    let (mut dot, mut na, mut nb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na == T::zero() || nb == T::zero() {
        return Err(RetrievalError::Degenerate("cosine of a zero vector".into()));
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

pub fn rar_score<T: Scalar>(q: &QuerySpec<T>, d: &DocumentRecord<T>, w: &RarWeights<T>) -> Result<T, RetrievalError> {
    if d.features.len() != w.features.len() {
        return Err(RetrievalError::Alignment(format!(
            "doc {} has {} features, weights have {}",
            d.doc_id,
            d.features.len(),
            w.features.len()
        )));
    }
    let mut s = w.cosine * cosine(&q.embedding, &d.embedding)?;
    for (name, &wi) in &w.features {
        let f = d
            .features
            .get(name)
            .ok_or_else(|| RetrievalError::Alignment(format!("doc {} lacks feature '{name}'", d.doc_id)))?;
        s = s + wi * *f;
    }
    Ok(s)
}

fn check_schema<T: Scalar>(
    corpus: &Corpus<T>,
    filters: &BTreeMap<String, BTreeSet<String>>,
) -> Result<(), RetrievalError> {
    match filters.keys().find(|k| !corpus.attribute_names().contains(*k)) {
        Some(k) => Err(RetrievalError::Schema(k.clone())),
        None => Ok(()),
    }
}

fn passes<T>(d: &DocumentRecord<T>, filters: &BTreeMap<String, BTreeSet<String>>) -> bool {
    filters.iter().all(|(attr, allowed)| d.attributes.get(attr).is_some_and(|v| allowed.contains(v)))
}

/// Documents satisfying every predicate, in corpus order.
pub fn filter_candidates<'a, T: Scalar>(
    corpus: &'a Corpus<T>,
    filters: &BTreeMap<String, BTreeSet<String>>,
) -> Result<Vec<&'a DocumentRecord<T>>, RetrievalError> {
    check_schema(corpus, filters)?;
    Ok(corpus.docs().iter().filter(|d| passes(d, filters)).collect())
}

fn check_request<T: Scalar>(corpus: &Corpus<T>, q: &QuerySpec<T>, w: &RarWeights<T>) -> Result<(), RetrievalError> {
    if q.k == 0 {
        return Err(RetrievalError::Input("k must be at least 1".into()));
    }
    if !corpus.is_empty() && q.embedding.len() != corpus.dim() {
        return Err(RetrievalError::Alignment(format!(
            "query width {} != corpus width {}",
            q.embedding.len(),
            corpus.dim()
        )));
    }
    if !w.features.keys().eq(corpus.feature_names().iter()) {
        return Err(RetrievalError::Alignment("weight features differ from corpus features".into()));
    }
    check_schema(corpus, &q.filters)
}

fn scan_slice<T: Scalar>(
    docs: &[DocumentRecord<T>],
    q: &QuerySpec<T>,
    w: &RarWeights<T>,
) -> Result<Vec<ScoredDoc<T>>, RetrievalError> {
    let mut scored = Vec::new();
    for d in docs.iter().filter(|d| passes(d, &q.filters)) {
        scored.push(ScoredDoc { doc_id: d.doc_id, score: rar_score(q, d, w)? });
    }
    if scored.len() > q.k {
        scored.select_nth_unstable_by(q.k - 1, rank_order);
        scored.truncate(q.k);
    }
    scored.sort_by(rank_order);
    Ok(scored)
}

/// Exact top-K by linear score over all filtered documents.
pub fn exhaustive_topk<T: Scalar>(
    corpus: &Corpus<T>,
    q: &QuerySpec<T>,
    w: &RarWeights<T>,
) -> Result<Vec<ScoredDoc<T>>, RetrievalError> {
    check_request(corpus, q, w)?;
    scan_slice(corpus.docs(), q, w)
}

/// Same result as [`exhaustive_topk`], scanning `shards` contiguous slices on
/// separate threads and merging their local top-K lists.
pub fn exhaustive_topk_sharded<T: Scalar>(
    corpus: &Corpus<T>,
    q: &QuerySpec<T>,
    w: &RarWeights<T>,
    shards: usize,
) -> Result<Vec<ScoredDoc<T>>, RetrievalError> {
    check_request(corpus, q, w)?;
    let shards = shards.max(1);
    let chunk = corpus.len().div_ceil(shards).max(1);
    let partials: Vec<Result<Vec<ScoredDoc<T>>, RetrievalError>> = std::thread::scope(|s| {
        let handles: Vec<_> =
            corpus.docs().chunks(chunk).map(|slice| s.spawn(move || scan_slice(slice, q, w))).collect();
        handles.into_iter().map(|h| h.join().expect("scan thread panicked")).collect()
    });
    let lists = partials.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(merge_ranked(&lists, q.k))
}

struct Head<'a, T> {
    doc: &'a ScoredDoc<T>,
    list: usize,
    pos: usize,
}

impl<T: Scalar> PartialEq for Head<'_, T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Head<'_, T> {}

impl<T: Scalar> PartialOrd for Head<'_, T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Head<'_, T> {
    // Max-heap: the best-ranked document compares greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(other.doc, self.doc)
    }
}

/// K-way merge of lists already in result order.
pub fn merge_ranked<T: Scalar>(lists: &[Vec<ScoredDoc<T>>], k: usize) -> Vec<ScoredDoc<T>> {
    let mut heap: BinaryHeap<Head<T>> =
        lists.iter().enumerate().filter_map(|(i, l)| l.first().map(|doc| Head { doc, list: i, pos: 0 })).collect();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let Some(Head { doc, list, pos }) = heap.pop() else { break };
        out.push(*doc);
        if let Some(next) = lists[list].get(pos + 1) {
            heap.push(Head { doc: next, list, pos: pos + 1 });
        }
    }
    out
}
