use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::MidtierError;

/// Lowercases and collapses runs of whitespace.
pub fn normalize_query(text: &str) -> String {
    text.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

/// Hex SHA-256 over the normalized query and the filters in sorted order.
pub fn query_signature(text: &str, filters: &BTreeMap<String, BTreeSet<String>>) -> String {
    let mut h = Sha256::new();
    h.update(normalize_query(text).as_bytes());
    for (attr, values) in filters {
        h.update([0x1e]);
        h.update(attr.as_bytes());
        for v in values {
            h.update([0x1f]);
            h.update(v.as_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub searcher_id: String,
    pub query_signature: String,
    pub entity_id: u64,
    pub model_version: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub lookups: u64,
    pub hits: u64,
    pub inserts: u64,
    pub evictions: u64,
}

impl CacheStats {
    pub fn hit_rate(&self) -> f64 {
        if self.lookups == 0 {
            0.0
        } else {
            self.hits as f64 / self.lookups as f64
        }
    }
}

#[derive(Debug, Clone)]
struct Entry<V> {
    value: V,
    inserted: u64,
    touched: u64,
}

/// Least-recently-used map with a fixed entry capacity.
///
/// Values are expected to be a pure function of the key, so a second put with
/// a different value is rejected.
#[derive(Debug, Clone)]
pub struct ScoreCache<K, V> {
    capacity: usize,
    clock: u64,
    entries: HashMap<K, Entry<V>>,
    recency: BTreeMap<u64, K>,
    stats: CacheStats,
}

impl<K: Clone + Eq + Hash, V: Clone + PartialEq> ScoreCache<K, V> {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, clock: 0, entries: HashMap::new(), recency: BTreeMap::new(), stats: CacheStats::default() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub fn get(&mut self, key: &K) -> Option<V> {
        self.stats.lookups += 1;
        let now = self.clock + 1;
        let entry = self.entries.get_mut(key)?;
        self.clock = now;
        self.recency.remove(&entry.touched);
        entry.touched = now;
        self.recency.insert(now, key.clone());
        self.stats.hits += 1;
        Some(entry.value.clone())
    }

    /// Inserts or refreshes; evicts the least recently used entry when full.
    pub fn put(&mut self, key: K, value: V) -> Result<(), MidtierError> {
        if self.capacity == 0 {
            return Ok(());
        }
        let now = self.tick();
        if let Some(entry) = self.entries.get_mut(&key) {
            if entry.value != value {
                return Err(MidtierError::CacheConsistency);
            }
            self.recency.remove(&entry.touched);
            entry.touched = now;
            self.recency.insert(now, key);
            return Ok(());
        }
        if self.entries.len() == self.capacity {
            if let Some((_, victim)) = self.recency.pop_first() {
                self.entries.remove(&victim);
                self.stats.evictions += 1;
            }
        }
        self.recency.insert(now, key.clone());
        self.entries.insert(key, Entry { value, inserted: now, touched: now });
        self.stats.inserts += 1;
        Ok(())
    }

    pub fn contains(&self, key: &K) -> bool {
        self.entries.contains_key(key)
    }

    /// Keys from least to most recently used.
    pub fn lru_order(&self) -> Vec<K> {
        self.recency.values().cloned().collect()
    }

    /// Logical time at which `key` was first stored.
    pub fn inserted_at(&self, key: &K) -> Option<u64> {
        self.entries.get(key).map(|e| e.inserted)
    }
}

/// Task-score map stored per scored entity.
pub type TaskScores = BTreeMap<String, f32>;

/// Thread-safe wrapper used by the service.
#[derive(Debug)]
pub struct SharedScoreCache<K, V> {
    inner: Mutex<ScoreCache<K, V>>,
}

impl<K: Clone + Eq + Hash, V: Clone + PartialEq> SharedScoreCache<K, V> {
    pub fn new(capacity: usize) -> Self {
        Self { inner: Mutex::new(ScoreCache::new(capacity)) }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ScoreCache<K, V>> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn get(&self, key: &K) -> Option<V> {
        self.lock().get(key)
    }

    pub fn put(&self, key: K, value: V) -> Result<(), MidtierError> {
        self.lock().put(key, value)
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.lock().capacity()
    }

    pub fn stats(&self) -> CacheStats {
        self.lock().stats()
    }
}
