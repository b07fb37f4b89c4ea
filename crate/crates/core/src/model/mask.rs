use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Layout of a multi-item sequence: a shared prefix followed by item spans.
///
/// Item positions attend to the whole prefix and causally within their own
/// span. Each span restarts position ids at `prefix_len`, so an item sees
/// the same positional inputs it would in a standalone `prefix ++ item`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiItemMask {
    pub prefix_len: usize,
    /// Half-open `[start, end)` offsets in the concatenated sequence.
    pub spans: Vec<(usize, usize)>,
}

impl MultiItemMask {
    pub fn total_len(&self) -> usize {
        self.spans.last().map_or(self.prefix_len, |s| s.1)
    }

    /// Span index containing `p`, if `p` lies past the prefix.
    pub fn span_of(&self, p: usize) -> Option<usize> {
        if p < self.prefix_len {
            return None;
        }
        let idx = self.spans.partition_point(|s| s.1 <= p);
        (idx < self.spans.len() && self.spans[idx].0 <= p).then_some(idx)
    }

    fn check_layout(&self) -> Result<(), ModelError> {
        let mut cursor = self.prefix_len;
        for &(s, e) in &self.spans {
            if s != cursor || e <= s {
                return Err(ModelError::Mask(format!("span ({s}, {e}) not contiguous after offset {cursor}")));
            }
            cursor = e;
        }
        Ok(())
    }
}

/// Explicit permission matrix over absolute positions; `allowed[q * size + k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseMask {
    pub size: usize,
    pub allowed: Vec<bool>,
}

impl DenseMask {
    pub fn causal(size: usize) -> Self {
        let allowed = (0..size * size).map(|i| i % size <= i / size).collect();
        Self { size, allowed }
    }

    pub fn allows(&self, q: usize, k: usize) -> bool {
        self.allowed[q * self.size + k]
    }

    pub fn set(&mut self, q: usize, k: usize, v: bool) {
        self.allowed[q * self.size + k] = v;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttentionMask {
    Causal,
    MultiItem(MultiItemMask),
    Dense(DenseMask),
}

impl AttentionMask {
    /// Checks that the mask covers positions `past..past + n` and never
    /// looks ahead.
    pub fn validate(&self, past: usize, n: usize) -> Result<(), ModelError> {
        let total = past + n;
        match self {
            AttentionMask::Causal => Ok(()),
            AttentionMask::MultiItem(m) => {
                m.check_layout()?;
                if m.total_len() != total {
                    return Err(ModelError::Mask(format!(
                        "mask covers {} positions, sequence has {total}",
                        m.total_len()
                    )));
                }
                if past > m.prefix_len {
                    return Err(ModelError::Mask("cached positions extend into item spans".into()));
                }
                Ok(())
            }
            AttentionMask::Dense(d) => {
                if d.allowed.len() != d.size * d.size || d.size != total {
                    return Err(ModelError::Mask(format!("dense mask of size {} for sequence of {total}", d.size)));
                }
                for q in past..total {
                    if (q + 1..total).any(|k| d.allows(q, k)) {
                        return Err(ModelError::Mask(format!("position {q} attends to the future")));
                    }
                    if !(0..=q).any(|k| d.allows(q, k)) {
                        return Err(ModelError::Mask(format!("position {q} attends to nothing")));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn position_id(&self, p: usize) -> usize {
        match self {
            AttentionMask::MultiItem(m) => match m.span_of(p) {
                Some(j) => m.prefix_len + (p - m.spans[j].0),
                None => p,
            },
            _ => p,
        }
    }

    /// Allowed keys for query position `q`, as ascending ranges.
    pub fn key_ranges(&self, q: usize) -> Vec<Range<usize>> {
        match self {
            AttentionMask::Causal => vec![0..q + 1],
            AttentionMask::MultiItem(m) => match m.span_of(q) {
                None => vec![0..q + 1],
                Some(j) => vec![0..m.prefix_len, m.spans[j].0..q + 1],
            },
            AttentionMask::Dense(d) => {
                let mut out: Vec<Range<usize>> = Vec::new();
                for k in (0..=q).filter(|&k| d.allows(q, k)) {
                    match out.last_mut() {
                        Some(r) if r.end == k => r.end = k + 1,
                        _ => out.push(k..k + 1),
                    }
                }
                out
            }
        }
    }

    pub fn allows(&self, q: usize, k: usize) -> bool {
        self.key_ranges(q).iter().any(|r| r.contains(&k))
    }
}
