use super::mask::AttentionMask;
use super::tensor::{dot, Matrix};
use super::weights::ModelWeights;
use super::ModelError;
use crate::Scalar;

/// New inputs for one prefill call: token ids, or pre-computed vectors that
/// stand in for token embeddings.
#[derive(Debug, Clone, Copy)]
pub enum PrefillInput<'a, T> {
    Tokens(&'a [u32]),
    Embeddings(&'a [Vec<T>]),
}

impl<T> PrefillInput<'_, T> {
    pub fn len(&self) -> usize {
        match self {
            PrefillInput::Tokens(t) => t.len(),
            PrefillInput::Embeddings(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerKv<T> {
    /// `[seq × n_heads × head_dim]`, flattened.
    keys: Vec<T>,
    values: Vec<T>,
}

/// Per-layer attention keys and values for every processed position.
#[derive(Debug, Clone, PartialEq)]
pub struct KvCache<T> {
    layers: Vec<LayerKv<T>>,
    d_model: usize,
    seq_len: usize,
}

impl<T: Scalar> KvCache<T> {
    pub fn new(weights: &ModelWeights<T>) -> Self {
        let layers = (0..weights.config.n_layers).map(|_| LayerKv { keys: Vec::new(), values: Vec::new() }).collect();
        Self { layers, d_model: weights.config.d_model, seq_len: 0 }
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn keys(&self, layer: usize) -> &[T] {
        &self.layers[layer].keys
    }

    pub fn values(&self, layer: usize) -> &[T] {
        &self.layers[layer].values
    }

    /// Drops every position at or after `len`.
    pub fn truncate(&mut self, len: usize) {
        if len >= self.seq_len {
            return;
        }
        for l in &mut self.layers {
            l.keys.truncate(len * self.d_model);
            l.values.truncate(len * self.d_model);
        }
        self.seq_len = len;
    }
}

#[derive(Debug, Clone)]
pub struct PrefillOutput<T> {
    /// Final-norm hidden state of each new position, `[n × d_model]`.
    pub hidden: Matrix<T>,
    pub cache: KvCache<T>,
}

/// Runs one forward pass over `input` on top of `kv_in`, returning the final
/// hidden states of the new positions and the extended cache.
pub fn prefill<T: Scalar>(
    weights: &ModelWeights<T>,
    input: PrefillInput<'_, T>,
    kv_in: Option<&KvCache<T>>,
    mask: Option<&AttentionMask>,
) -> Result<PrefillOutput<T>, ModelError> {
    let mut cache = match kv_in {
        Some(kv) => kv.clone(),
        None => KvCache::new(weights),
    };
    let hidden = prefill_into(weights, input, &mut cache, mask)?;
    Ok(PrefillOutput { hidden, cache })
}

/// In-place variant of [`prefill`]: appends to `cache`. On error the cache is
/// left untouched.
pub fn prefill_into<T: Scalar>(
    weights: &ModelWeights<T>,
    input: PrefillInput<'_, T>,
    cache: &mut KvCache<T>,
    mask: Option<&AttentionMask>,
) -> Result<Matrix<T>, ModelError> {
    let cfg = &weights.config;
    let d = cfg.d_model;
    let past = cache.seq_len;
    let n = input.len();
    if past + n > cfg.max_seq {
        return Err(ModelError::Length { len: past + n, max_seq: cfg.max_seq });
    }
    if cache.layers.len() != cfg.n_layers || cache.d_model != d {
        return Err(ModelError::Config("KV cache does not match model shape".into()));
    }
    let causal = AttentionMask::Causal;
    let mask = mask.unwrap_or(&causal);
    mask.validate(past, n)?;

    let mut x = Vec::with_capacity(n * d);
    for i in 0..n {
        let pos = weights.position_embedding.row(mask.position_id(past + i));
        let emb: &[T] = match input {
            PrefillInput::Tokens(tokens) => {
                let t = tokens[i];
                if t as usize >= cfg.vocab_size {
                    return Err(ModelError::Token { id: t, vocab: cfg.vocab_size });
                }
                weights.token_embedding.row(t as usize)
            }
            PrefillInput::Embeddings(rows) => {
                if rows[i].len() != d {
                    return Err(ModelError::Dimension { got: rows[i].len(), expected: d });
                }
                &rows[i]
            }
        };
        x.extend(emb.iter().zip(pos).map(|(&a, &b)| a + b));
    }

    let n_heads = cfg.n_heads;
    let head_dim = cfg.head_dim();
    let scale = T::one() / T::from_count(head_dim).sqrt();
    let mut scores: Vec<T> = Vec::new();
    for (layer, kv) in weights.layers.iter().zip(cache.layers.iter_mut()) {
        let h = layer_norm(&x, &layer.attn_norm);
        let q = layer.wq.left_mul(&h);
        kv.keys.extend(layer.wk.left_mul(&h));
        kv.values.extend(layer.wv.left_mul(&h));

        let mut attn = vec![T::zero(); n * d];
        for i in 0..n {
            let ranges = mask.key_ranges(past + i);
            for head in 0..n_heads {
                let off = head * head_dim;
                let qh = &q[i * d + off..i * d + off + head_dim];
                scores.clear();
                for k in ranges.iter().flat_map(|r| r.clone()) {
                    let kh = &kv.keys[k * d + off..k * d + off + head_dim];
                    scores.push(dot(qh, kh) * scale);
                }
                let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    total = total + *s;
                }
                let out = &mut attn[i * d + off..i * d + off + head_dim];
                for (k, &w) in ranges.iter().flat_map(|r| r.clone()).zip(scores.iter()) {
                    let p = w / total;
                    let vh = &kv.values[k * d + off..k * d + off + head_dim];
                    for (o, &v) in out.iter_mut().zip(vh) {
                        *o = *o + p * v;
                    }
                }
            }
        }
        for (xi, oi) in x.iter_mut().zip(layer.wo.left_mul(&attn)) {
            *xi = *xi + oi;
        }

        let h = layer_norm(&x, &layer.mlp_norm);
        let mut up = layer.w_up.left_mul(&h);
        up.iter_mut().for_each(|u| *u = gelu(*u));
        for (xi, oi) in x.iter_mut().zip(layer.w_down.left_mul(&up)) {
            *xi = *xi + oi;
        }
    }
    cache.seq_len = past + n;
    Ok(Matrix::from_vec(n, d, layer_norm(&x, &weights.final_norm)))
}

const LN_EPS: f64 = 1e-5;

/// Row-wise layer norm with a learned scale and no bias.
pub(crate) fn layer_norm<T: Scalar>(x: &[T], scale: &[T]) -> Vec<T> {
    let d = scale.len();
    let eps = T::lit(LN_EPS);
    let inv_d = T::one() / T::from_count(d);
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(d) {
        let mean = row.iter().copied().fold(T::zero(), |a, b| a + b) * inv_d;
        let var = row.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) * inv_d;
        let inv = T::one() / (var + eps).sqrt();
        out.extend(row.iter().zip(scale).map(|(&v, &g)| (v - mean) * inv * g));
    }
    out
}

/// Tanh-approximated GELU.
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    T::lit(0.5) * x * (T::one() + (c * (x + T::lit(0.044715) * x * x * x)).tanh())
}
