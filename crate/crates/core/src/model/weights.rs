use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::tensor::Matrix;
use super::ModelError;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub attn_norm: Vec<T>,
    pub wq: Matrix<T>,
    pub wk: Matrix<T>,
    pub wv: Matrix<T>,
    pub wo: Matrix<T>,
    pub mlp_norm: Vec<T>,
    pub w_up: Matrix<T>,
    pub w_down: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskHead<T> {
    pub task: String,
    /// `[d_model × arity]`
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    pub config: ModelConfig,
    pub token_embedding: Matrix<T>,
    pub position_embedding: Matrix<T>,
    pub layers: Vec<LayerWeights<T>>,
    pub final_norm: Vec<T>,
    /// `[d_model × vocab_size]`
    pub output: Matrix<T>,
    pub heads: Vec<TaskHead<T>>,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    /// Truncated normal at four standard deviations.
    fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize, std: f64) -> Matrix<T> {
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                T::lit(z.clamp(-4.0, 4.0) * std)
            })
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

/// Deterministic weight initialization from `(config, seed)`.
pub fn init_model<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelWeights<T>, ModelError> {
    config.validate()?;
    let mut init = Init { rng: ChaCha8Rng::seed_from_u64(seed) };
    let d = config.d_model;
    let ff = config.d_ff;
    let s_d = 1.0 / (d as f64).sqrt();
    let s_ff = 1.0 / (ff as f64).sqrt();
    let token_embedding = init.matrix(config.vocab_size, d, 1.0);
    let position_embedding = init.matrix(config.max_seq, d, 0.1);
    let layers = (0..config.n_layers)
        .map(|_| LayerWeights {
            attn_norm: vec![T::one(); d],
            wq: init.matrix(d, d, s_d),
            wk: init.matrix(d, d, s_d),
            wv: init.matrix(d, d, s_d),
            wo: init.matrix(d, d, s_d),
            mlp_norm: vec![T::one(); d],
            w_up: init.matrix(d, ff, s_d),
            w_down: init.matrix(ff, d, s_ff),
        })
        .collect();
    let output = init.matrix(d, config.vocab_size, s_d);
    let heads = config
        .head_specs
        .iter()
        .map(|h| TaskHead {
            task: h.task.clone(),
            weight: init.matrix(d, h.arity, s_d),
            bias: vec![T::zero(); h.arity],
        })
        .collect();
    Ok(ModelWeights {
        config: config.clone(),
        token_embedding,
        position_embedding,
        layers,
        final_norm: vec![T::one(); d],
        output,
        heads,
    })
}

impl<T: Scalar> ModelWeights<T> {
    /// Every tensor with its canonical name, in file order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        fn push_m<'a, T>(name: String, m: &'a Matrix<T>, out: &mut Vec<(String, Vec<usize>, &'a [T])>) {
            out.push((name, vec![m.rows, m.cols], m.data.as_slice()));
        }
        let mut out: Vec<(String, Vec<usize>, &[T])> = Vec::new();
        push_m("token_embedding".into(), &self.token_embedding, &mut out);
        push_m("position_embedding".into(), &self.position_embedding, &mut out);
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layers.{i}.attn_norm"), vec![l.attn_norm.len()], l.attn_norm.as_slice()));
            push_m(format!("layers.{i}.wq"), &l.wq, &mut out);
            push_m(format!("layers.{i}.wk"), &l.wk, &mut out);
            push_m(format!("layers.{i}.wv"), &l.wv, &mut out);
            push_m(format!("layers.{i}.wo"), &l.wo, &mut out);
            out.push((format!("layers.{i}.mlp_norm"), vec![l.mlp_norm.len()], l.mlp_norm.as_slice()));
            push_m(format!("layers.{i}.w_up"), &l.w_up, &mut out);
            push_m(format!("layers.{i}.w_down"), &l.w_down, &mut out);
        }
        out.push(("final_norm".into(), vec![self.final_norm.len()], self.final_norm.as_slice()));
        push_m("output".into(), &self.output, &mut out);
        for h in &self.heads {
            push_m(format!("heads.{}.weight", h.task), &h.weight, &mut out);
            out.push((format!("heads.{}.bias", h.task), vec![h.bias.len()], h.bias.as_slice()));
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Vec<T>)> {
        let mut out: Vec<(String, &mut Vec<T>)> = vec![
            ("token_embedding".into(), &mut self.token_embedding.data),
            ("position_embedding".into(), &mut self.position_embedding.data),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("layers.{i}.attn_norm"), &mut l.attn_norm));
            out.push((format!("layers.{i}.wq"), &mut l.wq.data));
            out.push((format!("layers.{i}.wk"), &mut l.wk.data));
            out.push((format!("layers.{i}.wv"), &mut l.wv.data));
            out.push((format!("layers.{i}.wo"), &mut l.wo.data));
            out.push((format!("layers.{i}.mlp_norm"), &mut l.mlp_norm));
            out.push((format!("layers.{i}.w_up"), &mut l.w_up.data));
            out.push((format!("layers.{i}.w_down"), &mut l.w_down.data));
        }
        out.push(("final_norm".into(), &mut self.final_norm));
        out.push(("output".into(), &mut self.output.data));
        for h in &mut self.heads {
            out.push((format!("heads.{}.weight", h.task), &mut h.weight.data));
            out.push((format!("heads.{}.bias", h.task), &mut h.bias));
        }
        out
    }

    /// SHA-256 over the little-endian f32 encoding of every tensor.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, _, data) in self.named_tensors() {
            hasher.update(name.as_bytes());
            for &v in data {
                hasher.update(v.to_le_f32_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> T {
        self.named_tensors().iter().flat_map(|(_, _, d)| d.iter()).fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Embedding rows for a token sequence: the mixed-input equivalent of `tokens`.
    pub fn embed_tokens(&self, tokens: &[u32]) -> Result<Vec<Vec<T>>, ModelError> {
        tokens
            .iter()
            .map(|&t| {
                if (t as usize) < self.config.vocab_size {
                    Ok(self.token_embedding.row(t as usize).to_vec())
                } else {
                    Err(ModelError::Token { id: t, vocab: self.config.vocab_size })
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig { max_seq: 128, ..ModelConfig::default() }
    }

    #[test]
    fn same_seed_same_checksum() {
        let a = init_model::<f32>(&small(), 7).unwrap();
        let b = init_model::<f32>(&small(), 7).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(a, b);
        let c = init_model::<f32>(&small(), 8).unwrap();
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn weights_are_finite_and_bounded() {
        let w = init_model::<f32>(&ModelConfig::default(), 7).unwrap();
        assert!(w.all_finite());
        assert!(w.max_abs() < 10.0);
    }

    #[test]
    fn shapes_follow_config() {
        let cfg = small();
        let w = init_model::<f64>(&cfg, 1).unwrap();
        assert_eq!(w.token_embedding.shape(), [cfg.vocab_size, cfg.d_model]);
        assert_eq!(w.output.shape(), [cfg.d_model, cfg.vocab_size]);
        assert_eq!(w.layers[0].w_up.shape(), [cfg.d_model, cfg.d_ff]);
        assert_eq!(w.heads.len(), cfg.head_specs.len());
    }
}
