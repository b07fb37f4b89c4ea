//! JSON shapes of the `/score` endpoint.
//!
//! Text fields are byte-tokenized as given; `embedding_b64` carries
//! little-endian `f32` rows of `d_model` values.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{ItemPayload, ScoreItem, ScoreMode, ScoreRequest, ScoreResult, ScoringError};
use crate::model::ByteTokenizer;

fn default_mode() -> ScoreMode {
    ScoreMode::Ibpc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct WireItem {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_b64: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireScoreRequest {
    pub request_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix_tokens: Option<Vec<u32>>,
    pub items: Vec<WireItem>,
    #[serde(default = "default_mode")]
    pub mode: ScoreMode,
    #[serde(default)]
    pub latency_sensitive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireScore {
    pub id: String,
    pub tasks: BTreeMap<String, f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireFlops {
    pub attention: u64,
    pub linear: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireScoreResponse {
    pub request_id: String,
    pub scores: Vec<WireScore>,
    pub flops: WireFlops,
}

pub fn encode_embeddings(rows: &[Vec<f32>]) -> String {
    let bytes: Vec<u8> = rows.iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_embeddings(b64: &str, d_model: usize) -> Result<Vec<Vec<f32>>, ScoringError> {
    let bytes = STANDARD.decode(b64).map_err(|e| ScoringError::Payload(format!("embedding_b64: {e}")))?;
    let row_bytes = 4 * d_model;
    if d_model == 0 || bytes.len() % row_bytes != 0 {
        return Err(ScoringError::Payload(format!(
            "embedding_b64 holds {} bytes, not a multiple of {row_bytes}",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(row_bytes)
        .map(|row| row.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
        .collect())
}

impl WireScoreRequest {
    pub fn into_engine(self, tokenizer: &ByteTokenizer, d_model: usize) -> Result<ScoreRequest<f32>, ScoringError> {
        let prefix_tokens = match (self.prefix_text, self.prefix_tokens) {
            (Some(text), None) => tokenizer.tokenize(&text)?,
            (None, Some(tokens)) => tokens,
            _ => return Err(ScoringError::Request("exactly one of prefix_text and prefix_tokens is required".into())),
        };
        let items = self
            .items
            .into_iter()
            .map(|item| {
                let payload = match (item.text, item.tokens, item.embedding_b64) {
                    (Some(text), None, None) => ItemPayload::Tokens(tokenizer.tokenize(&text)?),
                    (None, Some(tokens), None) => ItemPayload::Tokens(tokens),
                    (None, None, Some(b64)) => ItemPayload::Embeddings(decode_embeddings(&b64, d_model)?),
                    _ => {
                        return Err(ScoringError::Request(format!(
                            "item '{}' needs exactly one of text, tokens, embedding_b64",
                            item.id
                        )))
                    }
                };
                Ok(ScoreItem { id: item.id, payload })
            })
            .collect::<Result<_, ScoringError>>()?;
        Ok(ScoreRequest {
            request_id: self.request_id,
            prefix_tokens,
            items,
            mode: self.mode,
            latency_sensitive: self.latency_sensitive,
        })
    }
}

impl WireScoreResponse {
    pub fn from_result(request_id: String, result: &ScoreResult<f32>) -> Self {
        Self {
            request_id,
            scores: result.scores.iter().map(|s| WireScore { id: s.item_id.clone(), tasks: s.tasks.clone() }).collect(),
            flops: WireFlops { attention: result.flops.attention_units, linear: result.flops.linear_units },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_round_trip() {
        let rows = vec![vec![1.0f32, -2.5, 3.25], vec![0.0, f32::MIN_POSITIVE, 7.0]];
        let b64 = encode_embeddings(&rows);
        assert_eq!(decode_embeddings(&b64, 3).unwrap(), rows);
        assert!(decode_embeddings(&b64, 4).is_err());
        assert!(decode_embeddings("***", 3).is_err());
        // 1.0f32 little-endian is 00 00 80 3f.
        assert_eq!(encode_embeddings(&[vec![1.0]]), "AACAPw==");
    }

    #[test]
    fn request_parsing() {
        let tok = ByteTokenizer::new(64);
        let json = r#"{"request_id":"r1","prefix_text":"ab","items":[{"id":"x","text":"c"},{"id":"y","tokens":[5,6]}],"mode":"multi-item"}"#;
        let req: WireScoreRequest = serde_json::from_str(json).unwrap();
        let engine = req.into_engine(&tok, 4).unwrap();
        assert_eq!(engine.prefix_tokens, vec![97, 98]);
        assert_eq!(engine.mode, ScoreMode::MultiItem);
        assert_eq!(engine.items[1].payload, ItemPayload::Tokens(vec![5, 6]));

        let both = r#"{"request_id":"r","prefix_text":"a","items":[{"id":"x","text":"c","tokens":[1]}]}"#;
        let req: WireScoreRequest = serde_json::from_str(both).unwrap();
        assert_eq!(req.mode, ScoreMode::Ibpc);
        assert!(matches!(req.into_engine(&tok, 4), Err(ScoringError::Request(_))));
    }
}
