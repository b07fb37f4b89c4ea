use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tokenizer::{ByteTokenizer, TokenId};
use super::ModelError;

/// Fixed item suffix; the relevance head reads the logits right after it.
pub const ITEM_SUFFIX: &str = "\nIs the document relevant to the query? Answer:";

/// Shared prefix plus per-item suffix of one scoring prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptParts {
    pub prefix_tokens: Vec<TokenId>,
    pub item_tokens: Vec<TokenId>,
}

impl PromptParts {
    pub fn prefix_len(&self) -> usize {
        self.prefix_tokens.len()
    }

    pub fn item_len(&self) -> usize {
        self.item_tokens.len()
    }

    pub fn concatenated(&self) -> Vec<TokenId> {
        let mut all = Vec::with_capacity(self.prefix_len() + self.item_len());
        all.extend_from_slice(&self.prefix_tokens);
        all.extend_from_slice(&self.item_tokens);
        all
    }
}

/// Builds a zero-shot prompt: `system + query_context` forms the shared
/// prefix, `document + ITEM_SUFFIX` the item.
pub fn build_prompt(
    tokenizer: &ByteTokenizer,
    system: &str,
    query_context: &str,
    document: &str,
) -> Result<PromptParts, ModelError> {
    let prefix_text = format!("{system}{query_context}");
    let item_text = format!("{document}{ITEM_SUFFIX}");
    let len = prefix_text.len() + item_text.len();
    if len > tokenizer.max_seq() {
        return Err(ModelError::Length { len, max_seq: tokenizer.max_seq() });
    }
    let prefix_tokens = tokenizer.tokenize(&prefix_text)?;
    if prefix_tokens.is_empty() {
        return Err(ModelError::Prompt("prefix must be non-empty".into()));
    }
    Ok(PromptParts { prefix_tokens, item_tokens: tokenizer.tokenize(&item_text)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Boolean,
    /// A rate rendered together with the counts it was computed from.
    Ratio,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericFeature {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default = "default_decimals")]
    pub decimals: usize,
}

fn default_decimals() -> usize {
    2
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericFeatureSpec {
    pub features: Vec<NumericFeature>,
}

impl NumericFeatureSpec {
    pub fn new(features: Vec<NumericFeature>) -> Result<Self, ModelError> {
        let mut names = BTreeSet::new();
        for f in &features {
            if !names.insert(f.name.as_str()) {
                return Err(ModelError::Feature(format!("duplicate feature name '{}'", f.name)));
            }
        }
        Ok(Self { features })
    }

    pub fn feature(mut self, name: &str, kind: FeatureKind) -> Self {
        self.features.push(NumericFeature { name: name.into(), kind, decimals: 2 });
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Ratio { numerator: u64, denominator: u64 },
    Number(f64),
}

/// Renders numeric features as prompt text, one `name: value` line per
/// feature in spec order. Booleans print as `True`/`False`; continuous
/// values are truncated (not rounded) to the configured decimals.
pub fn format_numeric_features(
    features: &BTreeMap<String, FeatureValue>,
    spec: &NumericFeatureSpec,
) -> Result<String, ModelError> {
    if let Some(unknown) = features.keys().find(|k| !spec.features.iter().any(|f| &f.name == *k)) {
        return Err(ModelError::Feature(format!("unknown feature '{unknown}'")));
    }
    let mut lines = Vec::new();
    for f in &spec.features {
        let Some(value) = features.get(&f.name) else { continue };
        let rendered = match (f.kind, *value) {
            (FeatureKind::Boolean, FeatureValue::Number(v)) => {
                if v != 0.0 {
                    "True".to_string()
                } else {
                    "False".to_string()
                }
            }
            (FeatureKind::Continuous, FeatureValue::Number(v)) => truncate_decimals(v, f.decimals),
            (FeatureKind::Ratio, FeatureValue::Ratio { numerator, denominator }) => {
                let rate = if denominator == 0 { 0.0 } else { numerator as f64 / denominator as f64 };
                format!("{} ({numerator}/{denominator})", truncate_decimals(rate, f.decimals))
            }
            (kind, v) => {
                return Err(ModelError::Feature(format!("value {v:?} does not fit kind {kind:?} of '{}'", f.name)))
            }
        };
        lines.push(format!("{}: {rendered}", f.name));
    }
    Ok(lines.join("\n"))
}

fn truncate_decimals(v: f64, decimals: usize) -> String {
    // Print with guard digits first so 0.29 does not truncate to 0.28.
    let wide = format!("{:.*}", decimals + 6, v);
    let cut = match wide.find('.') {
        Some(dot) if decimals == 0 => wide[..dot].to_string(),
        Some(dot) => wide[..dot + 1 + decimals].to_string(),
        None => wide,
    };
    if cut.starts_with('-') && cut.chars().all(|c| matches!(c, '-' | '0' | '.')) {
        cut[1..].to_string()
    } else {
        cut
    }
}
