//! Run configuration: a TOML file, then `SEMRANK_*` variables, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semrank_core::data::GenSizes;
use semrank_core::jsonl::RunMeta;
use semrank_core::midtier::SimConfig;
use semrank_core::model::ModelConfig;
use semrank_core::search::SearchConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub logs: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub rar: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RarTrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for RarTrainConfig {
    fn default() -> Self {
        Self { lambda: 0.5, learning_rate: 1.0, epochs: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub prefix_len: usize,
    pub item_len: usize,
    pub n_items: usize,
    pub runs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { prefix_len: 500, item_len: 50, n_items: 100, runs: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Largest score gap against naive scoring that bench accepts.
    pub score_agreement: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { score_agreement: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Root seed; every random component draws from a named substream.
    pub seed: u64,
    pub paths: Paths,
    pub model: ModelConfig,
    pub data: GenSizes,
    pub search: SearchConfig,
    pub rar: RarTrainConfig,
    pub bench: BenchConfig,
    pub sim: SimConfig,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            paths: Paths::default(),
            model: ModelConfig::default(),
            data: GenSizes::default(),
            search: SearchConfig::default(),
            rar: RarTrainConfig::default(),
            bench: BenchConfig::default(),
            sim: SimConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Hex digest of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json)[..8])
    }

    pub fn meta(&self, versions: BTreeMap<String, String>) -> RunMeta {
        let mut versions = versions;
        versions.insert("semrank".into(), env!("CARGO_PKG_VERSION").into());
        RunMeta { seed: self.seed, config_hash: self.hash(), versions }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Seed of the named substream under `root`.
pub fn substream_seed(root: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(name.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

pub fn substream(root: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(root, name))
}

/// Resolves a path from its flag or the config, checking that it exists.
pub fn require(flag: &Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    let path = flag.clone().or_else(|| configured.clone()).ok_or_else(|| CliError::MissingPath(what.to_string()))?;
    if !path.exists() {
        return Err(CliError::io(&path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")));
    }
    Ok(path)
}

pub fn optional(flag: &Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<Option<PathBuf>, CliError> {
    match flag.as_ref().or(configured.as_ref()) {
        Some(_) => require(flag, configured, what).map(Some),
        None => Ok(None),
    }
}
