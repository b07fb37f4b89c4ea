//! One module per subcommand, plus the loaders they share.

pub mod bench;
pub mod calibrate;
pub mod data;
pub mod eval;
pub mod pipeline;
pub mod serve;
pub mod simulate;
pub mod train;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use semrank_core::calibration::CalibrationArtifact;
use semrank_core::jsonl::RunMeta;
use semrank_core::model::{load_weights, ModelWeights};
use semrank_core::retrieval::{load_queries as read_queries, Corpus, QuerySpec, RarWeights};

use crate::output::read_json_field;
use crate::CliError;

pub fn load_corpus(path: &Path) -> Result<Corpus<f32>, CliError> {
    Ok(Corpus::load(path)?)
}

pub fn load_queries(path: &Path) -> Result<Vec<QuerySpec<f32>>, CliError> {
    Ok(read_queries(path)?)
}

pub fn load_model(path: &Path) -> Result<ModelWeights<f32>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(load_weights(BufReader::new(file))?)
}

/// Trained weights from `path`, or cosine similarity alone.
pub fn load_rar(path: Option<&Path>, corpus: &Corpus<f32>) -> Result<RarWeights<f32>, CliError> {
    match path {
        Some(p) => Ok(read_json_field(p, "weights")?.1),
        None => Ok(RarWeights::cosine_only(corpus.feature_names())),
    }
}

pub fn load_calibration(path: Option<&Path>) -> Result<Option<CalibrationArtifact>, CliError> {
    match path {
        Some(p) => Ok(Some(read_json_field(p, "artifact")?.1)),
        None => Ok(None),
    }
}

/// Records an input's config hash under `input.<name>` in the output meta.
pub fn note_input(versions: &mut BTreeMap<String, String>, name: &str, meta: Option<RunMeta>) {
    if let Some(m) = meta {
        versions.insert(format!("input.{name}"), m.config_hash);
    }
}
