use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Args;
use semrank_core::data::gen_data as generate;
use semrank_core::jsonl::write_jsonl;
use semrank_core::model::{init_model, save_weights};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{hex, substream_seed};
use crate::output::write_json;
use crate::{CliError, Context};

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub n_docs: Option<usize>,
    #[arg(long)]
    pub n_queries: Option<usize>,
}

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const LOGS_FILE: &str = "logs.jsonl";
pub const WEIGHTS_FILE: &str = "weights.bin";

/// Writes the generated files into the `--out` directory (default `data`).
pub fn gen_data(ctx: &Context, args: &GenDataArgs) -> Result<(), CliError> {
    let mut cfg = ctx.config.clone();
    if let Some(n) = args.n_docs {
        cfg.data.n_docs = n;
    }
    if let Some(n) = args.n_queries {
        cfg.data.n_queries = n;
    }
    let dir = ctx.out.clone().unwrap_or_else(|| PathBuf::from("data"));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;

    let data = generate(substream_seed(cfg.seed, "data"), &cfg.data)?;
    let weights = init_model::<f32>(&cfg.model, substream_seed(cfg.seed, "init"))?;
    let weights_path = dir.join(WEIGHTS_FILE);
    let file = File::create(&weights_path).map_err(|e| CliError::io(&weights_path, e))?;
    save_weights(&weights, BufWriter::new(file))?;

    let meta = cfg.meta(BTreeMap::from([("weights".to_string(), weights.checksum())]));
    write_jsonl(&dir.join(CORPUS_FILE), Some(&meta), &data.docs)?;
    write_jsonl(&dir.join(QUERIES_FILE), Some(&meta), &data.queries)?;
    write_jsonl(&dir.join(LABELS_FILE), Some(&meta), &data.labels)?;
    write_jsonl(&dir.join(LOGS_FILE), Some(&meta), &data.logs)?;

    let mut files = BTreeMap::new();
    for name in [CORPUS_FILE, QUERIES_FILE, LABELS_FILE, LOGS_FILE, WEIGHTS_FILE] {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        files.insert(name, hex(&Sha256::digest(bytes)));
    }
    let manifest = json!({
        "docs": data.docs.len(),
        "queries": data.queries.len(),
        "labels": data.labels.len(),
        "logs": data.logs.len(),
        "files": files,
    });
    write_json(Some(&dir.join("manifest.json")), &meta, &manifest)
}
