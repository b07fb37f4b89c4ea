use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use semrank_core::search::{SearchService, ServiceAssets};

use super::{load_calibration, load_corpus, load_model, load_queries, load_rar};
use crate::config::{optional, require};
use crate::{CliError, Context};

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080", env = "SEMRANK_ADDR")]
    pub addr: SocketAddr,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub rar: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
}

/// Loads every asset the service needs, failing before the port is bound.
pub fn build_service(ctx: &Context, args: &ServeArgs) -> Result<SearchService, CliError> {
    let cfg = &ctx.config;
    let corpus = load_corpus(&require(&args.corpus, &cfg.paths.corpus, "corpus")?)?;
    let queries = load_queries(&require(&args.queries, &cfg.paths.queries, "queries")?)?;
    let weights = load_model(&require(&args.weights, &cfg.paths.weights, "weights")?)?;
    let rar = load_rar(optional(&args.rar, &cfg.paths.rar, "rar")?.as_deref(), &corpus)?;
    let calibration = load_calibration(optional(&args.calibration, &cfg.paths.calibration, "calibration")?.as_deref())?;
    let assets = ServiceAssets { corpus, queries, rar, weights: Arc::new(weights), calibration };
    Ok(SearchService::new(cfg.search.clone(), assets)?)
}

pub fn serve(ctx: &Context, args: &ServeArgs) -> Result<(), CliError> {
    let service = Arc::new(build_service(ctx, args)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Contract(format!("cannot start runtime: {e}")))?;
    eprintln!("{}", serde_json::json!({"event": "listening", "addr": args.addr.to_string()}));
    runtime
        .block_on(semrank_server::serve(args.addr, service))
        .map_err(|e| CliError::Contract(format!("server stopped: {e}")))
}
