use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use semrank_core::midtier::{run_simulation, SimConfig, SimToggles};
use serde_json::json;

use crate::output::{write_json, write_records};
use crate::{CliError, Context};

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Standalone simulator TOML; replaces the `[sim]` table of the run config.
    #[arg(long)]
    pub sim_config: Option<PathBuf>,
    /// Multiply arrival rates by this factor.
    #[arg(long)]
    pub load: Option<f64>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long)]
    pub no_cache: bool,
    #[arg(long)]
    pub no_pid: bool,
    #[arg(long)]
    pub no_retry: bool,
    #[arg(long)]
    pub no_shaping: bool,
    /// Write the summary here; interval records go to `--out`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

pub fn simulate(ctx: &Context, args: &SimulateArgs) -> Result<(), CliError> {
    let mut cfg = ctx.config.clone();
    if let Some(path) = &args.sim_config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        cfg.sim = SimConfig::from_toml(&text)?;
        cfg.sim.seed = cfg.seed;
    }
    if let Some(f) = args.load {
        cfg.sim = cfg.sim.with_load(f);
    }
    if let Some(d) = args.duration_s {
        cfg.sim.duration_s = d;
    }
    let toggles =
        SimToggles { cache: !args.no_cache, pid: !args.no_pid, retry: !args.no_retry, shaping: !args.no_shaping };
    let output = run_simulation(&cfg.sim, toggles)?;
    let meta = cfg.meta(BTreeMap::from([("sim".to_string(), cfg.sim.hash())]));
    write_records(ctx.out.as_deref(), &meta, &output.records)?;
    if let Some(path) = &args.summary {
        write_json(Some(path), &meta, &json!({"toggles": toggles, "metrics": output.metrics}))?;
    }
    Ok(())
}
