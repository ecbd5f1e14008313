use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use shapley_machine::trainer::{RunConfig, Variant, REVISION};

/// Ways this implementation departs from the original experimental setup,
/// recorded with every run.
pub const DEVIATIONS: [&str; 3] = [
    "grid-env: 7x7 grid pursuit stands in for the particle and StarCraft tasks",
    "scripted-pool: uncontrolled teammates are scripted heuristics, not pretrained policies",
    "window-encoder: a fixed window of past frames replaces the recurrent hidden state",
];

/// Written once at run start and never touched again; completion goes to a
/// separate file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub seed: u64,
    pub variant: Variant,
    pub revision: &'static str,
    pub config_hash: String,
    pub started_unix: u64,
    pub deviations: Vec<&'static str>,
    pub config: RunConfig,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn start(cfg: &RunConfig, seed: u64) -> Self {
        let hash = cfg.hash();
        Self {
            run_id: format!("{}-m{}-s{seed}-{}", cfg.algo.variant.name(), cfg.horizon_m(), &hash[..8]),
            seed,
            variant: cfg.algo.variant,
            revision: REVISION,
            config_hash: hash,
            started_unix: now(),
            deviations: DEVIATIONS.to_vec(),
            config: cfg.clone(),
        }
    }

    /// Write to a temporary sibling, then rename over `path`.
    pub fn write_atomic(&self, path: &Path) -> anyhow::Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(self)?).with_context(|| format!("cannot write {}", tmp.display()))?;
        fs::rename(&tmp, path).with_context(|| format!("cannot move manifest into {}", path.display()))?;
        Ok(())
    }
}

pub fn write_finished(path: &Path, iterations: usize) -> anyhow::Result<()> {
    let body = serde_json::json!({ "finished_unix": now(), "iterations": iterations });
    fs::write(path, serde_json::to_string_pretty(&body)?).with_context(|| format!("cannot write {}", path.display()))
}
