use anyhow::{Context, Result};
use seahorizon::synth::write_dataset;

use crate::config::Config;
use crate::Failure;

pub fn run(cfg: &Config) -> Result<()> {
    let out = cfg
        .paths
        .output
        .as_ref()
        .ok_or_else(|| Failure::Usage("synth needs an output directory (--out)".into()))?;
    cfg.synth.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let summary = write_dataset(&cfg.synth, out).with_context(|| format!("writing {}", out.display()))?;
    log::info!(
        "{} frames written to {}, {} left and {} right obstacle boxes",
        summary.frames,
        out.display(),
        summary.left_obstacles,
        summary.right_obstacles
    );
    Ok(())
}
