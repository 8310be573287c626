//! Campaign configuration, multi-seed execution, aggregation and NK
//! landscape generation.

pub mod aggregate;
pub mod campaign;
pub mod config;
pub mod nkgen;

pub use aggregate::{
    aggregate_curves, aggregate_dirs, parse_run_csv, read_manifest, round_maxima, write_aggregate,
    AggregateCurve, AggregateReport, Manifest, RunRow,
};
pub use campaign::{
    build_landscape, render_run_csv, run_campaign, run_campaign_on, run_csv_name, run_seed,
    CampaignOutput, SeedRun, ARTIFACT_VERSION, KG_BATCH_MODE, MANIFEST_FILE,
};
pub use config::{CampaignConfig, LandscapeSpec, Method};
pub use nkgen::{gen_nk, load_nk_spec, nk_landscape, GeneratedNk};

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "PROXBO_THREADS";

/// Sizes the global rayon pool from `PROXBO_THREADS` when it is set.
/// Returns the configured thread count, if any.
pub fn configure_threads() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::config(
            THREADS_ENV,
            format!("expected a positive integer, got {raw:?}"),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::State(format!("thread pool: {e}")))?;
    Ok(Some(n))
}
