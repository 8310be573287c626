//! Multi-seed campaign execution and the per-run files it writes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{CampaignConfig, LandscapeSpec, Method};
use super::nkgen::{load_nk_spec, nk_landscape};
use crate::error::{Error, Result};
use crate::explorer::{
    cold_start_round, pex_greedy_round, random_search_round, run_round, ExplorerState, RoundRecord,
    RoundSettings,
};
use crate::landscape::{load_lookup, BudgetedOracle, FitnessLandscape, LookupOptions};
use crate::sequence::{Alphabet, Sequence};
use crate::surrogate::Ensemble;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// How multi-point KG batches are assembled; recorded in every manifest.
pub const KG_BATCH_MODE: &str = "greedy_sequential";

pub const MANIFEST_FILE: &str = "manifest.txt";

pub const RUN_CSV_HEADER: &str = "round,query_index,sequence,fitness,cumulative_max";

pub fn run_csv_name(seed: u64) -> String {
    format!("run_seed{seed}.csv")
}

/// Loads or generates the configured landscape, applying any wild-type
/// override.
pub fn build_landscape(cfg: &CampaignConfig) -> Result<Box<dyn FitnessLandscape>> {
    match &cfg.landscape {
        LandscapeSpec::Lookup {
            path,
            negate,
            alphabet,
        } => {
            let alphabet = alphabet
                .as_deref()
                .map(Alphabet::new)
                .transpose()
                .map_err(|e| Error::config("landscape.alphabet", e.to_string()))?;
            let opts = LookupOptions {
                negate: *negate,
                wild_type: cfg.wild_type.clone(),
                alphabet,
            };
            Ok(Box::new(load_lookup(path, &opts)?))
        }
        LandscapeSpec::Nk {
            n,
            k,
            alphabet_size,
            seed,
            path,
        } => {
            let nk = match path {
                Some(p) => load_nk_spec(p)?,
                None => nk_landscape(*n, *k, *alphabet_size, *seed)
                    .map_err(|e| Error::config("landscape.nk", e.to_string()))?,
            };
            let nk = match &cfg.wild_type {
                Some(w) => {
                    let wt = nk
                        .alphabet()
                        .parse(w)
                        .map_err(|e| Error::config("landscape.wild_type", e.to_string()))?;
                    nk.with_wild_type(wt)
                        .map_err(|e| Error::config("landscape.wild_type", e.to_string()))?
                }
                None => nk,
            };
            Ok(Box::new(nk))
        }
    }
}

/// One seed's campaign.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<RoundRecord>,
    /// The domain ran out of unmeasured sequences before all rounds ran.
    pub exhausted: bool,
    /// Oracle calls, reference measurements included.
    pub measurements: usize,
    pub wall_time: Duration,
}

impl SeedRun {
    pub fn final_max(&self) -> Option<f64> {
        self.records.last().map(|r| r.cumulative_max)
    }
}

/// Runs `cfg.rounds` rounds of the configured method. Round 0 is part of the
/// budget; the wild type is measured once on top of it.
pub fn run_seed(
    cfg: &CampaignConfig,
    landscape: &dyn FitnessLandscape,
    seed: u64,
) -> Result<SeedRun> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oracle =
        BudgetedOracle::new(landscape, cfg.rounds, cfg.batch_size).with_extra_allowance(1);
    let mut state = ExplorerState::new(landscape.wild_type());
    let settings = RoundSettings {
        batch_size: cfg.batch_size,
        pool_size: cfg.pool_size,
        radius: cfg.radius,
        acquisition: cfg.acquisition.clone(),
        train: cfg.train.clone(),
        warm_start: cfg.warm_start,
    };
    let mut ensemble = match cfg.method {
        Method::Random => None,
        Method::BatchBo | Method::PexGreedy => Some(Ensemble::new(
            cfg.surrogate.clone(),
            landscape.length(),
            landscape.alphabet().len(),
            cfg.members,
            rng.random(),
        )?),
    };

    let mut records = Vec::with_capacity(cfg.rounds);
    let mut exhausted = false;
    for round in 0..cfg.rounds {
        let outcome = match (cfg.method, ensemble.as_mut()) {
            (Method::Random, _) => {
                random_search_round(&mut state, &mut oracle, cfg.batch_size, &mut rng)
            }
            (_, _) if round == 0 => cold_start_round(
                &mut state,
                &mut oracle,
                cfg.batch_size,
                cfg.radius,
                cfg.lambda,
                &mut rng,
            ),
            (Method::BatchBo, Some(ens)) => {
                run_round(&mut state, ens, &mut oracle, &settings, &mut rng)
            }
            (Method::PexGreedy, Some(ens)) => {
                pex_greedy_round(&mut state, ens, &mut oracle, &settings, &mut rng)
            }
            (_, None) => unreachable!("model-guided methods own an ensemble"),
        };
        match outcome {
            Ok(record) => records.push(record),
            Err(Error::Exhausted { .. }) => {
                exhausted = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SeedRun {
        seed,
        records,
        exhausted,
        measurements: oracle.queries_made(),
        wall_time: started.elapsed(),
    })
}

/// The run CSV: one row per measurement, floats with 17 significant digits,
/// `cumulative_max` running over rows.
pub fn render_run_csv(records: &[RoundRecord], alphabet: &Alphabet) -> String {
    let mut out = String::new();
    out.push_str(RUN_CSV_HEADER);
    out.push('\n');
    let mut best = f64::NEG_INFINITY;
    for r in records {
        for (q, (s, &y)) in r.sequences.iter().zip(&r.fitness).enumerate() {
            best = best.max(y);
            writeln!(
                out,
                "{},{q},{},{y:.16e},{best:.16e}",
                r.round,
                alphabet.render(s)
            )
            .unwrap();
        }
    }
    out
}

/// Comment header plus the canonical config echo, so a manifest is itself a
/// loadable config.
pub fn render_manifest(
    cfg: &CampaignConfig,
    optimum: Option<&(Sequence, f64)>,
    alphabet: &Alphabet,
    runs: &[SeedRun],
) -> String {
    let mut out = String::new();
    writeln!(out, "# proxbo run manifest").unwrap();
    writeln!(out, "# version={ARTIFACT_VERSION}").unwrap();
    writeln!(out, "# config_hash={}", cfg.hash()).unwrap();
    writeln!(out, "# kg_batch_mode={KG_BATCH_MODE}").unwrap();
    match optimum {
        Some((s, y)) => writeln!(out, "# optimum={y:.16e} {}", alphabet.render(s)).unwrap(),
        None => writeln!(out, "# optimum=unknown").unwrap(),
    }
    for r in runs {
        writeln!(
            out,
            "# seed={} rounds={} measurements={} exhausted={}",
            r.seed,
            r.records.len(),
            r.measurements,
            r.exhausted
        )
        .unwrap();
    }
    out.push_str(&cfg.echo());
    out
}

#[derive(Clone, Debug)]
pub struct CampaignOutput {
    pub runs: Vec<SeedRun>,
    pub optimum: Option<(Sequence, f64)>,
    pub manifest: PathBuf,
    pub run_csvs: Vec<PathBuf>,
}

/// Runs every configured seed and writes `run_seed<k>.csv` files plus the
/// manifest into the output directory.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignOutput> {
    let landscape = build_landscape(cfg)?;
    run_campaign_on(cfg, landscape.as_ref())
}

pub fn run_campaign_on(
    cfg: &CampaignConfig,
    landscape: &dyn FitnessLandscape,
) -> Result<CampaignOutput> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let alphabet = landscape.alphabet();
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    let mut run_csvs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let run = run_seed(cfg, landscape, seed)?;
        let path = dir.join(run_csv_name(seed));
        write(&path, &render_run_csv(&run.records, alphabet))?;
        run_csvs.push(path);
        runs.push(run);
    }
    let optimum = landscape.optimum();
    let manifest = dir.join(MANIFEST_FILE);
    write(
        &manifest,
        &render_manifest(cfg, optimum.as_ref(), alphabet, &runs),
    )?;
    Ok(CampaignOutput {
        runs,
        optimum,
        manifest,
        run_csvs,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
