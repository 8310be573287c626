//! Cross-seed learning curves and summary rows from run directories.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::campaign::{run_csv_name, MANIFEST_FILE, RUN_CSV_HEADER};
use super::config::CampaignConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub round: usize,
    pub query_index: usize,
    pub sequence: String,
    pub fitness: f64,
    pub cumulative_max: f64,
}

pub fn parse_run_csv(text: &str, source: &str) -> Result<Vec<RunRow>> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == RUN_CSV_HEADER => {}
        _ => return Err(err(1, format!("expected header {RUN_CSV_HEADER:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let no = i + 1;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(err(no, format!("expected 5 columns, found {}", cols.len())));
        }
        let bad = |what: &str, v: &str| err(no, format!("invalid {what} {v:?}"));
        rows.push(RunRow {
            round: cols[0].parse().map_err(|_| bad("round", cols[0]))?,
            query_index: cols[1].parse().map_err(|_| bad("query index", cols[1]))?,
            sequence: cols[2].to_string(),
            fitness: cols[3].parse().map_err(|_| bad("fitness", cols[3]))?,
            cumulative_max: cols[4]
                .parse()
                .map_err(|_| bad("cumulative max", cols[4]))?,
        });
    }
    Ok(rows)
}

/// Cumulative max at the end of each round, in round order.
pub fn round_maxima(rows: &[RunRow]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut last_round = None;
    for r in rows {
        if last_round == Some(r.round) {
            *out.last_mut().expect("round started") = r.cumulative_max;
        } else {
            out.push(r.cumulative_max);
            last_round = Some(r.round);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateCurve {
    pub mean: Vec<f64>,
    /// Population standard deviation (divide by the seed count).
    pub std: Vec<f64>,
    pub seeds: usize,
}

/// Per-round mean and population std over equally long curves.
pub fn aggregate_curves(curves: &[Vec<f64>]) -> Result<AggregateCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Aggregation("no runs to aggregate".into()))?;
    if curves.iter().any(|c| c.len() != first.len()) {
        return Err(Error::Aggregation(
            "runs have different round counts".into(),
        ));
    }
    let n = curves.len() as f64;
    let mean: Vec<f64> = (0..first.len())
        .map(|t| curves.iter().map(|c| c[t]).sum::<f64>() / n)
        .collect();
    let std = (0..first.len())
        .map(|t| {
            let m = mean[t];
            (curves.iter().map(|c| (c[t] - m).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();
    Ok(AggregateCurve {
        mean,
        std,
        seeds: curves.len(),
    })
}

/// What a run directory's manifest declares.
#[derive(Clone, Debug)]
pub struct Manifest {
    pub config: CampaignConfig,
    pub config_hash: String,
    pub optimum: Option<f64>,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let source = path.display().to_string();
    let config = CampaignConfig::parse(&text, &source)?;
    let mut config_hash = None;
    let mut optimum = None;
    for line in text.lines() {
        let Some(comment) = line.strip_prefix("# ") else {
            continue;
        };
        if let Some(h) = comment.strip_prefix("config_hash=") {
            config_hash = Some(h.trim().to_string());
        } else if let Some(o) = comment.strip_prefix("optimum=") {
            let value = o.split_whitespace().next().unwrap_or("");
            optimum = value.parse().ok();
        }
    }
    let config_hash =
        config_hash.ok_or_else(|| Error::Aggregation(format!("{source}: no config_hash line")))?;
    if config_hash != config.hash() {
        return Err(Error::Aggregation(format!(
            "{source}: recorded config hash does not match the echoed config"
        )));
    }
    Ok(Manifest {
        config,
        config_hash,
        optimum,
    })
}

#[derive(Clone, Debug)]
pub struct AggregateReport {
    pub method: String,
    pub config_hash: String,
    pub rounds: usize,
    pub seeds: Vec<u64>,
    /// Per-seed end-of-round cumulative max, padded to `rounds` by carrying
    /// the last value when a run stopped on exhaustion.
    pub curves: Vec<Vec<f64>>,
    pub curve: AggregateCurve,
    pub max_fitness: f64,
    pub optimum: Option<f64>,
    /// Fraction of seeds whose final cumulative max reaches the optimum.
    pub success_rate: Option<f64>,
}

impl AggregateReport {
    pub fn final_mean(&self) -> f64 {
        *self.curve.mean.last().expect("at least one round")
    }

    pub fn final_std(&self) -> f64 {
        *self.curve.std.last().expect("at least one round")
    }
}

/// Aggregates every run listed in the manifests of `dirs`. All directories
/// must share one config hash, and no seed may appear twice.
pub fn aggregate_dirs(dirs: &[PathBuf]) -> Result<AggregateReport> {
    if dirs.is_empty() {
        return Err(Error::Aggregation("no run directories given".into()));
    }
    let mut reference: Option<Manifest> = None;
    let mut seeds = Vec::new();
    let mut seen = BTreeSet::new();
    let mut curves = Vec::new();
    for dir in dirs {
        let manifest = read_manifest(dir)?;
        if let Some(r) = &reference {
            if r.config_hash != manifest.config_hash {
                return Err(Error::Aggregation(format!(
                    "{} was produced by a different config ({} vs {})",
                    dir.display(),
                    manifest.config_hash,
                    r.config_hash
                )));
            }
        }
        let rounds = manifest.config.rounds;
        for &seed in &manifest.config.seeds {
            if !seen.insert(seed) {
                return Err(Error::Aggregation(format!("seed {seed} appears twice")));
            }
            let path = dir.join(run_csv_name(seed));
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mut curve = round_maxima(&parse_run_csv(&text, &path.display().to_string())?);
            match curve.last().copied() {
                None => {
                    return Err(Error::Aggregation(format!(
                        "{} has no rows",
                        path.display()
                    )))
                }
                Some(_) if curve.len() > rounds => {
                    return Err(Error::Aggregation(format!(
                        "{} has {} rounds, config says {rounds}",
                        path.display(),
                        curve.len()
                    )))
                }
                Some(last) => curve.resize(rounds, last),
            }
            seeds.push(seed);
            curves.push(curve);
        }
        reference.get_or_insert(manifest);
    }
    let manifest = reference.expect("at least one directory");
    let curve = aggregate_curves(&curves)?;
    let finals: Vec<f64> = curves
        .iter()
        .map(|c| *c.last().expect("non-empty"))
        .collect();
    let max_fitness = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let success_rate = manifest
        .optimum
        .map(|opt| finals.iter().filter(|&&f| f >= opt).count() as f64 / finals.len() as f64);
    Ok(AggregateReport {
        method: manifest.config.method.name().to_string(),
        config_hash: manifest.config_hash,
        rounds: manifest.config.rounds,
        seeds,
        curves,
        curve,
        max_fitness,
        optimum: manifest.optimum,
        success_rate,
    })
}

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PLOT_FILE: &str = "plot.gp";

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn render_aggregate_csv(curve: &AggregateCurve) -> String {
    let mut out = String::from("round,mean,std,seeds\n");
    for (t, (m, s)) in curve.mean.iter().zip(&curve.std).enumerate() {
        writeln!(out, "{t},{},{},{}", real(*m), real(*s), curve.seeds).unwrap();
    }
    out
}

pub fn render_summary_csv(report: &AggregateReport) -> String {
    let opt = report.optimum.map(real).unwrap_or_default();
    let rate = report.success_rate.map(real).unwrap_or_default();
    format!(
        "method,seeds,max_fitness,final_mean,final_std,optimum,success_rate\n{},{},{},{},{},{opt},{rate}\n",
        report.method,
        report.seeds.len(),
        real(report.max_fitness),
        real(report.final_mean()),
        real(report.final_std()),
    )
}

/// A gnuplot script drawing the mean curve over a shaded +-1 std band.
pub fn render_plot_script(report: &AggregateReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "# mean cumulative max over {} seeds",
        report.seeds.len()
    )
    .unwrap();
    writeln!(out, "set datafile separator ','").unwrap();
    writeln!(out, "set xlabel 'round'").unwrap();
    writeln!(out, "set ylabel 'cumulative max fitness'").unwrap();
    writeln!(out, "set key left top").unwrap();
    writeln!(out, "set style fill transparent solid 0.25 noborder").unwrap();
    writeln!(
        out,
        "plot '{AGGREGATE_FILE}' skip 1 using 1:($2-$3):($2+$3) with filledcurves title 'std', \\"
    )
    .unwrap();
    writeln!(
        out,
        "     '{AGGREGATE_FILE}' skip 1 using 1:2 with linespoints lw 2 title '{}'",
        report.method
    )
    .unwrap();
    out
}

/// Writes the aggregate curve, summary row and plot script into `out`.
pub fn write_aggregate(report: &AggregateReport, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let files = [
        (AGGREGATE_FILE, render_aggregate_csv(&report.curve)),
        (SUMMARY_FILE, render_summary_csv(report)),
        (PLOT_FILE, render_plot_script(report)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = out.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
