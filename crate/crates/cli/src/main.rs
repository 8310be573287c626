use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use proxbo::harness::{
    aggregate_dirs, configure_threads, gen_nk, run_campaign, write_aggregate, CampaignConfig,
};
use proxbo::selfcheck::run_self_checks;
use proxbo::Result;

#[derive(Parser)]
#[command(name = "proxbo", version, about = "Model-guided batch sequence design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign described by a config file.
    Run {
        config: PathBuf,
        /// Replace the configured seed list (repeatable).
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Override the landscape's wild type.
        #[arg(long)]
        wild_type: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combine run directories into mean/std curves and a summary row.
    Aggregate {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Where to write the aggregate files; defaults to the first directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write an NK landscape spec and, when enumerable, its lookup table.
    GenNk {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        alphabet_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path stem; `.nk` and `.tsv` are appended.
        #[arg(long)]
        out: PathBuf,
        /// Fail instead of skipping the table when the landscape is too large.
        #[arg(long)]
        enumerate: bool,
    },
    /// Run the built-in gradient, expected-improvement and frontier self-tests.
    Check,
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match cli.command {
        Command::Run {
            config,
            seeds,
            wild_type,
            out,
        } => {
            let mut cfg = CampaignConfig::load(&config)?;
            if !seeds.is_empty() {
                cfg.seeds = seeds;
            }
            if wild_type.is_some() {
                cfg.wild_type = wild_type;
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let output = run_campaign(&cfg)?;
            if let Some((_, y)) = &output.optimum {
                println!("optimum {y:.6}");
            }
            for r in &output.runs {
                println!(
                    "seed {} final_max {:.6} rounds {} measurements {}{} ({:.1?})",
                    r.seed,
                    r.final_max().unwrap_or(f64::NAN),
                    r.records.len(),
                    r.measurements,
                    if r.exhausted { " exhausted" } else { "" },
                    r.wall_time
                );
            }
            println!("wrote {}", output.manifest.display());
            Ok(true)
        }
        Command::Aggregate { dirs, out } => {
            let report = aggregate_dirs(&dirs)?;
            let out = out.unwrap_or_else(|| dirs[0].clone());
            for path in write_aggregate(&report, &out)? {
                println!("wrote {}", path.display());
            }
            println!(
                "{} seeds, final mean {:.6} std {:.6}, max {:.6}",
                report.seeds.len(),
                report.final_mean(),
                report.final_std(),
                report.max_fitness
            );
            if let Some(rate) = report.success_rate {
                println!("success rate {rate:.3}");
            }
            Ok(true)
        }
        Command::GenNk {
            n,
            k,
            alphabet_size,
            seed,
            out,
            enumerate,
        } => {
            let generated = gen_nk(n, k, alphabet_size, seed, &out, enumerate)?;
            println!("wrote {}", generated.spec_path.display());
            if let Some(table) = &generated.table_path {
                println!("wrote {}", table.display());
            }
            if let Some((seq, y)) = &generated.optimum {
                println!("optimum {y:.16e} {seq}");
            }
            Ok(true)
        }
        Command::Check => {
            let outcomes = run_self_checks();
            for o in &outcomes {
                println!("{o}");
            }
            Ok(outcomes.iter().all(|o| o.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
