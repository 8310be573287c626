//! Built-in numerical self-tests behind the `check` subcommand.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::acquisition::{ei, Posterior};
use crate::error::Result;
use crate::explorer::{update_frontier, FrontierPoint};
use crate::sequence::{hamming_distance, Sequence};
use crate::surrogate::{
    gradient_check, Architecture, ConvRegressorConfig, Pooling, RecurrentRegressorConfig,
};

pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const EI_TRIPLES: usize = 20;
pub const EI_SAMPLES: usize = 1_000_000;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} ({:.2?})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed
        )
    }
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    let started = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, e.to_string()));
    CheckOutcome {
        name: name.to_string(),
        passed,
        detail,
        elapsed: started.elapsed(),
    }
}

/// Architectures small enough to finite-difference every parameter quickly.
pub fn check_architectures() -> [Architecture; 2] {
    [
        Architecture::Conv(ConvRegressorConfig {
            channels: vec![8, 8],
            kernel_size: 5,
            hidden_dense: 16,
            pooling: Pooling::Flatten,
        }),
        Architecture::Recurrent(RecurrentRegressorConfig { hidden_size: 16 }),
    ]
}

pub fn gradient_checks() -> Vec<CheckOutcome> {
    check_architectures()
        .iter()
        .map(|arch| {
            timed(&format!("gradient {}", arch.name()), || {
                let r = gradient_check(arch, 8, 4, GRADIENT_TOLERANCE)?;
                Ok((r.passed, r.to_string()))
            })
        })
        .collect()
}

/// Monte Carlo mean of `max(mean + std * z - best, 0)` and its standard error.
pub fn ei_monte_carlo<R: Rng + ?Sized>(
    mean: f64,
    std: f64,
    best: f64,
    samples: usize,
    rng: &mut R,
) -> (f64, f64) {
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let z: f64 = rng.sample(StandardNormal);
        let v = (mean + std * z - best).max(0.0);
        s += v;
        s2 += v * v;
    }
    let n = samples as f64;
    let m = s / n;
    (m, ((s2 / n - m * m).max(0.0) / n).sqrt())
}

/// Closed-form EI against Monte Carlo on random `(mean, std, best)` triples;
/// passes when every triple agrees within three standard errors.
pub fn ei_oracle_check(triples: usize, samples: usize, seed: u64) -> CheckOutcome {
    timed("expected improvement vs Monte Carlo", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..triples {
            let mean = rng.random_range(-3.0..3.0);
            let std = rng.random_range(0.05..2.0);
            let best = rng.random_range(-3.0..3.0);
            let closed = ei(&Posterior::new(mean, std)?, best)?;
            let (mc, se) = ei_monte_carlo(mean, std, best, samples, &mut rng);
            let z = if se > 0.0 {
                (closed - mc).abs() / se
            } else {
                0.0
            };
            worst = worst.max(z);
        }
        Ok((
            worst <= 3.0,
            format!("{triples} triples x {samples} samples, worst deviation {worst:.2} SE"),
        ))
    })
}

/// O(n^2) non-dominated filter under (minimise distance, maximise fitness);
/// ties in both keep only the smallest sequence. Sorted by distance.
pub fn pairwise_frontier(points: &[FrontierPoint]) -> Vec<FrontierPoint> {
    let dominates = |a: &FrontierPoint, b: &FrontierPoint| {
        a.distance <= b.distance
            && a.fitness >= b.fitness
            && (a.distance < b.distance || a.fitness > b.fitness)
    };
    let mut out: Vec<FrontierPoint> = points
        .iter()
        .filter(|p| !points.iter().any(|q| dominates(q, p)))
        .filter(|p| {
            !points.iter().any(|q| {
                q.distance == p.distance && q.fitness == p.fitness && q.sequence < p.sequence
            })
        })
        .cloned()
        .collect();
    out.sort_by_key(|p| p.distance);
    out
}

/// Incremental frontier maintenance against the pairwise filter on random
/// 200-point sets with deliberately coarse fitness values.
pub fn frontier_oracle_check(sets: usize, seed: u64) -> CheckOutcome {
    timed("frontier vs pairwise domination", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wt = Sequence::new(vec![0; 12]);
        for set in 0..sets {
            let mut points: Vec<FrontierPoint> = Vec::with_capacity(200);
            while points.len() < 200 {
                let s = Sequence::from_index(rng.random_range(0..4096), 12, 2);
                if points.iter().any(|p| p.sequence == s) {
                    continue;
                }
                points.push(FrontierPoint {
                    distance: hamming_distance(&s, &wt)?,
                    sequence: s,
                    fitness: f64::from(rng.random_range(0..40u8)) / 4.0,
                });
            }
            let (head, tail) = points.split_at(100);
            let partial = update_frontier(&[], head, &wt)?;
            let fast = update_frontier(&partial, tail, &wt)?;
            if fast != pairwise_frontier(&points) {
                return Ok((false, format!("set {set} disagrees")));
            }
        }
        Ok((true, format!("{sets} sets of 200 points agree")))
    })
}

/// Every self-test the `check` subcommand runs.
pub fn run_self_checks() -> Vec<CheckOutcome> {
    let mut out = gradient_checks();
    out.push(ei_oracle_check(EI_TRIPLES, EI_SAMPLES, 20));
    out.push(frontier_oracle_check(20, 9));
    out
}
