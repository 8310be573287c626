//! Black-box fitness oracles.
//!
//! [`LookupLandscape`] serves scores from a table loaded from a TSV export,
//! [`NkLandscape`] is a seeded synthetic NK model that is small enough to
//! enumerate, and [`BudgetedOracle`] wraps either one with round-based
//! query accounting.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sequence::{Alphabet, Sequence};

/// Largest state count we are willing to enumerate (2^20).
pub const ENUMERABLE_LIMIT: u64 = 1 << 20;

/// A deterministic fitness oracle. Higher scores are better.
pub trait FitnessLandscape: Send + Sync {
    fn alphabet(&self) -> &Alphabet;

    fn length(&self) -> usize;

    fn evaluate(&self, seq: &Sequence) -> Result<f64>;

    /// Whether `seq` may be queried. Synthetic landscapes accept every
    /// well-formed sequence.
    fn contains(&self, seq: &Sequence) -> bool {
        seq.len() == self.length() && self.alphabet().check(seq).is_ok()
    }

    /// All queryable sequences, when the domain is small enough to list.
    fn members(&self) -> Option<Vec<Sequence>>;

    fn wild_type(&self) -> Sequence;

    /// The global optimum, when known exactly.
    fn optimum(&self) -> Option<(Sequence, f64)>;

    fn evaluate_batch(&self, batch: &[Sequence]) -> Result<Vec<f64>> {
        batch.iter().map(|s| self.evaluate(s)).collect()
    }

    fn check_sequence(&self, seq: &Sequence) -> Result<()> {
        if seq.len() != self.length() {
            return Err(Error::input(format!(
                "sequence length {} does not match landscape length {}",
                seq.len(),
                self.length()
            )));
        }
        self.alphabet().check(seq)
    }
}

#[derive(Clone, Debug, Default)]
pub struct LookupOptions {
    /// Flip the sign of every score (for lower-is-better energies).
    pub negate: bool,
    /// Wild-type override; defaults to the first data row.
    pub wild_type: Option<String>,
    /// Explicit alphabet; inferred from the file when absent.
    pub alphabet: Option<Alphabet>,
}

#[derive(Clone, Debug)]
pub struct LookupLandscape {
    alphabet: Alphabet,
    length: usize,
    table: HashMap<Sequence, f64>,
    /// Distinct sequences in file order.
    order: Vec<Sequence>,
    wild_type: Sequence,
}

pub fn load_lookup(path: impl AsRef<Path>, opts: &LookupOptions) -> Result<LookupLandscape> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lookup(&text, &path.display().to_string(), opts)
}

pub fn parse_lookup(text: &str, source: &str, opts: &LookupOptions) -> Result<LookupLandscape> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };

    let mut rows: Vec<(usize, &str, f64)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(parse_err(
                line_no,
                format!("expected 2 tab-separated columns, found {}", cols.len()),
            ));
        }
        let score: f64 = cols[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("score {:?} is not a number", cols[1])))?;
        if !score.is_finite() {
            return Err(parse_err(
                line_no,
                format!("score {:?} is not finite", cols[1]),
            ));
        }
        rows.push((line_no, cols[0], if opts.negate { -score } else { score }));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{source}: no data rows")));
    }

    let alphabet = match &opts.alphabet {
        Some(a) => a.clone(),
        None => Alphabet::infer(rows.iter().map(|r| r.1))
            .map_err(|e| parse_err(rows[0].0, e.to_string()))?,
    };
    let length = rows[0].1.chars().count();

    let mut table = HashMap::with_capacity(rows.len());
    let mut order = Vec::with_capacity(rows.len());
    for &(line_no, text, score) in &rows {
        let seq = alphabet
            .parse(text)
            .map_err(|e| parse_err(line_no, e.to_string()))?;
        if seq.len() != length {
            return Err(parse_err(
                line_no,
                format!("sequence length {} differs from {length}", seq.len()),
            ));
        }
        match table.get(&seq) {
            Some(&prev) if prev != score => {
                return Err(Error::Data(format!(
                    "{source}:{line_no}: sequence {text} has conflicting scores {prev} and {score}"
                )));
            }
            Some(_) => {}
            None => {
                table.insert(seq.clone(), score);
                order.push(seq);
            }
        }
    }

    let wild_type = match &opts.wild_type {
        Some(w) => {
            let seq = alphabet.parse(w)?;
            if !table.contains_key(&seq) {
                return Err(Error::Data(format!(
                    "wild type {w} is not present in {source}"
                )));
            }
            seq
        }
        None => order[0].clone(),
    };

    Ok(LookupLandscape {
        alphabet,
        length,
        table,
        order,
        wild_type,
    })
}

impl LookupLandscape {
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Entries in file order.
    pub fn entries(&self) -> impl Iterator<Item = (&Sequence, f64)> {
        self.order.iter().map(|s| (s, self.table[s]))
    }
}

impl FitnessLandscape for LookupLandscape {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn length(&self) -> usize {
        self.length
    }

    fn evaluate(&self, seq: &Sequence) -> Result<f64> {
        self.table.get(seq).copied().ok_or_else(|| Error::Domain {
            sequence: self.alphabet.render(seq),
        })
    }

    fn contains(&self, seq: &Sequence) -> bool {
        self.table.contains_key(seq)
    }

    fn members(&self) -> Option<Vec<Sequence>> {
        Some(self.order.clone())
    }

    fn wild_type(&self) -> Sequence {
        self.wild_type.clone()
    }

    fn optimum(&self) -> Option<(Sequence, f64)> {
        let mut best: Option<(&Sequence, f64)> = None;
        for (s, y) in self.entries() {
            if best.is_none_or(|(_, b)| y > b) {
                best = Some((s, y));
            }
        }
        best.map(|(s, y)| (s.clone(), y))
    }
}

/// Seeded NK landscape: each site contributes a value that depends on its own
/// residue and the residues of `k` other sites.
#[derive(Clone, Debug, PartialEq)]
pub struct NkLandscape {
    n: usize,
    k: usize,
    alphabet: Alphabet,
    neighbors: Vec<Vec<usize>>,
    tables: Vec<Vec<f64>>,
    wild_type: Sequence,
}

impl NkLandscape {
    /// Draws neighbour sets (uniform without replacement, excluding the site
    /// itself) and per-site tables uniform on `[0, 1)`.
    pub fn generate(n: usize, k: usize, alphabet: Alphabet, seed: u64) -> Result<Self> {
        Self::validate_shape(n, k, &alphabet)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|site| {
                index::sample(&mut rng, n - 1, k)
                    .into_iter()
                    .map(|j| if j >= site { j + 1 } else { j })
                    .collect()
            })
            .collect();
        let size = alphabet.len().pow(k as u32 + 1);
        let tables = (0..n)
            .map(|_| (0..size).map(|_| rng.random::<f64>()).collect())
            .collect();
        Ok(NkLandscape {
            n,
            k,
            wild_type: Sequence::new(vec![0; n]),
            alphabet,
            neighbors,
            tables,
        })
    }

    /// Builds a landscape from explicit neighbour sets and tables.
    pub fn from_parts(
        alphabet: Alphabet,
        neighbors: Vec<Vec<usize>>,
        tables: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = neighbors.len();
        let k = neighbors.first().map_or(0, |v| v.len());
        Self::validate_shape(n, k, &alphabet)?;
        let size = alphabet.len().pow(k as u32 + 1);
        if tables.len() != n || tables.iter().any(|t| t.len() != size) {
            return Err(Error::input(format!("expected {n} tables of size {size}")));
        }
        for (site, nb) in neighbors.iter().enumerate() {
            if nb.len() != k || nb.iter().any(|&j| j >= n || j == site) {
                return Err(Error::input(format!(
                    "invalid neighbour set for site {site}"
                )));
            }
        }
        Ok(NkLandscape {
            n,
            k,
            wild_type: Sequence::new(vec![0; n]),
            alphabet,
            neighbors,
            tables,
        })
    }

    fn validate_shape(n: usize, k: usize, alphabet: &Alphabet) -> Result<()> {
        if n == 0 {
            return Err(Error::input("NK landscape needs N >= 1"));
        }
        if k >= n {
            return Err(Error::input(format!(
                "K = {k} must satisfy 0 <= K <= N - 1 = {}",
                n - 1
            )));
        }
        let size = (alphabet.len() as f64).powi(k as i32 + 1);
        if size > 1e8 {
            return Err(Error::input(format!(
                "per-site tables of size {size} are too large"
            )));
        }
        Ok(())
    }

    /// Replaces the default all-zero wild type.
    pub fn with_wild_type(mut self, wild_type: Sequence) -> Result<Self> {
        self.check_sequence(&wild_type)?;
        self.wild_type = wild_type;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    pub fn state_count(&self) -> u64 {
        (self.alphabet.len() as u64).saturating_pow(self.n as u32)
    }

    fn fitness_unchecked(&self, res: &[u8]) -> f64 {
        let v = self.alphabet.len();
        let mut total = 0.0;
        for (site, table) in self.tables.iter().enumerate() {
            let mut key = res[site] as usize;
            for &j in &self.neighbors[site] {
                key = key * v + res[j] as usize;
            }
            total += table[key];
        }
        total / self.n as f64
    }

    /// Every sequence with its fitness, in base-V order. `None` above
    /// [`ENUMERABLE_LIMIT`] states.
    pub fn enumerate(&self) -> Option<Vec<(Sequence, f64)>> {
        let count = self.state_count();
        if count > ENUMERABLE_LIMIT {
            return None;
        }
        Some(
            (0..count)
                .map(|i| {
                    let s = Sequence::from_index(i, self.n, self.alphabet.len());
                    let y = self.fitness_unchecked(s.residues());
                    (s, y)
                })
                .collect(),
        )
    }
}

pub fn nk_fitness(landscape: &NkLandscape, seq: &Sequence) -> Result<f64> {
    landscape.check_sequence(seq)?;
    Ok(landscape.fitness_unchecked(seq.residues()))
}

/// Domains up to this size are listed for exhaustive candidate generation.
const MEMBER_LIST_LIMIT: u64 = 1 << 16;

impl FitnessLandscape for NkLandscape {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn length(&self) -> usize {
        self.n
    }

    fn evaluate(&self, seq: &Sequence) -> Result<f64> {
        nk_fitness(self, seq)
    }

    fn members(&self) -> Option<Vec<Sequence>> {
        let count = self.state_count();
        (count <= MEMBER_LIST_LIMIT).then(|| {
            (0..count)
                .map(|i| Sequence::from_index(i, self.n, self.alphabet.len()))
                .collect()
        })
    }

    fn wild_type(&self) -> Sequence {
        self.wild_type.clone()
    }

    fn optimum(&self) -> Option<(Sequence, f64)> {
        let mut best: Option<(Sequence, f64)> = None;
        for (s, y) in self.enumerate()? {
            if best.as_ref().is_none_or(|(_, b)| y > *b) {
                best = Some((s, y));
            }
        }
        best
    }
}

/// Round-limited access to a landscape: at most `rounds` batch queries of at
/// most `batch_size` sequences each, plus a fixed allowance of single
/// reference measurements (the wild type at cold start).
pub struct BudgetedOracle<'a> {
    inner: &'a dyn FitnessLandscape,
    rounds_remaining: usize,
    batch_size: usize,
    extras_remaining: usize,
    log: Vec<(Sequence, f64)>,
}

impl<'a> BudgetedOracle<'a> {
    pub fn new(inner: &'a dyn FitnessLandscape, rounds: usize, batch_size: usize) -> Self {
        BudgetedOracle {
            inner,
            rounds_remaining: rounds,
            batch_size,
            extras_remaining: 0,
            log: Vec::new(),
        }
    }

    pub fn with_extra_allowance(mut self, extras: usize) -> Self {
        self.extras_remaining = extras;
        self
    }

    pub fn landscape(&self) -> &'a dyn FitnessLandscape {
        self.inner
    }

    pub fn rounds_remaining(&self) -> usize {
        self.rounds_remaining
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn queries_made(&self) -> usize {
        self.log.len()
    }

    pub fn log(&self) -> &[(Sequence, f64)] {
        &self.log
    }

    fn measure(&self, batch: &[Sequence]) -> Result<Vec<f64>> {
        for s in batch {
            self.inner.check_sequence(s)?;
            if !self.inner.contains(s) {
                return Err(Error::Domain {
                    sequence: self.inner.alphabet().render(s),
                });
            }
        }
        self.inner.evaluate_batch(batch)
    }

    /// Measures one batch, consuming one round regardless of batch fill.
    pub fn query_batch(&mut self, batch: &[Sequence]) -> Result<Vec<f64>> {
        if self.rounds_remaining == 0 {
            return Err(Error::Budget(format!(
                "all rounds used ({} measurements made)",
                self.log.len()
            )));
        }
        if batch.is_empty() {
            return Err(Error::input("empty query batch"));
        }
        if batch.len() > self.batch_size {
            return Err(Error::input(format!(
                "batch of {} exceeds batch size {}",
                batch.len(),
                self.batch_size
            )));
        }
        let scores = self.measure(batch)?;
        self.rounds_remaining -= 1;
        self.log
            .extend(batch.iter().cloned().zip(scores.iter().copied()));
        Ok(scores)
    }

    /// Measures a single reference sequence outside the round budget.
    pub fn query_extra(&mut self, seq: &Sequence) -> Result<f64> {
        if self.extras_remaining == 0 {
            return Err(Error::Budget("no reference measurements left".into()));
        }
        let score = self.measure(std::slice::from_ref(seq))?[0];
        self.extras_remaining -= 1;
        self.log.push((seq.clone(), score));
        Ok(score)
    }
}
