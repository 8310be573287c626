//! Fixed-length sequences over a finite residue alphabet.
//!
//! Residues are stored as `u8` ordinals into an [`Alphabet`]; characters only
//! appear when parsing or rendering text.

use std::collections::HashSet;
use std::fmt;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// The 20 canonical amino acids, ordered alphabetically by one-letter code.
pub const AMINO_ACIDS: &str = "ACDEFGHIKLMNPQRSTVWY";

const NO_INDEX: u8 = u8::MAX;

/// An ordered set of residue symbols. Ordinal `i` is the `i`-th symbol.
#[derive(Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<char>,
    index: [u8; 128],
}

impl Alphabet {
    pub fn new(symbols: &str) -> Result<Self> {
        let symbols: Vec<char> = symbols.chars().collect();
        if symbols.len() < 2 {
            return Err(Error::input("alphabet needs at least 2 symbols"));
        }
        if symbols.len() >= NO_INDEX as usize {
            return Err(Error::input("alphabet has too many symbols"));
        }
        let mut index = [NO_INDEX; 128];
        for (i, &c) in symbols.iter().enumerate() {
            if !c.is_ascii_graphic() {
                return Err(Error::input(format!(
                    "alphabet symbol {c:?} is not a printable ASCII character"
                )));
            }
            let slot = &mut index[c as usize];
            if *slot != NO_INDEX {
                return Err(Error::input(format!("duplicate alphabet symbol {c:?}")));
            }
            *slot = i as u8;
        }
        Ok(Alphabet { symbols, index })
    }

    pub fn protein() -> Self {
        Alphabet::new(AMINO_ACIDS).expect("canonical alphabet is valid")
    }

    /// The first `size` amino-acid letters, used for synthetic landscapes.
    pub fn amino_prefix(size: usize) -> Result<Self> {
        if size > AMINO_ACIDS.len() {
            return Err(Error::input(format!(
                "alphabet size {size} exceeds the {} canonical amino acids",
                AMINO_ACIDS.len()
            )));
        }
        Alphabet::new(&AMINO_ACIDS[..size])
    }

    /// Builds an alphabet from the characters occurring in `sequences`, ordered
    /// by canonical amino-acid position first and then by code point.
    pub fn infer<'a>(sequences: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in sequences {
            seen.extend(s.chars());
        }
        let mut symbols: Vec<char> = seen.into_iter().collect();
        symbols.sort_by_key(|&c| match AMINO_ACIDS.find(c) {
            Some(i) => (0, i as u32),
            None => (1, c as u32),
        });
        Alphabet::new(&symbols.into_iter().collect::<String>())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn symbol(&self, ordinal: u8) -> Option<char> {
        self.symbols.get(ordinal as usize).copied()
    }

    pub fn index(&self, symbol: char) -> Option<u8> {
        if !symbol.is_ascii() {
            return None;
        }
        match self.index[symbol as usize] {
            NO_INDEX => None,
            i => Some(i),
        }
    }

    pub fn as_string(&self) -> String {
        self.symbols.iter().collect()
    }

    pub fn parse(&self, text: &str) -> Result<Sequence> {
        text.chars()
            .enumerate()
            .map(|(pos, c)| {
                self.index(c).ok_or_else(|| {
                    Error::input(format!(
                        "residue {c:?} at position {pos} of {text:?} is not in alphabet {}",
                        self.as_string()
                    ))
                })
            })
            .collect::<Result<Vec<u8>>>()
            .map(Sequence)
    }

    pub fn render(&self, seq: &Sequence) -> String {
        seq.0
            .iter()
            .map(|&o| self.symbols.get(o as usize).copied().unwrap_or('?'))
            .collect()
    }

    pub fn check(&self, seq: &Sequence) -> Result<()> {
        match seq.0.iter().position(|&o| o as usize >= self.len()) {
            Some(pos) => Err(Error::input(format!(
                "ordinal {} at position {pos} is outside alphabet of size {}",
                seq.0[pos],
                self.len()
            ))),
            None => Ok(()),
        }
    }
}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Alphabet({:?})", self.as_string())
    }
}

/// A sequence of residue ordinals. Ordering is lexicographic over ordinals.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Sequence(Vec<u8>);

impl Sequence {
    pub fn new(residues: Vec<u8>) -> Self {
        Sequence(residues)
    }

    pub fn residues(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Decodes the `index`-th sequence of the base-`v` enumeration of
    /// `V^len`, with position 0 as the most significant digit.
    pub fn from_index(mut index: u64, len: usize, v: usize) -> Self {
        let mut res = vec![0u8; len];
        for slot in res.iter_mut().rev() {
            *slot = (index % v as u64) as u8;
            index /= v as u64;
        }
        Sequence(res)
    }
}

impl From<Vec<u8>> for Sequence {
    fn from(v: Vec<u8>) -> Self {
        Sequence(v)
    }
}

pub fn hamming_distance(a: &Sequence, b: &Sequence) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::input(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.0.iter().zip(&b.0).filter(|(x, y)| x != y).count())
}

/// Row-major `L x V` one-hot matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct OneHot {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl OneHot {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Per-row argmax; the inverse of [`encode_onehot`].
    pub fn decode(&self) -> Sequence {
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (j, &x) in row.iter().enumerate() {
                    if x > row[best] {
                        best = j;
                    }
                }
                best as u8
            })
            .collect::<Vec<u8>>()
            .into()
    }
}

pub fn encode_onehot(seq: &Sequence, alphabet: &Alphabet) -> Result<OneHot> {
    alphabet.check(seq)?;
    let cols = alphabet.len();
    let mut data = vec![0.0; seq.len() * cols];
    write_onehot(seq, cols, &mut data);
    Ok(OneHot {
        rows: seq.len(),
        cols,
        data,
    })
}

/// Writes the one-hot rows of `seq` into `out` (length `L * v`, pre-zeroed).
pub(crate) fn write_onehot(seq: &Sequence, v: usize, out: &mut [f64]) {
    for (i, &o) in seq.0.iter().enumerate() {
        out[i * v + o as usize] = 1.0;
    }
}

pub fn point_mutate(
    seq: &Sequence,
    position: usize,
    symbol: u8,
    alphabet: &Alphabet,
) -> Result<Sequence> {
    if position >= seq.len() {
        return Err(Error::input(format!(
            "position {position} out of range for length {}",
            seq.len()
        )));
    }
    if symbol as usize >= alphabet.len() {
        return Err(Error::input(format!(
            "symbol ordinal {symbol} out of range for alphabet of size {}",
            alphabet.len()
        )));
    }
    if seq.0[position] == symbol {
        return Err(Error::input(format!(
            "substitution at position {position} does not change the residue"
        )));
    }
    let mut out = seq.clone();
    out.0[position] = symbol;
    Ok(out)
}

/// One random mutant of `seq` at Hamming distance in `[1, radius]`.
///
/// The number of substitutions is uniform on `[1, radius]`; positions are drawn
/// without replacement and each replacement is uniform over the `V - 1`
/// alternatives. `radius` must already be validated against the length.
pub(crate) fn random_mutant<R: Rng + ?Sized>(
    seq: &Sequence,
    radius: usize,
    v: usize,
    rng: &mut R,
) -> Sequence {
    let k = rng.random_range(1..=radius);
    let mut out = seq.clone();
    for pos in index::sample(rng, seq.len(), k) {
        let cur = out.0[pos];
        let mut sym = rng.random_range(0..v - 1) as u8;
        if sym >= cur {
            sym += 1;
        }
        out.0[pos] = sym;
    }
    out
}

const MUTANT_ATTEMPTS_PER_SLOT: usize = 64;

/// Distinct random mutants of `seq` within Hamming radius `radius`.
///
/// Duplicates are discarded and redrawn; after `64 * count` draws the result
/// may be shorter than `count` when the neighbourhood is too small.
pub fn sample_mutants<R: Rng + ?Sized>(
    seq: &Sequence,
    radius: usize,
    count: usize,
    alphabet: &Alphabet,
    rng: &mut R,
) -> Result<Vec<Sequence>> {
    alphabet.check(seq)?;
    if radius < 1 || radius > seq.len() {
        return Err(Error::input(format!(
            "radius {radius} must lie in [1, {}]",
            seq.len()
        )));
    }
    if count < 1 {
        return Err(Error::input("count must be at least 1"));
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < MUTANT_ATTEMPTS_PER_SLOT * count {
        attempts += 1;
        let m = random_mutant(seq, radius, alphabet.len(), rng);
        if seen.insert(m.clone()) {
            out.push(m);
        }
    }
    Ok(out)
}
