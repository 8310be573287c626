//! NK landscape files: a self-contained spec (`.nk`) and, for enumerable
//! landscapes, a lookup table (`.tsv`) whose header records the optimum.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::landscape::{FitnessLandscape, NkLandscape, ENUMERABLE_LIMIT};
use crate::sequence::Alphabet;

const SPEC_FORMAT: &str = "proxbo-nk/1";

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedNk {
    pub spec_path: PathBuf,
    pub table_path: Option<PathBuf>,
    pub states: u64,
    /// Known only when the table was written.
    pub optimum: Option<(String, f64)>,
}

/// Builds the landscape shared by `gen-nk` and inline `landscape.kind=nk`
/// configs. Residues are the first `alphabet_size` amino-acid letters.
pub fn nk_landscape(n: usize, k: usize, alphabet_size: usize, seed: u64) -> Result<NkLandscape> {
    NkLandscape::generate(n, k, Alphabet::amino_prefix(alphabet_size)?, seed)
}

/// Writes `<stem>.nk` and, when the landscape has at most 2^20 states,
/// `<stem>.tsv`. With `require_table` an oversize landscape is an error
/// instead of a silent skip.
pub fn gen_nk(
    n: usize,
    k: usize,
    alphabet_size: usize,
    seed: u64,
    stem: &Path,
    require_table: bool,
) -> Result<GeneratedNk> {
    let nk = nk_landscape(n, k, alphabet_size, seed)?;
    let states = nk.state_count();
    if require_table && states > ENUMERABLE_LIMIT {
        return Err(Error::input(format!(
            "{states} states exceed the enumeration limit of {ENUMERABLE_LIMIT}"
        )));
    }
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let spec_path = stem.with_extension("nk");
    write_file(&spec_path, &render_spec(&nk, seed))?;

    let mut out = GeneratedNk {
        spec_path,
        table_path: None,
        states,
        optimum: None,
    };
    if let Some(rows) = nk.enumerate() {
        let alphabet = nk.alphabet();
        let (best_seq, best) = nk.optimum().expect("enumerable landscape");
        let best_text = alphabet.render(&best_seq);
        let mut text = String::with_capacity(rows.len() * (n + 26));
        writeln!(text, "# optimum {best:.16e} {best_text}").unwrap();
        writeln!(
            text,
            "# nk n={n} k={k} alphabet={} seed={seed}",
            alphabet.as_string()
        )
        .unwrap();
        for (s, y) in &rows {
            writeln!(text, "{}\t{y:.16e}", alphabet.render(s)).unwrap();
        }
        let table_path = stem.with_extension("tsv");
        write_file(&table_path, &text)?;
        out.table_path = Some(table_path);
        out.optimum = Some((best_text, best));
    }
    Ok(out)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn render_spec(nk: &NkLandscape, seed: u64) -> String {
    let mut s = String::new();
    writeln!(s, "format={SPEC_FORMAT}").unwrap();
    writeln!(s, "n={}", nk.n()).unwrap();
    writeln!(s, "k={}", nk.k()).unwrap();
    writeln!(s, "alphabet={}", nk.alphabet().as_string()).unwrap();
    writeln!(s, "seed={seed}").unwrap();
    for (i, nb) in nk.neighbors().iter().enumerate() {
        let joined: Vec<String> = nb.iter().map(ToString::to_string).collect();
        writeln!(s, "neighbors.{i}={}", joined.join(",")).unwrap();
    }
    // `{:?}` is the shortest exact decimal, so reloading is bit-identical.
    for (i, t) in nk.tables().iter().enumerate() {
        let joined: Vec<String> = t.iter().map(|v| format!("{v:?}")).collect();
        writeln!(s, "table.{i}={}", joined.join(",")).unwrap();
    }
    s
}

/// Reads a `.nk` spec. The landscape is rebuilt from the stored tables, not
/// regenerated from the seed.
pub fn load_nk_spec(path: &Path) -> Result<NkLandscape> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let err = |line: usize, message: String| Error::Parse {
        path: source.clone(),
        line,
        message,
    };
    let mut format = None;
    let mut n: Option<usize> = None;
    let mut alphabet = None;
    let mut neighbors: Vec<Option<Vec<usize>>> = Vec::new();
    let mut tables: Vec<Option<Vec<f64>>> = Vec::new();

    fn slot<T>(v: &mut Vec<Option<T>>, i: usize) -> &mut Option<T> {
        if v.len() <= i {
            v.resize_with(i + 1, || None);
        }
        &mut v[i]
    }

    for (i, line) in text.lines().enumerate() {
        let no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(no, format!("expected key=value, got {line:?}")))?;
        let bad = |what: &str| err(no, format!("invalid {what} {value:?}"));
        match key {
            "format" => format = Some(value.to_string()),
            "n" => n = Some(value.parse().map_err(|_| bad("n"))?),
            "k" | "seed" => {}
            "alphabet" => {
                alphabet = Some(Alphabet::new(value).map_err(|e| err(no, e.to_string()))?)
            }
            _ => {
                if let Some(site) = key.strip_prefix("neighbors.") {
                    let site: usize = site.parse().map_err(|_| bad("site"))?;
                    let nb = if value.is_empty() {
                        Vec::new()
                    } else {
                        value
                            .split(',')
                            .map(|p| p.parse().map_err(|_| bad("neighbour list")))
                            .collect::<Result<_>>()?
                    };
                    *slot(&mut neighbors, site) = Some(nb);
                } else if let Some(site) = key.strip_prefix("table.") {
                    let site: usize = site.parse().map_err(|_| bad("site"))?;
                    let t = value
                        .split(',')
                        .map(|p| p.parse().map_err(|_| bad("table")))
                        .collect::<Result<_>>()?;
                    *slot(&mut tables, site) = Some(t);
                } else {
                    return Err(err(no, format!("unknown key {key:?}")));
                }
            }
        }
    }
    if format.as_deref() != Some(SPEC_FORMAT) {
        return Err(Error::Data(format!(
            "{source}: expected format={SPEC_FORMAT}"
        )));
    }
    let n = n.ok_or_else(|| Error::Data(format!("{source}: missing n")))?;
    let alphabet = alphabet.ok_or_else(|| Error::Data(format!("{source}: missing alphabet")))?;
    let complete = |len: usize| len == n;
    if !complete(neighbors.len()) || !complete(tables.len()) {
        return Err(Error::Data(format!("{source}: expected {n} sites")));
    }
    let neighbors: Option<Vec<_>> = neighbors.into_iter().collect();
    let tables: Option<Vec<_>> = tables.into_iter().collect();
    match (neighbors, tables) {
        (Some(nb), Some(t)) => NkLandscape::from_parts(alphabet, nb, t),
        _ => Err(Error::Data(format!("{source}: missing site entries"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{load_lookup, LookupOptions};

    #[test]
    fn table_header_records_column_maximum() {
        let dir = tempfile::tempdir().unwrap();
        let out = gen_nk(10, 2, 2, 7, &dir.path().join("nk"), true).unwrap();
        let text = fs::read_to_string(out.table_path.as_ref().unwrap()).unwrap();
        let rows: Vec<(&str, f64)> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| {
                let (s, y) = l.split_once('\t').unwrap();
                (s, y.parse().unwrap())
            })
            .collect();
        assert_eq!(rows.len(), 1024);
        let max = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        let header = text.lines().next().unwrap();
        let parts: Vec<&str> = header.split_whitespace().collect();
        assert_eq!(parts[1], "optimum");
        assert_eq!(parts[2].parse::<f64>().unwrap(), max);
        assert!(rows.iter().any(|&(s, y)| s == parts[3] && y == max));
        assert_eq!(out.optimum.unwrap().1, max);
    }

    #[test]
    fn same_seed_same_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = gen_nk(8, 3, 3, 11, &dir.path().join("a"), false).unwrap();
        let b = gen_nk(8, 3, 3, 11, &dir.path().join("b"), false).unwrap();
        for (x, y) in [
            (&a.spec_path, &b.spec_path),
            (
                a.table_path.as_ref().unwrap(),
                b.table_path.as_ref().unwrap(),
            ),
        ] {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
    }

    #[test]
    fn spec_reloads_bit_identically() {
        let dir = tempfile::tempdir().unwrap();
        let out = gen_nk(9, 2, 4, 3, &dir.path().join("x"), false).unwrap();
        let loaded = load_nk_spec(&out.spec_path).unwrap();
        assert_eq!(loaded, nk_landscape(9, 2, 4, 3).unwrap());
    }

    #[test]
    fn additive_table_decomposes_per_site() {
        // With K = 0 each site contributes independently, so flipping one
        // site changes fitness by the same amount whatever the background.
        let dir = tempfile::tempdir().unwrap();
        let out = gen_nk(6, 0, 2, 5, &dir.path().join("add"), true).unwrap();
        let table = load_lookup(out.table_path.unwrap(), &LookupOptions::default()).unwrap();
        let alphabet = table.alphabet().clone();
        let entries: Vec<(String, f64)> = table
            .entries()
            .map(|(s, y)| (alphabet.render(s), y))
            .collect();
        let lookup: std::collections::HashMap<&str, f64> =
            entries.iter().map(|(s, y)| (s.as_str(), *y)).collect();
        for site in 0..6 {
            let mut deltas = Vec::new();
            for (s, y) in &entries {
                let mut chars: Vec<char> = s.chars().collect();
                if chars[site] != alphabet.symbols()[0] {
                    continue;
                }
                chars[site] = alphabet.symbols()[1];
                let flipped: String = chars.into_iter().collect();
                deltas.push(lookup[flipped.as_str()] - y);
            }
            assert_eq!(deltas.len(), 32);
            for d in &deltas {
                assert!(
                    (d - deltas[0]).abs() < 1e-12,
                    "site {site}: {d} vs {}",
                    deltas[0]
                );
            }
        }
    }

    #[test]
    fn oversize_enumeration_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("big");
        assert!(matches!(
            gen_nk(21, 1, 2, 0, &stem, true),
            Err(Error::Input(_))
        ));
        let out = gen_nk(21, 1, 2, 0, &stem, false).unwrap();
        assert!(out.table_path.is_none());
        assert!(out.spec_path.exists());
    }
}
