//! Flat `key=value` campaign configuration with dotted sections.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::acquisition::{AcquisitionConfig, KgConfig};
use crate::error::{Error, Result};
use crate::explorer::LambdaPolicy;
use crate::surrogate::{
    Architecture, ConvRegressorConfig, Pooling, RecurrentRegressorConfig, TrainConfig,
};

#[derive(Clone, Debug, PartialEq)]
pub enum LandscapeSpec {
    /// Tab-separated `sequence<TAB>score` table.
    Lookup {
        path: PathBuf,
        negate: bool,
        alphabet: Option<String>,
    },
    /// Seeded NK landscape over the first `alphabet_size` amino-acid letters,
    /// either inline or read from a spec file written by `gen-nk`.
    Nk {
        n: usize,
        k: usize,
        alphabet_size: usize,
        seed: u64,
        path: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    BatchBo,
    Random,
    PexGreedy,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::BatchBo => "batch_bo",
            Method::Random => "random",
            Method::PexGreedy => "pex_greedy",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch_bo" => Ok(Method::BatchBo),
            "random" => Ok(Method::Random),
            "pex_greedy" => Ok(Method::PexGreedy),
            other => Err(Error::input(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignConfig {
    pub landscape: LandscapeSpec,
    pub wild_type: Option<String>,
    pub method: Method,
    pub surrogate: Architecture,
    pub members: usize,
    pub warm_start: bool,
    pub train: TrainConfig,
    pub acquisition: AcquisitionConfig,
    pub lambda: LambdaPolicy,
    pub radius: usize,
    pub pool_size: usize,
    pub rounds: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

const KNOWN_KEYS: &[&str] = &[
    "landscape.kind",
    "landscape.path",
    "landscape.negate",
    "landscape.alphabet",
    "landscape.wild_type",
    "landscape.nk.n",
    "landscape.nk.k",
    "landscape.nk.alphabet_size",
    "landscape.nk.seed",
    "method",
    "surrogate.kind",
    "surrogate.members",
    "surrogate.warm_start",
    "surrogate.conv.channels",
    "surrogate.conv.kernel_size",
    "surrogate.conv.hidden",
    "surrogate.conv.pooling",
    "surrogate.recurrent.hidden",
    "train.epochs",
    "train.batch_size",
    "train.learning_rate",
    "train.bootstrap",
    "acquisition.kind",
    "acquisition.beta",
    "acquisition.kg.fantasies",
    "acquisition.kg.inner_pool",
    "acquisition.kg.update_steps",
    "acquisition.kg.update_lr",
    "acquisition.kg.candidates",
    "proximal.lambda",
    "proximal.radius",
    "pool.size",
    "campaign.rounds",
    "campaign.batch_size",
    "campaign.seeds",
    "output.dir",
];

/// Keys that do not change what a single seed computes.
const UNHASHED_KEYS: &[&str] = &["campaign.seeds", "output.dir"];

struct Fields {
    map: BTreeMap<String, String>,
}

impl Fields {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e: T::Err| Error::config(key, format!("cannot parse {v:?}: {e}"))),
        }
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let v = self
            .raw(key)
            .ok_or_else(|| Error::config(key, "required key is missing"))?;
        v.parse()
            .map_err(|e: T::Err| Error::config(key, format!("cannot parse {v:?}: {e}")))
    }

    fn positive(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.get(key, default)?;
        if v == 0 {
            return Err(Error::config(key, "must be at least 1"));
        }
        Ok(v)
    }

    fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|e: T::Err| Error::config(key, format!("cannot parse {p:?}: {e}")))
                })
                .collect(),
        }
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Shortest decimal that parses back to the same double.
fn real(v: f64) -> String {
    format!("{v:?}")
}

impl CampaignConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        // Relative landscape paths are taken relative to the config file.
        let base = path.parent().unwrap_or(Path::new(""));
        match &mut cfg.landscape {
            LandscapeSpec::Lookup { path: p, .. } | LandscapeSpec::Nk { path: Some(p), .. } => {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            LandscapeSpec::Nk { path: None, .. } => {}
        }
        Ok(cfg)
    }

    /// Parses config text; `source` names the text in error messages.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: source.to_string(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if !KNOWN_KEYS.contains(&k) {
                return Err(Error::config(k, "unknown key"));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(parse_err(format!("key {k} given twice")));
            }
        }
        Self::from_fields(&Fields { map })
    }

    fn from_fields(f: &Fields) -> Result<Self> {
        let kind: String = f.required("landscape.kind")?;
        let path: Option<PathBuf> = f.raw("landscape.path").map(PathBuf::from);
        let landscape = match kind.as_str() {
            "lookup" => LandscapeSpec::Lookup {
                path: path.ok_or_else(|| {
                    Error::config("landscape.path", "lookup landscapes need a path")
                })?,
                negate: f.get("landscape.negate", false)?,
                alphabet: f.raw("landscape.alphabet").map(str::to_string),
            },
            "nk" => {
                if path.is_some() {
                    for key in ["landscape.nk.n", "landscape.nk.k"] {
                        if f.raw(key).is_some() {
                            return Err(Error::config(key, "conflicts with landscape.path"));
                        }
                    }
                    LandscapeSpec::Nk {
                        n: 0,
                        k: 0,
                        alphabet_size: 0,
                        seed: 0,
                        path,
                    }
                } else {
                    LandscapeSpec::Nk {
                        n: f.required("landscape.nk.n")?,
                        k: f.required("landscape.nk.k")?,
                        alphabet_size: f.get("landscape.nk.alphabet_size", 2)?,
                        seed: f.get("landscape.nk.seed", 0)?,
                        path: None,
                    }
                }
            }
            other => {
                return Err(Error::config(
                    "landscape.kind",
                    format!("expected lookup or nk, got {other:?}"),
                ))
            }
        };

        let surrogate = match f.get("surrogate.kind", String::from("conv"))?.as_str() {
            "conv" => {
                let d = ConvRegressorConfig::default();
                let pooling = match f
                    .get("surrogate.conv.pooling", String::from("flatten"))?
                    .as_str()
                {
                    "flatten" => Pooling::Flatten,
                    "mean" => Pooling::Mean,
                    other => {
                        return Err(Error::config(
                            "surrogate.conv.pooling",
                            format!("expected flatten or mean, got {other:?}"),
                        ))
                    }
                };
                Architecture::Conv(ConvRegressorConfig {
                    channels: f.list("surrogate.conv.channels", d.channels)?,
                    kernel_size: f.get("surrogate.conv.kernel_size", d.kernel_size)?,
                    hidden_dense: f.get("surrogate.conv.hidden", d.hidden_dense)?,
                    pooling,
                })
            }
            "recurrent" => Architecture::Recurrent(RecurrentRegressorConfig {
                hidden_size: f.get(
                    "surrogate.recurrent.hidden",
                    RecurrentRegressorConfig::default().hidden_size,
                )?,
            }),
            other => {
                return Err(Error::config(
                    "surrogate.kind",
                    format!("expected conv or recurrent, got {other:?}"),
                ))
            }
        };
        surrogate
            .validate()
            .map_err(|e| Error::config("surrogate", e.to_string()))?;

        let td = TrainConfig::default();
        let train = TrainConfig {
            epochs: f.positive("train.epochs", td.epochs)?,
            batch_size: f.positive("train.batch_size", td.batch_size)?,
            learning_rate: f.get("train.learning_rate", td.learning_rate)?,
            bootstrap: f.get("train.bootstrap", td.bootstrap)?,
            track_loss: false,
        };
        train
            .validate()
            .map_err(|e| Error::config("train.learning_rate", e.to_string()))?;

        let ad = AcquisitionConfig::default();
        let kd = KgConfig::default();
        let acquisition = AcquisitionConfig {
            kind: f.get("acquisition.kind", ad.kind)?,
            beta: f.get("acquisition.beta", ad.beta)?,
            kg: KgConfig {
                n_fantasies: f.positive("acquisition.kg.fantasies", kd.n_fantasies)?,
                inner_pool_size: f.positive("acquisition.kg.inner_pool", kd.inner_pool_size)?,
                update_steps: f.positive("acquisition.kg.update_steps", kd.update_steps)?,
                update_lr: f.get("acquisition.kg.update_lr", kd.update_lr)?,
                candidates: f.positive("acquisition.kg.candidates", kd.candidates)?,
            },
        };
        acquisition
            .validate()
            .map_err(|e| Error::config("acquisition", e.to_string()))?;

        let lambda = match f.get("proximal.lambda", String::from("auto"))?.as_str() {
            "auto" => LambdaPolicy::Auto,
            v => {
                let l: f64 = v.parse().map_err(|_| {
                    Error::config(
                        "proximal.lambda",
                        format!("expected auto or a number, got {v:?}"),
                    )
                })?;
                if !(l >= 0.0 && l.is_finite()) {
                    return Err(Error::config("proximal.lambda", "must be non-negative"));
                }
                LambdaPolicy::Fixed(l)
            }
        };

        let seeds: Vec<u64> = f.list("campaign.seeds", vec![0])?;
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if seeds.is_empty() || sorted.len() != seeds.len() {
            return Err(Error::config(
                "campaign.seeds",
                "seeds must be non-empty and distinct",
            ));
        }

        Ok(CampaignConfig {
            landscape,
            wild_type: f.raw("landscape.wild_type").map(str::to_string),
            method: f.get("method", Method::BatchBo)?,
            surrogate,
            members: f.positive("surrogate.members", 5)?,
            warm_start: f.get("surrogate.warm_start", true)?,
            train,
            acquisition,
            lambda,
            radius: f.positive("proximal.radius", 2)?,
            pool_size: f.positive("pool.size", 512)?,
            rounds: f.positive("campaign.rounds", 10)?,
            batch_size: f.positive("campaign.batch_size", 16)?,
            seeds,
            output_dir: PathBuf::from(f.get("output.dir", String::from("runs"))?),
        })
    }

    /// Every setting, defaults included, as canonical `key=value` pairs.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        match &self.landscape {
            LandscapeSpec::Lookup {
                path,
                negate,
                alphabet,
            } => {
                put("landscape.kind", "lookup".into());
                put("landscape.path", path.display().to_string());
                put("landscape.negate", negate.to_string());
                if let Some(a) = alphabet {
                    put("landscape.alphabet", a.clone());
                }
            }
            LandscapeSpec::Nk {
                n,
                k,
                alphabet_size,
                seed,
                path,
            } => {
                put("landscape.kind", "nk".into());
                match path {
                    Some(p) => put("landscape.path", p.display().to_string()),
                    None => {
                        put("landscape.nk.n", n.to_string());
                        put("landscape.nk.k", k.to_string());
                        put("landscape.nk.alphabet_size", alphabet_size.to_string());
                        put("landscape.nk.seed", seed.to_string());
                    }
                }
            }
        }
        if let Some(w) = &self.wild_type {
            put("landscape.wild_type", w.clone());
        }
        put("method", self.method.name().into());
        match &self.surrogate {
            Architecture::Conv(c) => {
                put("surrogate.kind", "conv".into());
                put("surrogate.conv.channels", join(&c.channels));
                put("surrogate.conv.kernel_size", c.kernel_size.to_string());
                put("surrogate.conv.hidden", c.hidden_dense.to_string());
                put(
                    "surrogate.conv.pooling",
                    match c.pooling {
                        Pooling::Flatten => "flatten",
                        Pooling::Mean => "mean",
                    }
                    .into(),
                );
            }
            Architecture::Recurrent(r) => {
                put("surrogate.kind", "recurrent".into());
                put("surrogate.recurrent.hidden", r.hidden_size.to_string());
            }
        }
        put("surrogate.members", self.members.to_string());
        put("surrogate.warm_start", self.warm_start.to_string());
        put("train.epochs", self.train.epochs.to_string());
        put("train.batch_size", self.train.batch_size.to_string());
        put("train.learning_rate", real(self.train.learning_rate));
        put("train.bootstrap", self.train.bootstrap.to_string());
        let a = &self.acquisition;
        put("acquisition.kind", a.kind.name().into());
        put("acquisition.beta", real(a.beta));
        put("acquisition.kg.fantasies", a.kg.n_fantasies.to_string());
        put(
            "acquisition.kg.inner_pool",
            a.kg.inner_pool_size.to_string(),
        );
        put("acquisition.kg.update_steps", a.kg.update_steps.to_string());
        put("acquisition.kg.update_lr", real(a.kg.update_lr));
        put("acquisition.kg.candidates", a.kg.candidates.to_string());
        put(
            "proximal.lambda",
            match self.lambda {
                LambdaPolicy::Auto => "auto".into(),
                LambdaPolicy::Fixed(l) => real(l),
            },
        );
        put("proximal.radius", self.radius.to_string());
        put("pool.size", self.pool_size.to_string());
        put("campaign.rounds", self.rounds.to_string());
        put("campaign.batch_size", self.batch_size.to_string());
        put("campaign.seeds", join(&self.seeds));
        put("output.dir", self.output_dir.display().to_string());
        m
    }

    /// Sorted `key=value` lines, one per setting.
    pub fn echo(&self) -> String {
        self.to_map()
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// SHA-256 over the echo without seeds and output directory: runs that
    /// share it are comparable seed for seed.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.to_map() {
            if !UNHASHED_KEYS.contains(&k.as_str()) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::AcquisitionKind;

    const NK: &str = "landscape.kind=nk\nlandscape.nk.n=10\nlandscape.nk.k=2\n";

    #[test]
    fn defaults_fill_in() {
        let cfg = CampaignConfig::parse(NK, "t").unwrap();
        assert_eq!(cfg.method, Method::BatchBo);
        assert_eq!(cfg.rounds, 10);
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.pool_size, 512);
        assert_eq!(cfg.radius, 2);
        assert_eq!(cfg.lambda, LambdaPolicy::Auto);
        assert_eq!(cfg.acquisition.beta, 2.0);
        assert_eq!(cfg.acquisition.kind, AcquisitionKind::Kg);
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(
            cfg.landscape,
            LandscapeSpec::Nk {
                n: 10,
                k: 2,
                alphabet_size: 2,
                seed: 0,
                path: None
            }
        );
    }

    #[test]
    fn echo_roundtrips() {
        let text = format!(
            "{NK}# comment\n\nmethod = pex_greedy\nsurrogate.conv.channels=16, 8\ntrain.learning_rate=0.003\nproximal.lambda=0.25\ncampaign.seeds=3,1,2\nacquisition.kind=ei\n"
        );
        let cfg = CampaignConfig::parse(&text, "t").unwrap();
        let again = CampaignConfig::parse(&cfg.echo(), "echo").unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.echo(), again.echo());
        assert_eq!(cfg.seeds, vec![3, 1, 2]);
    }

    #[test]
    fn hash_ignores_seeds_and_output_only() {
        let a = CampaignConfig::parse(NK, "t").unwrap();
        let b =
            CampaignConfig::parse(&format!("{NK}campaign.seeds=4,5\noutput.dir=x\n"), "t").unwrap();
        let c = CampaignConfig::parse(&format!("{NK}campaign.rounds=11\n"), "t").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            ("landscape.kind=nk\n", "landscape.nk.n"),
            (&format!("{NK}campaign.rounds=0\n"), "campaign.rounds"),
            (&format!("{NK}campaign.seeds=1,1\n"), "campaign.seeds"),
            (&format!("{NK}proximal.lambda=-1\n"), "proximal.lambda"),
            (&format!("{NK}bogus.key=1\n"), "bogus.key"),
            (
                &format!("{NK}acquisition.kind=thompson\n"),
                "acquisition.kind",
            ),
            ("landscape.kind=lookup\n", "landscape.path"),
        ];
        for (text, field) in cases {
            match CampaignConfig::parse(text, "t") {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            CampaignConfig::parse(&format!("{NK}no equals sign\n"), "cfg.txt"),
            Err(Error::Parse { line: 4, .. })
        ));
    }
}
