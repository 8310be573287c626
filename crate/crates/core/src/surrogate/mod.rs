//! Deep-ensemble surrogate of the fitness landscape.
//!
//! Each member is trained independently (own initialisation, own bootstrap
//! resample) on standardized targets by minibatch Adam on mean squared error.
//! The ensemble's predictive mean and population variance stand in for a
//! Gaussian-process posterior.

mod gradcheck;
mod network;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::sequence::Sequence;

pub use gradcheck::{
    gradient_check, gradient_check_regressor, gradient_check_with, GradCheckReport,
};
pub use network::{
    encode_batch, Architecture, ConvRegressorConfig, Forward, Pooling, RecurrentRegressorConfig,
    Regressor,
};

/// Observed `(sequence, score)` pairs in insertion order.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pairs: Vec<(Sequence, f64)>,
    index: HashMap<Sequence, usize>,
}

impl Dataset {
    pub fn new() -> Self {
        Dataset::default()
    }

    /// Appends a measurement. Returns `false` for an exact repeat; a repeat
    /// with a different score is a data error.
    pub fn push(&mut self, seq: Sequence, score: f64) -> Result<bool> {
        if let Some(&i) = self.index.get(&seq) {
            if self.pairs[i].1 != score {
                return Err(Error::Data(format!(
                    "sequence already measured with score {} (new score {score})",
                    self.pairs[i].1
                )));
            }
            return Ok(false);
        }
        self.index.insert(seq.clone(), self.pairs.len());
        self.pairs.push((seq, score));
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(Sequence, f64)] {
        &self.pairs
    }

    pub fn contains(&self, seq: &Sequence) -> bool {
        self.index.contains_key(seq)
    }

    pub fn get(&self, seq: &Sequence) -> Option<f64> {
        self.index.get(seq).map(|&i| self.pairs[i].1)
    }

    pub fn max_score(&self) -> Option<f64> {
        self.pairs.iter().map(|p| p.1).reduce(f64::max)
    }

    pub fn sequences(&self) -> impl Iterator<Item = &Sequence> {
        self.pairs.iter().map(|p| &p.0)
    }

    pub fn targets(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.1)
    }
}

impl FromIterator<(Sequence, f64)> for Dataset {
    /// Panics on conflicting duplicates.
    fn from_iter<I: IntoIterator<Item = (Sequence, f64)>>(iter: I) -> Self {
        let mut d = Dataset::new();
        for (s, y) in iter {
            d.push(s, y).expect("consistent measurements");
        }
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Train each member on a with-replacement resample of the data.
    pub bootstrap: bool,
    /// Record the full-sample loss after every epoch.
    pub track_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            bootstrap: true,
            track_loss: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::input("epochs and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::input("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// Final mean squared error (standardized units) of each member on its
    /// own training sample.
    pub final_loss: Vec<f64>,
    /// Per-member, per-epoch loss; empty unless `track_loss` was set.
    pub loss_history: Vec<Vec<f64>>,
}

/// Affine map between raw scores and the zero-mean, unit-variance training
/// scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub scale: f64,
}

impl Standardizer {
    pub const IDENTITY: Standardizer = Standardizer {
        mean: 0.0,
        scale: 1.0,
    };

    /// Population statistics of `ys`; a zero spread maps to unit scale.
    pub fn fit(ys: &[f64]) -> Self {
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        Standardizer {
            mean,
            scale: if sd > 1e-12 { sd } else { 1.0 },
        }
    }

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.mean) / self.scale
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        self.mean + self.scale * z
    }
}

/// Adam moments for one member's parameter list.
struct Adam {
    lr: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &[Tensor], lr: f64) -> Self {
        Adam {
            lr,
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    fn step(&mut self, params: &mut [Tensor], grads: &[&[f64]]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], grads[i]);
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = Self::BETA1 * m[j] + (1.0 - Self::BETA1) * g[j];
                v[j] = Self::BETA2 * v[j] + (1.0 - Self::BETA2) * g[j] * g[j];
                *w -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

const PREDICT_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    arch: Architecture,
    length: usize,
    vocab: usize,
    members: Vec<Regressor>,
    member_seeds: Vec<u64>,
    standardizer: Option<Standardizer>,
}

/// SplitMix64 step, used to derive member seeds from one base seed.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Ensemble {
    /// `n_members` regressors, member `i` initialised from a seed derived
    /// from `(seed, i)`.
    pub fn new(
        arch: Architecture,
        length: usize,
        vocab: usize,
        n_members: usize,
        seed: u64,
    ) -> Result<Self> {
        let seeds = (0..n_members as u64)
            .map(|i| splitmix(seed ^ splitmix(i)))
            .collect();
        Self::with_member_seeds(arch, length, vocab, seeds)
    }

    pub fn with_member_seeds(
        arch: Architecture,
        length: usize,
        vocab: usize,
        member_seeds: Vec<u64>,
    ) -> Result<Self> {
        if member_seeds.is_empty() {
            return Err(Error::input("ensemble needs at least one member"));
        }
        let members = member_seeds
            .iter()
            .map(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                Regressor::new(arch.clone(), length, vocab, &mut rng)
            })
            .collect::<Result<_>>()?;
        Ok(Ensemble {
            arch,
            length,
            vocab,
            members,
            member_seeds,
            standardizer: None,
        })
    }

    /// Wraps already-built members, e.g. hand-set or cloned regressors.
    pub fn from_members(members: Vec<Regressor>, standardizer: Standardizer) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::input("ensemble needs at least one member"))?;
        let (arch, length, vocab) = (first.architecture().clone(), first.length(), first.vocab());
        if members
            .iter()
            .any(|m| m.architecture() != &arch || m.length() != length || m.vocab() != vocab)
        {
            return Err(Error::input("ensemble members must share one architecture"));
        }
        Ok(Ensemble {
            member_seeds: (0..members.len() as u64).collect(),
            arch,
            length,
            vocab,
            members,
            standardizer: Some(standardizer),
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn members(&self) -> &[Regressor] {
        &self.members
    }

    pub fn member_seeds(&self) -> &[u64] {
        &self.member_seeds
    }

    pub fn standardizer(&self) -> Option<Standardizer> {
        self.standardizer
    }

    pub fn is_trained(&self) -> bool {
        self.standardizer.is_some()
    }

    /// Re-initialises every member from its seed and forgets training.
    pub fn reset(&mut self) -> Result<()> {
        let fresh = Self::with_member_seeds(
            self.arch.clone(),
            self.length,
            self.vocab,
            self.member_seeds.clone(),
        )?;
        *self = fresh;
        Ok(())
    }

    /// Trains every member, starting from its current parameters.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        data: &Dataset,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(Error::input("cannot fit on an empty dataset"));
        }
        cfg.validate()?;
        let ys: Vec<f64> = data.targets().collect();
        let standardizer = Standardizer::fit(&ys);
        let x = encode_batch(data.sequences(), self.length, self.vocab)?;
        let z: Vec<f64> = ys.iter().map(|&y| standardizer.standardize(y)).collect();
        // Members with equal seeds see equal minibatch streams.
        let nonce: u64 = rng.random();
        let stream_seeds: Vec<u64> = self
            .member_seeds
            .iter()
            .map(|&s| splitmix(s ^ splitmix(nonce)))
            .collect();

        let results: Vec<Result<(f64, Vec<f64>)>> = self
            .members
            .par_iter_mut()
            .zip(stream_seeds)
            .enumerate()
            .map(|(i, (member, seed))| train_member(i, member, &x, &z, cfg, seed))
            .collect();

        let mut report = TrainReport::default();
        for r in results {
            let (loss, history) = r?;
            report.final_loss.push(loss);
            if cfg.track_loss {
                report.loss_history.push(history);
            }
        }
        self.standardizer = Some(standardizer);
        Ok(report)
    }

    fn trained(&self) -> Result<Standardizer> {
        self.standardizer
            .ok_or_else(|| Error::State("ensemble has not been fitted".into()))
    }

    /// De-standardized outputs, `[member][sequence]`.
    pub fn member_predictions(&self, seqs: &[Sequence]) -> Result<Vec<Vec<f64>>> {
        let st = self.trained()?;
        let mut out = vec![Vec::with_capacity(seqs.len()); self.members.len()];
        for chunk in seqs.chunks(PREDICT_CHUNK) {
            let x = encode_batch(chunk, self.length, self.vocab)?;
            for (m, member) in self.members.iter().enumerate() {
                out[m].extend(member.predict(&x).into_iter().map(|z| st.destandardize(z)));
            }
        }
        Ok(out)
    }

    pub fn predict_mean_var(&self, seq: &Sequence) -> Result<(f64, f64)> {
        Ok(self.predict_batch(std::slice::from_ref(seq))?[0])
    }

    /// Mean and population variance across members for each sequence.
    pub fn predict_batch(&self, seqs: &[Sequence]) -> Result<Vec<(f64, f64)>> {
        let preds = self.member_predictions(seqs)?;
        let n = self.members.len() as f64;
        Ok((0..seqs.len())
            .map(|j| {
                let mean = preds.iter().map(|p| p[j]).sum::<f64>() / n;
                let var = preds.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / n;
                (mean, var)
            })
            .collect())
    }

    /// Penultimate features of each member, `[member][row * dim + k]`.
    pub fn member_features(&self, seqs: &[Sequence]) -> Result<Vec<Vec<f64>>> {
        self.trained()?;
        let mut out = vec![Vec::new(); self.members.len()];
        for chunk in seqs.chunks(PREDICT_CHUNK) {
            let x = encode_batch(chunk, self.length, self.vocab)?;
            for (m, member) in self.members.iter().enumerate() {
                out[m].extend(member.features(&x));
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            architecture: self.arch.clone(),
            length: self.length,
            vocab: self.vocab,
            member_seeds: self.member_seeds.clone(),
            standardizer: self.standardizer,
            members: self
                .members
                .iter()
                .map(|m| m.params().iter().map(|p| p.data().to_vec()).collect())
                .collect(),
        };
        let text = serde_json::to_string(&ckpt).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported format {:?}",
                ckpt.format
            )));
        }
        if ckpt.members.len() != ckpt.member_seeds.len() || ckpt.members.is_empty() {
            return Err(Error::Checkpoint("member count mismatch".into()));
        }
        let members = ckpt
            .members
            .into_iter()
            .map(|flat| {
                Regressor::from_params(ckpt.architecture.clone(), ckpt.length, ckpt.vocab, flat)
            })
            .collect::<Result<_>>()?;
        Ok(Ensemble {
            arch: ckpt.architecture,
            length: ckpt.length,
            vocab: ckpt.vocab,
            members,
            member_seeds: ckpt.member_seeds,
            standardizer: ckpt.standardizer,
        })
    }
}

const CHECKPOINT_FORMAT: &str = "proxbo-ensemble/1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    architecture: Architecture,
    length: usize,
    vocab: usize,
    member_seeds: Vec<u64>,
    standardizer: Option<Standardizer>,
    members: Vec<Vec<Vec<f64>>>,
}

fn sample_loss(member: &Regressor, x: &Tensor, z: &[f64], rows: &[usize]) -> f64 {
    let (len, vocab) = (member.length(), member.vocab());
    let stride = len * vocab;
    let mut total = 0.0;
    for chunk in rows.chunks(PREDICT_CHUNK) {
        let mut data = Vec::with_capacity(chunk.len() * stride);
        for &r in chunk {
            data.extend_from_slice(&x.data()[r * stride..(r + 1) * stride]);
        }
        let pred = member.predict(&Tensor::new(vec![chunk.len(), len, vocab], data));
        total += pred
            .iter()
            .zip(chunk)
            .map(|(p, &r)| (p - z[r]).powi(2))
            .sum::<f64>();
    }
    total / rows.len() as f64
}

fn train_member(
    index: usize,
    member: &mut Regressor,
    x: &Tensor,
    z: &[f64],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = z.len();
    let mut rows: Vec<usize> = if cfg.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let (len, vocab) = (member.length(), member.vocab());
    let stride = len * vocab;
    let mut adam = Adam::new(member.params(), cfg.learning_rate);
    let mut history = Vec::new();

    for _ in 0..cfg.epochs {
        rows.shuffle(&mut rng);
        for batch in rows.chunks(cfg.batch_size) {
            let mut data = Vec::with_capacity(batch.len() * stride);
            for &r in batch {
                data.extend_from_slice(&x.data()[r * stride..(r + 1) * stride]);
            }
            let mut tape = Tape::new();
            let input = tape.constant(Tensor::new(vec![batch.len(), len, vocab], data));
            let fwd = member.forward(&mut tape, input);
            let loss = tape.mse(fwd.output, batch.iter().map(|&r| z[r]).collect());
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Training {
                    member: index,
                    message: format!("loss became {value}"),
                });
            }
            let grads = tape.backward(loss);
            let g: Vec<&[f64]> = fwd
                .params
                .iter()
                .map(|&p| grads.get(p).expect("every parameter reaches the loss"))
                .collect();
            adam.step(member.params_mut(), &g);
        }
        if cfg.track_loss {
            history.push(sample_loss(member, x, z, &rows));
        }
    }

    let final_loss = sample_loss(member, x, z, &rows);
    if !final_loss.is_finite() {
        return Err(Error::Training {
            member: index,
            message: format!("final loss is {final_loss}"),
        });
    }
    Ok((final_loss, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{nk_fitness, NkLandscape};
    use crate::sequence::Alphabet;

    fn small_conv() -> Architecture {
        Architecture::Conv(ConvRegressorConfig {
            channels: vec![8],
            kernel_size: 3,
            hidden_dense: 16,
            pooling: Pooling::Flatten,
        })
    }

    fn constant_regressor(arch: &Architecture, len: usize, vocab: usize, c: f64) -> Regressor {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut r = Regressor::new(arch.clone(), len, vocab, &mut rng).unwrap();
        let n = r.params().len();
        for p in r.params_mut() {
            p.data_mut().fill(0.0);
        }
        r.params_mut()[n - 1].data_mut()[0] = c;
        r
    }

    #[test]
    fn dataset_rejects_conflicts() {
        let mut d = Dataset::new();
        let s = Sequence::new(vec![0, 1]);
        assert!(d.push(s.clone(), 1.0).unwrap());
        assert!(!d.push(s.clone(), 1.0).unwrap());
        assert!(d.push(s, 2.0).is_err());
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn standardizer_roundtrip() {
        let st = Standardizer::fit(&[70.0, 95.5, 121.25, 113.0]);
        for y in [-3.0, 0.0, 71.58, 1e4] {
            assert!((st.destandardize(st.standardize(y)) - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
        assert_eq!(Standardizer::fit(&[2.0, 2.0]).scale, 1.0);
    }

    #[test]
    fn hand_set_members_give_population_variance() {
        let arch = small_conv();
        let members: Vec<Regressor> = (1..=5)
            .map(|c| constant_regressor(&arch, 4, 2, c as f64))
            .collect();
        let ens = Ensemble::from_members(members, Standardizer::IDENTITY).unwrap();
        let (mean, var) = ens
            .predict_mean_var(&Sequence::new(vec![0, 1, 1, 0]))
            .unwrap();
        assert!((mean - 3.0).abs() < 1e-12);
        assert!((var - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_member_and_clones_have_zero_variance() {
        let mut one = Ensemble::new(small_conv(), 4, 2, 1, 3).unwrap();
        let data: Dataset = (0..16)
            .map(|i| (Sequence::from_index(i, 4, 2), i as f64))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = TrainConfig {
            epochs: 5,
            ..Default::default()
        };
        one.fit(&data, &cfg, &mut rng).unwrap();
        let seqs: Vec<Sequence> = data.sequences().cloned().collect();
        assert!(one.predict_batch(&seqs).unwrap().iter().all(|p| p.1 == 0.0));

        let member = one.members()[0].clone();
        let clones = Ensemble::from_members(vec![member; 4], one.standardizer().unwrap()).unwrap();
        assert!(clones
            .predict_batch(&seqs)
            .unwrap()
            .iter()
            .all(|p| p.1 == 0.0));
    }

    #[test]
    fn untrained_ensemble_refuses_to_predict() {
        let ens = Ensemble::new(small_conv(), 4, 2, 2, 0).unwrap();
        assert!(matches!(
            ens.predict_mean_var(&Sequence::new(vec![0; 4])),
            Err(Error::State(_))
        ));
        let mut ens = ens;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(ens
            .fit(&Dataset::new(), &TrainConfig::default(), &mut rng)
            .is_err());
    }

    #[test]
    fn constant_targets_are_learned() {
        let data: Dataset = (0..32)
            .map(|i| (Sequence::from_index(i * 7 % 256, 8, 2), 4.25))
            .collect();
        let mut ens = Ensemble::new(small_conv(), 8, 2, 3, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        ens.fit(&data, &TrainConfig::default(), &mut rng).unwrap();
        let probe: Vec<Sequence> = data.sequences().cloned().collect();
        for per_member in ens.member_predictions(&probe).unwrap() {
            for p in per_member {
                assert!((p - 4.25).abs() < 1e-2, "{p}");
            }
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let land = NkLandscape::generate(6, 1, Alphabet::new("01").unwrap(), 5).unwrap();
        let data: Dataset = (0..40)
            .map(|i| {
                let s = Sequence::from_index(i, 6, 2);
                let y = nk_fitness(&land, &s).unwrap();
                (s, y)
            })
            .collect();
        let run = || {
            let mut ens = Ensemble::new(small_conv(), 6, 2, 3, 8).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let cfg = TrainConfig {
                epochs: 10,
                ..Default::default()
            };
            ens.fit(&data, &cfg, &mut rng).unwrap();
            ens
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn predict_batch_is_order_equivariant() {
        let mut ens = Ensemble::new(small_conv(), 5, 2, 3, 1).unwrap();
        let data: Dataset = (0..20)
            .map(|i| (Sequence::from_index(i, 5, 2), (i as f64).sin()))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = TrainConfig {
            epochs: 10,
            ..Default::default()
        };
        ens.fit(&data, &cfg, &mut rng).unwrap();
        let seqs: Vec<Sequence> = (0..32).map(|i| Sequence::from_index(i, 5, 2)).collect();
        let fwd = ens.predict_batch(&seqs).unwrap();
        let rev: Vec<Sequence> = seqs.iter().rev().cloned().collect();
        let mut back = ens.predict_batch(&rev).unwrap();
        back.reverse();
        assert_eq!(fwd, back);
        assert_eq!(ens.predict_mean_var(&seqs[3]).unwrap(), fwd[3]);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let mut ens = Ensemble::new(
            Architecture::Recurrent(RecurrentRegressorConfig { hidden_size: 6 }),
            5,
            3,
            2,
            9,
        )
        .unwrap();
        let data: Dataset = (0..30)
            .map(|i| (Sequence::from_index(i, 5, 3), (i as f64).sqrt() * 1.37))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = TrainConfig {
            epochs: 5,
            ..Default::default()
        };
        ens.fit(&data, &cfg, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ens.json");
        ens.save(&path).unwrap();
        let loaded = Ensemble::load(&path).unwrap();
        assert_eq!(loaded, ens);
        let seqs: Vec<Sequence> = data.sequences().cloned().collect();
        let a = ens.predict_batch(&seqs).unwrap();
        let b = loaded.predict_batch(&seqs).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.0.to_bits(), y.0.to_bits());
            assert_eq!(x.1.to_bits(), y.1.to_bits());
        }
    }
}
