//! Regressor architectures built on the gradient tape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::sequence::{write_onehot, Sequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Concatenate all positions (keeps site identity).
    Flatten,
    /// Average over positions.
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvRegressorConfig {
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub hidden_dense: usize,
    pub pooling: Pooling,
}

impl Default for ConvRegressorConfig {
    fn default() -> Self {
        ConvRegressorConfig {
            channels: vec![32, 32],
            kernel_size: 5,
            hidden_dense: 64,
            pooling: Pooling::Flatten,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentRegressorConfig {
    pub hidden_size: usize,
}

impl Default for RecurrentRegressorConfig {
    fn default() -> Self {
        RecurrentRegressorConfig { hidden_size: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Conv(ConvRegressorConfig),
    Recurrent(RecurrentRegressorConfig),
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        match self {
            Architecture::Conv(c) => {
                if c.channels.is_empty() || c.channels.contains(&0) {
                    return Err(Error::input(
                        "conv channels must be a non-empty list of widths >= 1",
                    ));
                }
                if c.kernel_size % 2 == 0 {
                    return Err(Error::input(format!(
                        "kernel size {} must be odd",
                        c.kernel_size
                    )));
                }
                if c.hidden_dense == 0 {
                    return Err(Error::input("hidden dense width must be >= 1"));
                }
            }
            Architecture::Recurrent(r) => {
                if r.hidden_size == 0 {
                    return Err(Error::input("recurrent hidden size must be >= 1"));
                }
            }
        }
        Ok(())
    }

    /// Width of the penultimate representation feeding the linear head.
    pub fn feature_dim(&self) -> usize {
        match self {
            Architecture::Conv(c) => c.hidden_dense,
            Architecture::Recurrent(r) => r.hidden_size,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Conv(_) => "conv",
            Architecture::Recurrent(_) => "recurrent",
        }
    }

    /// Parameter shapes in storage order, with each tensor's fan-in (0 for
    /// biases). The final two tensors are always the linear head.
    fn param_layout(&self, length: usize, vocab: usize) -> Vec<(Vec<usize>, usize)> {
        let mut out = Vec::new();
        match self {
            Architecture::Conv(c) => {
                let mut cin = vocab;
                for &cout in &c.channels {
                    out.push((vec![c.kernel_size, cin, cout], c.kernel_size * cin));
                    out.push((vec![cout], 0));
                    cin = cout;
                }
                let pooled = match c.pooling {
                    Pooling::Flatten => length * cin,
                    Pooling::Mean => cin,
                };
                out.push((vec![pooled, c.hidden_dense], pooled));
                out.push((vec![c.hidden_dense], 0));
                out.push((vec![c.hidden_dense, 1], c.hidden_dense));
                out.push((vec![1], 0));
            }
            Architecture::Recurrent(r) => {
                let h = r.hidden_size;
                out.push((vec![vocab, h], vocab + h));
                out.push((vec![h, h], vocab + h));
                out.push((vec![h], 0));
                out.push((vec![h, 1], h));
                out.push((vec![1], 0));
            }
        }
        out
    }
}

/// One regressor: one-hot `[L, V]` input to a scalar output.
#[derive(Clone, Debug, PartialEq)]
pub struct Regressor {
    arch: Architecture,
    length: usize,
    vocab: usize,
    params: Vec<Tensor>,
}

pub struct Forward {
    pub output: Var,
    pub features: Var,
    pub params: Vec<Var>,
}

impl Regressor {
    /// He-style uniform init (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`) for hidden
    /// weights; biases and the linear head start at zero, so an untrained
    /// member predicts the standardized mean exactly.
    pub fn new<R: Rng + ?Sized>(
        arch: Architecture,
        length: usize,
        vocab: usize,
        rng: &mut R,
    ) -> Result<Self> {
        arch.validate()?;
        if length == 0 || vocab < 2 {
            return Err(Error::input("regressor needs length >= 1 and vocab >= 2"));
        }
        let layout = arch.param_layout(length, vocab);
        let head = layout.len() - 2;
        let params = layout
            .into_iter()
            .enumerate()
            .map(|(i, (shape, fan_in))| {
                let n = shape.iter().product();
                let data = if fan_in == 0 || i >= head {
                    vec![0.0; n]
                } else {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                };
                Tensor::new(shape, data)
            })
            .collect();
        Ok(Regressor {
            arch,
            length,
            vocab,
            params,
        })
    }

    /// Builds a regressor from explicit flat parameter arrays.
    pub fn from_params(
        arch: Architecture,
        length: usize,
        vocab: usize,
        flat: Vec<Vec<f64>>,
    ) -> Result<Self> {
        arch.validate()?;
        let layout = arch.param_layout(length, vocab);
        if layout.len() != flat.len() {
            return Err(Error::input(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                flat.len()
            )));
        }
        let params = layout
            .into_iter()
            .zip(flat)
            .map(|((shape, _), data)| {
                let n: usize = shape.iter().product();
                if n != data.len() {
                    return Err(Error::input(format!(
                        "parameter of shape {shape:?} needs {n} values, got {}",
                        data.len()
                    )));
                }
                Ok(Tensor::new(shape, data))
            })
            .collect::<Result<_>>()?;
        Ok(Regressor {
            arch,
            length,
            vocab,
            params,
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

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Output-layer weights (length = feature dim) and bias.
    pub fn head(&self) -> (&[f64], f64) {
        let n = self.params.len();
        (self.params[n - 2].data(), self.params[n - 1].data()[0])
    }

    /// Records the forward pass of `input` (`[B, L, V]`) on `tape`.
    pub fn forward(&self, tape: &mut Tape, input: Var) -> Forward {
        let params: Vec<Var> = self.params.iter().map(|p| tape.param(p.clone())).collect();
        let n = params.len();
        let features = match &self.arch {
            Architecture::Conv(c) => {
                let mut h = input;
                for layer in 0..c.channels.len() {
                    let z = tape.conv1d(h, params[2 * layer], params[2 * layer + 1]);
                    h = tape.relu(z);
                }
                let pooled = match c.pooling {
                    Pooling::Flatten => tape.flatten(h),
                    Pooling::Mean => tape.mean_pool(h),
                };
                let z = tape.dense(pooled, params[n - 4], Some(params[n - 3]));
                tape.relu(z)
            }
            Architecture::Recurrent(_) => {
                let (wx, wh, b) = (params[0], params[1], params[2]);
                let mut h: Option<Var> = None;
                for pos in 0..self.length {
                    let xt = tape.position(input, pos);
                    let mut z = tape.dense(xt, wx, Some(b));
                    if let Some(prev) = h {
                        let r = tape.dense(prev, wh, None);
                        z = tape.add(z, r);
                    }
                    h = Some(tape.tanh(z));
                }
                h.expect("length >= 1")
            }
        };
        let output = tape.dense(features, params[n - 2], Some(params[n - 1]));
        Forward {
            output,
            features,
            params,
        }
    }

    /// Raw outputs for an encoded batch.
    pub fn predict(&self, input: &Tensor) -> Vec<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let f = self.forward(&mut tape, x);
        tape.value(f.output).data().to_vec()
    }

    /// Row-major `[B, feature_dim]` penultimate activations.
    pub fn features(&self, input: &Tensor) -> Vec<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let f = self.forward(&mut tape, x);
        tape.value(f.features).data().to_vec()
    }
}

/// One-hot encodes a batch into a `[B, L, V]` tensor.
pub fn encode_batch<'a>(
    seqs: impl IntoIterator<Item = &'a Sequence>,
    length: usize,
    vocab: usize,
) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut count = 0;
    for s in seqs {
        if s.len() != length {
            return Err(Error::input(format!(
                "sequence length {} does not match model length {length}",
                s.len()
            )));
        }
        if let Some(&o) = s.residues().iter().find(|&&o| o as usize >= vocab) {
            return Err(Error::input(format!(
                "residue ordinal {o} outside alphabet of size {vocab}"
            )));
        }
        let start = data.len();
        data.resize(start + length * vocab, 0.0);
        write_onehot(s, vocab, &mut data[start..]);
        count += 1;
    }
    Ok(Tensor::new(vec![count, length, vocab], data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layouts_have_expected_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Regressor::new(
            Architecture::Conv(ConvRegressorConfig::default()),
            10,
            20,
            &mut rng,
        )
        .unwrap();
        // conv1 5*20*32+32, conv2 5*32*32+32, dense 320*64+64, head 64+1
        assert_eq!(conv.param_count(), 3232 + 5152 + 20544 + 65);
        let rnn = Regressor::new(
            Architecture::Recurrent(RecurrentRegressorConfig { hidden_size: 8 }),
            6,
            4,
            &mut rng,
        )
        .unwrap();
        assert_eq!(rnn.param_count(), 4 * 8 + 64 + 8 + 8 + 1);
        assert_eq!(rnn.head().0.len(), 8);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = Architecture::Conv(ConvRegressorConfig {
            kernel_size: 4,
            ..Default::default()
        });
        assert!(bad.validate().is_err());
        let bad = Architecture::Recurrent(RecurrentRegressorConfig { hidden_size: 0 });
        assert!(bad.validate().is_err());
    }

    #[test]
    fn head_reproduces_output_from_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for arch in [
            Architecture::Conv(ConvRegressorConfig {
                channels: vec![4],
                kernel_size: 3,
                hidden_dense: 6,
                pooling: Pooling::Mean,
            }),
            Architecture::Recurrent(RecurrentRegressorConfig { hidden_size: 5 }),
        ] {
            let reg = Regressor::new(arch, 5, 3, &mut rng).unwrap();
            let seqs: Vec<Sequence> = (0..4).map(|i| Sequence::from_index(i * 17, 5, 3)).collect();
            let x = encode_batch(&seqs, 5, 3).unwrap();
            let out = reg.predict(&x);
            let feats = reg.features(&x);
            let (w, b) = reg.head();
            let h = w.len();
            for (i, &o) in out.iter().enumerate() {
                let manual: f64 = b + feats[i * h..(i + 1) * h]
                    .iter()
                    .zip(w)
                    .map(|(a, c)| a * c)
                    .sum::<f64>();
                assert!((manual - o).abs() < 1e-12);
            }
        }
    }
}
