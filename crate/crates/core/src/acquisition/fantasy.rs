//! Posterior models that can be conditioned on hypothetical measurements.

use crate::error::{Error, Result};
use crate::sequence::Sequence;
use crate::surrogate::{Dataset, Ensemble};

use super::Posterior;

/// A model whose posterior mean can be updated on fantasy outcomes.
pub trait FantasyModel: Sync {
    type State: FantasyState;

    /// Current posterior at each sequence, given the data the model was
    /// conditioned on.
    fn posteriors(&self, data: &Dataset, seqs: &[Sequence]) -> Result<Vec<Posterior>>;

    /// Precomputes whatever is needed to fantasize over `points`, which hold
    /// both the batch candidates and the inner pool.
    fn prepare(&self, data: &Dataset, points: &[Sequence]) -> Result<Self::State>;
}

pub trait FantasyState: Sync {
    /// Posterior at `points[i]`.
    fn posterior(&self, i: usize) -> Posterior;

    /// For each fantasy (a row of `outcomes`, one value per `batch` entry),
    /// the maximum over `pool` of the updated posterior mean plus `shift`.
    /// `outcomes` is row-major `[n_fantasies, batch.len()]`.
    fn fantasy_maxima(
        &self,
        batch: &[usize],
        outcomes: &[f64],
        pool: &[usize],
        shift: &[f64],
    ) -> Result<Vec<f64>>;
}

/// Ridge added to the head curvature, relative to its mean diagonal.
const RIDGE: f64 = 1e-3;

/// Deep ensemble with a warm-started head update as the fantasy posterior.
///
/// Each member's linear head (over penultimate features, plus bias) takes
/// `steps` curvature-preconditioned gradient steps of size `lr` on squared
/// error over the data and the fantasy batch, starting from the trained
/// head. Lower layers stay frozen. The update is driven by the innovation,
/// the fantasy outcome minus the ensemble mean, so an outcome equal to the
/// current mean moves nothing and a zero-variance ensemble has zero KG.
/// Steps contract for `0 < lr < 2`; `lr = 1` converges in one step.
pub struct EnsembleFantasy<'a> {
    pub ensemble: &'a Ensemble,
    pub steps: usize,
    pub lr: f64,
}

struct MemberState {
    gram: Vec<f64>,
    /// Row-major `[points, dim]` with a trailing 1 for the bias.
    features: Vec<f64>,
}

pub struct EnsembleFantasyState {
    dim: usize,
    steps: usize,
    lr: f64,
    members: Vec<MemberState>,
    posteriors: Vec<Posterior>,
}

fn with_bias(raw: &[f64], hidden: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len() / hidden * (hidden + 1));
    for row in raw.chunks(hidden) {
        out.extend_from_slice(row);
        out.push(1.0);
    }
    out
}

impl FantasyModel for EnsembleFantasy<'_> {
    type State = EnsembleFantasyState;

    fn posteriors(&self, _data: &Dataset, seqs: &[Sequence]) -> Result<Vec<Posterior>> {
        self.ensemble
            .predict_batch(seqs)?
            .into_iter()
            .map(|(m, v)| Posterior::from_mean_var(m, v))
            .collect()
    }

    fn prepare(&self, data: &Dataset, points: &[Sequence]) -> Result<EnsembleFantasyState> {
        let hidden = self.ensemble.architecture().feature_dim();
        let dim = hidden + 1;
        let data_seqs: Vec<Sequence> = data.sequences().cloned().collect();
        let data_feats = self.ensemble.member_features(&data_seqs)?;
        let point_feats = self.ensemble.member_features(points)?;
        let members = data_feats
            .iter()
            .zip(point_feats)
            .map(|(df, pf)| {
                let df = with_bias(df, hidden);
                let mut gram = vec![0.0; dim * dim];
                for row in df.chunks(dim) {
                    add_outer(&mut gram, row);
                }
                MemberState {
                    gram,
                    features: with_bias(&pf, hidden),
                }
            })
            .collect();
        Ok(EnsembleFantasyState {
            dim,
            steps: self.steps,
            lr: self.lr,
            members,
            posteriors: self.posteriors(data, points)?,
        })
    }
}

fn add_outer(gram: &mut [f64], row: &[f64]) {
    let dim = row.len();
    for (i, &a) in row.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (g, &b) in gram[i * dim..(i + 1) * dim].iter_mut().zip(row) {
            *g += a * b;
        }
    }
}

impl FantasyState for EnsembleFantasyState {
    fn posterior(&self, i: usize) -> Posterior {
        self.posteriors[i]
    }

    fn fantasy_maxima(
        &self,
        batch: &[usize],
        outcomes: &[f64],
        pool: &[usize],
        shift: &[f64],
    ) -> Result<Vec<f64>> {
        let (dim, b, p) = (self.dim, batch.len(), pool.len());
        let n_members = self.members.len() as f64;
        // Member-averaged sensitivity of pool means to batch outcomes, and
        // the matching offset so that outcome == ensemble mean is inert.
        let mut sens = vec![0.0; p * b];
        let mut offset = vec![0.0; p];
        let mut x = vec![0.0; dim * b];
        for m in &self.members {
            let row = |i: usize| &m.features[i * dim..(i + 1) * dim];
            let mut gram = m.gram.clone();
            for &i in batch {
                add_outer(&mut gram, row(i));
            }
            let trace: f64 = (0..dim).map(|i| gram[i * dim + i]).sum();
            let ridge = RIDGE * trace.max(f64::MIN_POSITIVE) / dim as f64;
            for i in 0..dim {
                gram[i * dim + i] += ridge;
            }
            // Newton-preconditioned steps X <- X - lr H^-1 (H X - Phi_b^T)
            // from X = 0 have the closed form (1 - (1 - lr)^steps) H^-1 Phi_b^T.
            let inv = invert_spd(&gram, dim)?;
            let reach = 1.0 - (1.0 - self.lr).powi(self.steps.min(i32::MAX as usize) as i32);
            for i in 0..dim {
                let hi = &inv[i * dim..(i + 1) * dim];
                for (k, &j) in batch.iter().enumerate() {
                    x[i * b + k] = reach * hi.iter().zip(row(j)).map(|(h, f)| h * f).sum::<f64>();
                }
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("fantasy head update diverged".into()));
            }
            for (pi, &j) in pool.iter().enumerate() {
                let phi = row(j);
                let s = &mut sens[pi * b..(pi + 1) * b];
                for (k, sk) in s.iter_mut().enumerate() {
                    let v: f64 = phi
                        .iter()
                        .enumerate()
                        .map(|(i, &f)| f * x[i * b + k])
                        .sum::<f64>()
                        / n_members;
                    *sk += v;
                    offset[pi] += v * self.posteriors[batch[k]].mean;
                }
            }
        }
        let base: Vec<f64> = pool
            .iter()
            .zip(shift)
            .zip(&offset)
            .map(|((&j, &sh), &off)| self.posteriors[j].mean + sh - off)
            .collect();
        Ok(outcomes
            .chunks(b)
            .map(|y| {
                base.iter()
                    .enumerate()
                    .map(|(pi, &m0)| {
                        m0 + sens[pi * b..(pi + 1) * b]
                            .iter()
                            .zip(y)
                            .map(|(s, v)| s * v)
                            .sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect())
    }
}

/// Conjugate Bayesian linear regression `y = w . phi(s) + noise` with prior
/// `w ~ N(0, prior_var I)`. Its fantasy update is the exact posterior.
pub struct BayesianLinear {
    features: Box<dyn Fn(&Sequence) -> Vec<f64> + Send + Sync>,
    prior_var: f64,
    noise_var: f64,
}

impl BayesianLinear {
    pub fn new(
        features: impl Fn(&Sequence) -> Vec<f64> + Send + Sync + 'static,
        prior_var: f64,
        noise_var: f64,
    ) -> Result<Self> {
        if !(prior_var > 0.0 && noise_var > 0.0) {
            return Err(Error::input("prior and noise variances must be positive"));
        }
        Ok(BayesianLinear {
            features: Box::new(features),
            prior_var,
            noise_var,
        })
    }

    /// Posterior mean and covariance of the weights given `data`.
    fn weight_posterior(&self, data: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
        let dim = self.dim(data)?;
        // Precision = I / prior_var + Phi^T Phi / noise_var.
        let mut precision = vec![0.0; dim * dim];
        for i in 0..dim {
            precision[i * dim + i] = 1.0 / self.prior_var;
        }
        let mut rhs = vec![0.0; dim];
        for (s, y) in data.pairs() {
            let phi = self.phi(s, dim)?;
            for i in 0..dim {
                rhs[i] += phi[i] * y / self.noise_var;
                for j in 0..dim {
                    precision[i * dim + j] += phi[i] * phi[j] / self.noise_var;
                }
            }
        }
        let cov = invert_spd(&precision, dim)?;
        let mean = mat_vec(&cov, &rhs, dim);
        Ok((mean, cov))
    }

    fn dim(&self, data: &Dataset) -> Result<usize> {
        match data.pairs().first() {
            Some((s, _)) => Ok((self.features)(s).len()),
            None => Err(Error::input("Bayesian linear model needs a probe sequence")),
        }
    }

    fn phi(&self, s: &Sequence, dim: usize) -> Result<Vec<f64>> {
        let phi = (self.features)(s);
        if phi.len() != dim {
            return Err(Error::input("feature map returned inconsistent widths"));
        }
        Ok(phi)
    }
}

fn mat_vec(a: &[f64], x: &[f64], dim: usize) -> Vec<f64> {
    a.chunks(dim)
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
fn invert_spd(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if d <= 0.0 {
                    return Err(Error::Numeric("matrix is not positive definite".into()));
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        // Solve L y = e_col, then L^T x = y.
        let mut y = vec![0.0; n];
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
            y[i] = (f64::from(u8::from(i == col)) - s) / l[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[k * n + i] * inv[k * n + col]).sum();
            inv[i * n + col] = (y[i] - s) / l[i * n + i];
        }
    }
    Ok(inv)
}

pub struct BayesianLinearState {
    /// `[points, dim]`.
    phi: Vec<f64>,
    /// `Sigma phi_i` for every point, `[points, dim]`.
    cov_phi: Vec<f64>,
    posteriors: Vec<Posterior>,
    dim: usize,
    noise_var: f64,
}

impl FantasyModel for BayesianLinear {
    type State = BayesianLinearState;

    fn posteriors(&self, data: &Dataset, seqs: &[Sequence]) -> Result<Vec<Posterior>> {
        Ok(self.prepare(data, seqs)?.posteriors)
    }

    fn prepare(&self, data: &Dataset, points: &[Sequence]) -> Result<BayesianLinearState> {
        let dim = self.dim(data)?;
        let (mean, cov) = self.weight_posterior(data)?;
        let mut phi = Vec::with_capacity(points.len() * dim);
        let mut cov_phi = Vec::with_capacity(points.len() * dim);
        let mut posteriors = Vec::with_capacity(points.len());
        for s in points {
            let f = self.phi(s, dim)?;
            let cf = mat_vec(&cov, &f, dim);
            let m: f64 = f.iter().zip(&mean).map(|(a, b)| a * b).sum();
            let v: f64 = f.iter().zip(&cf).map(|(a, b)| a * b).sum();
            posteriors.push(Posterior::from_mean_var(m, v.max(0.0))?);
            phi.extend(f);
            cov_phi.extend(cf);
        }
        Ok(BayesianLinearState {
            phi,
            cov_phi,
            posteriors,
            dim,
            noise_var: self.noise_var,
        })
    }
}

impl FantasyState for BayesianLinearState {
    fn posterior(&self, i: usize) -> Posterior {
        self.posteriors[i]
    }

    fn fantasy_maxima(
        &self,
        batch: &[usize],
        outcomes: &[f64],
        pool: &[usize],
        shift: &[f64],
    ) -> Result<Vec<f64>> {
        let (d, b) = (self.dim, batch.len());
        let phi = |i: usize| &self.phi[i * d..(i + 1) * d];
        let cphi = |i: usize| &self.cov_phi[i * d..(i + 1) * d];
        let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
        // Innovation covariance K = Phi_b Sigma Phi_b^T + noise I.
        let mut k = vec![0.0; b * b];
        for (r, &i) in batch.iter().enumerate() {
            for (c, &j) in batch.iter().enumerate() {
                k[r * b + c] = dot(phi(i), cphi(j)) + if r == c { self.noise_var } else { 0.0 };
            }
        }
        let k_inv = invert_spd(&k, b)?;
        // Gain of pool means on the innovations: (phi_p Sigma Phi_b^T) K^{-1}.
        let gain: Vec<Vec<f64>> = pool
            .iter()
            .map(|&p| {
                let cross: Vec<f64> = batch.iter().map(|&j| dot(phi(p), cphi(j))).collect();
                mat_vec(&k_inv, &cross, b)
            })
            .collect();
        let prior: Vec<f64> = batch.iter().map(|&j| self.posteriors[j].mean).collect();
        Ok(outcomes
            .chunks(b)
            .map(|y| {
                let innov: Vec<f64> = y.iter().zip(&prior).map(|(a, m)| a - m).collect();
                pool.iter()
                    .zip(shift)
                    .zip(&gain)
                    .map(|((&p, &sh), g)| self.posteriors[p].mean + sh + dot(g, &innov))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect())
    }
}
