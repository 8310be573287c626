//! Finite-difference verification of the reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{Architecture, Regressor};
use crate::autodiff::{BackwardFault, Tape, Tensor};
use crate::error::Result;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-4;
/// Denominator floor for the relative error, so gradients that are zero up
/// to rounding are compared absolutely.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;
const BATCH: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub architecture: &'static str,
    pub parameters_checked: usize,
    pub max_relative_error: f64,
    /// `(parameter tensor, element)` of the worst offender.
    pub worst: (usize, usize),
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} gradient check: {} ({} parameters, max relative error {:.3e} at tensor {} element {}: analytic {:.6e}, numeric {:.6e}, tolerance {:.1e})",
            self.architecture,
            if self.passed { "pass" } else { "FAIL" },
            self.parameters_checked,
            self.max_relative_error,
            self.worst.0,
            self.worst.1,
            self.worst_analytic,
            self.worst_numeric,
            self.tolerance
        )
    }
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(MAGNITUDE_FLOOR)
}

fn loss(model: &Regressor, x: &Tensor, y: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let input = tape.constant(x.clone());
    let out = model.forward(&mut tape, input).output;
    let l = tape.mse(out, y.to_vec());
    tape.value(l).data()[0]
}

/// Checks `model` on a given batch, using `fault` in the backward pass.
pub fn gradient_check_regressor(
    model: &Regressor,
    x: &Tensor,
    y: &[f64],
    tolerance: f64,
    fault: BackwardFault,
) -> GradCheckReport {
    let mut tape = Tape::with_fault(fault);
    let input = tape.constant(x.clone());
    let fwd = model.forward(&mut tape, input);
    let l = tape.mse(fwd.output, y.to_vec());
    let grads = tape.backward(l);
    let analytic: Vec<Vec<f64>> = fwd
        .params
        .iter()
        .map(|&p| grads.get(p).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        architecture: model.architecture().name(),
        parameters_checked: 0,
        max_relative_error: 0.0,
        worst: (0, 0),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        tolerance,
        passed: true,
    };
    for (t, g) in analytic.iter().enumerate() {
        for (e, &a) in g.iter().enumerate() {
            let w = probe.params()[t].data()[e];
            probe.params_mut()[t].data_mut()[e] = w + FD_STEP;
            let up = loss(&probe, x, y);
            probe.params_mut()[t].data_mut()[e] = w - FD_STEP;
            let down = loss(&probe, x, y);
            probe.params_mut()[t].data_mut()[e] = w;
            let n = (up - down) / (2.0 * FD_STEP);
            let r = relative_error(a, n);
            report.parameters_checked += 1;
            if r > report.max_relative_error || r.is_nan() {
                report.max_relative_error = r;
                report.worst = (t, e);
                report.worst_analytic = a;
                report.worst_numeric = n;
            }
        }
    }
    report.passed = report.max_relative_error <= tolerance;
    report
}

/// Regressor of `arch` with every parameter drawn from `U(-0.5, 0.5)`, on a
/// random batch of 16 one-hot inputs.
pub fn gradient_check_with(
    arch: &Architecture,
    length: usize,
    vocab: usize,
    tolerance: f64,
    seed: u64,
    fault: BackwardFault,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Regressor::new(arch.clone(), length, vocab, &mut rng)?;
    for p in model.params_mut() {
        for w in p.data_mut() {
            *w = rng.random_range(-0.5..0.5);
        }
    }
    let mut data = vec![0.0; BATCH * length * vocab];
    for row in data.chunks_mut(vocab) {
        row[rng.random_range(0..vocab)] = 1.0;
    }
    let x = Tensor::new(vec![BATCH, length, vocab], data);
    let y: Vec<f64> = (0..BATCH).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok(gradient_check_regressor(&model, &x, &y, tolerance, fault))
}

pub fn gradient_check(
    arch: &Architecture,
    length: usize,
    vocab: usize,
    tolerance: f64,
) -> Result<GradCheckReport> {
    gradient_check_with(arch, length, vocab, tolerance, 0, BackwardFault::None)
}
