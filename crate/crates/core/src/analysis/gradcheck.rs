//! Finite-difference verification of the analytic logit gradients.

use rand::Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::divergence::{grad_logits, DivergenceKind};
use crate::error::{param, Error, Result};
use crate::model::dirichlet_log_row;
use crate::prob::{softmax, LogitVector, ProbVector};
use crate::rng::rng_from_seed;

/// Relative error above which a trial is listed as a failure.
pub const GRAD_TOLERANCE: f64 = 1e-6;

/// Denominator floor for relative errors.
pub const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradFailure {
    pub trial: usize,
    /// FNV-1a digest of the trial's `p` and `z` bit patterns.
    pub digest: String,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub kind: DivergenceKind,
    pub vocab_size: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub trials: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub failures: Vec<GradFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRAD_TOLERANCE
    }
}

/// Central-difference gradient of `D(p ‖ softmax(z))` w.r.t. `z`.
pub fn finite_difference_grad(kind: DivergenceKind, p: &ProbVector, z: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let eval = |zz: Vec<f64>| -> Result<f64> { kind.value(p, &softmax(&LogitVector::new(zz)?)) };
    (0..z.len())
        .map(|i| {
            let mut plus = z.to_vec();
            plus[i] += epsilon;
            let mut minus = z.to_vec();
            minus[i] -= epsilon;
            Ok((eval(plus)? - eval(minus)?) / (2.0 * epsilon))
        })
        .collect()
}

/// Relative error `||a - b||_2 / max(||a||_2, 1e-8)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / norm.max(REL_FLOOR)
}

fn digest(p: &[f64], z: &[f64]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for x in p.iter().chain(z) {
        for b in x.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Compares analytic and central-difference gradients on `trials` random
/// instances: `p ~ Dirichlet(1)` and `z ~ U[-4, 4]^V`.
pub fn grad_check(kind: DivergenceKind, trials: usize, vocab_size: usize, epsilon: f64, seed: u64) -> Result<GradCheckReport> {
    kind.validate()?;
    if !(1e-7..=1e-3).contains(&epsilon) {
        return param(format!("epsilon={epsilon} must lie in [1e-7, 1e-3]"));
    }
    if vocab_size < 2 {
        return param("vocab_size must be at least 2");
    }
    let gamma = Gamma::new(1.0, 1.0).map_err(|e| Error::Param(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    let mut report = GradCheckReport {
        kind,
        vocab_size,
        epsilon,
        seed,
        trials,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        failures: Vec::new(),
    };
    for trial in 0..trials {
        let p: Vec<f64> = dirichlet_log_row(&gamma, vocab_size, &mut rng)
            .into_iter()
            .map(f64::exp)
            .collect();
        let total: f64 = p.iter().sum();
        let p = ProbVector::new(p.into_iter().map(|x| x / total).collect())?;
        let z: Vec<f64> = (0..vocab_size).map(|_| rng.random_range(-4.0..=4.0)).collect();
        let analytic = grad_logits(kind, &p, &LogitVector::new(z.clone())?)?;
        let numeric = finite_difference_grad(kind, &p, &z, epsilon)?;
        let rel = relative_error(&analytic, &numeric);
        let abs = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if !rel.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient error in trial {trial}")));
        }
        report.max_rel_error = report.max_rel_error.max(rel);
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel >= GRAD_TOLERANCE {
            report.failures.push(GradFailure {
                trial,
                digest: digest(p.as_slice(), &z),
                rel_error: rel,
            });
        }
    }
    Ok(report)
}
