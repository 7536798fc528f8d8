//! Categorical-distribution primitives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Probabilities are clamped to this floor before any log or ratio.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on `|sum - 1|` accepted by [`ProbVector::new`].
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Index of a vocabulary entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub usize);

impl TokenId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl From<usize> for TokenId {
    fn from(i: usize) -> Self {
        TokenId(i)
    }
}

/// Finite log-odds over a vocabulary of at least two entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return param(format!("logit vector needs at least 2 entries, got {}", values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logit at index {i}")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A categorical distribution: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return param(format!("distribution needs at least 2 entries, got {}", probs.len()));
        }
        if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return param(format!("invalid probability {} at index {i}", probs[i]));
        }
        let total = neumaier_sum(probs.iter().copied());
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return param(format!("probabilities sum to {total}, expected 1"));
        }
        Ok(Self(probs))
    }

    /// Uniform distribution over `n` entries.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    /// Point mass on `token`.
    pub fn one_hot(n: usize, token: TokenId) -> Result<Self> {
        if token.0 >= n {
            return param(format!("token {} out of range for vocab {n}", token.0));
        }
        let mut v = vec![0.0; n];
        v[token.0] = 1.0;
        Self::new(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, token: TokenId) -> f64 {
        self.0[token.0]
    }

    /// Entry `i` clamped below at [`PROB_FLOOR`].
    pub fn floored(&self, i: usize) -> f64 {
        self.0[i].max(PROB_FLOOR)
    }

    /// Argmax with ties resolved to the lowest index.
    pub fn argmax(&self) -> TokenId {
        argmax(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    TokenId(best)
}

pub(crate) fn check_same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return param(format!("vocabulary size mismatch: {a} vs {b}"));
    }
    Ok(())
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &LogitVector) -> ProbVector {
    ProbVector(softmax_slice(z.as_slice()))
}

pub(crate) fn softmax_slice(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total = neumaier_sum(exps.iter().copied());
    exps.into_iter().map(|e| e / total).collect()
}

/// `log(softmax(z))` computed as `z - max - log(sum(exp(z - max)))`.
pub fn log_softmax(z: &LogitVector) -> Vec<f64> {
    let z = z.as_slice();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = neumaier_sum(z.iter().map(|v| (v - max).exp())).ln();
    z.iter().map(|v| v - max - lse).collect()
}

/// The `k` most probable tokens, ordered by decreasing probability with
/// ties broken towards the lower index.
pub fn top_k_set(p: &ProbVector, k: usize) -> Result<Vec<TokenId>> {
    if k == 0 || k > p.len() {
        return param(format!("k={k} must lie in [1, {}]", p.len()));
    }
    let mut idx: Vec<usize> = (0..p.len()).collect();
    // stable sort keeps lower indices first among equal probabilities
    idx.sort_by(|&a, &b| p.0[b].total_cmp(&p.0[a]));
    Ok(idx.into_iter().take(k).map(TokenId).collect())
}

/// Hellinger distance `(1/sqrt 2) * ||sqrt p - sqrt q||_2`, in `[0, 1]`.
pub fn hellinger(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    check_same_len(p.len(), q.len())?;
    let sq = neumaier_sum(
        p.0.iter()
            .zip(&q.0)
            .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)),
    );
    Ok((sq / 2.0).sqrt().clamp(0.0, 1.0))
}

/// Total variation distance, half the L1 difference.
pub fn total_variation(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    check_same_len(p.len(), q.len())?;
    Ok(0.5 * neumaier_sum(p.0.iter().zip(&q.0).map(|(a, b)| (a - b).abs())))
}

/// Inverse-CDF draw. Consumes exactly one uniform from `rng`.
pub fn sample<R: Rng + ?Sized>(p: &ProbVector, rng: &mut R) -> TokenId {
    let u: f64 = rng.random();
    sample_with_uniform(p.as_slice(), u)
}

pub(crate) fn sample_with_uniform(p: &[f64], u: f64) -> TokenId {
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            last_positive = i;
            cum += pi;
            if u < cum {
                return TokenId(i);
            }
        }
    }
    // rounding left u above the final cumulative sum
    TokenId(last_positive)
}
