//! Per-token verification weights.
//!
//! A verifier compares the teacher distribution `p_t` with the student
//! distribution `q_t` at one position and returns the weight applied to that
//! position's divergence. Discrete verifiers return exactly `1.0` on
//! acceptance and exactly `beta` on rejection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::prob::{check_same_len, hellinger, sample, top_k_set, ProbVector, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierMode {
    /// Soft weight `H(p, q)`.
    Hellinger,
    /// Accept iff the student's argmax is among the teacher's top-k tokens.
    GreedyTopK,
    /// Accept iff any of k student samples passes `u < min(1, p/q)`.
    SpecK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifierConfig {
    pub mode: VerifierMode,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_k() -> usize {
    5
}

fn default_beta() -> f64 {
    0.01
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            mode: VerifierMode::SpecK,
            k: default_k(),
            beta: default_beta(),
        }
    }
}

impl VerifierConfig {
    pub fn greedy(k: usize, beta: f64) -> Result<Self> {
        Self {
            mode: VerifierMode::GreedyTopK,
            k,
            beta,
        }
        .validated()
    }

    pub fn spec(k: usize, beta: f64) -> Result<Self> {
        Self {
            mode: VerifierMode::SpecK,
            k,
            beta,
        }
        .validated()
    }

    pub fn hellinger() -> Self {
        Self {
            mode: VerifierMode::Hellinger,
            k: 1,
            beta: 0.0,
        }
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return param(format!("beta={} must lie in [0, 1]", self.beta));
        }
        if self.mode != VerifierMode::Hellinger && self.k == 0 {
            return param("k must be at least 1");
        }
        Ok(())
    }

    /// Checks `k` against a concrete vocabulary.
    pub fn validate_for_vocab(&self, vocab_size: usize) -> Result<()> {
        self.validate()?;
        if self.mode == VerifierMode::GreedyTopK && self.k > vocab_size {
            return param(format!("k={} exceeds vocabulary size {vocab_size}", self.k));
        }
        Ok(())
    }

    /// Whether outcomes of this mode carry a well-defined acceptance.
    pub fn is_discrete(&self) -> bool {
        self.mode != VerifierMode::Hellinger
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub mode: VerifierMode,
    pub weight: f64,
    pub accepted: bool,
    /// Number of accepted Spec-k candidates (zero for other modes).
    pub accepted_count: usize,
    /// Spec-k candidates in draw order (empty for other modes).
    pub candidates: Vec<TokenId>,
}

impl VerificationOutcome {
    fn discrete(mode: VerifierMode, accepted: bool, beta: f64) -> Self {
        Self {
            mode,
            weight: if accepted { 1.0 } else { beta },
            accepted,
            accepted_count: 0,
            candidates: Vec::new(),
        }
    }
}

/// Greedy Top-k check of the student's argmax against the teacher.
pub fn verify_greedy(p: &ProbVector, q: &ProbVector, cfg: &VerifierConfig) -> Result<VerificationOutcome> {
    if cfg.mode != VerifierMode::GreedyTopK {
        return param("verify_greedy requires GreedyTopK mode");
    }
    cfg.validate()?;
    check_same_len(p.len(), q.len())?;
    let proposal = q.argmax();
    let accepted = top_k_set(p, cfg.k)?.contains(&proposal);
    Ok(VerificationOutcome::discrete(cfg.mode, accepted, cfg.beta))
}

/// Speculative acceptance probability `min(1, p(y) / q(y))` on clamped values.
pub fn acceptance_probability(p: &ProbVector, q: &ProbVector, y: TokenId) -> f64 {
    (p.floored(y.0) / q.floored(y.0)).min(1.0)
}

/// Spec-k check. Draws from `rng` in the fixed order
/// `token_1, u_1, token_2, u_2, ...`, one uniform each, `2k` draws total.
pub fn verify_spec<R: Rng + ?Sized>(
    p: &ProbVector,
    q: &ProbVector,
    cfg: &VerifierConfig,
    rng: &mut R,
) -> Result<VerificationOutcome> {
    if cfg.mode != VerifierMode::SpecK {
        return param("verify_spec requires SpecK mode");
    }
    cfg.validate()?;
    check_same_len(p.len(), q.len())?;
    let mut candidates = Vec::with_capacity(cfg.k);
    let mut accepted_count = 0;
    for _ in 0..cfg.k {
        let y = sample(q, rng);
        let u: f64 = rng.random();
        if u < acceptance_probability(p, q, y) {
            accepted_count += 1;
        }
        candidates.push(y);
    }
    let mut out = VerificationOutcome::discrete(cfg.mode, accepted_count >= 1, cfg.beta);
    out.accepted_count = accepted_count;
    out.candidates = candidates;
    Ok(out)
}

/// Soft weight equal to the Hellinger distance between teacher and student.
pub fn verify_hellinger(p: &ProbVector, q: &ProbVector) -> Result<VerificationOutcome> {
    let weight = hellinger(p, q)?;
    Ok(VerificationOutcome {
        mode: VerifierMode::Hellinger,
        weight,
        accepted: weight == 1.0,
        accepted_count: 0,
        candidates: Vec::new(),
    })
}

/// Dispatches on `cfg.mode`. Only Spec-k touches `rng`.
pub fn verify<R: Rng + ?Sized>(
    p: &ProbVector,
    q: &ProbVector,
    cfg: &VerifierConfig,
    rng: &mut R,
) -> Result<VerificationOutcome> {
    match cfg.mode {
        VerifierMode::Hellinger => verify_hellinger(p, q),
        VerifierMode::GreedyTopK => verify_greedy(p, q, cfg),
        VerifierMode::SpecK => verify_spec(p, q, cfg, rng),
    }
}

/// Token acceptance rate: the fraction of outcomes with weight exactly 1.
///
/// Hellinger outcomes have no acceptance notion and are rejected.
pub fn tar(outcomes: &[VerificationOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return param("tar of an empty outcome list");
    }
    if outcomes.iter().any(|o| o.mode == VerifierMode::Hellinger) {
        return param("tar is undefined for Hellinger outcomes");
    }
    let accepted = outcomes.iter().filter(|o| o.weight == 1.0).count();
    Ok(accepted as f64 / outcomes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn greedy_examples() {
        let p = pv(&[0.7, 0.3]);
        let cfg = VerifierConfig::greedy(1, 0.0).unwrap();
        assert_eq!(verify_greedy(&p, &p, &cfg).unwrap().weight, 1.0);

        let p = pv(&[0.5, 0.3, 0.2]);
        let q = pv(&[0.1, 0.2, 0.7]);
        let cfg = VerifierConfig::greedy(2, 0.01).unwrap();
        let out = verify_greedy(&p, &q, &cfg).unwrap();
        assert_eq!(out.weight, 0.01);
        assert!(!out.accepted);

        let cfg = VerifierConfig::greedy(3, 0.0).unwrap();
        assert_eq!(verify_greedy(&p, &q, &cfg).unwrap().weight, 1.0);

        let cfg = VerifierConfig::greedy(4, 0.0).unwrap();
        assert!(verify_greedy(&p, &q, &cfg).is_err());
    }

    #[test]
    fn spec_identical_distributions_always_accept() {
        let p = pv(&[0.1, 0.2, 0.3, 0.4]);
        let cfg = VerifierConfig::spec(3, 0.0).unwrap();
        let mut rng = rng_from_seed(5);
        for _ in 0..1000 {
            let out = verify_spec(&p, &p, &cfg, &mut rng).unwrap();
            assert_eq!(out.weight, 1.0);
            assert_eq!(out.accepted_count, 3);
            assert_eq!(out.candidates.len(), 3);
        }
    }

    #[test]
    fn spec_disjoint_distributions_reject() {
        let p = pv(&[1.0, 0.0]);
        let q = pv(&[0.0, 1.0]);
        let cfg = VerifierConfig::spec(1, 0.05).unwrap();
        let mut rng = rng_from_seed(8);
        let rejected = (0..10_000)
            .filter(|_| verify_spec(&p, &q, &cfg, &mut rng).unwrap().weight == 0.05)
            .count();
        assert!(rejected >= 9_900);
    }

    #[test]
    fn spec_consumes_two_draws_per_candidate() {
        use rand::Rng;
        let p = pv(&[0.3, 0.7]);
        let q = pv(&[0.6, 0.4]);
        let cfg = VerifierConfig::spec(4, 0.0).unwrap();
        let mut a = rng_from_seed(21);
        verify_spec(&p, &q, &cfg, &mut a).unwrap();
        let mut b = rng_from_seed(21);
        for _ in 0..8 {
            let _: f64 = b.random();
        }
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn spec_is_deterministic() {
        let p = pv(&[0.25, 0.25, 0.5]);
        let q = pv(&[0.5, 0.3, 0.2]);
        let cfg = VerifierConfig::spec(2, 0.01).unwrap();
        let run = || {
            let mut r = rng_from_seed(77);
            (0..50).map(|_| verify_spec(&p, &q, &cfg, &mut r).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn hellinger_examples() {
        let p = pv(&[0.5, 0.5]);
        assert_eq!(verify_hellinger(&p, &p).unwrap().weight, 0.0);
        let out = verify_hellinger(&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap();
        assert_eq!(out.weight, 1.0);
        let out = verify_hellinger(&p, &pv(&[1.0, 0.0])).unwrap();
        assert!((out.weight - 0.541_196_100_146_197).abs() < 1e-12);
    }

    #[test]
    fn tar_counts() {
        let mk = |acc| VerificationOutcome::discrete(VerifierMode::SpecK, acc, 0.01);
        let all: Vec<_> = (0..8).map(|_| mk(true)).collect();
        assert_eq!(tar(&all).unwrap(), 1.0);
        let none: Vec<_> = (0..8).map(|_| mk(false)).collect();
        assert_eq!(tar(&none).unwrap(), 0.0);
        let some: Vec<_> = (0..8).map(|i| mk(i < 3)).collect();
        assert_eq!(tar(&some).unwrap(), 0.375);
        assert!(tar(&[]).is_err());
        let h = verify_hellinger(&pv(&[0.5, 0.5]), &pv(&[0.5, 0.5])).unwrap();
        assert!(tar(&[h]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(VerifierConfig::spec(0, 0.1).is_err());
        assert!(VerifierConfig::spec(1, 1.1).is_err());
        assert!(VerifierConfig::greedy(5, 0.0).unwrap().validate_for_vocab(4).is_err());
        let d = VerifierConfig::default();
        assert_eq!((d.mode, d.k, d.beta), (VerifierMode::SpecK, 5, 0.01));
    }
}
