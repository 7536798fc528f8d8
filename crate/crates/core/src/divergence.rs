//! Token-wise divergences between a teacher distribution `p` and a student
//! distribution `q = softmax(z)`, with analytic gradients w.r.t. `z`.
//!
//! | kind | value | d/dq_j |
//! |------|-------|--------|
//! | FKL  | sum p log(p/q) | -p_j/q_j |
//! | RKL  | sum q log(q/p) | log(q_j/p_j) + 1 |
//! | SKL  | KL(p ‖ m), m = a p + (1-a) q | -(1-a) p_j/m_j |
//! | SRKL | KL(q ‖ m'), m' = (1-a) p + a q | log(q_j/m'_j) + 1 - a q_j/m'_j |
//!
//! The logit gradient is `J g` with `J = diag(q) - q q^T`, i.e.
//! `q ⊙ (g - <q, g>)`. FKL uses the exact closed form `q - p`.
//!
//! Every probability is clamped to [`PROB_FLOOR`] before a log or a ratio.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::prob::{check_same_len, neumaier_sum, softmax, LogitVector, ProbVector, PROB_FLOOR};

/// Which member of the KL family to use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DivergenceKind {
    Fkl,
    Rkl,
    Skl { alpha: f64 },
    Srkl { alpha: f64 },
}

impl DivergenceKind {
    pub fn skl(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self::Skl { alpha })
    }

    pub fn srkl(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self::Srkl { alpha })
    }

    /// Re-checks the alpha range (needed after deserialization).
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Fkl | Self::Rkl => Ok(()),
            Self::Skl { alpha } | Self::Srkl { alpha } => check_alpha(alpha),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            Self::Skl { alpha } | Self::Srkl { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// Short lowercase name: `fkl`, `rkl`, `skl`, `srkl`.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Fkl => "fkl",
            Self::Rkl => "rkl",
            Self::Skl { .. } => "skl",
            Self::Srkl { .. } => "srkl",
        }
    }

    /// Divergence value `D(p ‖ q)`.
    pub fn value(&self, p: &ProbVector, q: &ProbVector) -> Result<f64> {
        match *self {
            Self::Fkl => fkl(p, q),
            Self::Rkl => rkl(p, q),
            Self::Skl { alpha } => skl(p, q, alpha),
            Self::Srkl { alpha } => srkl(p, q, alpha),
        }
    }

    /// Gradient of `D(p ‖ softmax(z))` with respect to `z`.
    pub fn grad_logits(&self, p: &ProbVector, z: &LogitVector) -> Result<Vec<f64>> {
        grad_logits(*self, p, z)
    }
}

impl fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.alpha() {
            Some(a) => write!(f, "{}({a})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return param(format!("alpha={alpha} must lie in [0, 1)"));
    }
    Ok(())
}

#[inline]
fn floor(x: f64) -> f64 {
    x.max(PROB_FLOOR)
}

/// `sum_i a_i log(a_i / b_i)` over entries with `a_i > 0`, clamped inputs.
fn kl(a: &[f64], b: &[f64]) -> f64 {
    let v = neumaier_sum(
        a.iter()
            .zip(b)
            .filter(|(ai, _)| **ai > 0.0)
            .map(|(&ai, &bi)| ai * (floor(ai).ln() - floor(bi).ln())),
    );
    v.max(0.0)
}

/// Forward KL, `sum p log(p/q)`.
pub fn fkl(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    check_same_len(p.len(), q.len())?;
    Ok(kl(p.as_slice(), q.as_slice()))
}

/// Reverse KL, `sum q log(q/p)`.
pub fn rkl(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    check_same_len(p.len(), q.len())?;
    Ok(kl(q.as_slice(), p.as_slice()))
}

/// `wa * a + (1 - wa) * b`, written so that `a == b` gives `b` exactly.
fn mix(a: &[f64], b: &[f64], wa: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| y + wa * (x - y)).collect()
}

/// Skew KL, `KL(p ‖ alpha p + (1 - alpha) q)`.
pub fn skl(p: &ProbVector, q: &ProbVector, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_same_len(p.len(), q.len())?;
    let m = mix(p.as_slice(), q.as_slice(), alpha);
    Ok(kl(p.as_slice(), &m))
}

/// Skew reverse KL, `KL(q ‖ (1 - alpha) p + alpha q)`.
pub fn srkl(p: &ProbVector, q: &ProbVector, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_same_len(p.len(), q.len())?;
    let m = mix(q.as_slice(), p.as_slice(), alpha);
    Ok(kl(q.as_slice(), &m))
}

/// `J g = q ⊙ (g - <q, g>)`, the pull-back of a probability-space gradient
/// through the softmax.
pub fn softmax_vjp(q: &[f64], g: &[f64]) -> Vec<f64> {
    let mean = neumaier_sum(q.iter().zip(g).map(|(a, b)| a * b));
    q.iter().zip(g).map(|(qi, gi)| qi * (gi - mean)).collect()
}

/// Analytic gradient of `kind` w.r.t. the student logits `z`.
pub fn grad_logits(kind: DivergenceKind, p: &ProbVector, z: &LogitVector) -> Result<Vec<f64>> {
    kind.validate()?;
    check_same_len(p.len(), z.len())?;
    let q = softmax(z);
    Ok(grad_with_q(kind, p.as_slice(), q.as_slice()))
}

// Constant shifts of `g` vanish under the softmax pull-back, so each
// probability-space gradient below is shifted to be exactly zero at `q == p`.
pub(crate) fn grad_with_q(kind: DivergenceKind, p: &[f64], q: &[f64]) -> Vec<f64> {
    match kind {
        DivergenceKind::Fkl => q.iter().zip(p).map(|(a, b)| a - b).collect(),
        DivergenceKind::Rkl => {
            let g: Vec<f64> = q
                .iter()
                .zip(p)
                .map(|(&qi, &pi)| floor(qi).ln() - floor(pi).ln())
                .collect();
            softmax_vjp(q, &g)
        }
        DivergenceKind::Skl { alpha } => {
            // d/dq KL(p || m) = -(1 - alpha) p / m, shifted by (1 - alpha)
            let g: Vec<f64> = q
                .iter()
                .zip(p)
                .map(|(&qi, &pi)| {
                    let m = floor(pi + (1.0 - alpha) * (qi - pi));
                    (1.0 - alpha) * (1.0 - alpha) * (qi - pi) / m
                })
                .collect();
            softmax_vjp(q, &g)
        }
        DivergenceKind::Srkl { alpha } => {
            // d/dq KL(q || m) = ln(q / m) + 1 - alpha q / m, shifted by 1 - alpha
            let g: Vec<f64> = q
                .iter()
                .zip(p)
                .map(|(&qi, &pi)| {
                    let m = floor(qi + (1.0 - alpha) * (pi - qi));
                    floor(qi).ln() - m.ln() + alpha * (1.0 - alpha) * (pi - qi) / m
                })
                .collect();
            softmax_vjp(q, &g)
        }
    }
}

/// Value and logit gradient of one token's divergence.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLoss {
    pub value: f64,
    pub grad_logits: Vec<f64>,
}

pub fn token_loss(kind: DivergenceKind, p: &ProbVector, z: &LogitVector) -> Result<TokenLoss> {
    kind.validate()?;
    check_same_len(p.len(), z.len())?;
    let q = softmax(z);
    Ok(TokenLoss {
        value: kind.value(p, &q)?,
        grad_logits: grad_with_q(kind, p.as_slice(), q.as_slice()),
    })
}

/// Loss of a whole sequence with one gradient row per position.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqLoss {
    pub value: f64,
    pub grad_logits: Vec<Vec<f64>>,
}

/// Selectively weighted sequence loss `(1/T) sum_t w_t D(p_t ‖ q_t)`.
///
/// The weights are constants: no gradient flows into them.
pub fn selectkd_loss(
    kind: DivergenceKind,
    p_seq: &[ProbVector],
    z_seq: &[LogitVector],
    weights: &[f64],
) -> Result<SeqLoss> {
    let t = p_seq.len();
    if t == 0 {
        return param("sequence must contain at least one position");
    }
    if z_seq.len() != t || weights.len() != t {
        return param(format!(
            "length mismatch: {} teacher rows, {} student rows, {} weights",
            t,
            z_seq.len(),
            weights.len()
        ));
    }
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return param(format!("weight {w} outside [0, 1]"));
    }
    let scale = 1.0 / t as f64;
    let mut values = Vec::with_capacity(t);
    let mut grads = Vec::with_capacity(t);
    for ((p, z), &w) in p_seq.iter().zip(z_seq).zip(weights) {
        let tl = token_loss(kind, p, z)?;
        values.push(w * tl.value);
        grads.push(tl.grad_logits.into_iter().map(|g| w * scale * g).collect());
    }
    Ok(SeqLoss {
        value: scale * neumaier_sum(values),
        grad_logits: grads,
    })
}

/// One sequence's inputs to a batch loss.
#[derive(Debug, Clone)]
pub struct SeqInput {
    pub teacher: Vec<ProbVector>,
    pub student_logits: Vec<LogitVector>,
    pub weights: Vec<f64>,
}

/// Loss over a mixed teacher/student batch with per-sequence gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub value: f64,
    pub teacher_grads: Vec<Vec<Vec<f64>>>,
    pub student_grads: Vec<Vec<Vec<f64>>>,
}

/// Mixed objective: `(1 - mu)` times the mean skew KL over teacher-generated
/// sequences plus `mu` times the mean skew reverse KL over student-generated
/// sequences. Per-token weights from a verifier are honoured.
pub fn distillm2_loss(
    teacher_batch: &[SeqInput],
    student_batch: &[SeqInput],
    mu: f64,
    alpha_t: f64,
    alpha_s: f64,
) -> Result<BatchLoss> {
    if !(0.0..=1.0).contains(&mu) {
        return param(format!("mu={mu} must lie in [0, 1]"));
    }
    if teacher_batch.is_empty() || student_batch.is_empty() {
        return param("both teacher and student batches must be nonempty");
    }
    let skl_kind = DivergenceKind::skl(alpha_t)?;
    let srkl_kind = DivergenceKind::srkl(alpha_s)?;
    let part = |batch: &[SeqInput], kind, coef: f64| -> Result<(f64, Vec<Vec<Vec<f64>>>)> {
        let per = coef / batch.len() as f64;
        let mut vals = Vec::with_capacity(batch.len());
        let mut grads = Vec::with_capacity(batch.len());
        for s in batch {
            let l = selectkd_loss(kind, &s.teacher, &s.student_logits, &s.weights)?;
            vals.push(l.value);
            grads.push(
                l.grad_logits
                    .into_iter()
                    .map(|row| row.into_iter().map(|g| per * g).collect())
                    .collect(),
            );
        }
        Ok((per * neumaier_sum(vals), grads))
    };
    let (vt, teacher_grads) = part(teacher_batch, skl_kind, 1.0 - mu)?;
    let (vs, student_grads) = part(student_batch, srkl_kind, mu)?;
    Ok(BatchLoss {
        value: vt + vs,
        teacher_grads,
        student_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::softmax;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn lv(v: &[f64]) -> LogitVector {
        LogitVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn fkl_examples() {
        let u = ProbVector::uniform(4).unwrap();
        assert_eq!(fkl(&u, &u).unwrap(), 0.0);
        let v = fkl(&pv(&[1.0, 0.0]), &pv(&[0.5, 0.5])).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert!(fkl(&u, &pv(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn skl_two_term_example() {
        let p = pv(&[0.8, 0.2]);
        let q = pv(&[0.2, 0.8]);
        let v = skl(&p, &q, 0.5).unwrap();
        // KL([.8,.2] ‖ [.5,.5]) = .8 ln 1.6 + .2 ln .4
        let expect = 0.8 * 1.6f64.ln() + 0.2 * 0.4f64.ln();
        assert!((v - expect).abs() < 1e-15);
        assert!(skl(&p, &q, 1.0).is_err());
        assert!(srkl(&p, &q, -0.1).is_err());
    }

    #[test]
    fn reductions_at_alpha_zero() {
        let p = pv(&[0.1, 0.6, 0.3]);
        let q = pv(&[0.5, 0.25, 0.25]);
        assert_eq!(skl(&p, &q, 0.0).unwrap(), fkl(&p, &q).unwrap());
        assert_eq!(srkl(&p, &q, 0.0).unwrap(), rkl(&p, &q).unwrap());
        assert_eq!(rkl(&p, &q).unwrap(), fkl(&q, &p).unwrap());
    }

    #[test]
    fn gradients_vanish_at_teacher() {
        let z = lv(&[0.3, -1.0, 2.0, 0.0]);
        let p = softmax(&z);
        for kind in [
            DivergenceKind::Fkl,
            DivergenceKind::Rkl,
            DivergenceKind::Skl { alpha: 0.3 },
            DivergenceKind::Srkl { alpha: 0.3 },
        ] {
            let g = grad_logits(kind, &p, &z).unwrap();
            assert!(g.iter().all(|x| x.abs() < 1e-12), "{kind}: {g:?}");
        }
    }

    #[test]
    fn selectkd_weight_examples() {
        let p: Vec<_> = [[0.7, 0.3], [0.2, 0.8], [0.5, 0.5]].iter().map(|r| pv(r)).collect();
        let z: Vec<_> = [[0.0, 1.0], [1.0, -1.0], [2.0, 0.0]].iter().map(|r| lv(r)).collect();
        let kind = DivergenceKind::Fkl;

        let zero = selectkd_loss(kind, &p, &z, &[0.0; 3]).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(zero.grad_logits.iter().flatten().all(|g| *g == 0.0));

        let per: Vec<f64> = p
            .iter()
            .zip(&z)
            .map(|(p, z)| fkl(p, &softmax(z)).unwrap())
            .collect();
        let full = selectkd_loss(kind, &p, &z, &[1.0; 3]).unwrap();
        assert!((full.value - per.iter().sum::<f64>() / 3.0).abs() < 1e-15);

        let masked = selectkd_loss(kind, &p, &z, &[1.0, 0.0, 1.0]).unwrap();
        assert!((masked.value - (per[0] + per[2]) / 3.0).abs() < 1e-15);
        assert!(masked.grad_logits[1].iter().all(|g| *g == 0.0));

        assert!(selectkd_loss(kind, &p, &z[..2], &[1.0; 3]).is_err());
        assert!(selectkd_loss(kind, &p, &z, &[1.0, 1.5, 1.0]).is_err());
        assert!(selectkd_loss(kind, &[], &[], &[]).is_err());
    }

    #[test]
    fn distillm2_mixing_examples() {
        let seq = |p: [f64; 2], z: [f64; 2]| SeqInput {
            teacher: vec![pv(&p)],
            student_logits: vec![lv(&z)],
            weights: vec![1.0],
        };
        let t = vec![seq([0.9, 0.1], [0.0, 0.0])];
        let s = vec![seq([0.3, 0.7], [1.0, 0.0])];
        let skl_only = distillm2_loss(&t, &s, 0.0, 0.1, 0.1).unwrap();
        let expect_t = skl(&pv(&[0.9, 0.1]), &pv(&[0.5, 0.5]), 0.1).unwrap();
        assert!((skl_only.value - expect_t).abs() < 1e-15);
        assert!(skl_only.student_grads[0][0].iter().all(|g| *g == 0.0));

        let srkl_only = distillm2_loss(&t, &s, 1.0, 0.1, 0.1).unwrap();
        let q = softmax(&lv(&[1.0, 0.0]));
        let expect_s = srkl(&pv(&[0.3, 0.7]), &q, 0.1).unwrap();
        assert!((srkl_only.value - expect_s).abs() < 1e-15);

        let z = [0.4, -0.2];
        let same = seq(softmax(&lv(&z)).into_inner().try_into().unwrap(), z);
        let zero = distillm2_loss(&[same.clone()], &[same], 0.5, 0.1, 0.1).unwrap();
        assert!(zero.value.abs() < 1e-15);

        assert!(distillm2_loss(&[], &s, 0.5, 0.1, 0.1).is_err());
        assert!(distillm2_loss(&t, &s, 1.5, 0.1, 0.1).is_err());
    }

    #[test]
    fn kind_serde_shape() {
        let k: DivergenceKind = serde_json::from_str(r#"{"kind":"skl","alpha":0.1}"#).unwrap();
        assert_eq!(k, DivergenceKind::Skl { alpha: 0.1 });
        assert_eq!(k.to_string(), "skl(0.1)");
        let bad: DivergenceKind = serde_json::from_str(r#"{"kind":"srkl","alpha":1.0}"#).unwrap();
        assert!(bad.validate().is_err());
    }
}
