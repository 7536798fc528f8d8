//! Tabular n-gram softmax models used as both teacher and student.
//!
//! A model of order `m` over a vocabulary of size `V` keeps one row of `V`
//! logits per context, `V^m` rows in total. The row for a context is chosen
//! by its last `m` tokens (left-padded with `bos`) read as a base-`V` number.
//! Each row is an independent softmax, so gradients w.r.t. the table are
//! exact and sparse.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::prob::{argmax, sample, softmax_slice, LogitVector, ProbVector, TokenId, PROB_FLOOR};
use crate::rng::{derive_rng, tag};

/// Leading bytes of a serialized model.
pub const MODEL_MAGIC: [u8; 8] = *b"SLTKDNGM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

const MAX_TABLE_ENTRIES: usize = 1 << 26;

/// Who produced a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Teacher,
    Student,
    Corpus,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Teacher => "teacher",
            Origin::Student => "student",
            Origin::Corpus => "corpus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sequence {
    pub prompt: Vec<TokenId>,
    pub completion: Vec<TokenId>,
    pub origin: Origin,
}

impl Sequence {
    pub fn new(prompt: Vec<TokenId>, completion: Vec<TokenId>, origin: Origin) -> Result<Self> {
        if completion.is_empty() {
            return param("sequence completion must be nonempty");
        }
        Ok(Self {
            prompt,
            completion,
            origin,
        })
    }

    /// Prompt followed by completion.
    pub fn tokens(&self) -> Vec<TokenId> {
        let mut v = self.prompt.clone();
        v.extend_from_slice(&self.completion);
        v
    }

    /// Yields `(context, next_token)` for every completion position.
    pub fn positions(&self) -> impl Iterator<Item = (Vec<TokenId>, TokenId)> + '_ {
        let full = self.tokens();
        let start = self.prompt.len();
        (0..self.completion.len()).map(move |t| (full[..start + t].to_vec(), full[start + t]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    vocab_size: usize,
    order: usize,
    bos: TokenId,
    logits: Vec<f64>,
}

impl NGramModel {
    /// Builds a model from a row-major logit table of `vocab^order` rows.
    pub fn from_table(vocab_size: usize, order: usize, bos: TokenId, logits: Vec<f64>) -> Result<Self> {
        let rows = row_count(vocab_size, order)?;
        if bos.0 >= vocab_size {
            return param(format!("bos token {} out of range", bos.0));
        }
        if logits.len() != rows * vocab_size {
            return param(format!(
                "logit table has {} entries, expected {}",
                logits.len(),
                rows * vocab_size
            ));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite entry in logit table".into()));
        }
        Ok(Self {
            vocab_size,
            order,
            bos,
            logits,
        })
    }

    /// All-zero logits: every row uniform.
    pub fn uniform(vocab_size: usize, order: usize) -> Result<Self> {
        let rows = row_count(vocab_size, order)?;
        Self::from_table(vocab_size, order, TokenId(0), vec![0.0; rows * vocab_size])
    }

    /// Independent `N(0, scale^2)` logits.
    pub fn random_normal(vocab_size: usize, order: usize, scale: f64, seed: u64) -> Result<Self> {
        let rows = row_count(vocab_size, order)?;
        let normal = Normal::new(0.0, scale).map_err(|e| Error::Param(e.to_string()))?;
        let mut rng = derive_rng(seed, &[tag::INIT]);
        let logits = (0..rows * vocab_size).map(|_| normal.sample(&mut rng)).collect();
        Self::from_table(vocab_size, order, TokenId(0), logits)
    }

    /// Teacher whose rows are drawn from a symmetric Dirichlet. Small
    /// `concentration` gives peaked rows, large gives near-uniform rows.
    pub fn random_teacher(vocab_size: usize, order: usize, concentration: f64, seed: u64) -> Result<Self> {
        if !(concentration > 0.0 && concentration.is_finite()) {
            return param(format!("concentration={concentration} must be positive"));
        }
        let rows = row_count(vocab_size, order)?;
        let gamma = Gamma::new(concentration, 1.0).map_err(|e| Error::Param(e.to_string()))?;
        let mut rng = derive_rng(seed, &[tag::INIT]);
        let mut logits = Vec::with_capacity(rows * vocab_size);
        for _ in 0..rows {
            logits.extend(dirichlet_log_row(&gamma, vocab_size, &mut rng));
        }
        Self::from_table(vocab_size, order, TokenId(0), logits)
    }

    /// Add-`smoothing` count model estimated from `corpus`. With zero
    /// smoothing, zero counts are clamped to the probability floor and
    /// contexts never seen get uniform rows.
    pub fn corpus_teacher(corpus: &[Sequence], vocab_size: usize, order: usize, smoothing: f64) -> Result<Self> {
        if corpus.is_empty() {
            return param("corpus must be nonempty");
        }
        if !(smoothing >= 0.0 && smoothing.is_finite()) {
            return param(format!("smoothing={smoothing} must be nonnegative"));
        }
        let mut model = Self::uniform(vocab_size, order)?;
        let rows = model.rows();
        let mut counts = vec![0.0f64; rows * vocab_size];
        for seq in corpus {
            for (ctx, next) in seq.positions() {
                let r = model.context_row(&ctx)?;
                model.check_token(next)?;
                counts[r * vocab_size + next.0] += 1.0;
            }
        }
        for r in 0..rows {
            let row = &counts[r * vocab_size..(r + 1) * vocab_size];
            let total: f64 = row.iter().sum::<f64>() + smoothing * vocab_size as f64;
            if total == 0.0 {
                continue;
            }
            for (dst, c) in model.row_mut(r).iter_mut().zip(row) {
                *dst = ((c + smoothing) / total).max(PROB_FLOOR).ln();
            }
        }
        Ok(model)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bos(&self) -> TokenId {
        self.bos
    }

    pub fn rows(&self) -> usize {
        self.logits.len() / self.vocab_size
    }

    pub fn table(&self) -> &[f64] {
        &self.logits
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.logits[r * self.vocab_size..(r + 1) * self.vocab_size]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let v = self.vocab_size;
        &mut self.logits[r * v..(r + 1) * v]
    }

    /// Softmax of row `r`.
    pub fn row_probs(&self, r: usize) -> ProbVector {
        ProbVector::new(softmax_slice(self.row(r))).expect("softmax of finite logits is a distribution")
    }

    fn check_token(&self, t: TokenId) -> Result<()> {
        if t.0 >= self.vocab_size {
            return param(format!("token {} out of range for vocab {}", t.0, self.vocab_size));
        }
        Ok(())
    }

    /// Table row addressed by the bos-padded last `order` tokens.
    pub fn context_row(&self, context: &[TokenId]) -> Result<usize> {
        let tail = &context[context.len().saturating_sub(self.order)..];
        for &t in tail {
            self.check_token(t)?;
        }
        let pad = self.order - tail.len();
        let idx = std::iter::repeat_n(self.bos, pad)
            .chain(tail.iter().copied())
            .fold(0usize, |acc, t| acc * self.vocab_size + t.0);
        Ok(idx)
    }

    pub fn predict_logits(&self, context: &[TokenId]) -> Result<LogitVector> {
        let r = self.context_row(context)?;
        LogitVector::new(self.row(r).to_vec())
    }

    pub fn predict(&self, context: &[TokenId]) -> Result<ProbVector> {
        Ok(self.row_probs(self.context_row(context)?))
    }

    /// Autoregressive rollout of `length` tokens after `prompt`.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        prompt: &[TokenId],
        length: usize,
        mode: DecodeMode,
        temperature: f64,
        origin: Origin,
        rng: &mut R,
    ) -> Result<Sequence> {
        if length == 0 {
            return param("generation length must be at least 1");
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return param(format!("temperature={temperature} must be positive"));
        }
        let mut tokens = prompt.to_vec();
        for _ in 0..length {
            let row = self.row(self.context_row(&tokens)?);
            let next = match mode {
                DecodeMode::Greedy => argmax(row),
                DecodeMode::Sample => {
                    let scaled: Vec<f64> = row.iter().map(|z| z / temperature).collect();
                    let p = ProbVector::new(softmax_slice(&scaled))?;
                    sample(&p, rng)
                }
            };
            tokens.push(next);
        }
        let completion = tokens.split_off(prompt.len());
        Sequence::new(tokens, completion, origin)
    }

    /// Applies one optimizer step to the rows present in `grads`. Rows not in
    /// the map are left untouched. Fails without modifying anything if any
    /// gradient is non-finite.
    pub fn apply_grad(&mut self, grads: &RowGrads, opt: &mut Optimizer) -> Result<()> {
        for (&r, g) in grads {
            if r >= self.rows() || g.len() != self.vocab_size {
                return param(format!("gradient row {r} does not match the table"));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in row {r}")));
            }
        }
        for (&r, g) in grads {
            opt.step_row(r, self.row_mut(r), g);
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&MODEL_MAGIC)?;
        w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
        for v in [self.vocab_size, self.order, self.bos.0] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&(self.rows() as u64).to_le_bytes())?;
        for x in &self.logits {
            w.write_all(&x.to_bits().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if magic != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model format version {version}")));
        }
        let vocab = read_u32(&mut r)? as usize;
        let order = read_u32(&mut r)? as usize;
        let bos = read_u32(&mut r)? as usize;
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8)?;
        let rows = u64::from_le_bytes(buf8) as usize;
        if rows != row_count(vocab, order)? {
            return Err(Error::Format("row count disagrees with vocab and order".into()));
        }
        let mut logits = Vec::with_capacity(rows * vocab);
        for _ in 0..rows * vocab {
            r.read_exact(&mut buf8)?;
            logits.push(f64::from_bits(u64::from_le_bytes(buf8)));
        }
        Self::from_table(vocab, order, TokenId(bos), logits)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn row_count(vocab_size: usize, order: usize) -> Result<usize> {
    if vocab_size < 2 {
        return param(format!("vocab_size={vocab_size} must be at least 2"));
    }
    let rows = u32::try_from(order)
        .ok()
        .and_then(|o| vocab_size.checked_pow(o))
        .filter(|r| r.saturating_mul(vocab_size) <= MAX_TABLE_ENTRIES);
    rows.ok_or_else(|| Error::Param(format!("table for vocab {vocab_size}, order {order} is too large")))
}

/// Log of one Dirichlet draw, via normalized Gamma variates.
pub(crate) fn dirichlet_log_row<R: Rng + ?Sized>(gamma: &Gamma<f64>, n: usize, rng: &mut R) -> Vec<f64> {
    let g: Vec<f64> = (0..n).map(|_| gamma.sample(rng).max(f64::MIN_POSITIVE)).collect();
    let log_total = g.iter().sum::<f64>().ln();
    g.into_iter().map(|x| x.ln() - log_total).collect()
}

/// Sparse gradient: table row index to a vocab-length vector.
pub type RowGrads = BTreeMap<usize, Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        #[serde(default = "default_sgd_lr")]
        lr: f64,
    },
    Adam {
        #[serde(default = "default_adam_lr")]
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_sgd_lr() -> f64 {
    0.5
}
fn default_adam_lr() -> f64 {
    0.05
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Sgd { lr: default_sgd_lr() }
    }
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::Sgd { lr } => lr >= 0.0 && lr.is_finite(),
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                lr >= 0.0
                    && lr.is_finite()
                    && (0.0..1.0).contains(&beta1)
                    && (0.0..1.0).contains(&beta2)
                    && eps > 0.0
            }
        };
        if !ok {
            return param(format!("invalid optimizer settings {self:?}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct AdamRow {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Optimizer with lazily created per-row state. Adam moments and bias
/// correction are tracked per row so untouched rows never move.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    adam: BTreeMap<usize, AdamRow>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Self {
        Self {
            cfg,
            adam: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    fn step_row(&mut self, r: usize, row: &mut [f64], g: &[f64]) {
        match self.cfg {
            OptimizerConfig::Sgd { lr } => {
                for (w, gi) in row.iter_mut().zip(g) {
                    *w -= lr * gi;
                }
            }
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                let st = self.adam.entry(r).or_insert_with(|| AdamRow {
                    m: vec![0.0; g.len()],
                    v: vec![0.0; g.len()],
                    t: 0,
                });
                st.t += 1;
                let c1 = 1.0 - beta1.powi(st.t);
                let c2 = 1.0 - beta2.powi(st.t);
                for i in 0..g.len() {
                    st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g[i];
                    st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g[i] * g[i];
                    let mhat = st.m[i] / c1;
                    let vhat = st.v[i] / c2;
                    row[i] -= lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::total_variation;
    use crate::rng::rng_from_seed;

    fn toks(v: &[usize]) -> Vec<TokenId> {
        v.iter().map(|&i| TokenId(i)).collect()
    }

    fn indexed(vocab: usize, order: usize) -> NGramModel {
        let rows = vocab.pow(order as u32);
        let logits = (0..rows * vocab).map(|i| (i / vocab) as f64).collect();
        NGramModel::from_table(vocab, order, TokenId(0), logits).unwrap()
    }

    #[test]
    fn row_indexing() {
        let m = indexed(4, 0);
        assert_eq!(m.context_row(&toks(&[1, 2, 3])).unwrap(), 0);
        assert_eq!(m.context_row(&[]).unwrap(), 0);

        let m = indexed(4, 1);
        assert_eq!(m.context_row(&toks(&[0, 1, 3])).unwrap(), 3);
        assert_eq!(m.predict_logits(&toks(&[2, 3])).unwrap().as_slice(), &[3.0; 4]);

        let m = indexed(4, 2);
        assert_eq!(m.context_row(&toks(&[1, 2])).unwrap(), 6);
        assert_eq!(m.context_row(&toks(&[3, 1, 2])).unwrap(), 6);
        // bos-padded: [bos=0, 2]
        assert_eq!(m.context_row(&toks(&[2])).unwrap(), 2);
        assert!(m.context_row(&toks(&[1, 9])).is_err());
    }

    #[test]
    fn random_teacher_concentration() {
        let flat = NGramModel::random_teacher(8, 2, 1e6, 1).unwrap();
        let u = ProbVector::uniform(8).unwrap();
        for r in 0..flat.rows() {
            assert!(total_variation(&flat.row_probs(r), &u).unwrap() < 0.01);
        }
        assert_eq!(
            NGramModel::random_teacher(8, 1, 0.5, 3).unwrap(),
            NGramModel::random_teacher(8, 1, 0.5, 3).unwrap()
        );
        let mean_entropy = |m: &NGramModel| {
            (0..m.rows())
                .map(|r| -m.row_probs(r).as_slice().iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>())
                .sum::<f64>()
                / m.rows() as f64
        };
        // 16^2 = 256 rows per model
        let peaked = NGramModel::random_teacher(16, 2, 0.1, 4).unwrap();
        let broad = NGramModel::random_teacher(16, 2, 10.0, 4).unwrap();
        assert!(mean_entropy(&peaked) < mean_entropy(&broad));
        assert!(NGramModel::random_teacher(4, 1, 0.0, 1).is_err());
    }

    #[test]
    fn corpus_teacher_counts() {
        let zeros = Sequence::new(toks(&[0]), toks(&[0; 20]), Origin::Corpus).unwrap();
        let m = NGramModel::corpus_teacher(&[zeros], 3, 1, 0.0).unwrap();
        assert!(m.predict(&toks(&[0])).unwrap().as_slice()[0] > 1.0 - 1e-9);

        let alt = Sequence::new(toks(&[0]), toks(&[1, 0, 1, 0, 1, 0]), Origin::Corpus).unwrap();
        let m = NGramModel::corpus_teacher(&[alt.clone()], 3, 1, 0.0).unwrap();
        assert!(m.predict(&toks(&[0])).unwrap().as_slice()[1] > 1.0 - 1e-9);
        assert!(m.predict(&toks(&[1])).unwrap().as_slice()[0] > 1.0 - 1e-9);

        let m = NGramModel::corpus_teacher(&[alt], 3, 1, 1.0).unwrap();
        let unseen = m.predict(&toks(&[2])).unwrap();
        assert!(unseen.as_slice().iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));
        for r in 0..m.rows() {
            assert!(m.row_probs(r).as_slice().iter().all(|p| *p > 0.0));
        }
        assert!(NGramModel::corpus_teacher(&[], 3, 1, 1.0).is_err());
    }

    #[test]
    fn generate_modes() {
        let mut logits = vec![-50.0; 9];
        for r in 0..3 {
            logits[r * 3] = 0.0;
        }
        let det = NGramModel::from_table(3, 1, TokenId(0), logits).unwrap();
        let mut rng = rng_from_seed(1);
        let s = det
            .generate(&toks(&[2]), 12, DecodeMode::Sample, 1.0, Origin::Teacher, &mut rng)
            .unwrap();
        assert!(s.completion.iter().all(|t| t.0 == 0));
        assert_eq!(s.origin, Origin::Teacher);

        let m = NGramModel::random_normal(5, 1, 2.0, 9).unwrap();
        let a = m
            .generate(&toks(&[1]), 10, DecodeMode::Greedy, 1.0, Origin::Student, &mut rng_from_seed(1))
            .unwrap();
        let b = m
            .generate(&toks(&[1]), 10, DecodeMode::Greedy, 1.0, Origin::Student, &mut rng_from_seed(2))
            .unwrap();
        assert_eq!(a, b);
        assert!(m
            .generate(&toks(&[1]), 0, DecodeMode::Greedy, 1.0, Origin::Student, &mut rng)
            .is_err());
    }

    #[test]
    fn low_temperature_sampling_matches_greedy() {
        let m = NGramModel::random_normal(6, 1, 3.0, 17).unwrap();
        let prompt = toks(&[2]);
        let greedy = m
            .generate(&prompt, 8, DecodeMode::Greedy, 1.0, Origin::Student, &mut rng_from_seed(0))
            .unwrap();
        let mut rng = rng_from_seed(5);
        let agree = (0..1000)
            .filter(|_| {
                m.generate(&prompt, 8, DecodeMode::Sample, 1e-4, Origin::Student, &mut rng)
                    .unwrap()
                    == greedy
            })
            .count();
        assert!(agree >= 999, "{agree}");
    }

    #[test]
    fn sgd_and_zero_grad_updates() {
        let mut m = NGramModel::random_normal(4, 1, 1.0, 2).unwrap();
        let before = m.clone();
        let mut opt = Optimizer::new(OptimizerConfig::Sgd { lr: 0.1 });
        let zero: RowGrads = [(1, vec![0.0; 4])].into_iter().collect();
        m.apply_grad(&zero, &mut opt).unwrap();
        assert_eq!(m, before);

        let g = vec![1.0, -2.0, 0.5, 0.5];
        let grads: RowGrads = [(2, g.clone())].into_iter().collect();
        m.apply_grad(&grads, &mut opt).unwrap();
        for (i, (a, b)) in m.row(2).iter().zip(before.row(2)).enumerate() {
            assert!((a - (b - 0.1 * g[i])).abs() < 1e-15);
        }
        for r in [0, 1, 3] {
            assert_eq!(m.row(r), before.row(r));
        }
    }

    #[test]
    fn nan_gradient_aborts_without_change() {
        let mut m = NGramModel::uniform(3, 1).unwrap();
        let mut opt = Optimizer::new(OptimizerConfig::default());
        let grads: RowGrads = [(0, vec![0.1, 0.1, 0.1]), (1, vec![f64::NAN, 0.0, 0.0])]
            .into_iter()
            .collect();
        assert!(matches!(m.apply_grad(&grads, &mut opt), Err(Error::Numeric(_))));
        assert_eq!(m, NGramModel::uniform(3, 1).unwrap());
    }

    #[test]
    fn adam_moves_against_constant_gradient() {
        // scalar Adam reference simulation
        let (lr, b1, b2, eps) = (0.05, 0.9, 0.999, 1e-8);
        let g = [0.3, -0.7];
        let mut oracle = [0.0f64; 2];
        let (mut mm, mut vv) = ([0.0f64; 2], [0.0f64; 2]);

        let mut m = NGramModel::uniform(2, 0).unwrap();
        let mut opt = Optimizer::new(OptimizerConfig::adam(lr));
        let grads: RowGrads = [(0, g.to_vec())].into_iter().collect();
        let mut prev = m.row(0).to_vec();
        for t in 1..=100 {
            m.apply_grad(&grads, &mut opt).unwrap();
            for i in 0..2 {
                mm[i] = b1 * mm[i] + (1.0 - b1) * g[i];
                vv[i] = b2 * vv[i] + (1.0 - b2) * g[i] * g[i];
                let mh = mm[i] / (1.0 - b1.powi(t));
                let vh = vv[i] / (1.0 - b2.powi(t));
                oracle[i] -= lr * mh / (vh.sqrt() + eps);
            }
            let row = m.row(0);
            assert!(row[0] < prev[0] && row[1] > prev[1]);
            prev = row.to_vec();
        }
        for i in 0..2 {
            assert!((m.row(0)[i] - oracle[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn serialization_layout() {
        let m = NGramModel::random_normal(3, 1, 1.0, 4).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"SLTKDNGM");
        assert_eq!(buf.len(), 8 + 4 + 12 + 8 + 9 * 8);
        assert_eq!(NGramModel::read_from(&buf[..]).unwrap(), m);
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(NGramModel::read_from(&bad[..]), Err(Error::Format(_))));
        assert!(NGramModel::read_from(&buf[..buf.len() - 1]).is_err());
    }
}
