//! Selective distillation training loop.
//!
//! Each step draws a batch (teacher pool or fresh student rollouts), scores
//! every completion position with the verifier, weights the per-token
//! divergence by the verifier's output, normalizes by sequence length,
//! averages over the batch and applies one optimizer step. Verifier weights
//! are plain numbers and never receive gradient.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::{grad_with_q, DivergenceKind};
use crate::error::{param, Error, Result};
use crate::model::{DecodeMode, NGramModel, Optimizer, OptimizerConfig, Origin, RowGrads, Sequence};
use crate::prob::{neumaier_sum, softmax_slice, ProbVector, TokenId};
use crate::rng::{derive_rng, tag};
use crate::verifier::{verify, VerifierConfig};

/// Piecewise-linear function of the training fraction in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct Schedule {
    knots: Vec<(f64, f64)>,
}

impl Schedule {
    pub fn constant(v: f64) -> Self {
        Self {
            knots: vec![(0.0, v)],
        }
    }

    /// Knots must be nonempty with strictly increasing positions in `[0, 1]`.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return param("schedule needs at least one knot");
        }
        if knots.iter().any(|(x, y)| !(0.0..=1.0).contains(x) || !y.is_finite()) {
            return param("schedule knots must have positions in [0, 1] and finite values");
        }
        if knots.windows(2).any(|w| w[0].0 >= w[1].0) {
            return param("schedule knot positions must be strictly increasing");
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Linear interpolation between knots, constant beyond the ends.
    pub fn eval(&self, fraction: f64) -> f64 {
        let k = &self.knots;
        if fraction <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if fraction == x1 {
                return y1;
            }
            if fraction < x1 {
                return y0 + (y1 - y0) * (fraction - x0) / (x1 - x0);
            }
        }
        k[k.len() - 1].1
    }
}

impl TryFrom<Vec<(f64, f64)>> for Schedule {
    type Error = Error;
    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        Schedule::new(v)
    }
}

impl From<Schedule> for Vec<(f64, f64)> {
    fn from(s: Schedule) -> Self {
        s.knots
    }
}

pub fn schedule_eval(schedule: &Schedule, step_fraction: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&step_fraction) {
        return param(format!("step fraction {step_fraction} outside [0, 1]"));
    }
    Ok(schedule.eval(step_fraction))
}

/// Token-level training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Objective {
    Fkl,
    Rkl,
    Skl { alpha: f64 },
    Srkl { alpha: f64 },
    /// Skew KL with the `alpha_t` schedule on teacher data and skew reverse
    /// KL with the `alpha_s` schedule on student data.
    Distillm2,
    /// Cross-entropy on the sampled next token (one-hot target).
    Sft,
}

impl Objective {
    pub fn divergence(kind: DivergenceKind) -> Self {
        match kind {
            DivergenceKind::Fkl => Objective::Fkl,
            DivergenceKind::Rkl => Objective::Rkl,
            DivergenceKind::Skl { alpha } => Objective::Skl { alpha },
            DivergenceKind::Srkl { alpha } => Objective::Srkl { alpha },
        }
    }

    /// The divergence applied to a sequence of the given origin.
    pub fn kind_for(&self, origin: Origin, alpha_t: f64, alpha_s: f64) -> Result<DivergenceKind> {
        Ok(match *self {
            Objective::Fkl | Objective::Sft => DivergenceKind::Fkl,
            Objective::Rkl => DivergenceKind::Rkl,
            Objective::Skl { alpha } => DivergenceKind::skl(alpha)?,
            Objective::Srkl { alpha } => DivergenceKind::srkl(alpha)?,
            Objective::Distillm2 => match origin {
                Origin::Student => DivergenceKind::srkl(alpha_s)?,
                Origin::Teacher | Origin::Corpus => DivergenceKind::skl(alpha_t)?,
            },
        })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Objective::Skl { alpha } => DivergenceKind::skl(alpha).map(|_| ()),
            Objective::Srkl { alpha } => DivergenceKind::srkl(alpha).map(|_| ()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub objective: Objective,
    /// `None` trains every token with full weight (vanilla distillation).
    /// Written as the string `"none"` in config files.
    #[serde(with = "optional_verifier")]
    pub verifier: Option<VerifierConfig>,
    /// Evaluated without affecting the loss when `verifier` is `None`, so
    /// that vanilla runs still log an acceptance rate.
    pub shadow_verifier: VerifierConfig,
    /// Probability that a step's batch is generated by the current student.
    pub mu: f64,
    pub alpha_t: Schedule,
    pub alpha_s: Schedule,
    pub steps: usize,
    pub batch_size: usize,
    pub seq_length: usize,
    pub prompt_length: usize,
    /// Number of teacher sequences generated once before training.
    pub pool_size: usize,
    pub temperature: f64,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub workers: usize,
    pub record_wall_time: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Fkl,
            verifier: Some(VerifierConfig::default()),
            shadow_verifier: VerifierConfig::default(),
            mu: 0.0,
            alpha_t: Schedule::constant(0.1),
            alpha_s: Schedule::constant(0.1),
            steps: 300,
            batch_size: 16,
            seq_length: 16,
            prompt_length: 1,
            pool_size: 256,
            temperature: 1.0,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            workers: 1,
            record_wall_time: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return param("steps must be at least 1");
        }
        if self.batch_size == 0 || self.seq_length == 0 || self.pool_size == 0 {
            return param("batch_size, seq_length and pool_size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return param(format!("mu={} must lie in [0, 1]", self.mu));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return param("temperature must be positive");
        }
        if self.workers == 0 {
            return param("workers must be at least 1");
        }
        self.objective.validate()?;
        if let Some(v) = &self.verifier {
            v.validate()?;
        }
        self.shadow_verifier.validate()?;
        self.optimizer.validate()?;
        for s in [&self.alpha_t, &self.alpha_s] {
            Schedule::new(s.knots.clone())?;
            if s.knots.iter().any(|(_, y)| !(0.0..1.0).contains(y)) {
                return param("alpha schedule values must lie in [0, 1)");
            }
        }
        Ok(())
    }

    pub fn is_selective(&self) -> bool {
        self.verifier.is_some()
    }

    fn active_verifier(&self) -> &VerifierConfig {
        self.verifier.as_ref().unwrap_or(&self.shadow_verifier)
    }

    fn step_fraction(&self, step: usize) -> f64 {
        if self.steps <= 1 {
            0.0
        } else {
            step as f64 / (self.steps - 1) as f64
        }
    }
}

mod optional_verifier {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::verifier::VerifierConfig;

    #[derive(Serialize, Deserialize)]
    #[serde(rename_all = "lowercase")]
    enum Off {
        None,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Off(Off),
        On(VerifierConfig),
    }

    pub fn serialize<S: Serializer>(v: &Option<VerifierConfig>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => Repr::Off(Off::None),
            Some(c) => Repr::On(*c),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<VerifierConfig>, D::Error> {
        Ok(match Repr::deserialize(d)? {
            Repr::Off(Off::None) => None,
            Repr::On(c) => Some(c),
        })
    }
}

/// One row of a [`TrainingTrace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Mean weighted loss over the batch.
    pub loss: f64,
    /// Acceptance rate over all verified positions; `None` for soft verifiers.
    pub tar: Option<f64>,
    /// Mean unweighted divergence over the batch.
    pub raw_div: f64,
    pub alpha_t: f64,
    pub alpha_s: f64,
    /// Wall time of the step, only when timing is enabled.
    pub wall_ms: Option<f64>,
    pub origin: Origin,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrainingTrace {
    pub records: Vec<StepRecord>,
}

impl TrainingTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn tar_series(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.tar).collect()
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    /// CSV with header `step,loss,tar,raw_div,alpha_t,alpha_s,wall_ms,origin`;
    /// missing values are empty fields.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        for r in &self.records {
            out.serialize(r).map_err(csv_err)?;
        }
        if self.records.is_empty() {
            out.write_record(["step", "loss", "tar", "raw_div", "alpha_t", "alpha_s", "wall_ms", "origin"])
                .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// JSON array of step records with keys in CSV column order.
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Per-sequence contribution to a step.
#[derive(Debug, Default)]
struct SeqOutcome {
    loss: f64,
    raw: f64,
    accepted: usize,
    verified: usize,
    discrete: bool,
    grads: Vec<(usize, Vec<f64>)>,
}

struct StepCtx<'a> {
    student: &'a NGramModel,
    teacher: &'a NGramModel,
    cfg: &'a TrainingConfig,
    step: usize,
    alpha_t: f64,
    alpha_s: f64,
    scale_batch: f64,
}

fn process_sequence(ctx: &StepCtx<'_>, seq_idx: usize, seq: &Sequence) -> Result<SeqOutcome> {
    let cfg = ctx.cfg;
    let kind = cfg.objective.kind_for(seq.origin, ctx.alpha_t, ctx.alpha_s)?;
    let vcfg = cfg.active_verifier();
    let n = seq.completion.len();
    let scale = ctx.scale_batch / n as f64;
    let mut out = SeqOutcome {
        discrete: vcfg.is_discrete(),
        ..Default::default()
    };
    let mut losses = Vec::with_capacity(n);
    let mut raws = Vec::with_capacity(n);
    for (t, (context, next)) in seq.positions().enumerate() {
        let rs = ctx.student.context_row(&context)?;
        let p = match cfg.objective {
            Objective::Sft => ProbVector::one_hot(ctx.teacher.vocab_size(), next)?,
            _ => ctx.teacher.predict(&context)?,
        };
        let q = ProbVector::new(softmax_slice(ctx.student.row(rs)))?;
        let mut rng = derive_rng(cfg.seed, &[tag::VERIFY, ctx.step as u64, seq_idx as u64, t as u64]);
        let outcome = verify(&p, &q, vcfg, &mut rng)?;
        out.verified += 1;
        if outcome.accepted {
            out.accepted += 1;
        }
        let weight = if cfg.is_selective() { outcome.weight } else { 1.0 };
        let d = kind.value(&p, &q)?;
        raws.push(d);
        losses.push(weight * d);
        if weight != 0.0 {
            let g = grad_with_q(kind, p.as_slice(), q.as_slice());
            out.grads
                .push((rs, g.into_iter().map(|x| weight * scale * x).collect()));
        }
    }
    out.loss = neumaier_sum(losses) / n as f64;
    out.raw = neumaier_sum(raws) / n as f64;
    Ok(out)
}

/// One optimizer step on `batch`. The student is updated in place.
pub fn train_step(
    student: &mut NGramModel,
    teacher: &NGramModel,
    batch: &[Sequence],
    cfg: &TrainingConfig,
    opt: &mut Optimizer,
    step: usize,
) -> Result<StepRecord> {
    if batch.is_empty() {
        return param("batch must be nonempty");
    }
    if student.vocab_size() != teacher.vocab_size() {
        return param("teacher and student vocabularies differ");
    }
    if let Some(v) = &cfg.verifier {
        v.validate_for_vocab(student.vocab_size())?;
    }
    let started = cfg.record_wall_time.then(Instant::now);
    let frac = cfg.step_fraction(step);
    let ctx = StepCtx {
        student,
        teacher,
        cfg,
        step,
        alpha_t: cfg.alpha_t.eval(frac),
        alpha_s: cfg.alpha_s.eval(frac),
        scale_batch: 1.0 / batch.len() as f64,
    };
    let outcomes = map_sequences(&ctx, batch, cfg.workers)?;

    let b = batch.len() as f64;
    let loss = neumaier_sum(outcomes.iter().map(|o| o.loss)) / b;
    let raw_div = neumaier_sum(outcomes.iter().map(|o| o.raw)) / b;
    let verified: usize = outcomes.iter().map(|o| o.verified).sum();
    let accepted: usize = outcomes.iter().map(|o| o.accepted).sum();
    let tar = outcomes
        .first()
        .filter(|o| o.discrete)
        .map(|_| accepted as f64 / verified as f64);

    let mut grads = RowGrads::new();
    for o in outcomes {
        for (r, g) in o.grads {
            match grads.get_mut(&r) {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, x)| *a += x),
                None => {
                    grads.insert(r, g);
                }
            }
        }
    }
    if !loss.is_finite() || grads.values().flatten().any(|x| !x.is_finite()) {
        return Err(Error::TrainingAborted {
            step,
            reason: "non-finite loss or gradient".into(),
        });
    }
    let (alpha_t, alpha_s) = (ctx.alpha_t, ctx.alpha_s);
    student.apply_grad(&grads, opt).map_err(|e| Error::TrainingAborted {
        step,
        reason: e.to_string(),
    })?;
    Ok(StepRecord {
        step,
        loss,
        tar,
        raw_div,
        alpha_t,
        alpha_s,
        wall_ms: started.map(|s| s.elapsed().as_secs_f64() * 1e3),
        origin: batch[0].origin,
    })
}

fn map_sequences(ctx: &StepCtx<'_>, batch: &[Sequence], workers: usize) -> Result<Vec<SeqOutcome>> {
    if workers <= 1 || batch.len() < 2 {
        return batch
            .iter()
            .enumerate()
            .map(|(i, s)| process_sequence(ctx, i, s))
            .collect();
    }
    let chunk = batch.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = batch
            .chunks(chunk)
            .enumerate()
            .map(|(c, seqs)| {
                scope.spawn(move || {
                    seqs.iter()
                        .enumerate()
                        .map(|(j, s)| process_sequence(ctx, c * chunk + j, s))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut all = Vec::with_capacity(batch.len());
        for h in handles {
            all.extend(h.join().expect("training worker panicked")?);
        }
        Ok(all)
    })
}

/// Uniformly random prompt of `len` tokens.
pub fn random_prompt<R: Rng + ?Sized>(vocab_size: usize, len: usize, rng: &mut R) -> Vec<TokenId> {
    (0..len).map(|_| TokenId(rng.random_range(0..vocab_size))).collect()
}

/// Generates `n` sampled sequences from `model`, labelled with `origin`.
pub fn generate_batch<R: Rng + ?Sized>(
    model: &NGramModel,
    n: usize,
    cfg: &TrainingConfig,
    origin: Origin,
    rng: &mut R,
) -> Result<Vec<Sequence>> {
    (0..n)
        .map(|_| {
            let prompt = random_prompt(model.vocab_size(), cfg.prompt_length, rng);
            model.generate(&prompt, cfg.seq_length, DecodeMode::Sample, cfg.temperature, origin, rng)
        })
        .collect()
}

/// The fixed off-policy pool, generated from the teacher before training.
pub fn teacher_pool(teacher: &NGramModel, cfg: &TrainingConfig) -> Result<Vec<Sequence>> {
    let mut rng = derive_rng(cfg.seed, &[tag::POOL]);
    generate_batch(teacher, cfg.pool_size, cfg, Origin::Teacher, &mut rng)
}

/// Runs `cfg.steps` training steps. With probability `mu` a step trains on
/// fresh rollouts of the current student, otherwise on a resample of the
/// teacher pool. Deterministic given `cfg.seed`.
pub fn run_training(
    cfg: &TrainingConfig,
    teacher: &NGramModel,
    initial_student: &NGramModel,
) -> Result<(NGramModel, TrainingTrace)> {
    let pool = teacher_pool(teacher, cfg)?;
    run_training_on_pool(cfg, teacher, initial_student, &pool)
}

/// As [`run_training`] with a caller-supplied off-policy pool.
pub fn run_training_on_pool(
    cfg: &TrainingConfig,
    teacher: &NGramModel,
    initial_student: &NGramModel,
    pool: &[Sequence],
) -> Result<(NGramModel, TrainingTrace)> {
    cfg.validate()?;
    if pool.is_empty() {
        return param("teacher pool must be nonempty");
    }
    let mut student = initial_student.clone();
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut trace = TrainingTrace::default();
    for step in 0..cfg.steps {
        let mut rng = derive_rng(cfg.seed, &[tag::DATA, step as u64]);
        let on_policy = rng.random::<f64>() < cfg.mu;
        let batch = if on_policy {
            generate_batch(&student, cfg.batch_size, cfg, Origin::Student, &mut rng)?
        } else {
            (0..cfg.batch_size)
                .map(|_| pool[rng.random_range(0..pool.len())].clone())
                .collect()
        };
        let rec = train_step(&mut student, teacher, &batch, cfg, &mut opt, step)?;
        trace.records.push(rec);
    }
    Ok((student, trace))
}
