//! Distillation from a teacher with corrupted rows.
//!
//! A clean high-entropy reference model is drawn first. The teacher copies it
//! except for a few rows replaced by peaked random distributions. The student
//! starts from a weak prior of the clean model (flattened logits plus
//! Gaussian jitter), standing in for a pretrained student. Several
//! distillation methods are then trained on the same teacher pool and scored
//! against the clean reference.

use rand::seq::index::sample as sample_indices;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::landscape::{default_radii, landscape_probe, LossSpec};
use super::specsim::{spec_decode_sim, SpecSimConfig};
use super::{masked_mean, row_tv, row_visits};
use crate::divergence::DivergenceKind;
use crate::error::{param, Error, Result};
use crate::model::{dirichlet_log_row, NGramModel};
use crate::prob::TokenId;
use crate::rng::{derive_rng, derive_seed, tag};
use crate::trainer::{run_training_on_pool, teacher_pool, Objective, TrainingConfig};
use crate::verifier::VerifierConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoisyTeacherSetup {
    pub vocab_size: usize,
    pub order: usize,
    /// Dirichlet concentration of the clean rows (high = high entropy).
    pub clean_concentration: f64,
    pub noise_rows: usize,
    /// Dirichlet concentration of the injected rows (low = peaked).
    pub noise_concentration: f64,
    /// Student logits start at `prior_scale * clean_logits + N(0, prior_noise^2)`.
    pub prior_scale: f64,
    pub prior_noise: f64,
}

impl Default for NoisyTeacherSetup {
    fn default() -> Self {
        Self {
            vocab_size: 16,
            order: 1,
            clean_concentration: 5.0,
            noise_rows: 4,
            noise_concentration: 0.05,
            prior_scale: 0.5,
            prior_noise: 0.3,
        }
    }
}

/// Models produced by [`NoisyTeacherSetup::build`].
#[derive(Debug, Clone)]
pub struct NoisyWorld {
    pub clean: NGramModel,
    pub teacher: NGramModel,
    pub student: NGramModel,
    pub noisy_rows: Vec<usize>,
}

impl NoisyTeacherSetup {
    pub fn build(&self, seed: u64) -> Result<NoisyWorld> {
        let clean = NGramModel::random_teacher(
            self.vocab_size,
            self.order,
            self.clean_concentration,
            derive_seed(seed, &[1]),
        )?;
        if self.noise_rows > clean.rows() {
            return param("more noise rows than table rows");
        }
        let mut rng = derive_rng(seed, &[tag::INIT, 2]);
        let mut noisy_rows = sample_indices(&mut rng, clean.rows(), self.noise_rows).into_vec();
        noisy_rows.sort_unstable();
        let gamma = Gamma::new(self.noise_concentration, 1.0).map_err(|e| Error::Param(e.to_string()))?;
        let mut teacher = clean.clone();
        for &r in &noisy_rows {
            let row = dirichlet_log_row(&gamma, self.vocab_size, &mut rng);
            teacher.row_mut(r).copy_from_slice(&row);
        }
        let jitter = Normal::new(0.0, self.prior_noise).map_err(|e| Error::Param(e.to_string()))?;
        let table = clean
            .table()
            .iter()
            .map(|z| self.prior_scale * z + jitter.sample(&mut rng))
            .collect();
        let student = NGramModel::from_table(self.vocab_size, self.order, clean.bos(), table)?;
        Ok(NoisyWorld {
            clean,
            teacher,
            student,
            noisy_rows,
        })
    }
}

/// A named training recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub name: String,
    pub objective: Objective,
    pub verifier: Option<VerifierConfig>,
    pub mu: f64,
}

impl Method {
    fn new(name: &str, objective: Objective, verifier: Option<VerifierConfig>, mu: f64) -> Self {
        Self {
            name: name.to_string(),
            objective,
            verifier,
            mu,
        }
    }
}

/// Hard-label training on teacher samples, vanilla and skewed distillation,
/// and selective distillation with Spec-k (k = 5, beta = 0.01).
pub fn standard_methods() -> Vec<Method> {
    vec![
        Method::new("sft", Objective::Sft, None, 0.0),
        Method::new("kd", Objective::Fkl, None, 0.0),
        Method::new("distillm", Objective::Distillm2, None, 0.5),
        Method::new("selectkd", Objective::Distillm2, Some(VerifierConfig::default()), 0.5),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub name: String,
    /// Mean TV to the clean reference over visited rows.
    pub tv_clean: f64,
    pub tv_clean_noisy_rows: f64,
    pub tv_teacher: f64,
    pub spec_acceptance: f64,
    pub sharpness: f64,
    pub final_tar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub seed: u64,
    pub noisy_rows: Vec<usize>,
    pub initial_tv_clean: f64,
    pub methods: Vec<MethodResult>,
}

impl RobustnessReport {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// Evaluation knobs shared by all methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessEval {
    pub spec: SpecSimConfig,
    pub directions: usize,
    pub radii: Vec<f64>,
}

impl Default for RobustnessEval {
    fn default() -> Self {
        Self {
            spec: SpecSimConfig {
                gamma: 4,
                rounds: 20_000,
                ..Default::default()
            },
            directions: 10,
            radii: default_radii(),
        }
    }
}

/// Trains every method on `world` and scores it. `base.seed` drives the
/// pool, batches, verification, spec-sim and landscape directions, so all
/// methods see identical data and probes.
pub fn run_robustness(
    world: &NoisyWorld,
    base: &TrainingConfig,
    methods: &[Method],
    eval: &RobustnessEval,
) -> Result<RobustnessReport> {
    let pool = teacher_pool(&world.teacher, base)?;
    let visits = row_visits(&world.student, &pool)?;
    let visited = |r: usize| visits[r] > 0;
    let noisy = |r: usize| visits[r] > 0 && world.noisy_rows.contains(&r);
    let prompts: Vec<Vec<TokenId>> = (0..world.clean.vocab_size()).map(|t| vec![TokenId(t)]).collect();
    let initial_tv_clean = masked_mean(&row_tv(&world.student, &world.clean)?, visited);

    let mut out = Vec::with_capacity(methods.len());
    for m in methods {
        let cfg = TrainingConfig {
            objective: m.objective,
            verifier: m.verifier,
            mu: m.mu,
            ..base.clone()
        };
        let (student, trace) = run_training_on_pool(&cfg, &world.teacher, &world.student, &pool)?;
        let tv_c = row_tv(&student, &world.clean)?;
        let tv_t = row_tv(&student, &world.teacher)?;
        let mut rng = derive_rng(base.seed, &[tag::SIM]);
        let sim = spec_decode_sim(&student, &world.clean, &prompts, &eval.spec, &mut rng)?;
        let probe = landscape_probe(
            &student,
            LossSpec {
                kind: DivergenceKind::Fkl,
                teacher: &world.teacher,
                data: &pool,
            },
            eval.directions,
            &eval.radii,
            base.seed,
        )?;
        out.push(MethodResult {
            name: m.name.clone(),
            tv_clean: masked_mean(&tv_c, visited),
            tv_clean_noisy_rows: masked_mean(&tv_c, noisy),
            tv_teacher: masked_mean(&tv_t, visited),
            spec_acceptance: sim.acceptance_rate,
            sharpness: probe.sharpness,
            final_tar: trace.last().and_then(|r| r.tar),
        });
    }
    Ok(RobustnessReport {
        seed: base.seed,
        noisy_rows: world.noisy_rows.clone(),
        initial_tv_clean,
        methods: out,
    })
}

/// Per-method means over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMeans {
    pub name: String,
    pub tv_clean: f64,
    pub spec_acceptance: f64,
    pub sharpness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessStudy {
    pub seeds: Vec<u64>,
    pub means: Vec<MethodMeans>,
    /// `selectkd` is closer to the clean rows than `distillm`.
    pub tv_ordering: bool,
    /// Acceptance `selectkd > distillm > sft`.
    pub acceptance_ordering: bool,
    /// `selectkd` is no sharper than `distillm`.
    pub sharpness_ordering: bool,
    pub passed: bool,
    pub reports: Vec<RobustnessReport>,
}

impl RobustnessStudy {
    pub fn mean(&self, name: &str) -> Option<&MethodMeans> {
        self.means.iter().find(|m| m.name == name)
    }
}

/// Runs [`run_robustness`] once per seed (world and training seed alike) and
/// checks the expected orderings on the means. Needs methods named `sft`,
/// `distillm` and `selectkd`.
pub fn robustness_study(
    setup: &NoisyTeacherSetup,
    base: &TrainingConfig,
    methods: &[Method],
    eval: &RobustnessEval,
    seeds: &[u64],
) -> Result<RobustnessStudy> {
    if seeds.is_empty() {
        return param("at least one seed is required");
    }
    for name in ["sft", "distillm", "selectkd"] {
        if !methods.iter().any(|m| m.name == name) {
            return param(format!("method `{name}` is missing"));
        }
    }
    let mut reports = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let world = setup.build(seed)?;
        let cfg = TrainingConfig { seed, ..base.clone() };
        reports.push(run_robustness(&world, &cfg, methods, eval)?);
    }
    let n = seeds.len() as f64;
    let means: Vec<MethodMeans> = methods
        .iter()
        .map(|m| {
            let rs = reports.iter().filter_map(|r| r.method(&m.name));
            let (mut tv, mut acc, mut sharp) = (0.0, 0.0, 0.0);
            for r in rs {
                tv += r.tv_clean / n;
                acc += r.spec_acceptance / n;
                sharp += r.sharpness / n;
            }
            MethodMeans {
                name: m.name.clone(),
                tv_clean: tv,
                spec_acceptance: acc,
                sharpness: sharp,
            }
        })
        .collect();
    let get = |name: &str| means.iter().find(|m| m.name == name).expect("checked above");
    let (sft, dm, sk) = (get("sft"), get("distillm"), get("selectkd"));
    let tv_ordering = sk.tv_clean < dm.tv_clean;
    let acceptance_ordering = sk.spec_acceptance > dm.spec_acceptance && dm.spec_acceptance > sft.spec_acceptance;
    let sharpness_ordering = sk.sharpness <= dm.sharpness;
    Ok(RobustnessStudy {
        seeds: seeds.to_vec(),
        passed: tv_ordering && acceptance_ordering && sharpness_ordering,
        tv_ordering,
        acceptance_ordering,
        sharpness_ordering,
        means,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::row_tv;

    #[test]
    fn world_construction() {
        let setup = NoisyTeacherSetup::default();
        let w = setup.build(3).unwrap();
        assert_eq!(w.noisy_rows.len(), setup.noise_rows);
        let tv = row_tv(&w.teacher, &w.clean).unwrap();
        for (r, d) in tv.iter().enumerate() {
            if w.noisy_rows.contains(&r) {
                assert!(*d > 0.0);
            } else {
                assert_eq!(*d, 0.0);
            }
        }
        let again = setup.build(3).unwrap();
        assert_eq!(again.teacher, w.teacher);
        assert_eq!(again.student, w.student);
    }
}
