//! Experiment files.
//!
//! An experiment is one TOML document: a schema version, a root seed, the
//! teacher and student to build, the training run and per-study parameters.
//! Unknown keys are rejected at every level.
//!
//! ```toml
//! version = 1
//! seed = 0
//!
//! [teacher]
//! kind = "dirichlet"
//! vocab_size = 16
//! order = 1
//! concentration = 0.2
//!
//! [student]
//! init = "normal"
//! scale = 4.0
//!
//! [training]
//! steps = 1000
//! verifier = { mode = "spec_k", k = 5, beta = 0.01 }
//! ```
//!
//! The root seed drives everything: the teacher draw, the student draw and
//! `training.seed`, which therefore must not be set separately.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::fixed_point::{DEFAULT_SPREAD_TOLERANCE, DEFAULT_TV_TOLERANCE};
use crate::analysis::landscape::default_radii;
use crate::analysis::robustness::RobustnessEval;
use crate::analysis::{NoisyTeacherSetup, SpecSimConfig, TarStudyConfig};
use crate::divergence::DivergenceKind;
use crate::error::{param, Error, Result};
use crate::model::NGramModel;
use crate::rng::{derive_seed, tag};
use crate::trainer::TrainingConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Environment variable that overrides the configured output directory.
pub const OUT_ENV: &str = "SELECTKD_OUT";

pub const DEFAULT_OUT_DIR: &str = "selectkd-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub teacher: TeacherSpec,
    #[serde(default)]
    pub student: StudentInit,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub study: StudyParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TeacherSpec {
    /// Rows drawn from a symmetric Dirichlet.
    Dirichlet {
        vocab_size: usize,
        order: usize,
        concentration: f64,
    },
    /// A clean Dirichlet model with some rows replaced by peaked noise.
    Noisy(NoisyTeacherSetup),
    /// A model file written by `train`. Relative paths resolve against the
    /// config file's directory.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "init", rename_all = "snake_case", deny_unknown_fields)]
pub enum StudentInit {
    /// Logits `N(0, scale^2)`.
    Normal { scale: f64 },
    Uniform,
    /// A copy of the teacher.
    Teacher,
    /// The weak prior of a noisy-teacher world.
    Prior,
    File { path: PathBuf },
}

impl Default for StudentInit {
    fn default() -> Self {
        StudentInit::Normal { scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointParams {
    pub kinds: Vec<DivergenceKind>,
    /// Rows visited fewer times in the pool are left out of the TV averages.
    pub min_visits: usize,
    pub tv_tolerance: f64,
    pub spread_tolerance: f64,
}

impl Default for FixedPointParams {
    fn default() -> Self {
        Self {
            kinds: vec![
                DivergenceKind::Fkl,
                DivergenceKind::Rkl,
                DivergenceKind::Skl { alpha: 0.1 },
                DivergenceKind::Skl { alpha: 0.5 },
                DivergenceKind::Srkl { alpha: 0.1 },
                DivergenceKind::Srkl { alpha: 0.5 },
            ],
            min_visits: 50,
            tv_tolerance: DEFAULT_TV_TOLERANCE,
            spread_tolerance: DEFAULT_SPREAD_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeParams {
    pub kind: DivergenceKind,
    pub directions: usize,
    pub radii: Vec<f64>,
}

impl Default for LandscapeParams {
    fn default() -> Self {
        Self {
            kind: DivergenceKind::Fkl,
            directions: 10,
            radii: default_radii(),
        }
    }
}

/// Which model drafts in the `spec-sim` study; the target is the teacher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drafter {
    /// The student after the configured training run.
    #[default]
    Trained,
    /// The untrained student.
    Initial,
    Teacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecSimParams {
    pub drafter: Drafter,
    pub gamma: usize,
    pub rounds: usize,
    pub cost_ratio: f64,
    pub max_context: usize,
}

impl Default for SpecSimParams {
    fn default() -> Self {
        let d = SpecSimConfig::default();
        Self {
            drafter: Drafter::default(),
            gamma: d.gamma,
            rounds: d.rounds,
            cost_ratio: d.cost_ratio,
            max_context: d.max_context,
        }
    }
}

impl SpecSimParams {
    pub fn sim_config(&self) -> SpecSimConfig {
        SpecSimConfig {
            gamma: self.gamma,
            rounds: self.rounds,
            cost_ratio: self.cost_ratio,
            max_context: self.max_context,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessParams {
    pub seeds: Vec<u64>,
    pub eval: RobustnessEval,
}

impl Default for RobustnessParams {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            eval: RobustnessEval::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyParams {
    pub tar: TarStudyConfig,
    pub fixed_point: FixedPointParams,
    pub landscape: LandscapeParams,
    pub spec_sim: SpecSimParams,
    pub robustness: RobustnessParams,
}

/// Teacher and student built from a config.
#[derive(Debug, Clone)]
pub struct Models {
    pub teacher: NGramModel,
    pub student: NGramModel,
    /// The uncorrupted reference of a noisy teacher.
    pub clean: Option<NGramModel>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative model paths are resolved
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let TeacherSpec::File { path } = &mut cfg.teacher {
            fix(path);
        }
        if let StudentInit::File { path } = &mut cfg.student {
            fix(path);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return param(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if self.training.seed != 0 && self.training.seed != self.seed {
            return param("set the top-level `seed`, not `training.seed`");
        }
        self.training_config().validate()?;
        let vocab = match &self.teacher {
            TeacherSpec::Dirichlet { vocab_size, .. } => Some(*vocab_size),
            TeacherSpec::Noisy(s) => Some(s.vocab_size),
            TeacherSpec::File { .. } => None,
        };
        if let (Some(v), Some(vc)) = (vocab, &self.training.verifier) {
            vc.validate_for_vocab(v)?;
        }
        match &self.teacher {
            TeacherSpec::Dirichlet {
                vocab_size,
                concentration,
                ..
            } => {
                if *vocab_size < 2 {
                    return param("teacher vocab_size must be at least 2");
                }
                if !positive(*concentration) {
                    return param("teacher concentration must be positive");
                }
            }
            TeacherSpec::Noisy(s) => {
                if s.vocab_size < 2 || !positive(s.clean_concentration) || !positive(s.noise_concentration) {
                    return param("noisy teacher needs vocab_size >= 2 and positive concentrations");
                }
            }
            TeacherSpec::File { .. } => {}
        }
        match self.student {
            StudentInit::Normal { scale } if !(scale >= 0.0 && scale.is_finite()) => {
                return param("student scale must be nonnegative");
            }
            StudentInit::Prior if !matches!(self.teacher, TeacherSpec::Noisy(_)) => {
                return param("student init `prior` needs a noisy teacher");
            }
            _ => {}
        }
        let st = &self.study;
        if st.tar.window == 0 || st.tar.slack.is_nan() || st.tar.slack < 0.0 {
            return param("study.tar needs window >= 1 and slack >= 0");
        }
        if st.fixed_point.kinds.is_empty() {
            return param("study.fixed_point.kinds is empty");
        }
        for k in &st.fixed_point.kinds {
            k.validate()?;
        }
        st.landscape.kind.validate()?;
        if st.landscape.directions < 2 || st.landscape.radii.is_empty() {
            return param("study.landscape needs at least two directions and one radius");
        }
        if st.spec_sim.gamma == 0 || st.spec_sim.rounds == 0 {
            return param("study.spec_sim needs gamma >= 1 and rounds >= 1");
        }
        if st.robustness.seeds.is_empty() {
            return param("study.robustness.seeds is empty");
        }
        Ok(())
    }

    /// `training` with the root seed filled in.
    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            seed: self.seed,
            ..self.training.clone()
        }
    }

    pub fn build_models(&self) -> Result<Models> {
        let (teacher, clean, prior) = match &self.teacher {
            TeacherSpec::Dirichlet {
                vocab_size,
                order,
                concentration,
            } => (
                NGramModel::random_teacher(*vocab_size, *order, *concentration, self.seed)?,
                None,
                None,
            ),
            TeacherSpec::Noisy(setup) => {
                let w = setup.build(self.seed)?;
                (w.teacher, Some(w.clean), Some(w.student))
            }
            TeacherSpec::File { path } => (NGramModel::load(path)?, None, None),
        };
        let (v, n) = (teacher.vocab_size(), teacher.order());
        let student = match &self.student {
            StudentInit::Normal { scale } => {
                NGramModel::random_normal(v, n, *scale, derive_seed(self.seed, &[tag::INIT, 1]))?
            }
            StudentInit::Uniform => NGramModel::uniform(v, n)?,
            StudentInit::Teacher => teacher.clone(),
            StudentInit::Prior => prior.ok_or_else(|| Error::Param("student init `prior` needs a noisy teacher".into()))?,
            StudentInit::File { path } => NGramModel::load(path)?,
        };
        if student.vocab_size() != v || student.order() != n {
            return param("student and teacher shapes differ");
        }
        Ok(Models { teacher, student, clean })
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

/// Output directory: explicit flag, then `SELECTKD_OUT`, then the config,
/// then [`DEFAULT_OUT_DIR`].
pub fn resolve_out_dir(flag: Option<&Path>, env: Option<&str>, config: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .or_else(|| config.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}
