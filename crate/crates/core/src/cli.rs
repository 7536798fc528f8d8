//! Command-line front end.
//!
//! ```text
//! selectkd gradcheck --kind skl --alpha 0.1 --trials 100 --vocab 6
//! selectkd train configs/default.toml
//! selectkd study tar configs/default.toml --workers 4
//! ```
//!
//! Every command prints one `key=value` summary line on stdout. Exit codes:
//! 0 success, 1 runtime failure or failed verdict, 2 usage or config error.

use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::report::{artifact_path, write_csv, write_json};
use crate::analysis::robustness::{robustness_study, standard_methods};
use crate::analysis::{fixed_point_study, grad_check, landscape_probe, spec_decode_sim, tar_study, LossSpec};
use crate::config::{resolve_out_dir, Drafter, ExperimentConfig, TeacherSpec, OUT_ENV};
use crate::divergence::DivergenceKind;
use crate::error::{Error, Result};
use crate::prob::TokenId;
use crate::rng::{derive_rng, tag};
use crate::trainer::{run_training, teacher_pool};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "selectkd", version, about = "Selective token-weighted distillation on n-gram models")]
struct Cli {
    /// Output directory (overrides SELECTKD_OUT and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare analytic logit gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Train a student and write the model and its trace.
    Train {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a study and write its report.
    Study {
        study: Study,
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Skew parameter, required for skl and srkl.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 6)]
    vocab: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Worker threads per training step; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Fkl,
    Rkl,
    Skl,
    Srkl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    FixedPoint,
    Tar,
    Landscape,
    SpecSim,
    Robustness,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::FixedPoint => "fixed-point",
            Study::Tar => "tar",
            Study::Landscape => "landscape",
            Study::SpecSim => "spec-sim",
            Study::Robustness => "robustness",
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

/// Key-value summary line builder.
#[derive(Default)]
struct Summary(Vec<String>);

impl Summary {
    fn kv(mut self, k: &str, v: impl Display) -> Self {
        self.0.push(format!("{k}={v}"));
        self
    }

    fn path(self, k: &str, p: &Path) -> Self {
        self.kv(k, p.display())
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. The summary line goes to `stdout`; diagnostics go to stderr.
pub fn run<I, T, W>(args: I, stdout: &mut W) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
    W: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let env_out = std::env::var(OUT_ENV).ok();
    let result = match cli.command {
        Command::Gradcheck(a) => cmd_gradcheck(&a, cli.out.as_deref(), env_out.as_deref()),
        Command::Train { config, run } => {
            load(&config, &run).and_then(|cfg| cmd_train(&cfg, out_dir(&cli.out, &env_out, &cfg)))
        }
        Command::Study { study, config, run } => load(&config, &run)
            .and_then(|cfg| cmd_study(study, &cfg, out_dir(&cli.out, &env_out, &cfg))),
    };
    match result {
        Ok((summary, passed)) => {
            let _ = writeln!(stdout, "{}", summary.0.join(" "));
            if passed {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
    }
}

/// Entry point for the binary.
pub fn main_from_env() -> i32 {
    run(std::env::args_os(), &mut std::io::stdout().lock())
}

fn out_dir(flag: &Option<PathBuf>, env: &Option<String>, cfg: &ExperimentConfig) -> PathBuf {
    resolve_out_dir(flag.as_deref(), env.as_deref(), cfg.out_dir.as_deref())
}

fn load(path: &Path, run: &RunArgs) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(path).map_err(usage)?;
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    if let Some(n) = run.steps {
        cfg.training.steps = n;
    }
    if let Some(w) = run.workers {
        cfg.training.workers = w;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

type Outcome = std::result::Result<(Summary, bool), Failure>;

fn cmd_gradcheck(a: &GradcheckArgs, out: Option<&Path>, env_out: Option<&str>) -> Outcome {
    let kind = match (a.kind, a.alpha) {
        (KindArg::Fkl, None) => DivergenceKind::Fkl,
        (KindArg::Rkl, None) => DivergenceKind::Rkl,
        (KindArg::Skl, Some(x)) => DivergenceKind::skl(x).map_err(usage)?,
        (KindArg::Srkl, Some(x)) => DivergenceKind::srkl(x).map_err(usage)?,
        (KindArg::Skl | KindArg::Srkl, None) => return Err(Failure::Usage("--alpha is required for skl and srkl".into())),
        (_, Some(_)) => return Err(Failure::Usage("--alpha only applies to skl and srkl".into())),
    };
    if a.vocab < 2 {
        return Err(Failure::Usage("--vocab must be at least 2".into()));
    }
    if !(1e-7..=1e-3).contains(&a.eps) {
        return Err(Failure::Usage("--eps must lie in [1e-7, 1e-3]".into()));
    }
    let report = grad_check(kind, a.trials as usize, a.vocab, a.eps, a.seed)?;
    let dir = resolve_out_dir(out, env_out, None);
    let path = write_json(&dir, "gradcheck", a.seed, &report)?;
    let passed = report.passed();
    let s = Summary::default()
        .kv("command", "gradcheck")
        .kv("kind", kind)
        .kv("vocab", a.vocab)
        .kv("trials", a.trials)
        .kv("max_rel_error", report.max_rel_error)
        .kv("failures", report.failures.len())
        .kv("passed", passed)
        .path("report", &path);
    Ok((s, passed))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, dir: PathBuf) -> Outcome {
    let models = cfg.build_models()?;
    let tc = cfg.training_config();
    let (student, trace) = run_training(&tc, &models.teacher, &models.student)?;
    fs::create_dir_all(&dir).map_err(Error::from)?;
    let model_path = artifact_path(&dir, "train", cfg.seed, "model");
    let csv_path = artifact_path(&dir, "train", cfg.seed, "csv");
    let json_path = artifact_path(&dir, "train", cfg.seed, "json");
    student.save(&model_path)?;
    write_with(&csv_path, |w| trace.write_csv(w))?;
    write_with(&json_path, |w| trace.write_json(w))?;
    let last = trace.last();
    let s = Summary::default()
        .kv("command", "train")
        .kv("steps", trace.len())
        .kv("final_loss", fmt_opt(last.map(|r| r.loss)))
        .kv("final_tar", fmt_opt(last.and_then(|r| r.tar)))
        .path("model", &model_path)
        .path("trace", &csv_path);
    Ok((s, true))
}

fn cmd_study(study: Study, cfg: &ExperimentConfig, dir: PathBuf) -> Outcome {
    if study == Study::Tar && !cfg.training.verifier.is_some_and(|v| v.is_discrete()) {
        return Err(Failure::Usage("the tar study needs a greedy_top_k or spec_k verifier".into()));
    }
    let models = cfg.build_models()?;
    let tc = cfg.training_config();
    let seed = cfg.seed;
    let name = study.name();
    let s = Summary::default().kv("command", "study").kv("study", name);
    match study {
        Study::FixedPoint => {
            let p = &cfg.study.fixed_point;
            let rep = fixed_point_study(&p.kinds, &models.teacher, &models.student, &tc, p.min_visits)?;
            let passed = rep.passed(p.tv_tolerance, p.spread_tolerance);
            let header: Vec<String> = std::iter::once("row".to_string())
                .chain(rep.results.iter().map(|r| r.kind.to_string()))
                .collect();
            let rows: Vec<Vec<f64>> = (0..models.teacher.rows())
                .map(|i| {
                    std::iter::once(i as f64)
                        .chain(rep.results.iter().map(|r| r.row_tv[i]))
                        .collect()
                })
                .collect();
            let json = write_json(&dir, name, seed, &rep)?;
            write_csv(&dir, name, seed, &header, &rows)?;
            let worst = rep.results.iter().map(|r| r.mean_tv).fold(0.0, f64::max);
            Ok((
                s.kv("max_mean_tv", worst).kv("spread", rep.spread).kv("passed", passed).path("report", &json),
                passed,
            ))
        }
        Study::Tar => {
            let (rep, trace) = tar_study(&tc, &models.teacher, &models.student, &cfg.study.tar)?;
            let json = write_json(&dir, name, seed, &rep)?;
            fs::create_dir_all(&dir).map_err(Error::from)?;
            write_with(&artifact_path(&dir, name, seed, "csv"), |w| trace.write_csv(w))?;
            Ok((
                s.kv("initial_tar", rep.initial_tar)
                    .kv("final_tar", rep.final_tar)
                    .kv("max_drawdown", rep.max_drawdown)
                    .kv("slope", rep.slope)
                    .kv("passed", rep.passed)
                    .path("report", &json),
                rep.passed,
            ))
        }
        Study::Landscape => {
            let p = &cfg.study.landscape;
            let (student, _) = run_training(&tc, &models.teacher, &models.student)?;
            let pool = teacher_pool(&models.teacher, &tc)?;
            let spec = LossSpec {
                kind: p.kind,
                teacher: &models.teacher,
                data: &pool,
            };
            let probe = landscape_probe(&student, spec, p.directions, &p.radii, seed)?;
            let header: Vec<String> = std::iter::once("radius".to_string())
                .chain((0..probe.losses.len()).map(|d| format!("d{d}")))
                .collect();
            let rows: Vec<Vec<f64>> = probe
                .radii
                .iter()
                .enumerate()
                .map(|(i, r)| std::iter::once(*r).chain(probe.losses.iter().map(|l| l[i])).collect())
                .collect();
            let json = write_json(&dir, name, seed, &probe)?;
            write_csv(&dir, name, seed, &header, &rows)?;
            Ok((
                s.kv("base_loss", probe.base_loss).kv("sharpness", probe.sharpness).path("report", &json),
                true,
            ))
        }
        Study::SpecSim => {
            let p = &cfg.study.spec_sim;
            let drafter = match p.drafter {
                Drafter::Trained => run_training(&tc, &models.teacher, &models.student)?.0,
                Drafter::Initial => models.student.clone(),
                Drafter::Teacher => models.teacher.clone(),
            };
            let prompts: Vec<Vec<TokenId>> = (0..models.teacher.vocab_size()).map(|t| vec![TokenId(t)]).collect();
            let mut rng = derive_rng(seed, &[tag::SIM]);
            let rep = spec_decode_sim(&drafter, &models.teacher, &prompts, &p.sim_config(), &mut rng)?;
            let json = write_json(&dir, name, seed, &rep)?;
            Ok((
                s.kv("acceptance_rate", rep.acceptance_rate)
                    .kv("tokens_per_round", rep.tokens_per_round)
                    .kv("speedup_estimate", rep.speedup_estimate)
                    .path("report", &json),
                true,
            ))
        }
        Study::Robustness => {
            let TeacherSpec::Noisy(setup) = &cfg.teacher else {
                return Err(Failure::Usage("the robustness study needs a noisy teacher".into()));
            };
            let p = &cfg.study.robustness;
            let rep = robustness_study(setup, &tc, &standard_methods(), &p.eval, &p.seeds)?;
            let json = write_json(&dir, name, seed, &rep)?;
            let mut s = s;
            for m in &rep.means {
                s = s
                    .kv(&format!("{}_tv", m.name), m.tv_clean)
                    .kv(&format!("{}_acceptance", m.name), m.spec_acceptance)
                    .kv(&format!("{}_sharpness", m.name), m.sharpness);
            }
            Ok((s.kv("passed", rep.passed).path("report", &json), rep.passed))
        }
    }
}
