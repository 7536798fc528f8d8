//! Builds an experiment in code, prints it as TOML and runs it through the
//! command-line front end in-process.
//!
//!     cargo run --release --example experiment_file

use selectkd::config::{ExperimentConfig, StudentInit, StudyParams, TeacherSpec, CONFIG_VERSION};
use selectkd::{Objective, TrainingConfig, VerifierConfig};

fn main() -> selectkd::Result<()> {
    let cfg = ExperimentConfig {
        version: CONFIG_VERSION,
        seed: 3,
        out_dir: None,
        teacher: TeacherSpec::Dirichlet {
            vocab_size: 12,
            order: 2,
            concentration: 0.3,
        },
        student: StudentInit::Uniform,
        training: TrainingConfig {
            objective: Objective::Distillm2,
            verifier: Some(VerifierConfig::greedy(3, 0.0)?),
            mu: 0.3,
            steps: 200,
            ..Default::default()
        },
        study: StudyParams::default(),
    };
    cfg.validate()?;
    let text = cfg.to_toml()?;
    println!("{text}");

    let dir = std::env::temp_dir().join("selectkd-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text)?;
    let out = dir.join("out");
    let args = ["selectkd", "train", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let code = selectkd::cli::run(args, &mut std::io::stdout());
    println!("exit code {code}");
    Ok(())
}
