//! Selective distillation of a bigram student from the bundled default
//! experiment, writing the trace to stdout as CSV.
//!
//!     cargo run --release --example train [-- path/to/config.toml]

use selectkd::config::ExperimentConfig;
use selectkd::trainer::run_training;

fn main() -> selectkd::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.toml").to_string());
    let cfg = ExperimentConfig::load(&path)?;
    let models = cfg.build_models()?;
    let tc = cfg.training_config();
    eprintln!("objective {:?}, verifier {:?}, {} steps", tc.objective, tc.verifier, tc.steps);

    let (student, trace) = run_training(&tc, &models.teacher, &models.student)?;
    let before = selectkd::analysis::row_tv(&models.student, &models.teacher)?;
    let after = selectkd::analysis::row_tv(&student, &models.teacher)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    eprintln!("mean row TV to teacher: {:.4} -> {:.4}", mean(&before), mean(&after));

    trace.write_csv(std::io::stdout().lock())
}
