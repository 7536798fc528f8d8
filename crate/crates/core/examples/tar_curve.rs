//! Token acceptance rate over a selective run: the smoothed curve, its
//! largest dip and the regression of its increments on 1 - TAR.
//!
//!     cargo run --release --example tar_curve [-- seed]

use selectkd::analysis::tar_study;
use selectkd::config::ExperimentConfig;

fn main() -> selectkd::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let base = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.toml"))?;
    let cfg = ExperimentConfig { seed, ..base };
    let m = cfg.build_models()?;
    let (rep, _) = tar_study(&cfg.training_config(), &m.teacher, &m.student, &cfg.study.tar)?;

    for (step, ma) in rep.moving_average.iter().enumerate().step_by(50) {
        let bar = "#".repeat((ma * 60.0).round() as usize);
        println!("{step:>5} {ma:.3} {bar}");
    }
    println!(
        "initial {:.3}  final {:.3}  max dip {:.4}  slope {:.2e}  passed {}",
        rep.initial_tar, rep.final_tar, rep.max_drawdown, rep.slope, rep.passed
    );
    Ok(())
}
