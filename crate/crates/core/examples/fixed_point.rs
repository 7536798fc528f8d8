//! Vanilla distillation with each divergence converges to the same student:
//! the teacher.
//!
//!     cargo run --release --example fixed_point [-- steps]

use selectkd::analysis::fixed_point_study;
use selectkd::config::ExperimentConfig;

fn main() -> selectkd::Result<()> {
    let mut cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/fixed_point.toml"))?;
    if let Some(steps) = std::env::args().nth(1) {
        cfg.training.steps = steps.parse().expect("steps");
    }
    let m = cfg.build_models()?;
    let p = &cfg.study.fixed_point;
    let rep = fixed_point_study(&p.kinds, &m.teacher, &m.student, &cfg.training_config(), p.min_visits)?;

    println!("{} steps, rows visited {:?}", rep.steps, rep.row_visits);
    for r in &rep.results {
        println!("{:<10} mean TV {:.2e}  max TV {:.2e}", r.kind.to_string(), r.mean_tv, r.max_tv);
    }
    println!("spread {:.2e}, passed {}", rep.spread, rep.passed(p.tv_tolerance, p.spread_tolerance));
    Ok(())
}
