//! Distilling from a teacher with corrupted rows: SFT, KD, a skew-KL
//! baseline and selective distillation, scored against the clean model.
//!
//!     cargo run --release --example noisy_teacher

use selectkd::analysis::robustness::{robustness_study, standard_methods};
use selectkd::config::{ExperimentConfig, TeacherSpec};

fn main() -> selectkd::Result<()> {
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/noisy_teacher.toml"))?;
    let TeacherSpec::Noisy(setup) = &cfg.teacher else {
        unreachable!("bundled config uses a noisy teacher")
    };
    let p = &cfg.study.robustness;
    let study = robustness_study(setup, &cfg.training_config(), &standard_methods(), &p.eval, &p.seeds)?;

    println!("{:<9} {:>9} {:>11} {:>10}", "method", "TV clean", "acceptance", "sharpness");
    for m in &study.means {
        println!("{:<9} {:>9.4} {:>11.4} {:>10.4}", m.name, m.tv_clean, m.spec_acceptance, m.sharpness);
    }
    for r in &study.reports {
        let (s, d) = (r.method("selectkd").unwrap(), r.method("distillm").unwrap());
        println!(
            "seed {}: noisy rows {:?}, TV on noisy rows {:.3} (selectkd) vs {:.3} (distillm)",
            r.seed, r.noisy_rows, s.tv_clean_noisy_rows, d.tv_clean_noisy_rows
        );
    }
    println!(
        "orderings: tv {} acceptance {} sharpness {}",
        study.tv_ordering, study.acceptance_ordering, study.sharpness_ordering
    );
    Ok(())
}
