//! Loss along random row-normalized directions around a selectively and a
//! vanilla-trained student, using the same directions for both.
//!
//!     cargo run --release --example landscape

use selectkd::analysis::landscape::default_radii;
use selectkd::analysis::{landscape_probe, LossSpec, NoisyTeacherSetup};
use selectkd::trainer::{run_training_on_pool, teacher_pool};
use selectkd::{DivergenceKind, Objective, TrainingConfig, VerifierConfig};

fn main() -> selectkd::Result<()> {
    let world = NoisyTeacherSetup::default().build(0)?;
    let base = TrainingConfig {
        objective: Objective::Distillm2,
        mu: 0.5,
        ..Default::default()
    };
    let pool = teacher_pool(&world.teacher, &base)?;
    let spec = LossSpec {
        kind: DivergenceKind::Fkl,
        teacher: &world.teacher,
        data: &pool,
    };
    let radii = default_radii();
    for (name, verifier) in [("selective", Some(VerifierConfig::default())), ("vanilla", None)] {
        let cfg = TrainingConfig { verifier, ..base.clone() };
        let (student, _) = run_training_on_pool(&cfg, &world.teacher, &world.student, &pool)?;
        let probe = landscape_probe(&student, spec, 10, &radii, 0)?;
        let mean_at = |i: usize| probe.losses.iter().map(|l| l[i]).sum::<f64>() / probe.losses.len() as f64;
        println!("{name}: base loss {:.4}, sharpness {:.4}", probe.base_loss, probe.sharpness);
        for i in (0..radii.len()).step_by(5) {
            println!("  r = {:.2}  mean loss {:.4}", radii[i], mean_at(i));
        }
    }
    Ok(())
}
