//! Speculative decoding with a distilled drafter: acceptance rate and the
//! analytical speedup before and after training.
//!
//!     cargo run --release --example spec_decoding

use selectkd::analysis::{spec_decode_sim, SpecSimConfig};
use selectkd::config::ExperimentConfig;
use selectkd::rng::rng_from_seed;
use selectkd::trainer::run_training;
use selectkd::TokenId;

fn main() -> selectkd::Result<()> {
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.toml"))?;
    let m = cfg.build_models()?;
    let (trained, _) = run_training(&cfg.training_config(), &m.teacher, &m.student)?;

    let prompts: Vec<Vec<TokenId>> = (0..m.teacher.vocab_size()).map(|t| vec![TokenId(t)]).collect();
    for gamma in [1, 4, 8] {
        let sim = SpecSimConfig {
            gamma,
            rounds: 20_000,
            ..Default::default()
        };
        for (name, drafter) in [("untrained", &m.student), ("distilled", &trained), ("teacher", &m.teacher)] {
            let r = spec_decode_sim(drafter, &m.teacher, &prompts, &sim, &mut rng_from_seed(1))?;
            println!(
                "gamma {gamma} {name:<9} acceptance {:.3}  tokens/round {:.2}  speedup {:.2}",
                r.acceptance_rate, r.tokens_per_round, r.speedup_estimate
            );
        }
    }
    Ok(())
}
