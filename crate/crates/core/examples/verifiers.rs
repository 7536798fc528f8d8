//! Per-token weights from the three verifiers, and the acceptance rate.
//!
//!     cargo run --example verifiers

use selectkd::rng::rng_from_seed;
use selectkd::verifier::{tar, verify, verify_hellinger};
use selectkd::{ProbVector, VerifierConfig};

fn main() -> selectkd::Result<()> {
    let p = ProbVector::new(vec![0.5, 0.3, 0.15, 0.05])?;
    let close = ProbVector::new(vec![0.45, 0.35, 0.1, 0.1])?;
    let far = ProbVector::new(vec![0.02, 0.03, 0.05, 0.9])?;

    for (name, q) in [("close", &close), ("far", &far)] {
        let h = verify_hellinger(&p, q)?;
        println!("{name}: hellinger weight {:.4}", h.weight);
        for k in [1, 2, 4] {
            let g = verify(&p, q, &VerifierConfig::greedy(k, 0.01)?, &mut rng_from_seed(0))?;
            println!("{name}: greedy top-{k} accepted {} weight {}", g.accepted, g.weight);
        }
    }

    // Spec-k draws k tokens from the student and accepts one with
    // probability min(1, p/q); repeated trials give the acceptance rate.
    let mut rng = rng_from_seed(7);
    for k in [1, 5] {
        let cfg = VerifierConfig::spec(k, 0.01)?;
        for (name, q) in [("close", &close), ("far", &far)] {
            let outcomes = (0..10_000)
                .map(|_| verify(&p, q, &cfg, &mut rng))
                .collect::<selectkd::Result<Vec<_>>>()?;
            println!("{name}: spec-{k} acceptance rate {:.3}", tar(&outcomes)?);
        }
    }
    Ok(())
}
