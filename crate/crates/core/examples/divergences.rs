//! The four divergences between a teacher and a student distribution, their
//! logit gradients, and a finite-difference check of those gradients.
//!
//!     cargo run --example divergences

use selectkd::analysis::grad_check;
use selectkd::prob::softmax;
use selectkd::{DivergenceKind, LogitVector, ProbVector};

fn main() -> selectkd::Result<()> {
    let p = ProbVector::new(vec![0.6, 0.25, 0.1, 0.05])?;
    let z = LogitVector::new(vec![0.0, 1.0, -0.5, 0.3])?;
    let q = softmax(&z);
    println!("teacher p = {:?}", p.as_slice());
    println!("student q = {:.4?}", q.as_slice());

    let kinds = [
        DivergenceKind::Fkl,
        DivergenceKind::Rkl,
        DivergenceKind::skl(0.1)?,
        DivergenceKind::srkl(0.1)?,
    ];
    for kind in kinds {
        let g = kind.grad_logits(&p, &z)?;
        println!("{:<10} value {:.6}  grad {:+.4?}", kind.to_string(), kind.value(&p, &q)?, g);
    }

    // 100 random (p, z) pairs per kind, central differences with h = 1e-5
    for kind in kinds {
        let r = grad_check(kind, 100, 6, 1e-5, 0)?;
        println!("gradcheck {:<10} max rel error {:.2e}  passed {}", kind.to_string(), r.max_rel_error, r.passed());
    }
    Ok(())
}
