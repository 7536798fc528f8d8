use proptest::prelude::*;
use rand::Rng;
use selectkd::divergence::{fkl, grad_logits, rkl, skl, srkl};
use selectkd::prob::{hellinger, sample, softmax, top_k_set};
use selectkd::rng::rng_from_seed;
use selectkd::verifier::{verify, verify_greedy, verify_spec};
use selectkd::{DivergenceKind, LogitVector, NGramModel, ProbVector, TokenId, VerifierConfig};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn logits(n: std::ops::Range<usize>, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    n.prop_flat_map(move |n| prop::collection::vec(-scale..scale, n))
}

fn dist(n: usize) -> impl Strategy<Value = ProbVector> {
    prop::collection::vec(-6.0..6.0f64, n).prop_map(|z| softmax(&LogitVector::new(z).unwrap()))
}

fn pair() -> impl Strategy<Value = (ProbVector, ProbVector)> {
    (2usize..12).prop_flat_map(|n| (dist(n), dist(n)))
}

fn kind() -> impl Strategy<Value = DivergenceKind> {
    prop_oneof![
        Just(DivergenceKind::Fkl),
        Just(DivergenceKind::Rkl),
        (0.0..0.95f64).prop_map(|alpha| DivergenceKind::Skl { alpha }),
        (0.0..0.95f64).prop_map(|alpha| DivergenceKind::Srkl { alpha }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn softmax_is_normalized(z in logits(2..65, 50.0)) {
        let p = softmax(&LogitVector::new(z).unwrap());
        let s: f64 = p.as_slice().iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-9);
        prop_assert!(p.as_slice().iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn hellinger_symmetric_and_bounded((p, q) in pair()) {
        let a = hellinger(&p, &q).unwrap();
        let b = hellinger(&q, &p).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn full_top_k_is_whole_vocabulary(p in (2usize..20).prop_flat_map(dist)) {
        let mut all = top_k_set(&p, p.len()).unwrap();
        all.sort();
        prop_assert_eq!(all, (0..p.len()).map(TokenId).collect::<Vec<_>>());
    }

    #[test]
    fn divergences_nonnegative((p, q) in pair(), k in kind()) {
        let d = k.value(&p, &q).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!(k.value(&p, &p).unwrap() < 1e-12);
    }

    #[test]
    fn zero_skew_reduces_to_plain_kl((p, q) in pair()) {
        prop_assert_eq!(skl(&p, &q, 0.0).unwrap(), fkl(&p, &q).unwrap());
        prop_assert_eq!(srkl(&p, &q, 0.0).unwrap(), rkl(&p, &q).unwrap());
    }

    #[test]
    fn gradients_are_tangent(z in logits(2..33, 8.0), k in kind(), seed in any::<u64>()) {
        let p = NGramModel::random_teacher(z.len(), 0, 1.0, seed).unwrap().row_probs(0);
        let g = grad_logits(k, &p, &LogitVector::new(z).unwrap()).unwrap();
        prop_assert!(g.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn gradients_vanish_at_the_teacher(z in logits(2..33, 8.0), k in kind()) {
        let z = LogitVector::new(z).unwrap();
        let g = grad_logits(k, &softmax(&z), &z).unwrap();
        prop_assert!(g.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn greedy_is_monotone_in_k((p, q) in pair(), beta in 0.0..1.0f64) {
        let mut seen = false;
        for k in 1..=p.len() {
            let acc = verify_greedy(&p, &q, &VerifierConfig::greedy(k, beta).unwrap()).unwrap().accepted;
            prop_assert!(!seen || acc);
            seen |= acc;
        }
        prop_assert!(seen);
    }

    #[test]
    fn discrete_weights_are_beta_or_one(
        (p, q) in pair(),
        k in 1usize..6,
        beta in 0.0..1.0f64,
        greedy in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let cfg = if greedy {
            VerifierConfig::greedy(k.min(p.len()), beta).unwrap()
        } else {
            VerifierConfig::spec(k, beta).unwrap()
        };
        let o = verify(&p, &q, &cfg, &mut rng_from_seed(seed)).unwrap();
        prop_assert!(o.weight == beta || o.weight == 1.0);
        prop_assert_eq!(o.weight == 1.0, o.accepted);
    }

    #[test]
    fn spec_k_uses_exactly_two_k_draws_and_replays((p, q) in pair(), k in 1usize..6, seed in any::<u64>()) {
        let cfg = VerifierConfig::spec(k, 0.01).unwrap();
        let mut rng = rng_from_seed(seed);
        let first = verify_spec(&p, &q, &cfg, &mut rng).unwrap();
        let mut reference = rng_from_seed(seed);
        for _ in 0..2 * k {
            let _: f64 = reference.random();
        }
        prop_assert_eq!(rng.random::<u64>(), reference.random::<u64>());
        prop_assert_eq!(first, verify_spec(&p, &q, &cfg, &mut rng_from_seed(seed)).unwrap());
    }

    #[test]
    fn model_files_round_trip(v in 2usize..7, order in 0usize..3, seed in any::<u64>(), scale in 0.0..20.0f64) {
        let m = NGramModel::random_normal(v, order, scale, seed).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = NGramModel::read_from(&buf[..]).unwrap();
        prop_assert!(back.table().iter().zip(m.table()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(back, m);
    }
}

#[test]
fn sampling_matches_distribution() {
    let n = 100_000;
    for seed in 0..5 {
        let p = NGramModel::random_teacher(8, 0, 1.0, 70 + seed).unwrap().row_probs(0);
        let mut rng = rng_from_seed(seed);
        let mut counts = [0usize; 8];
        for _ in 0..n {
            counts[sample(&p, &mut rng).0] += 1;
        }
        let (mut stat, mut cells, mut po, mut pe) = (0.0, 0, 0.0, 0.0);
        for (y, c) in counts.iter().enumerate() {
            let e = p.as_slice()[y] * n as f64;
            if e < 5.0 {
                po += *c as f64;
                pe += e;
            } else {
                stat += (*c as f64 - e).powi(2) / e;
                cells += 1;
            }
        }
        if pe > 0.0 {
            stat += (po - pe).powi(2) / pe;
            cells += 1;
        }
        let pval = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);
        assert!(pval > 0.001, "seed {seed}: p = {pval}");
    }
}
