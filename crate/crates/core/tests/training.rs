use selectkd::analysis::fixed_point_study;
use selectkd::config::ExperimentConfig;
use selectkd::model::Optimizer;
use selectkd::rng::rng_from_seed;
use selectkd::trainer::{generate_batch, run_training, teacher_pool, train_step};
use selectkd::{
    DivergenceKind, NGramModel, Objective, OptimizerConfig, Origin, Sequence, TokenId, TrainingConfig, VerifierConfig,
};

fn batch(teacher: &NGramModel, n: usize, len: usize, seed: u64) -> Vec<Sequence> {
    let cfg = TrainingConfig {
        seq_length: len,
        ..Default::default()
    };
    generate_batch(teacher, n, &cfg, Origin::Teacher, &mut rng_from_seed(seed)).unwrap()
}

fn step_loss(student: &NGramModel, teacher: &NGramModel, data: &[Sequence], cfg: &TrainingConfig) -> f64 {
    let mut s = student.clone();
    let cfg = TrainingConfig {
        optimizer: OptimizerConfig::Sgd { lr: 0.0 },
        ..cfg.clone()
    };
    let mut opt = Optimizer::new(cfg.optimizer);
    train_step(&mut s, teacher, data, &cfg, &mut opt, 0).unwrap().loss
}

#[test]
fn sgd_update_is_the_exact_row_gradient() {
    let teacher = NGramModel::random_teacher(5, 1, 0.7, 11).unwrap();
    let student = NGramModel::random_normal(5, 1, 1.5, 12).unwrap();
    // a batch that never uses token 4 as context leaves row 4 untouched
    let mut data = batch(&teacher, 3, 6, 13);
    for s in &mut data {
        s.prompt = vec![TokenId(0)];
        for t in &mut s.completion {
            t.0 %= 4;
        }
        s.completion.push(TokenId(4));
    }
    for objective in [
        Objective::Fkl,
        Objective::Rkl,
        Objective::Skl { alpha: 0.3 },
        Objective::Srkl { alpha: 0.3 },
    ] {
        let cfg = TrainingConfig {
            objective,
            verifier: None,
            optimizer: OptimizerConfig::Sgd { lr: 1.0 },
            ..Default::default()
        };
        let mut moved = student.clone();
        let mut opt = Optimizer::new(cfg.optimizer);
        train_step(&mut moved, &teacher, &data, &cfg, &mut opt, 0).unwrap();
        let h = 1e-6;
        for i in 0..student.table().len() {
            let grad = student.table()[i] - moved.table()[i];
            if i / 5 == 4 {
                assert_eq!(grad, 0.0);
                continue;
            }
            let bump = |d: f64| {
                let mut t = student.table().to_vec();
                t[i] += d;
                NGramModel::from_table(5, 1, student.bos(), t).unwrap()
            };
            let fd = (step_loss(&bump(h), &teacher, &data, &cfg) - step_loss(&bump(-h), &teacher, &data, &cfg)) / (2.0 * h);
            assert!((grad - fd).abs() < 1e-7, "{objective:?} entry {i}: {grad} vs {fd}");
        }
    }
}

#[test]
fn student_at_teacher_stays_put() {
    let teacher = NGramModel::random_teacher(6, 1, 0.8, 21).unwrap();
    let verifiers = [
        None,
        Some(VerifierConfig::default()),
        Some(VerifierConfig::greedy(2, 0.0).unwrap()),
        Some(VerifierConfig::hellinger()),
    ];
    let objectives = [Objective::Fkl, Objective::Rkl, Objective::Srkl { alpha: 0.5 }, Objective::Distillm2];
    for (i, verifier) in verifiers.into_iter().enumerate() {
        for objective in objectives {
            for optimizer in [OptimizerConfig::default(), OptimizerConfig::adam(0.05)] {
                let cfg = TrainingConfig {
                    objective,
                    verifier,
                    optimizer,
                    mu: 0.5,
                    steps: 100,
                    batch_size: 4,
                    seq_length: 8,
                    pool_size: 32,
                    seed: i as u64,
                    ..Default::default()
                };
                let (s, _) = run_training(&cfg, &teacher, &teacher).unwrap();
                let drift = s
                    .table()
                    .iter()
                    .zip(teacher.table())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(drift < 1e-6, "{objective:?} {verifier:?} {optimizer:?}: {drift}");
            }
        }
    }
}

#[test]
fn every_well_visited_row_converges() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/fixed_point.toml");
    let cfg = ExperimentConfig {
        seed: 1,
        ..ExperimentConfig::load(path).unwrap()
    };
    let m = cfg.build_models().unwrap();
    let kinds = [
        DivergenceKind::Fkl,
        DivergenceKind::Rkl,
        DivergenceKind::Skl { alpha: 0.1 },
        DivergenceKind::Srkl { alpha: 0.1 },
    ];
    let rep = fixed_point_study(&kinds, &m.teacher, &m.student, &cfg.training_config(), 50).unwrap();
    assert!(rep.row_visits.iter().all(|v| *v >= 50));
    for r in &rep.results {
        assert!(r.max_tv < 1e-3, "{}: {}", r.kind, r.max_tv);
    }
    assert!(rep.spread < 2e-3);
}

#[test]
fn origins_follow_the_generator() {
    let teacher = NGramModel::random_teacher(5, 1, 1.0, 1).unwrap();
    let student = NGramModel::uniform(5, 1).unwrap();
    let cfg = TrainingConfig {
        mu: 0.5,
        steps: 60,
        batch_size: 2,
        seq_length: 4,
        pool_size: 8,
        ..Default::default()
    };
    assert!(teacher_pool(&teacher, &cfg).unwrap().iter().all(|s| s.origin == Origin::Teacher));
    let (_, trace) = run_training(&cfg, &teacher, &student).unwrap();
    let on_policy = trace.records.iter().filter(|r| r.origin == Origin::Student).count();
    assert!(on_policy > 10 && on_policy < 50, "{on_policy}");
}

#[test]
fn smoothed_corpus_teacher_has_full_support() {
    let teacher = NGramModel::random_teacher(6, 2, 0.1, 5).unwrap();
    let corpus: Vec<Sequence> = batch(&teacher, 20, 10, 6)
        .into_iter()
        .map(|s| Sequence::new(s.prompt, s.completion, Origin::Corpus).unwrap())
        .collect();
    let lambda = 0.1;
    let m = NGramModel::corpus_teacher(&corpus, 6, 2, lambda).unwrap();
    for r in 0..m.rows() {
        let p = m.row_probs(r);
        assert!(p.as_slice().iter().all(|x| *x > 0.0));
    }
}
