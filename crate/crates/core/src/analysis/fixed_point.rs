//! Convergence of vanilla distillation to the teacher for each divergence.

use serde::{Deserialize, Serialize};

use super::{masked_mean, row_tv, row_visits};
use crate::divergence::DivergenceKind;
use crate::error::{param, Result};
use crate::model::NGramModel;
use crate::trainer::{run_training_on_pool, teacher_pool, Objective, TrainingConfig};

pub const DEFAULT_TV_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_SPREAD_TOLERANCE: f64 = 2e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindResult {
    pub kind: DivergenceKind,
    /// Mean TV to the teacher over rows visited at least `min_visits` times.
    pub mean_tv: f64,
    pub max_tv: f64,
    pub row_tv: Vec<f64>,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub steps: usize,
    pub min_visits: usize,
    pub row_visits: Vec<usize>,
    pub results: Vec<KindResult>,
    /// Largest difference in mean TV between any two kinds.
    pub spread: f64,
}

impl FixedPointReport {
    pub fn passed(&self, tv_tolerance: f64, spread_tolerance: f64) -> bool {
        self.results.iter().all(|r| r.mean_tv < tv_tolerance) && self.spread < spread_tolerance
    }
}

/// Trains one vanilla student per divergence kind from the same initial
/// student, teacher pool and seed, and reports per-row TV to the teacher.
/// With `cfg.steps == 0` no training happens and the initial distance is
/// reported.
pub fn fixed_point_study(
    kinds: &[DivergenceKind],
    teacher: &NGramModel,
    initial_student: &NGramModel,
    cfg: &TrainingConfig,
    min_visits: usize,
) -> Result<FixedPointReport> {
    if kinds.is_empty() {
        return param("at least one divergence kind is required");
    }
    for k in kinds {
        k.validate()?;
    }
    let pool = teacher_pool(teacher, cfg)?;
    let visits = row_visits(initial_student, &pool)?;
    let included = |r: usize| visits[r] >= min_visits.max(1);
    let mut results = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let (student, final_loss) = if cfg.steps == 0 {
            (initial_student.clone(), None)
        } else {
            let run_cfg = TrainingConfig {
                objective: Objective::divergence(kind),
                verifier: None,
                ..cfg.clone()
            };
            let (s, trace) = run_training_on_pool(&run_cfg, teacher, initial_student, &pool)?;
            (s, trace.last().map(|r| r.loss))
        };
        let tv = row_tv(&student, teacher)?;
        let max_tv = tv
            .iter()
            .enumerate()
            .filter(|(i, _)| included(*i))
            .map(|(_, v)| *v)
            .fold(0.0, f64::max);
        results.push(KindResult {
            kind,
            mean_tv: masked_mean(&tv, included),
            max_tv,
            row_tv: tv,
            final_loss,
        });
    }
    let lo = results.iter().map(|r| r.mean_tv).fold(f64::INFINITY, f64::min);
    let hi = results.iter().map(|r| r.mean_tv).fold(0.0, f64::max);
    Ok(FixedPointReport {
        steps: cfg.steps,
        min_visits,
        row_visits: visits,
        results,
        spread: hi - lo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::masked_mean;

    #[test]
    fn zero_steps_reports_initial_distance() {
        let teacher = NGramModel::random_teacher(4, 1, 1.0, 1).unwrap();
        let student = NGramModel::uniform(4, 1).unwrap();
        let cfg = TrainingConfig {
            steps: 0,
            pool_size: 32,
            ..Default::default()
        };
        let rep = fixed_point_study(&[DivergenceKind::Fkl, DivergenceKind::Rkl], &teacher, &student, &cfg, 1).unwrap();
        let initial = row_tv(&student, &teacher).unwrap();
        let expect = masked_mean(&initial, |r| rep.row_visits[r] >= 1);
        for r in &rep.results {
            assert_eq!(r.mean_tv, expect);
            assert!(r.final_loss.is_none());
        }
        assert_eq!(rep.spread, 0.0);
    }
}
