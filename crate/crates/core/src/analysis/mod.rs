//! Experiment harnesses built on the library: oracles, studies and
//! simulators. Each study returns a serializable report; [`report`] writes
//! them as `<study>-<seed>.json` / `.csv` files.

pub mod fixed_point;
pub mod gradcheck;
pub mod landscape;
pub mod report;
pub mod robustness;
pub mod specsim;
pub mod tar_study;

use std::collections::BTreeMap;

use crate::divergence::DivergenceKind;
use crate::error::{param, Result};
use crate::model::{NGramModel, Sequence};
use crate::prob::{neumaier_sum, total_variation};

pub use fixed_point::{fixed_point_study, FixedPointReport};
pub use gradcheck::{grad_check, GradCheckReport};
pub use landscape::{landscape_probe, LandscapeProbe, LossSpec};
pub use robustness::{robustness_study, NoisyTeacherSetup, RobustnessReport, RobustnessStudy};
pub use specsim::{spec_decode_sim, SpecSimConfig, SpecSimReport};
pub use tar_study::{tar_study, TarStudyConfig, TarStudyReport};

/// How often each `(student row, teacher row)` pair occurs as a completion
/// context in `data`, weighted `1 / (T * B)` so the weights sum to one.
pub fn context_weights(
    student: &NGramModel,
    teacher: &NGramModel,
    data: &[Sequence],
) -> Result<BTreeMap<(usize, usize), f64>> {
    if data.is_empty() {
        return param("evaluation data must be nonempty");
    }
    let mut w = BTreeMap::new();
    let per_seq = 1.0 / data.len() as f64;
    for seq in data {
        let per_tok = per_seq / seq.completion.len() as f64;
        for (ctx, _) in seq.positions() {
            let key = (student.context_row(&ctx)?, teacher.context_row(&ctx)?);
            *w.entry(key).or_insert(0.0) += per_tok;
        }
    }
    Ok(w)
}

/// Number of completion positions whose context maps to each row of `model`.
pub fn row_visits(model: &NGramModel, data: &[Sequence]) -> Result<Vec<usize>> {
    let mut visits = vec![0; model.rows()];
    for seq in data {
        for (ctx, _) in seq.positions() {
            visits[model.context_row(&ctx)?] += 1;
        }
    }
    Ok(visits)
}

/// Per-row TV distance between two models of identical shape.
pub fn row_tv(a: &NGramModel, b: &NGramModel) -> Result<Vec<f64>> {
    if a.rows() != b.rows() || a.vocab_size() != b.vocab_size() {
        return param("models must share vocabulary and order");
    }
    (0..a.rows())
        .map(|r| total_variation(&a.row_probs(r), &b.row_probs(r)))
        .collect()
}

/// Mean of `values` restricted to indices where `mask` holds.
pub fn masked_mean(values: &[f64], mask: impl Fn(usize) -> bool) -> f64 {
    let sel: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|(i, _)| mask(*i))
        .map(|(_, v)| *v)
        .collect();
    if sel.is_empty() {
        return 0.0;
    }
    neumaier_sum(sel.iter().copied()) / sel.len() as f64
}

/// Expected divergence `sum_c w_c D(p_c ‖ q_c)` over weighted contexts.
pub fn weighted_divergence(
    kind: DivergenceKind,
    student: &NGramModel,
    teacher: &NGramModel,
    weights: &BTreeMap<(usize, usize), f64>,
) -> Result<f64> {
    let terms: Result<Vec<f64>> = weights
        .iter()
        .map(|(&(rs, rt), w)| Ok(w * kind.value(&teacher.row_probs(rt), &student.row_probs(rs))?))
        .collect();
    Ok(neumaier_sum(terms?))
}

/// Trailing moving averages `mean(x[i..i + window])`. A series shorter than
/// the window yields its overall mean.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    if x.is_empty() || window == 0 {
        return Vec::new();
    }
    let w = window.min(x.len());
    x.windows(w).map(|s| neumaier_sum(s.iter().copied()) / w as f64).collect()
}

/// Least-squares slope of `y` on `x`; zero when `x` has no spread.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let sxy: f64 = (0..n).map(|i| (x[i] - mx) * (y[i] - my)).sum();
    let sxx: f64 = (0..n).map(|i| (x[i] - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Largest drop of a series below its running maximum.
pub fn max_drawdown(x: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &v in x {
        peak = peak.max(v);
        worst = worst.max(peak - v);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_helpers() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.5, 2.5, 3.5]);
        assert_eq!(moving_average(&[1.0, 3.0], 5), vec![2.0]);
        assert!((ols_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
        assert_eq!(ols_slope(&[1.0, 1.0], &[0.0, 5.0]), 0.0);
        assert_eq!(max_drawdown(&[0.1, 0.5, 0.3, 0.6, 0.55]), 0.2);
        assert_eq!(max_drawdown(&[0.1, 0.2, 0.3]), 0.0);
    }

    #[test]
    fn context_weights_sum_to_one() {
        use crate::model::Origin;
        use crate::prob::TokenId;
        let m = NGramModel::uniform(3, 1).unwrap();
        let seqs = vec![
            Sequence::new(vec![TokenId(0)], vec![TokenId(1), TokenId(2)], Origin::Teacher).unwrap(),
            Sequence::new(vec![TokenId(2)], vec![TokenId(2)], Origin::Teacher).unwrap(),
        ];
        let w = context_weights(&m, &m, &seqs).unwrap();
        assert!((w.values().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w[&(2, 2)], 0.5);
        assert_eq!(row_visits(&m, &seqs).unwrap(), vec![1, 1, 1]);
    }
}
