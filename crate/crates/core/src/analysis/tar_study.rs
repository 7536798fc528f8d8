//! Token-acceptance-rate dynamics of a selective run.
//!
//! The acceptance rate should rise over training, and rise faster the more
//! tokens are still rejected. The study smooths the per-step rate with a
//! trailing moving average, bounds its largest dip below the running maximum,
//! and regresses the per-step change of the average on `1 - TAR`.

use serde::{Deserialize, Serialize};

use super::{max_drawdown, moving_average, ols_slope};
use crate::error::{param, Result};
use crate::model::NGramModel;
use crate::trainer::{run_training, TrainingConfig, TrainingTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TarStudyConfig {
    pub window: usize,
    /// Largest tolerated dip of the moving average below its running maximum.
    pub slack: f64,
}

impl Default for TarStudyConfig {
    fn default() -> Self {
        Self {
            window: 20,
            slack: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TarStudyReport {
    pub window: usize,
    pub slack: f64,
    pub tar: Vec<f64>,
    pub moving_average: Vec<f64>,
    pub max_drawdown: f64,
    /// Least-squares slope of the moving-average increment on `1 - TAR`.
    pub slope: f64,
    pub initial_tar: f64,
    pub final_tar: f64,
    pub gain: f64,
    pub passed: bool,
}

/// Verdict on a TAR series (already extracted from a trace).
pub fn analyse_tar(tar: &[f64], study: &TarStudyConfig) -> Result<TarStudyReport> {
    if tar.is_empty() {
        return param("TAR series is empty");
    }
    let ma = moving_average(tar, study.window);
    let drawdown = max_drawdown(&ma);
    let x: Vec<f64> = ma[..ma.len() - 1].iter().map(|m| 1.0 - m).collect();
    let y: Vec<f64> = ma.windows(2).map(|w| w[1] - w[0]).collect();
    let slope = ols_slope(&x, &y);
    let initial = ma[0];
    let fin = ma[ma.len() - 1];
    Ok(TarStudyReport {
        window: study.window,
        slack: study.slack,
        tar: tar.to_vec(),
        moving_average: ma,
        max_drawdown: drawdown,
        slope,
        initial_tar: initial,
        final_tar: fin,
        gain: fin - initial,
        passed: drawdown <= study.slack && slope >= 0.0,
    })
}

/// Runs a selective training run and analyses its acceptance rate.
pub fn tar_study(
    cfg: &TrainingConfig,
    teacher: &NGramModel,
    student: &NGramModel,
    study: &TarStudyConfig,
) -> Result<(TarStudyReport, TrainingTrace)> {
    match &cfg.verifier {
        Some(v) if v.is_discrete() => {}
        _ => return param("the TAR study needs a Top-k or Spec-k verifier"),
    }
    let (_, trace) = run_training(cfg, teacher, student)?;
    let report = analyse_tar(&trace.tar_series(), study)?;
    Ok((report, trace))
}
