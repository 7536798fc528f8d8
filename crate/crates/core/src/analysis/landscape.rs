//! Loss along random, row-normalized directions in logit-table space.
//!
//! Each direction draws a Gaussian vector per row, centers it (softmax is
//! shift invariant) and rescales it to the norm of the model's centered row,
//! the tabular analogue of filter normalization. Two models probed with the
//! same seed share the same raw directions.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{context_weights, weighted_divergence};
use crate::divergence::DivergenceKind;
use crate::error::{param, Result};
use crate::model::{NGramModel, Sequence};
use crate::rng::{derive_rng, derive_seed, tag};

/// The loss probed: unweighted divergence to `teacher` over `data`.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec<'a> {
    pub kind: DivergenceKind,
    pub teacher: &'a NGramModel,
    pub data: &'a [Sequence],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeProbe {
    pub direction_seeds: Vec<u64>,
    pub radii: Vec<f64>,
    /// `losses[d][i]` is the loss at radius `radii[i]` along direction `d`.
    pub losses: Vec<Vec<f64>>,
    pub base_loss: f64,
    /// Largest `loss(r_max) - loss(0)` over directions, `r_max` being the
    /// radius of largest magnitude.
    pub sharpness: f64,
}

/// Default grid: 21 radii evenly spaced on `[0, 1]`.
pub fn default_radii() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

fn centered(row: &[f64]) -> Vec<f64> {
    let mean = row.iter().sum::<f64>() / row.len() as f64;
    row.iter().map(|x| x - mean).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Row-normalized random direction for `model`, reproducible from `seed`.
pub fn normalized_direction(model: &NGramModel, seed: u64) -> Vec<f64> {
    let mut rng = derive_rng(seed, &[]);
    let v = model.vocab_size();
    let mut dir = Vec::with_capacity(model.table().len());
    for r in 0..model.rows() {
        let raw: Vec<f64> = (0..v).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = centered(&raw);
        let target = norm(&centered(model.row(r)));
        let dn = norm(&d);
        let s = if dn > 0.0 { target / dn } else { 0.0 };
        dir.extend(d.into_iter().map(|x| x * s));
    }
    dir
}

pub fn landscape_probe(
    model: &NGramModel,
    loss: LossSpec<'_>,
    n_directions: usize,
    radii: &[f64],
    seed: u64,
) -> Result<LandscapeProbe> {
    if n_directions < 2 {
        return param("at least two probe directions are required");
    }
    if radii.is_empty() || radii.iter().any(|r| !r.is_finite()) {
        return param("radius grid must be nonempty and finite");
    }
    loss.kind.validate()?;
    let weights = context_weights(model, loss.teacher, loss.data)?;
    let base_loss = weighted_divergence(loss.kind, model, loss.teacher, &weights)?;
    let r_max = (0..radii.len())
        .max_by(|&a, &b| radii[a].abs().total_cmp(&radii[b].abs()).then(b.cmp(&a)))
        .unwrap_or(0);

    let mut direction_seeds = Vec::with_capacity(n_directions);
    let mut losses = Vec::with_capacity(n_directions);
    for d in 0..n_directions {
        let dseed = derive_seed(seed, &[tag::PROBE, d as u64]);
        direction_seeds.push(dseed);
        let dir = normalized_direction(model, dseed);
        let mut row = Vec::with_capacity(radii.len());
        for &r in radii {
            let table = model.table().iter().zip(&dir).map(|(t, x)| t + r * x).collect();
            let moved = NGramModel::from_table(model.vocab_size(), model.order(), model.bos(), table)?;
            row.push(weighted_divergence(loss.kind, &moved, loss.teacher, &weights)?);
        }
        losses.push(row);
    }
    let sharpness = losses
        .iter()
        .map(|l| l[r_max] - base_loss)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LandscapeProbe {
        direction_seeds,
        radii: radii.to_vec(),
        losses,
        base_loss,
        sharpness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{teacher_pool, TrainingConfig};

    fn setup() -> (NGramModel, Vec<Sequence>) {
        let teacher = NGramModel::random_teacher(6, 1, 1.0, 3).unwrap();
        let cfg = TrainingConfig {
            pool_size: 32,
            seq_length: 8,
            ..Default::default()
        };
        let pool = teacher_pool(&teacher, &cfg).unwrap();
        (teacher, pool)
    }

    #[test]
    fn zero_radius_column_is_base_loss() {
        let (teacher, pool) = setup();
        let student = NGramModel::random_normal(6, 1, 1.0, 1).unwrap();
        let spec = LossSpec {
            kind: DivergenceKind::Fkl,
            teacher: &teacher,
            data: &pool,
        };
        let probe = landscape_probe(&student, spec, 4, &default_radii(), 9).unwrap();
        assert!(probe.losses.iter().all(|l| l[0] == probe.base_loss));
        assert_eq!(probe.losses.len(), 4);
        assert!(landscape_probe(&student, spec, 1, &default_radii(), 9).is_err());
    }

    #[test]
    fn symmetric_at_stationary_point() {
        let (teacher, pool) = setup();
        let spec = LossSpec {
            kind: DivergenceKind::Fkl,
            teacher: &teacher,
            data: &pool,
        };
        let r = 0.01;
        let probe = landscape_probe(&teacher, spec, 5, &[-r, 0.0, r], 2).unwrap();
        for l in &probe.losses {
            let (minus, zero, plus) = (l[0], l[1], l[2]);
            assert!(plus > zero);
            assert!((plus - minus).abs() < 0.1 * (plus - zero + 1e-9), "{l:?}");
        }
    }

    #[test]
    fn directions_are_row_normalized() {
        let m = NGramModel::random_normal(5, 1, 2.0, 3).unwrap();
        let d = normalized_direction(&m, 4);
        for r in 0..m.rows() {
            let seg = &d[r * 5..(r + 1) * 5];
            assert!((norm(seg) - norm(&centered(m.row(r)))).abs() < 1e-12);
            assert!(seg.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
