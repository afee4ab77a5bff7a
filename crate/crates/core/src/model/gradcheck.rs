//! Central finite-difference verification of the analytic gradients.

use super::decoder::Model;
use super::encoder::cell_statistics;
use super::{ModelConfig, ModelError, Mutation};
use crate::gen::PointCloud;
use crate::geom::Vec3;
use crate::tokens::{Token, START, STOP};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

const STEP: f64 = 1e-5;
const ENTRIES_PER_GROUP: usize = 24;
const SEQ_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Worst relative error per parameter group.
    pub per_group: Vec<(String, f64)>,
    pub checked: usize,
}

/// `|a − n| / max(|a| + |n|, 1e-5)`: relative where gradients are large,
/// absolute near zero.
fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-5)
}

pub fn gradient_check(config: &ModelConfig, seed: u64) -> Result<GradCheckReport, ModelError> {
    gradient_check_with(config, seed, None)
}

/// Checks up to 24 entries of every parameter group in 64-bit arithmetic.
/// With a `mutation`, the analytic side uses the perturbed backward pass.
pub fn gradient_check_with(config: &ModelConfig, seed: u64, mutation: Option<Mutation>) -> Result<GradCheckReport, ModelError> {
    if config.d_model > 16 || config.layers > 1 {
        return Err(ModelError::InvalidConfig("gradient checks need d_model <= 16 and at most 1 layer".into()));
    }
    let mut model = Model::<f64>::new(config.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6AD);
    // Spread parameters away from the init so every path carries signal.
    let noise = Normal::new(0.0, 0.3).expect("valid std");
    for x in &mut model.params {
        *x += noise.sample(&mut rng);
    }
    let cloud = PointCloud {
        points: (0..60)
            .map(|_| Vec3::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0), rng.random_range(0.0..2.5)))
            .collect(),
    };
    let stats = cell_statistics(&cloud, config)?;
    let mut tokens: Vec<Token> = vec![START];
    tokens.extend((0..SEQ_LEN - 2).map(|_| rng.random_range(3..config.vocab as Token)));
    tokens.push(STOP);

    let mut grads = vec![0.0; model.params.len()];
    let (_, count) = model.loss_and_grad(&stats, &tokens, &mut grads, 1.0, mutation, None)?;
    for g in &mut grads {
        *g /= count as f64;
    }

    let d = config.d_model;
    let mut per_group = Vec::new();
    let mut checked = 0;
    let mut max_abs_error: f64 = 0.0;
    let groups = model.layout.groups.clone();
    for g in &groups {
        let candidates: Vec<usize> = if g.name == "tok_emb" {
            let mut rows: Vec<usize> = tokens[..SEQ_LEN - 1].iter().map(|&t| t as usize).collect();
            rows.sort_unstable();
            rows.dedup();
            rows.iter().flat_map(|r| r * d..(r + 1) * d).map(|i| g.offset + i).collect()
        } else {
            g.range().collect()
        };
        let picks = sample(&mut rng, candidates.len(), ENTRIES_PER_GROUP.min(candidates.len()));
        let mut worst: f64 = 0.0;
        for k in picks {
            let i = candidates[k];
            let orig = model.params[i];
            model.params[i] = orig + STEP;
            let up = model.loss(&stats, &tokens)?;
            model.params[i] = orig - STEP;
            let down = model.loss(&stats, &tokens)?;
            model.params[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_error(grads[i], numeric));
            max_abs_error = max_abs_error.max((grads[i] - numeric).abs());
            checked += 1;
        }
        per_group.push((g.name.clone(), worst));
    }
    let max_rel_error = per_group.iter().map(|g| g.1).fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, max_abs_error, per_group, checked })
}
