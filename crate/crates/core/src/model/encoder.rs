//! Voxel-pooling point-cloud encoder: fine occupancy at the voxel size,
//! pooled into coarse cells, per-cell statistics mapped by a two-layer MLP,
//! normalized cell coordinates appended.

use super::ops::{gelu, gelu_grad, linear, linear_backward, Mutation};
use super::params::{Idx, CELL_FEATURES};
use super::{ModelConfig, ModelError, Real};
use crate::gen::PointCloud;
use std::collections::BTreeMap;

/// Cell coordinates are divided by this many meters.
const COORD_SCALE: f64 = 10.0;

/// Encoder output: one row of width `d_model` per occupied coarse cell,
/// sorted lexicographically by cell coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderFeatures<T> {
    pub cells: Vec<[i64; 3]>,
    pub d_model: usize,
    pub features: Vec<T>,
    pub(crate) inputs: Vec<T>,
    pub(crate) hidden_pre: Vec<T>,
    pub(crate) hidden: Vec<T>,
}

impl<T> EncoderFeatures<T> {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Order-free per-cell statistics of the occupied fine voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub cells: Vec<[i64; 3]>,
    /// `cells.len() × CELL_FEATURES`, row-major.
    pub inputs: Vec<f64>,
}

/// Voxelizes the cloud (negative coordinates clamp into the first cell)
/// and summarizes each coarse cell. Output depends only on the set of
/// occupied voxels, never on point order.
pub fn cell_statistics(cloud: &PointCloud, config: &ModelConfig) -> Result<CellStats, ModelError> {
    if cloud.is_empty() {
        return Err(ModelError::EmptyCloud);
    }
    let res = config.voxel_size;
    let levels = config.pooling_levels;
    let mut voxels: Vec<[i64; 3]> = cloud
        .points
        .iter()
        .map(|p| [p.x, p.y, p.z].map(|c| ((c / res).floor() as i64).max(0)))
        .collect();
    voxels.sort_unstable();
    voxels.dedup();

    let mut by_cell: BTreeMap<[i64; 3], Vec<[i64; 3]>> = BTreeMap::new();
    for v in voxels {
        by_cell.entry(v.map(|c| c >> levels)).or_default().push(v);
    }
    let side = (1i64 << levels) as f64;
    let max_count = side * side * side;
    let cell_m = config.cell_size();
    let mut cells = Vec::with_capacity(by_cell.len());
    let mut inputs = Vec::with_capacity(by_cell.len() * CELL_FEATURES);
    for (cell, vs) in by_cell {
        let n = vs.len() as f64;
        // Voxel-center offsets from the cell center, in cell units.
        let offs: Vec<[f64; 3]> = vs
            .iter()
            .map(|v| [0, 1, 2].map(|a| ((v[a] - (cell[a] << levels)) as f64 + 0.5) / side - 0.5))
            .collect();
        let mean = [0, 1, 2].map(|a| offs.iter().map(|o| o[a]).sum::<f64>() / n);
        let std = [0, 1, 2].map(|a| (offs.iter().map(|o| (o[a] - mean[a]).powi(2)).sum::<f64>() / n).sqrt());
        inputs.push((1.0 + n).ln() / (1.0 + max_count).ln());
        inputs.extend(mean);
        inputs.extend(std);
        inputs.extend(cell.map(|c| (c as f64 + 0.5) * cell_m / COORD_SCALE));
        cells.push(cell);
    }
    Ok(CellStats { cells, inputs })
}

pub(crate) fn encode_stats<T: Real>(stats: &CellStats, params: &[T], idx: &Idx, config: &ModelConfig) -> EncoderFeatures<T> {
    let d = config.d_model;
    let k = stats.cells.len();
    let inputs: Vec<T> = stats.inputs.iter().map(|&x| T::lit(x)).collect();
    let hidden_pre = linear(&inputs, &params[idx.enc_w1.clone()], &params[idx.enc_b1.clone()], k, CELL_FEATURES, d);
    let hidden: Vec<T> = hidden_pre.iter().map(|&x| gelu(x)).collect();
    let z = linear(&hidden, &params[idx.enc_w2.clone()], &params[idx.enc_b2.clone()], k, d, d - 3);
    let mut features = vec![T::zero(); k * d];
    for r in 0..k {
        features[r * d..r * d + d - 3].copy_from_slice(&z[r * (d - 3)..(r + 1) * (d - 3)]);
        let coords = &stats.inputs[r * CELL_FEATURES + 7..(r + 1) * CELL_FEATURES];
        for (a, &c) in coords.iter().enumerate() {
            features[r * d + d - 3 + a] = T::lit(c);
        }
    }
    EncoderFeatures { cells: stats.cells.clone(), d_model: d, features, inputs, hidden_pre, hidden }
}

/// Accumulates encoder parameter gradients from `dfeat` (`K × d`).
pub(crate) fn encode_backward<T: Real>(
    feats: &EncoderFeatures<T>,
    dfeat: &[T],
    params: &[T],
    grads: &mut [T],
    idx: &Idx,
    mutation: Option<Mutation>,
) {
    let d = feats.d_model;
    let k = feats.len();
    let mut dz = vec![T::zero(); k * (d - 3)];
    for r in 0..k {
        dz[r * (d - 3)..(r + 1) * (d - 3)].copy_from_slice(&dfeat[r * d..r * d + d - 3]);
    }
    let mut dw2 = vec![T::zero(); d * (d - 3)];
    let mut db2 = vec![T::zero(); d - 3];
    let mut dhidden = vec![T::zero(); k * d];
    linear_backward(&dz, &feats.hidden, &params[idx.enc_w2.clone()], k, d, d - 3, &mut dw2, &mut db2, Some(&mut dhidden));
    for (g, &x) in dhidden.iter_mut().zip(&feats.hidden_pre) {
        *g = *g * gelu_grad(x, mutation);
    }
    let mut dw1 = vec![T::zero(); CELL_FEATURES * d];
    let mut db1 = vec![T::zero(); d];
    linear_backward(&dhidden, &feats.inputs, &params[idx.enc_w1.clone()], k, CELL_FEATURES, d, &mut dw1, &mut db1, None);
    for (range, src) in [(&idx.enc_w1, &dw1), (&idx.enc_b1, &db1), (&idx.enc_w2, &dw2), (&idx.enc_b2, &db2)] {
        for (g, &s) in grads[range.clone()].iter_mut().zip(src) {
            *g = *g + s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    #[test]
    fn single_point_single_cell() {
        let c = ModelConfig::default();
        let cloud = PointCloud { points: vec![Vec3::new(1.0, 2.0, 0.5)] };
        let s = cell_statistics(&cloud, &c).unwrap();
        assert_eq!(s.cells.len(), 1);
        assert_eq!(s.cells[0], [0, 1, 0]);
        assert!(matches!(cell_statistics(&PointCloud::default(), &c), Err(ModelError::EmptyCloud)));
    }

    #[test]
    fn coarse_cell_size() {
        let c = ModelConfig::default();
        assert!((c.cell_size() - 1.6).abs() < 1e-12);
        // A 10 m diagonal line occupies at most ceil(10/1.6) = 7 cells per axis.
        let cloud = PointCloud { points: (0..1000).map(|i| Vec3::new(i as f64 * 0.01, 0.0, 0.0)).collect() };
        assert_eq!(cell_statistics(&cloud, &c).unwrap().cells.len(), 7);
    }

    #[test]
    fn order_free() {
        let c = ModelConfig::default();
        let pts: Vec<Vec3> = (0..500).map(|i| Vec3::new((i as f64 * 0.731).sin().abs() * 5.0, (i as f64 * 0.37).cos().abs() * 4.0, (i % 7) as f64 * 0.3)).collect();
        let mut rev = pts.clone();
        rev.reverse();
        let a = cell_statistics(&PointCloud { points: pts }, &c).unwrap();
        let b = cell_statistics(&PointCloud { points: rev }, &c).unwrap();
        assert_eq!(a, b);
        let sorted = a.cells.windows(2).all(|w| w[0] < w[1]);
        assert!(sorted);
    }
}
