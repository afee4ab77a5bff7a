use super::{GenConfig, GenError, PointCloud};
use crate::geom::{SceneGeometry, Vec3};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Radius of the surface patches removed by dropout, in meters.
const PATCH_RADIUS: f64 = 0.5;
/// Outliers are drawn from the scene bounds grown by this margin.
const OUTLIER_MARGIN: f64 = 0.25;

/// Point counts at each stage of [`sample_point_cloud_with_stats`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SampleStats {
    pub surface: usize,
    pub after_dropout: usize,
    pub outliers: usize,
    pub output: usize,
}

fn point_on(tri: [Vec3; 3], rng: &mut ChaCha8Rng) -> Vec3 {
    let (r1, r2): (f64, f64) = (rng.random(), rng.random());
    let s = r1.sqrt();
    tri[0] * (1.0 - s) + tri[1] * (s * (1.0 - r2)) + tri[2] * (s * r2)
}

pub fn sample_point_cloud(geometry: &SceneGeometry, config: &GenConfig, seed: u64) -> Result<PointCloud, GenError> {
    sample_point_cloud_with_stats(geometry, config, seed).map(|(c, _)| c)
}

/// Area-weighted surface sampling followed by Gaussian jitter, patch
/// dropout, uniform outliers and a uniform subsample to `max_points`.
pub fn sample_point_cloud_with_stats(
    geometry: &SceneGeometry,
    config: &GenConfig,
    seed: u64,
) -> Result<(PointCloud, SampleStats), GenError> {
    config.check()?;
    let bounds = geometry.bounds().filter(|_| geometry.total_area() > 0.0).ok_or(GenError::EmptyGeometry)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = SampleStats::default();

    let mut points = Vec::new();
    for named in &geometry.meshes {
        let mesh = &named.mesh;
        for t in 0..mesh.triangles.len() {
            let expected = mesh.triangle_area(t) * config.point_density;
            // Stochastic rounding keeps the expected total exact.
            let n = expected.floor() as usize + usize::from(rng.random::<f64>() < expected.fract());
            let tri = mesh.triangle(t);
            for _ in 0..n {
                points.push(point_on(tri, &mut rng));
            }
        }
    }
    if points.is_empty() {
        // Very low densities can miss every triangle; keep one sample.
        let named = geometry.meshes.iter().find(|m| !m.mesh.is_empty()).ok_or(GenError::EmptyGeometry)?;
        points.push(point_on(named.mesh.triangle(0), &mut rng));
    }
    stats.surface = points.len();

    if config.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.noise_sigma).expect("positive sigma");
        for p in &mut points {
            *p = *p + Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }

    if config.dropout_fraction > 0.0 {
        let target = (rng.random::<f64>() * config.dropout_fraction * points.len() as f64) as usize;
        let mut removed = vec![false; points.len()];
        let mut count = 0;
        while count < target {
            let center = points[rng.random_range(0..points.len())];
            for (i, p) in points.iter().enumerate() {
                if !removed[i] && p.distance(center) <= PATCH_RADIUS {
                    removed[i] = true;
                    count += 1;
                }
            }
        }
        // Never drop everything.
        if count == points.len() {
            removed[0] = false;
        }
        points = points.into_iter().zip(removed).filter(|(_, r)| !r).map(|(p, _)| p).collect();
    }
    stats.after_dropout = points.len();

    let n_out = (config.outlier_fraction * points.len() as f64).round() as usize;
    if n_out > 0 {
        let (lo, hi) = bounds;
        let pad = Vec3::new(OUTLIER_MARGIN, OUTLIER_MARGIN, OUTLIER_MARGIN);
        let (lo, hi) = (lo - pad, hi + pad);
        for i in index::sample(&mut rng, points.len(), n_out.min(points.len())).into_vec() {
            points[i] = Vec3::new(
                rng.random_range(lo.x..=hi.x),
                rng.random_range(lo.y..=hi.y),
                rng.random_range(lo.z..=hi.z),
            );
        }
        stats.outliers = n_out.min(points.len());
    }

    if points.len() > config.max_points {
        let mut keep = index::sample(&mut rng, points.len(), config.max_points).into_vec();
        keep.sort_unstable();
        points = keep.into_iter().map(|i| points[i]).collect();
    }
    stats.output = points.len();
    Ok((PointCloud { points }, stats))
}
