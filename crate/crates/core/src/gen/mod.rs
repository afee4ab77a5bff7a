//! Procedural training data: rectilinear multi-room scenes with openings,
//! objects and optional primitive parts, plus simulated noisy point clouds
//! sampled from their interpreted geometry.

mod layout;
mod sample;

pub use layout::generate_scene;
pub use sample::{sample_point_cloud, sample_point_cloud_with_stats, SampleStats};

use crate::geom::{interpret_scene, GeomError, Vec3};
use crate::lang::{serialize_scene_text, SceneProgram, DEFAULT_RESOLUTION};
use crate::tokens::{format_token_line, tokenize, TokenizeError};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("scene generation failed for seed {seed} after {attempts} attempts")]
    GenerationFailed { seed: u64, attempts: u32 },
    #[error("geometry is empty")]
    EmptyGeometry,
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error("{path}: {source}")]
    IoFailure { path: PathBuf, source: std::io::Error },
}

/// Generator and point-cloud simulation settings. Ranges are inclusive
/// `[min, max]`; lengths are meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub rooms: [u32; 2],
    pub room_size: [f64; 2],
    pub wall_height: [f64; 2],
    pub doors_per_room: [u32; 2],
    pub windows_per_room: [u32; 2],
    pub boxes_per_room: [u32; 2],
    pub num_classes: u32,
    pub primitives: bool,
    /// Chance that a box is decomposed into primitive parts.
    pub prim_probability: f64,
    pub curved_wall_probability: f64,
    pub curved_wall_thickness: f64,
    /// Chance that a door gets a random open state.
    pub door_state_probability: f64,
    pub resolution: f64,
    /// Surface samples per square meter.
    pub point_density: f64,
    pub noise_sigma: f64,
    pub outlier_fraction: f64,
    /// Upper bound of the fraction of points removed in surface patches.
    pub dropout_fraction: f64,
    pub max_points: usize,
    pub max_attempts: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            rooms: [1, 3],
            room_size: [3.0, 6.0],
            wall_height: [2.4, 3.0],
            doors_per_room: [1, 2],
            windows_per_room: [0, 2],
            boxes_per_room: [0, 3],
            num_classes: 8,
            primitives: true,
            prim_probability: 0.5,
            curved_wall_probability: 0.0,
            curved_wall_thickness: 0.0,
            door_state_probability: 0.5,
            resolution: DEFAULT_RESOLUTION,
            point_density: 200.0,
            noise_sigma: 0.01,
            outlier_fraction: 0.005,
            dropout_fraction: 0.2,
            max_points: 50_000,
            max_attempts: 16,
        }
    }
}

impl GenConfig {
    /// Single-room scenes with only walls, doors and windows.
    pub fn layout_only_single_room() -> Self {
        GenConfig { rooms: [1, 1], boxes_per_room: [0, 0], primitives: false, ..GenConfig::default() }
    }

    pub(crate) fn check(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidConfig(m.to_string()));
        let ranges_u = [("rooms", self.rooms), ("doors_per_room", self.doors_per_room), ("windows_per_room", self.windows_per_room), ("boxes_per_room", self.boxes_per_room)];
        for (name, r) in ranges_u {
            if r[0] > r[1] {
                return bad(&format!("{name} range is empty"));
            }
        }
        if self.rooms[0] == 0 {
            return bad("rooms must be at least 1");
        }
        for (name, r) in [("room_size", self.room_size), ("wall_height", self.wall_height)] {
            if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                return bad(&format!("{name} must be a positive, non-empty range"));
            }
        }
        if self.room_size[0] < 1.5 || self.wall_height[0] < 2.3 {
            return bad("rooms must be at least 1.5 m wide and 2.3 m tall to hold openings");
        }
        let fractions = [
            ("prim_probability", self.prim_probability),
            ("curved_wall_probability", self.curved_wall_probability),
            ("door_state_probability", self.door_state_probability),
            ("outlier_fraction", self.outlier_fraction),
            ("dropout_fraction", self.dropout_fraction),
        ];
        for (name, f) in fractions {
            if !(0.0..=1.0).contains(&f) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.resolution > 0.0) || !(self.point_density > 0.0) || !(self.noise_sigma >= 0.0) || !(self.curved_wall_thickness >= 0.0) {
            return bad("resolution and density must be positive, sigma and thickness non-negative");
        }
        if self.max_points == 0 {
            return bad("max_points must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: expected three finite numbers")]
pub struct XyzError {
    pub line: usize,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Per-axis minimum, or zero for an empty cloud.
    pub fn min_corner(&self) -> Vec3 {
        self.points.iter().copied().reduce(Vec3::min).unwrap_or(Vec3::ZERO)
    }

    pub fn translated(&self, offset: Vec3) -> PointCloud {
        PointCloud { points: self.points.iter().map(|&p| p + offset).collect() }
    }

    /// `x y z` per line, six decimals.
    pub fn to_xyz(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 30);
        for p in &self.points {
            let _ = writeln!(out, "{:.6} {:.6} {:.6}", p.x, p.y, p.z);
        }
        out
    }

    pub fn from_xyz(text: &str) -> Result<PointCloud, XyzError> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: Vec<f64> = line.split_whitespace().filter_map(|s| s.parse().ok()).collect();
            match v[..] {
                [x, y, z] if v.iter().all(|c| c.is_finite()) => points.push(Vec3::new(x, y, z)),
                _ => return Err(XyzError { line: i + 1 }),
            }
        }
        Ok(PointCloud { points })
    }
}

/// SplitMix64 finalizer, used to derive independent per-scene seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of scene `index` in a dataset generated from `seed`.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// 80/10/10 split by a hash of the scene index.
pub fn split_of(index: usize) -> Split {
    match splitmix64(index as u64 ^ 0x5EED_5EED) % 10 {
        0..=7 => Split::Train,
        8 => Split::Val,
        _ => Split::Test,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub name: String,
    pub seed: u64,
    pub split: Split,
    pub commands: usize,
    pub tokens: usize,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: GenConfig,
    pub seed: u64,
    pub count: usize,
    pub scenes: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.scenes.iter().filter(move |e| e.split == split)
    }
}

/// One generated training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePair {
    pub program: SceneProgram,
    pub cloud: PointCloud,
    pub tokens: Vec<u16>,
}

/// Scene, cloud and tokens for one seed. The cloud seed is derived from
/// the scene seed.
pub fn generate_pair(config: &GenConfig, seed: u64) -> Result<ScenePair, GenError> {
    let program = generate_scene(config, seed)?;
    let geometry = interpret_scene(&program)?;
    let cloud = sample_point_cloud(&geometry, config, splitmix64(seed ^ 0xC10D))?;
    let tokens = tokenize(&program)?;
    Ok(ScenePair { program, cloud, tokens })
}

fn write(path: &Path, contents: &str) -> Result<(), GenError> {
    fs::write(path, contents).map_err(|source| GenError::IoFailure { path: path.to_path_buf(), source })
}

/// Writes `scene_%06d.{scene,xyz,tok}` for `n` scenes and then
/// `manifest.json`.
pub fn generate_dataset(config: &GenConfig, n: usize, seed: u64, out_dir: &Path) -> Result<Manifest, GenError> {
    config.check()?;
    fs::create_dir_all(out_dir).map_err(|source| GenError::IoFailure { path: out_dir.to_path_buf(), source })?;
    let mut scenes = Vec::with_capacity(n);
    for index in 0..n {
        let s = scene_seed(seed, index);
        let pair = generate_pair(config, s)?;
        let name = format!("scene_{index:06}");
        write(&out_dir.join(format!("{name}.scene")), &serialize_scene_text(&pair.program))?;
        write(&out_dir.join(format!("{name}.xyz")), &pair.cloud.to_xyz())?;
        write(&out_dir.join(format!("{name}.tok")), &(format_token_line(&pair.tokens) + "\n"))?;
        scenes.push(ManifestEntry {
            index,
            name,
            seed: s,
            split: split_of(index),
            commands: pair.program.len(),
            tokens: pair.tokens.len(),
            points: pair.cloud.len(),
        });
    }
    let manifest = Manifest { config: config.clone(), seed, count: n, scenes };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(&out_dir.join("manifest.json"), &(json + "\n"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{validate_scene, CommandKind};

    #[test]
    fn single_room_has_four_walls() {
        let c = GenConfig::layout_only_single_room();
        for seed in 0..20 {
            let p = generate_scene(&c, seed).unwrap();
            assert_eq!(p.count(CommandKind::Wall), 4);
            assert!(validate_scene(&p).is_empty());
            assert!(p.count(CommandKind::Door) >= 1);
        }
    }

    #[test]
    fn deterministic_text() {
        let c = GenConfig::default();
        let a = serialize_scene_text(&generate_scene(&c, 9).unwrap());
        let b = serialize_scene_text(&generate_scene(&c, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn config_checks() {
        assert!(GenConfig::default().check().is_ok());
        let bad = GenConfig { rooms: [3, 1], ..GenConfig::default() };
        assert!(matches!(generate_scene(&bad, 0), Err(GenError::InvalidConfig(_))));
        let bad = GenConfig { dropout_fraction: 1.5, ..GenConfig::default() };
        assert!(bad.check().is_err());
        let json = serde_json::to_string(&GenConfig::default()).unwrap();
        assert_eq!(serde_json::from_str::<GenConfig>(&json).unwrap(), GenConfig::default());
        assert_eq!(serde_json::from_str::<GenConfig>("{\"rooms\": [1, 1]}").unwrap().rooms, [1, 1]);
    }

    #[test]
    fn xyz_roundtrip() {
        let c = PointCloud { points: vec![Vec3::new(1.0, 2.5, -0.125), Vec3::new(0.0, 0.0, 3.0)] };
        assert_eq!(PointCloud::from_xyz(&c.to_xyz()).unwrap(), c);
        assert_eq!(PointCloud::from_xyz("1 2 3\n1 2\n"), Err(XyzError { line: 2 }));
    }

    #[test]
    fn splits_cover_all() {
        let n = 1000;
        let train = (0..n).filter(|&i| split_of(i) == Split::Train).count();
        assert!((700..900).contains(&train));
        assert!((0..n).any(|i| split_of(i) == Split::Test));
    }

    #[test]
    fn dataset_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&GenConfig::default(), 3, 7, dir.path()).unwrap();
        assert_eq!(m.scenes.len(), 3);
        let files = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(files, 10);
    }
}
