//! Interpretation of scene programs into metric geometry.

mod interp;
mod mesh;
mod obj;
mod vec3;

pub use interp::{
    box_corners, extract_layout_entities, extract_oriented_boxes, interpret_scene,
    interpret_scene_with, opening_corners, wall_corners, InterpretOptions, WallLookup,
};
pub use mesh::{
    cuboid_mesh, door_leaf_quad, primitive_mesh, rotation_xyz, tessellate_curved_wall,
    DEFAULT_BEZIER_SEGMENTS, DEFAULT_CYLINDER_SIDES,
};
pub use obj::export_obj;
pub use vec3::Vec3;

use crate::lang::Violation;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("wall {0} has coincident endpoints in plan")]
    DegenerateWall(u32),
    #[error("reference to missing wall {0}")]
    DanglingReference(u32),
    #[error("opening {id} exceeds its wall face by {excess:.4} m")]
    OutsideWallFace { id: u32, excess: f64 },
    #[error("all Bezier control points coincide")]
    DegenerateCurve,
    #[error("unknown primitive class {0}")]
    UnknownPrimitiveClass(u32),
    #[error("invalid program: {}", .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidProgram(Vec<Violation>),
}

/// Layout entity class used by the layout metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityClass {
    Wall,
    Door,
    Window,
}

impl EntityClass {
    pub const ALL: [EntityClass; 3] = [EntityClass::Wall, EntityClass::Door, EntityClass::Window];

    pub fn name(self) -> &'static str {
        match self {
            EntityClass::Wall => "wall",
            EntityClass::Door => "door",
            EntityClass::Window => "window",
        }
    }
}

/// A planar quad: walls run `[a, b, b+h, a+h]`, openings run
/// `[bottom-left, bottom-right, top-right, top-left]` along their wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityCorners {
    pub class: EntityClass,
    pub corners: [Vec3; 4],
}

impl EntityCorners {
    /// Largest distance of a corner from the plane through the first three.
    pub fn planarity_residual(&self) -> f64 {
        let [a, b, c, d] = self.corners;
        let n = (b - a).cross(c - a);
        let len = n.norm();
        if len == 0.0 {
            return 0.0;
        }
        ((d - a).dot(n) / len).abs()
    }

    pub fn area(&self) -> f64 {
        let [a, b, c, d] = self.corners;
        0.5 * ((b - a).cross(c - a).norm() + (c - a).cross(d - a).norm())
    }
}

/// Gravity-aligned box: `center`, yaw in degrees, full extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec3,
    pub yaw: f64,
    pub extents: Vec3,
    pub class: u32,
}

impl OrientedBox {
    pub fn volume(&self) -> f64 {
        self.extents.x * self.extents.y * self.extents.z
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

/// Triangles with less area than this are dropped.
const MIN_TRIANGLE_AREA: f64 = 1e-14;

impl Mesh {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn push_vertex(&mut self, v: Vec3) -> u32 {
        self.vertices.push(v);
        (self.vertices.len() - 1) as u32
    }

    /// Adds the triangle unless it is degenerate.
    pub fn push_triangle(&mut self, a: u32, b: u32, c: u32) {
        let [pa, pb, pc] = [a, b, c].map(|i| self.vertices[i as usize]);
        if 0.5 * (pb - pa).cross(pc - pa).norm() > MIN_TRIANGLE_AREA {
            self.triangles.push([a, b, c]);
        }
    }

    /// Adds the quad `a b c d` as two triangles.
    pub fn push_quad(&mut self, a: u32, b: u32, c: u32, d: u32) {
        self.push_triangle(a, b, c);
        self.push_triangle(a, c, d);
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(c - a).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Signed volume enclosed by a closed, consistently oriented mesh.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle(t);
                a.dot(b.cross(c))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn flip(&mut self) {
        for t in &mut self.triangles {
            t.swap(1, 2);
        }
    }

    pub fn append(&mut self, other: &Mesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles.extend(other.triangles.iter().map(|t| t.map(|i| i + base)));
    }

    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Axis-aligned bounds `(min, max)`; `None` when there are no vertices.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeshKind {
    Wall,
    CurvedWall,
    WallPrim,
    DoorLeaf,
    /// Surface of a bounding box that carries no primitives.
    Object,
    Primitive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedMesh {
    pub name: String,
    pub kind: MeshKind,
    pub mesh: Mesh,
}

/// Interpreted scene.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneGeometry {
    pub layout_entities: Vec<EntityCorners>,
    pub boxes: Vec<OrientedBox>,
    pub meshes: Vec<NamedMesh>,
}

impl SceneGeometry {
    pub fn is_empty(&self) -> bool {
        self.layout_entities.is_empty() && self.boxes.is_empty() && self.meshes.is_empty()
    }

    pub fn total_area(&self) -> f64 {
        self.meshes.iter().map(|m| m.mesh.area()).sum()
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        self.meshes
            .iter()
            .filter_map(|m| m.mesh.bounds())
            .reduce(|(a, b), (c, d)| (a.min(c), b.max(d)))
    }
}
