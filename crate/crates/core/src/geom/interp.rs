use super::mesh::{
    cuboid_mesh, door_leaf_quad, primitive_mesh, tessellate_curved_wall, DEFAULT_BEZIER_SEGMENTS,
    DEFAULT_CYLINDER_SIDES,
};
use super::{
    EntityClass, EntityCorners, GeomError, Mesh, MeshKind, NamedMesh, OrientedBox, SceneGeometry,
    Vec3,
};
use crate::lang::{
    canonical_cmp, cos_sin_deg, opening_face_excess, validate_scene, BboxCmd, Command, OpeningCmd,
    SceneProgram, WallCmd,
};
use std::collections::{BTreeMap, HashSet};

/// Walls of a program indexed by id.
#[derive(Debug, Clone, Default)]
pub struct WallLookup {
    walls: BTreeMap<u32, WallCmd>,
}

impl WallLookup {
    pub fn from_program(program: &SceneProgram) -> Self {
        let mut walls = BTreeMap::new();
        for w in program.walls() {
            walls.entry(w.id).or_insert(*w);
        }
        WallLookup { walls }
    }

    pub fn get(&self, id: u32) -> Option<&WallCmd> {
        self.walls.get(&id)
    }
}

/// Horizontal frame of a wall: base corner, unit direction, length.
struct WallFrame {
    origin: Vec3,
    along: Vec3,
    normal: Vec3,
    length: f64,
    height: f64,
}

impl WallFrame {
    fn new(wall: &WallCmd) -> Result<Self, GeomError> {
        let d = Vec3::new(wall.b_x - wall.a_x, wall.b_y - wall.a_y, 0.0);
        let length = d.norm();
        if length < 1e-9 {
            return Err(GeomError::DegenerateWall(wall.id));
        }
        let along = d * (1.0 / length);
        Ok(WallFrame {
            origin: Vec3::new(wall.a_x, wall.a_y, wall.a_z),
            along,
            normal: along.cross(Vec3::UP),
            length,
            height: wall.height,
        })
    }

    fn point(&self, s: f64, t: f64) -> Vec3 {
        self.origin + self.along * s + Vec3::UP * t
    }

    fn local(&self, p: Vec3) -> (f64, f64) {
        let d = p - self.origin;
        (d.dot(self.along), d.z)
    }
}

/// Corners `[a, b, b + h, a + h]` of a planar wall.
pub fn wall_corners(wall: &WallCmd) -> Result<EntityCorners, GeomError> {
    let f = WallFrame::new(wall)?;
    let a = f.origin;
    let b = Vec3::new(wall.b_x, wall.b_y, wall.a_z);
    let up = Vec3::UP * wall.height;
    Ok(EntityCorners { class: EntityClass::Wall, corners: [a, b, b + up, a + up] })
}

pub(crate) struct OpeningFrame {
    pub corners: [Vec3; 4],
    pub along: Vec3,
    pub normal: Vec3,
}

/// Opening rectangle in the plane of its `wall0`, without a containment
/// check.
pub(crate) fn opening_frame(
    opening: &OpeningCmd,
    walls: &WallLookup,
) -> Result<OpeningFrame, GeomError> {
    let wall = walls.get(opening.wall0_id).ok_or(GeomError::DanglingReference(opening.wall0_id))?;
    let f = WallFrame::new(wall)?;
    let p = Vec3::new(opening.position_x, opening.position_y, opening.position_z);
    let c = p - f.normal * (p - f.origin).dot(f.normal);
    let du = f.along * (opening.width / 2.0);
    let dz = Vec3::UP * (opening.height / 2.0);
    Ok(OpeningFrame {
        corners: [c - du - dz, c + du - dz, c + du + dz, c - du + dz],
        along: f.along,
        normal: f.normal,
    })
}

/// Door or window rectangle on `wall0`. Fails when the rectangle leaves
/// the wall face by more than `tolerance` meters.
pub fn opening_corners(
    opening: &OpeningCmd,
    walls: &WallLookup,
    tolerance: f64,
    class: EntityClass,
) -> Result<EntityCorners, GeomError> {
    let frame = opening_frame(opening, walls)?;
    let wall = walls.get(opening.wall0_id).expect("resolved by opening_frame");
    let excess = opening_face_excess(opening, wall);
    if excess > tolerance {
        return Err(GeomError::OutsideWallFace { id: opening.id, excess });
    }
    Ok(EntityCorners { class, corners: frame.corners })
}

/// The 8 corners of a gravity-aligned box: bottom face first, each face
/// counter-clockwise seen from above.
pub fn box_corners(b: &BboxCmd) -> [Vec3; 8] {
    let (c, s) = cos_sin_deg(b.angle_z);
    let center = Vec3::new(b.position_x, b.position_y, b.position_z);
    let (hx, hy, hz) = (b.scale_x / 2.0, b.scale_y / 2.0, b.scale_z / 2.0);
    let mut out = [Vec3::ZERO; 8];
    for (i, slot) in out.iter_mut().enumerate() {
        let z = if i < 4 { -hz } else { hz };
        let (x, y) = match i % 4 {
            0 => (-hx, -hy),
            1 => (hx, -hy),
            2 => (hx, hy),
            _ => (-hx, hy),
        };
        *slot = center + Vec3::new(c * x - s * y, s * x + c * y, z);
    }
    out
}

fn oriented_box(b: &BboxCmd) -> OrientedBox {
    OrientedBox {
        center: Vec3::new(b.position_x, b.position_y, b.position_z),
        yaw: b.angle_z,
        extents: Vec3::new(b.scale_x, b.scale_y, b.scale_z),
        class: b.class,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterpretOptions {
    pub bezier_segments: usize,
    pub cylinder_sides: usize,
}

impl Default for InterpretOptions {
    fn default() -> Self {
        InterpretOptions {
            bezier_segments: DEFAULT_BEZIER_SEGMENTS,
            cylinder_sides: DEFAULT_CYLINDER_SIDES,
        }
    }
}

/// Wall rectangle minus its openings, split on the grid induced by the
/// opening edges. `cutouts` are `(s0, s1, t0, t1)` in wall coordinates.
fn wall_mesh(f: &WallFrame, cutouts: &[(f64, f64, f64, f64)]) -> Mesh {
    let clipped: Vec<_> = cutouts
        .iter()
        .map(|&(s0, s1, t0, t1)| {
            (s0.max(0.0), s1.min(f.length), t0.max(0.0), t1.min(f.height))
        })
        .filter(|&(s0, s1, t0, t1)| s1 > s0 && t1 > t0)
        .collect();
    let breaks = |lo: f64, hi: f64, cuts: &mut dyn Iterator<Item = f64>| {
        let mut v: Vec<f64> = std::iter::once(lo).chain(cuts).chain(std::iter::once(hi)).collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        v
    };
    let ss = breaks(0.0, f.length, &mut clipped.iter().flat_map(|c| [c.0, c.1]));
    let ts = breaks(0.0, f.height, &mut clipped.iter().flat_map(|c| [c.2, c.3]));

    let mut mesh = Mesh::new();
    let mut index = BTreeMap::new();
    let mut vertex = |mesh: &mut Mesh, i: usize, j: usize| -> u32 {
        *index.entry((i, j)).or_insert_with(|| mesh.push_vertex(f.point(ss[i], ts[j])))
    };
    for i in 0..ss.len() - 1 {
        for j in 0..ts.len() - 1 {
            let sm = 0.5 * (ss[i] + ss[i + 1]);
            let tm = 0.5 * (ts[j] + ts[j + 1]);
            let covered = clipped.iter().any(|&(s0, s1, t0, t1)| sm > s0 && sm < s1 && tm > t0 && tm < t1);
            if covered {
                continue;
            }
            let a = vertex(&mut mesh, i, j);
            let b = vertex(&mut mesh, i + 1, j);
            let c = vertex(&mut mesh, i + 1, j + 1);
            let d = vertex(&mut mesh, i, j + 1);
            mesh.push_quad(a, b, c, d);
        }
    }
    mesh
}

/// [`interpret_scene_with`] using default tessellation settings.
pub fn interpret_scene(program: &SceneProgram) -> Result<SceneGeometry, GeomError> {
    interpret_scene_with(program, &InterpretOptions::default())
}

/// Interprets a valid program. Output follows canonical command order;
/// walls carry their opening cutouts, openings spanning two walls are cut
/// from both.
pub fn interpret_scene_with(
    program: &SceneProgram,
    opts: &InterpretOptions,
) -> Result<SceneGeometry, GeomError> {
    let violations = validate_scene(program);
    if !violations.is_empty() {
        return Err(GeomError::InvalidProgram(violations));
    }
    let mut ordered: Vec<&Command> = program.commands.iter().collect();
    ordered.sort_by(|a, b| canonical_cmp(a, b));
    let walls = WallLookup::from_program(program);
    let tol = program.resolution;

    let mut frames = Vec::new();
    for cmd in &program.commands {
        if let Command::Door(o) | Command::Window(o) = cmd {
            frames.push((o, opening_frame(o, &walls)?));
        }
    }
    let boxes_with_prims: HashSet<u32> = program
        .commands
        .iter()
        .filter_map(|c| match c {
            Command::Prim(q) => Some(q.bbox_id),
            _ => None,
        })
        .collect();

    let mut geo = SceneGeometry::default();
    let mut curved = 0;
    let mut wall_prims = 0;
    for cmd in ordered {
        match cmd {
            Command::Wall(w) => {
                geo.layout_entities.push(wall_corners(w)?);
                let f = WallFrame::new(w)?;
                let cutouts: Vec<_> = frames
                    .iter()
                    .filter(|(o, _)| o.wall0_id == w.id || o.wall1_id == w.id)
                    .map(|(_, fr)| {
                        let local = fr.corners.map(|c| f.local(c));
                        let s0 = local.iter().map(|l| l.0).fold(f64::INFINITY, f64::min);
                        let s1 = local.iter().map(|l| l.0).fold(f64::NEG_INFINITY, f64::max);
                        (s0, s1, local[0].1, local[2].1)
                    })
                    .collect();
                geo.meshes.push(NamedMesh {
                    name: format!("wall_{}", w.id),
                    kind: MeshKind::Wall,
                    mesh: wall_mesh(&f, &cutouts),
                });
            }
            Command::CurvedWall(c) => {
                geo.meshes.push(NamedMesh {
                    name: format!("curved_wall_{curved}"),
                    kind: MeshKind::CurvedWall,
                    mesh: tessellate_curved_wall(c, opts.bezier_segments)?,
                });
                curved += 1;
            }
            Command::WallPrim(wp) => {
                let parent = walls.get(wp.parent_wall_id).expect("validated reference");
                let f = WallFrame::new(parent)?;
                let mesh = cuboid_mesh(
                    Vec3::new(wp.pos_x, wp.pos_y, wp.pos_z),
                    (f.along.x, f.along.y),
                    Vec3::new(wp.size_x, wp.size_y, wp.size_z),
                );
                geo.meshes.push(NamedMesh {
                    name: format!("wall_prim_{}_{wall_prims}", wp.parent_wall_id),
                    kind: MeshKind::WallPrim,
                    mesh,
                });
                wall_prims += 1;
            }
            Command::Door(o) => {
                geo.layout_entities.push(opening_corners(o, &walls, tol, EntityClass::Door)?);
                geo.meshes.push(NamedMesh {
                    name: format!("door_leaf_{}", o.id),
                    kind: MeshKind::DoorLeaf,
                    mesh: door_leaf_quad(o, &walls)?,
                });
            }
            Command::Window(o) => {
                geo.layout_entities.push(opening_corners(o, &walls, tol, EntityClass::Window)?);
            }
            Command::Bbox(b) => {
                geo.boxes.push(oriented_box(b));
                if !boxes_with_prims.contains(&b.id) {
                    geo.meshes.push(NamedMesh {
                        name: format!("object_{}", b.id),
                        kind: MeshKind::Object,
                        mesh: cuboid_mesh(
                            Vec3::new(b.position_x, b.position_y, b.position_z),
                            cos_sin_deg(b.angle_z),
                            Vec3::new(b.scale_x, b.scale_y, b.scale_z),
                        ),
                    });
                }
            }
            Command::Prim(q) => {
                geo.meshes.push(NamedMesh {
                    name: format!("prim_{}_{}", q.bbox_id, q.prim_num),
                    kind: MeshKind::Primitive,
                    mesh: primitive_mesh(q, opts.cylinder_sides)?,
                });
            }
        }
    }
    Ok(geo)
}

/// Layout entities of a possibly invalid program (e.g. a model
/// prediction). Degenerate walls and openings whose wall cannot be
/// resolved are skipped instead of failing.
pub fn extract_layout_entities(program: &SceneProgram) -> Vec<EntityCorners> {
    let walls = WallLookup::from_program(program);
    program
        .commands
        .iter()
        .filter_map(|cmd| match cmd {
            Command::Wall(w) => wall_corners(w).ok(),
            Command::Door(o) => opening_frame(o, &walls)
                .ok()
                .map(|f| EntityCorners { class: EntityClass::Door, corners: f.corners }),
            Command::Window(o) => opening_frame(o, &walls)
                .ok()
                .map(|f| EntityCorners { class: EntityClass::Window, corners: f.corners }),
            _ => None,
        })
        .collect()
}

pub fn extract_oriented_boxes(program: &SceneProgram) -> Vec<OrientedBox> {
    program.bboxes().map(oriented_box).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_scene_text;

    const ROOM: &str = "make_wall, id=0, a_x=0, a_y=0, a_z=0, b_x=4, b_y=0, b_z=0, height=2.5\n\
        make_door, id=0, wall0_id=0, wall1_id=0, position_x=2, position_y=0, position_z=1, width=0.9, height=2\n";

    fn wall() -> WallCmd {
        WallCmd { id: 0, a_x: 0.0, a_y: 0.0, a_z: 0.0, b_x: 4.0, b_y: 0.0, b_z: 0.0, height: 2.5 }
    }

    #[test]
    fn wall_corner_order() {
        let c = wall_corners(&wall()).unwrap();
        let expect = [[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [4.0, 0.0, 2.5], [0.0, 0.0, 2.5]];
        assert_eq!(c.corners.map(|v| v.to_array()), expect);
    }

    #[test]
    fn degenerate_wall() {
        let mut w = wall();
        w.b_x = 0.0;
        assert_eq!(wall_corners(&w).unwrap_err(), GeomError::DegenerateWall(0));
    }

    #[test]
    fn swapped_endpoints_same_corner_set() {
        let mut w = wall();
        std::mem::swap(&mut w.a_x, &mut w.b_x);
        let a = wall_corners(&wall()).unwrap().corners;
        let b = wall_corners(&w).unwrap().corners;
        for p in a {
            assert!(b.iter().any(|q| q.distance(p) < 1e-12));
        }
    }

    #[test]
    fn door_rectangle() {
        let p = parse_scene_text(ROOM).unwrap();
        let Command::Door(d) = p.commands[1] else { unreachable!() };
        let c = opening_corners(&d, &WallLookup::from_program(&p), 0.05, EntityClass::Door).unwrap();
        let expect = [[1.55, 0.0, 0.0], [2.45, 0.0, 0.0], [2.45, 0.0, 2.0], [1.55, 0.0, 2.0]];
        for (got, want) in c.corners.iter().zip(expect) {
            assert!(got.distance(Vec3::from_array(want)) < 1e-12);
        }
    }

    #[test]
    fn opening_wider_than_wall() {
        let p = parse_scene_text(ROOM).unwrap();
        let Command::Door(mut d) = p.commands[1] else { unreachable!() };
        d.width = 5.0;
        let err = opening_corners(&d, &WallLookup::from_program(&p), 0.05, EntityClass::Door);
        assert!(matches!(err, Err(GeomError::OutsideWallFace { .. })));
        d.wall0_id = 8;
        let err = opening_corners(&d, &WallLookup::from_program(&p), 0.05, EntityClass::Door);
        assert_eq!(err.unwrap_err(), GeomError::DanglingReference(8));
    }

    #[test]
    fn box_corners_unit_and_quarter_turn() {
        let b = BboxCmd {
            id: 0,
            class: 0,
            position_x: 0.0,
            position_y: 0.0,
            position_z: 0.0,
            angle_z: 0.0,
            scale_x: 1.0,
            scale_y: 1.0,
            scale_z: 1.0,
        };
        let c = box_corners(&b);
        assert!(c.iter().all(|v| v.to_array().iter().all(|x| x.abs() == 0.5)));
        assert_eq!(c[0].to_array(), [-0.5, -0.5, -0.5]);
        assert_eq!(c[6].to_array(), [0.5, 0.5, 0.5]);

        let b = BboxCmd { scale_x: 2.0, angle_z: 90.0, ..b };
        let c = box_corners(&b);
        let max_x = c.iter().map(|v| v.x).fold(f64::MIN, f64::max);
        let max_y = c.iter().map(|v| v.y).fold(f64::MIN, f64::max);
        assert_eq!((max_x, max_y), (0.5, 1.0));
    }

    #[test]
    fn plain_wall_is_two_triangles() {
        let p = SceneProgram::new(vec![Command::Wall(wall())]);
        let g = interpret_scene(&p).unwrap();
        assert_eq!(g.meshes.len(), 1);
        assert_eq!(g.meshes[0].mesh.triangles.len(), 2);
        assert_eq!(g.meshes[0].mesh.vertices.len(), 4);
    }

    #[test]
    fn wall_area_excludes_door() {
        let g = interpret_scene(&parse_scene_text(ROOM).unwrap()).unwrap();
        let wall = &g.meshes[0];
        assert_eq!(wall.kind, MeshKind::Wall);
        assert!((wall.mesh.area() - (4.0 * 2.5 - 0.9 * 2.0)).abs() < 1e-6);
        assert_eq!(g.layout_entities.len(), 2);
    }

    #[test]
    fn empty_program() {
        assert!(interpret_scene(&SceneProgram::default()).unwrap().is_empty());
    }

    #[test]
    fn invalid_program_is_rejected() {
        let mut w = wall();
        w.height = 0.0;
        let p = SceneProgram::new(vec![Command::Wall(w)]);
        assert!(matches!(interpret_scene(&p), Err(GeomError::InvalidProgram(_))));
    }

    #[test]
    fn corner_door_cut_from_both_walls() {
        let text = "make_wall, id=0, a_x=0, a_y=0, a_z=0, b_x=4, b_y=0, b_z=0, height=2.5\n\
            make_wall, id=1, a_x=0, a_y=0, a_z=0, b_x=4, b_y=0, b_z=0, height=2.5\n\
            make_door, id=0, wall0_id=0, wall1_id=1, position_x=2, position_y=0, position_z=1, width=0.9, height=2\n";
        let g = interpret_scene(&parse_scene_text(text).unwrap()).unwrap();
        for m in g.meshes.iter().filter(|m| m.kind == MeshKind::Wall) {
            assert!((m.mesh.area() - 8.2).abs() < 1e-9);
        }
    }
}
