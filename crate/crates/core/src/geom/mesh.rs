//! Mesh builders for primitives, curved walls and door leaves.

use super::interp::{opening_frame, WallLookup};
use super::{GeomError, Mesh, Vec3};
use crate::lang::{cos_sin_deg, CurvedWallCmd, OpeningCmd, PrimCmd};

pub const DEFAULT_BEZIER_SEGMENTS: usize = 16;
pub const DEFAULT_CYLINDER_SIDES: usize = 24;

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn apply(m: &Mat3, v: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
        m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
        m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
    )
}

/// Rotation for Euler angles in degrees: the body is turned about the
/// world x axis first, then y, then z, i.e. `R = Rz * Ry * Rx`. With this
/// order a later world yaw simply adds to `angle_z`.
pub fn rotation_xyz(angle_x: f64, angle_y: f64, angle_z: f64) -> [[f64; 3]; 3] {
    let (cx, sx) = cos_sin_deg(angle_x);
    let (cy, sy) = cos_sin_deg(angle_y);
    let (cz, sz) = cos_sin_deg(angle_z);
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&rz, &mat_mul(&ry, &rx))
}

/// Unit cube centered at the origin with outward-facing triangles.
fn unit_cuboid() -> Mesh {
    let mut m = Mesh::new();
    for i in 0..8u32 {
        let sx = if matches!(i % 4, 1 | 2) { 0.5 } else { -0.5 };
        let sy = if matches!(i % 4, 2 | 3) { 0.5 } else { -0.5 };
        let sz = if i >= 4 { 0.5 } else { -0.5 };
        m.push_vertex(Vec3::new(sx, sy, sz));
    }
    for [a, b, c, d] in [
        [0, 3, 2, 1],
        [4, 5, 6, 7],
        [0, 1, 5, 4],
        [1, 2, 6, 5],
        [2, 3, 7, 6],
        [3, 0, 4, 7],
    ] {
        m.push_quad(a, b, c, d);
    }
    m
}

/// Upright prism over a regular `sides`-gon inscribed in the unit-diameter
/// circle, height 1, centered at the origin.
fn unit_cylinder(sides: usize) -> Mesh {
    let mut m = Mesh::new();
    let n = sides as u32;
    for z in [-0.5, 0.5] {
        for k in 0..sides {
            let t = std::f64::consts::TAU * k as f64 / sides as f64;
            m.push_vertex(Vec3::new(0.5 * t.cos(), 0.5 * t.sin(), z));
        }
    }
    for k in 0..n {
        let k1 = (k + 1) % n;
        m.push_quad(k, k1, n + k1, n + k);
    }
    for k in 1..n - 1 {
        m.push_triangle(0, k + 1, k);
        m.push_triangle(n, n + k, n + k + 1);
    }
    m
}

/// Cuboid with full `extents`, yawed by the given cosine/sine, at `center`.
pub fn cuboid_mesh(center: Vec3, yaw_cos_sin: (f64, f64), extents: Vec3) -> Mesh {
    let (c, s) = yaw_cos_sin;
    unit_cuboid().map_vertices(|v| {
        let l = Vec3::new(v.x * extents.x, v.y * extents.y, v.z * extents.z);
        center + Vec3::new(c * l.x - s * l.y, s * l.x + c * l.y, l.z)
    })
}

/// Closed mesh for a primitive: class 0 is a cuboid, class 1 an upright
/// prism with a `cylinder_sides`-gon cross-section scaled to
/// `(scale_x, scale_y)` and height `scale_z`.
pub fn primitive_mesh(prim: &PrimCmd, cylinder_sides: usize) -> Result<Mesh, GeomError> {
    assert!(cylinder_sides >= 3, "a cylinder needs at least 3 sides");
    let unit = match prim.class {
        0 => unit_cuboid(),
        1 => unit_cylinder(cylinder_sides),
        c => return Err(GeomError::UnknownPrimitiveClass(c)),
    };
    let r = rotation_xyz(prim.angle_x, prim.angle_y, prim.angle_z);
    let center = Vec3::new(prim.center_x, prim.center_y, prim.center_z);
    Ok(unit.map_vertices(|v| {
        center + apply(&r, Vec3::new(v.x * prim.scale_x, v.y * prim.scale_y, v.z * prim.scale_z))
    }))
}

fn bezier(p: &[(f64, f64); 4], t: f64) -> (f64, f64) {
    let u = 1.0 - t;
    let w = [u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t];
    let x = w[0] * p[0].0 + w[1] * p[1].0 + w[2] * p[2].0 + w[3] * p[3].0;
    let y = w[0] * p[0].1 + w[1] * p[1].1 + w[2] * p[2].1 + w[3] * p[3].1;
    (x, y)
}

fn bezier_tangent(p: &[(f64, f64); 4], t: f64) -> (f64, f64) {
    let u = 1.0 - t;
    let w = [3.0 * u * u, 6.0 * u * t, 3.0 * t * t];
    let d = [
        (p[1].0 - p[0].0, p[1].1 - p[0].1),
        (p[2].0 - p[1].0, p[2].1 - p[1].1),
        (p[3].0 - p[2].0, p[3].1 - p[2].1),
    ];
    (
        w[0] * d[0].0 + w[1] * d[1].0 + w[2] * d[2].0,
        w[0] * d[0].1 + w[1] * d[1].1 + w[2] * d[2].1,
    )
}

/// Footprint samples of the curve at `segments + 1` uniform parameters.
/// The first and last samples are exactly `a` and `b`.
pub(crate) fn curved_wall_samples(cmd: &CurvedWallCmd, segments: usize) -> Vec<(f64, f64)> {
    let ctrl = [(cmd.a_x, cmd.a_y), (cmd.c1_x, cmd.c1_y), (cmd.c2_x, cmd.c2_y), (cmd.b_x, cmd.b_y)];
    (0..=segments).map(|i| bezier(&ctrl, i as f64 / segments as f64)).collect()
}

/// Extrudes the Bezier footprint `[a, c1, c2, b]` from `a_z` up by
/// `height`. With positive thickness the surface is offset by half the
/// thickness to either side of the curve and closed into a slab.
pub fn tessellate_curved_wall(cmd: &CurvedWallCmd, segments: usize) -> Result<Mesh, GeomError> {
    assert!(segments >= 1, "need at least one segment");
    let ctrl = [(cmd.a_x, cmd.a_y), (cmd.c1_x, cmd.c1_y), (cmd.c2_x, cmd.c2_y), (cmd.b_x, cmd.b_y)];
    if ctrl.iter().all(|p| (p.0 - ctrl[0].0).hypot(p.1 - ctrl[0].1) < 1e-12) {
        return Err(GeomError::DegenerateCurve);
    }
    let z0 = cmd.a_z;
    let z1 = cmd.a_z + cmd.height;
    let samples = curved_wall_samples(cmd, segments);
    let mut m = Mesh::new();

    if cmd.thickness <= 0.0 {
        for &(x, y) in &samples {
            m.push_vertex(Vec3::new(x, y, z0));
        }
        for &(x, y) in &samples {
            m.push_vertex(Vec3::new(x, y, z1));
        }
        let top = samples.len() as u32;
        for i in 0..segments as u32 {
            m.push_quad(i, i + 1, top + i + 1, top + i);
        }
        return Ok(m);
    }

    let chord = (cmd.b_x - cmd.a_x, cmd.b_y - cmd.a_y);
    let half = cmd.thickness / 2.0;
    // Each cross-section contributes 4 vertices: left-bottom, right-bottom,
    // right-top, left-top.
    for (i, &(x, y)) in samples.iter().enumerate() {
        let t = i as f64 / segments as f64;
        let mut d = bezier_tangent(&ctrl, t);
        if d.0.hypot(d.1) < 1e-12 {
            let j = if i == 0 { 1 } else { i - 1 };
            d = (samples[j].0 - x, samples[j].1 - y);
            if i == 0 {
                d = (-d.0, -d.1);
            }
            if d.0.hypot(d.1) < 1e-12 {
                d = chord;
            }
        }
        let len = d.0.hypot(d.1);
        let (nx, ny) = (-d.1 / len * half, d.0 / len * half);
        m.push_vertex(Vec3::new(x + nx, y + ny, z0));
        m.push_vertex(Vec3::new(x - nx, y - ny, z0));
        m.push_vertex(Vec3::new(x - nx, y - ny, z1));
        m.push_vertex(Vec3::new(x + nx, y + ny, z1));
    }
    for i in 0..segments as u32 {
        let (a, b) = (4 * i, 4 * (i + 1));
        for k in 0..4 {
            let k1 = (k + 1) % 4;
            m.push_quad(a + k, b + k, b + k1, a + k1);
        }
    }
    let last = 4 * segments as u32;
    m.push_quad(0, 1, 2, 3);
    m.push_quad(last + 3, last + 2, last + 1, last);
    if m.signed_volume() < 0.0 {
        m.flip();
    }
    Ok(m)
}

/// The door leaf as a quad hinged on the left (`hinge_side` 0) or right
/// edge of the opening and swung `open_degree` toward the wall normal
/// side (`open_direction` 0) or away from it.
pub fn door_leaf_quad(door: &OpeningCmd, walls: &WallLookup) -> Result<Mesh, GeomError> {
    let frame = opening_frame(door, walls)?;
    let [c0, c1, c2, c3] = frame.corners;
    let (hinge_bottom, hinge_top, along) = if door.hinge_side == 0 {
        (c0, c3, frame.along)
    } else {
        (c1, c2, -frame.along)
    };
    let side = if door.open_direction == 0 { 1.0 } else { -1.0 };
    let (c, s) = cos_sin_deg(door.open_degree);
    let swing = (along * c + frame.normal * (s * side)) * door.width;
    let mut m = Mesh::new();
    let a = m.push_vertex(hinge_bottom);
    let b = m.push_vertex(hinge_bottom + swing);
    let cc = m.push_vertex(hinge_top + swing);
    let d = m.push_vertex(hinge_top);
    m.push_quad(a, b, cc, d);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{Command, SceneProgram, WallCmd};

    fn prim(class: u32, angle_z: f64) -> PrimCmd {
        PrimCmd {
            bbox_id: 0,
            prim_num: 0,
            class,
            center_x: 0.0,
            center_y: 0.0,
            center_z: 0.0,
            angle_x: 0.0,
            angle_y: 0.0,
            angle_z,
            scale_x: 1.0,
            scale_y: 1.0,
            scale_z: 1.0,
        }
    }

    #[test]
    fn unit_cuboid_primitive() {
        let m = primitive_mesh(&prim(0, 0.0), 24).unwrap();
        assert_eq!(m.triangles.len(), 12);
        assert!(m.vertices.iter().all(|v| v.to_array().iter().all(|c| c.abs() == 0.5)));
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cylinder_volume_matches_polygon_area() {
        let m = primitive_mesh(&prim(1, 0.0), 24).unwrap();
        let area = 12.0 * 0.25 * (std::f64::consts::TAU / 24.0).sin();
        assert!((m.signed_volume() - area).abs() < 1e-9);
    }

    #[test]
    fn full_turn_reproduces_mesh() {
        let a = primitive_mesh(&prim(1, 0.0), 24).unwrap();
        let b = primitive_mesh(&prim(1, 360.0), 24).unwrap();
        for (p, q) in a.vertices.iter().zip(&b.vertices) {
            assert!(p.distance(*q) < 1e-9);
        }
    }

    #[test]
    fn unknown_primitive_class() {
        assert_eq!(
            primitive_mesh(&prim(7, 0.0), 24).unwrap_err(),
            GeomError::UnknownPrimitiveClass(7)
        );
    }

    #[test]
    fn rotated_general_primitive_keeps_volume() {
        let mut p = prim(0, 33.0);
        p.angle_x = 12.0;
        p.angle_y = -71.0;
        p.scale_x = 2.0;
        p.scale_z = 0.5;
        let m = primitive_mesh(&p, 24).unwrap();
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
    }

    fn curved(c1: (f64, f64), c2: (f64, f64), thickness: f64) -> CurvedWallCmd {
        CurvedWallCmd {
            a_x: 0.0,
            a_y: 0.0,
            a_z: 0.0,
            b_x: 3.0,
            b_y: 0.0,
            b_z: 0.0,
            c1_x: c1.0,
            c1_y: c1.1,
            c2_x: c2.0,
            c2_y: c2.1,
            height: 2.0,
            thickness,
        }
    }

    #[test]
    fn single_segment_is_straight_wall() {
        let m = tessellate_curved_wall(&curved((1.0, 2.0), (2.0, 2.0), 0.0), 1).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.triangles.len(), 2);
        assert!((m.area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn endpoints_are_exact() {
        let c = curved((0.7, 1.9), (2.2, -1.3), 0.0);
        let s = curved_wall_samples(&c, 16);
        assert_eq!(s[0], (0.0, 0.0));
        assert_eq!(s[16], (3.0, 0.0));
    }

    #[test]
    fn thick_slab_is_closed() {
        let c = curved((1.0, 0.0), (2.0, 0.0), 0.2);
        let m = tessellate_curved_wall(&c, 8).unwrap();
        assert!((m.signed_volume() - 3.0 * 0.2 * 2.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_curve() {
        let mut c = curved((0.0, 0.0), (0.0, 0.0), 0.0);
        c.b_x = 0.0;
        assert_eq!(tessellate_curved_wall(&c, 4).unwrap_err(), GeomError::DegenerateCurve);
    }

    fn door_scene(open_degree: f64, hinge_side: u32, open_direction: u32) -> (OpeningCmd, WallLookup) {
        let wall = WallCmd { id: 0, a_x: 0.0, a_y: 0.0, a_z: 0.0, b_x: 4.0, b_y: 0.0, b_z: 0.0, height: 2.5 };
        let door = OpeningCmd {
            id: 0,
            wall0_id: 0,
            wall1_id: 0,
            position_x: 2.0,
            position_y: 0.0,
            position_z: 1.0,
            width: 0.9,
            height: 2.0,
            open_degree,
            hinge_side,
            open_direction,
        };
        let p = SceneProgram::new(vec![Command::Wall(wall)]);
        (door, WallLookup::from_program(&p))
    }

    #[test]
    fn closed_leaf_fills_opening() {
        let (door, walls) = door_scene(0.0, 0, 0);
        let m = door_leaf_quad(&door, &walls).unwrap();
        let expect = [(1.55, 0.0), (2.45, 0.0), (2.45, 2.0), (1.55, 2.0)];
        for (v, (x, z)) in m.vertices.iter().zip(expect) {
            assert!((v.x - x).abs() < 1e-12 && v.y.abs() < 1e-12 && (v.z - z).abs() < 1e-12);
        }
    }

    #[test]
    fn right_angle_leaf_is_perpendicular() {
        for (hinge, dir) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let (door, walls) = door_scene(90.0, hinge, dir);
            let m = door_leaf_quad(&door, &walls).unwrap();
            let [a, b, c] = m.triangle(0);
            let n = (b - a).cross(c - a).normalized();
            assert!(n.dot(Vec3::new(0.0, 1.0, 0.0)).abs() < 1e-9);
        }
    }
}
