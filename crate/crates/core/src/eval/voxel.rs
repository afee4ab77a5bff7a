use super::EvalError;
use crate::geom::{Mesh, Vec3};
use std::collections::HashSet;

type Cell = (i64, i64, i64);

/// Separating-axis test between a triangle and an axis-aligned box given by
/// its center and half size.
pub fn triangle_box_overlap(tri: [Vec3; 3], center: Vec3, half: Vec3) -> bool {
    let v = tri.map(|p| p - center);
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    let h = half.to_array();
    let axis_separates = |axis: Vec3| {
        let p = v.map(|q| q.dot(axis));
        let r = h[0] * axis.x.abs() + h[1] * axis.y.abs() + h[2] * axis.z.abs();
        let (lo, hi) = (p[0].min(p[1]).min(p[2]), p[0].max(p[1]).max(p[2]));
        lo > r || hi < -r
    };
    let units = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::UP];
    for u in units {
        if axis_separates(u) {
            return false;
        }
    }
    for edge in e {
        for u in units {
            let axis = u.cross(edge);
            if axis.dot(axis) > 0.0 && axis_separates(axis) {
                return false;
            }
        }
    }
    let n = e[0].cross(e[1]);
    !(n.dot(n) > 0.0 && axis_separates(n))
}

/// Grid cells touched by any triangle, on a lattice whose cell centers lie
/// at `anchor + res·(i + 1/2)`.
fn surface_cells(meshes: &[&Mesh], anchor: Vec3, res: f64) -> HashSet<Cell> {
    let half = Vec3::new(res / 2.0, res / 2.0, res / 2.0);
    let index = |x: f64, a: f64| ((x - a) / res).floor() as i64;
    let mut cells = HashSet::new();
    for mesh in meshes {
        for t in 0..mesh.triangles.len() {
            let tri = mesh.triangle(t);
            let lo = tri[0].min(tri[1]).min(tri[2]);
            let hi = tri[0].max(tri[1]).max(tri[2]);
            let (i0, i1) = (index(lo.x, anchor.x) - 1, index(hi.x, anchor.x) + 1);
            let (j0, j1) = (index(lo.y, anchor.y) - 1, index(hi.y, anchor.y) + 1);
            let (k0, k1) = (index(lo.z, anchor.z) - 1, index(hi.z, anchor.z) + 1);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    for k in k0..=k1 {
                        let c = Vec3::new(
                            anchor.x + res * (i as f64 + 0.5),
                            anchor.y + res * (j as f64 + 0.5),
                            anchor.z + res * (k as f64 + 0.5),
                        );
                        if triangle_box_overlap(tri, c, half) {
                            cells.insert((i, j, k));
                        }
                    }
                }
            }
        }
    }
    cells
}

fn joint_min(meshes: &[&Mesh]) -> Option<Vec3> {
    meshes.iter().filter_map(|m| m.bounds()).map(|(lo, _)| lo).reduce(Vec3::min)
}

/// Surface-occupancy IoU of two mesh sets at grid spacing `res`. The grid
/// is anchored half a cell below the joint minimum, so surfaces lying on
/// multiples of `res` from that minimum pass through cell centers.
pub fn voxel_geometry_iou(m1: &[&Mesh], m2: &[&Mesh], res: f64) -> Result<f64, EvalError> {
    assert!(res > 0.0, "resolution must be positive");
    let all: Vec<&Mesh> = m1.iter().chain(m2).copied().collect();
    let Some(min) = joint_min(&all) else {
        return Err(EvalError::EmptyGeometry);
    };
    let anchor = min - Vec3::new(res / 2.0, res / 2.0, res / 2.0);
    let a = surface_cells(m1, anchor, res);
    let b = surface_cells(m2, anchor, res);
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptyGeometry);
    }
    let inter = a.intersection(&b).count();
    Ok(inter as f64 / (a.len() + b.len() - inter) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(z: f64) -> Mesh {
        let mut m = Mesh::new();
        let v = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)].map(|(x, y)| m.push_vertex(Vec3::new(x, y, z)));
        m.push_quad(v[0], v[1], v[2], v[3]);
        m
    }

    #[test]
    fn sat_basic() {
        let tri = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let h = Vec3::new(0.1, 0.1, 0.1);
        assert!(triangle_box_overlap(tri, Vec3::new(0.2, 0.2, 0.0), h));
        assert!(!triangle_box_overlap(tri, Vec3::new(0.2, 0.2, 0.5), h));
        // Beyond the hypotenuse.
        assert!(!triangle_box_overlap(tri, Vec3::new(0.8, 0.8, 0.0), h));
    }

    #[test]
    fn identical_and_disjoint() {
        let (a, b) = (square(0.0), square(3.0));
        assert_eq!(voxel_geometry_iou(&[&a], &[&a], 0.05).unwrap(), 1.0);
        assert_eq!(voxel_geometry_iou(&[&a], &[&b], 0.05).unwrap(), 0.0);
        assert!(matches!(voxel_geometry_iou(&[&a], &[], 0.05), Err(EvalError::EmptyGeometry)));
    }

    #[test]
    fn plane_on_centers() {
        let a = square(0.0);
        let anchor = Vec3::new(-0.025, -0.025, -0.025);
        let cells = surface_cells(&[&a], anchor, 0.05);
        assert!(cells.iter().all(|c| c.2 == 0));
        assert_eq!(cells.len(), 21 * 21);
    }
}
