use super::SceneGeometry;
use std::fmt::Write;

/// Wavefront OBJ text: a header comment, then one `o` group per mesh with
/// its `v` and `f` records. Face indices are 1-based and global.
pub fn export_obj(geometry: &SceneGeometry) -> String {
    let mut out = String::from("# scenescript geometry\n");
    let mut base = 1usize;
    for named in &geometry.meshes {
        let _ = writeln!(out, "o {}", named.name);
        for v in &named.mesh.vertices {
            let _ = writeln!(out, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z);
        }
        for t in &named.mesh.triangles {
            let [a, b, c] = t.map(|i| i as usize + base);
            let _ = writeln!(out, "f {a} {b} {c}");
        }
        base += named.mesh.vertices.len();
    }
    out
}
