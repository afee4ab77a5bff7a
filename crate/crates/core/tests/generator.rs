use scenescript::gen::{generate_scene, sample_point_cloud_with_stats, GenConfig};
use scenescript::geom::{interpret_scene, rotation_xyz, Vec3};
use scenescript::lang::{
    canonicalize, normalize_origin, opening_face_excess, quantize_scene, validate_scene, Command, CommandKind,
};
use scenescript::tokens::{tokenize, MAX_SEQ_LEN};
use std::collections::HashMap;

fn rich_config() -> GenConfig {
    GenConfig { curved_wall_probability: 0.3, prim_probability: 0.8, ..GenConfig::default() }
}

#[test]
fn sweep_containment_and_validity() {
    let config = rich_config();
    let mut seen = HashMap::new();
    for seed in 0..1000 {
        let p = generate_scene(&config, seed).unwrap();
        assert!(validate_scene(&p).is_empty(), "seed {seed}");
        assert_eq!(canonicalize(&p).unwrap(), p, "generator output is canonical");
        assert_eq!(quantize_scene(&normalize_origin(&p), p.resolution), p, "on grid at origin");
        assert!(tokenize(&p).unwrap().len() <= MAX_SEQ_LEN);
        let walls: HashMap<u32, _> = p.walls().map(|w| (w.id, *w)).collect();
        let boxes: HashMap<u32, _> = p.bboxes().map(|b| (b.id, *b)).collect();
        for cmd in &p.commands {
            *seen.entry(cmd.kind()).or_insert(0) += 1;
            match cmd {
                Command::Door(o) | Command::Window(o) => {
                    assert!(opening_face_excess(o, &walls[&o.wall0_id]) <= 1e-9, "seed {seed}");
                }
                Command::Prim(q) => {
                    let b = boxes[&q.bbox_id];
                    // Prim corners, expressed in the box frame, lie within the box.
                    let r = rotation_xyz(q.angle_x, q.angle_y, q.angle_z);
                    let (s, c) = b.angle_z.to_radians().sin_cos();
                    for sx in [-0.5, 0.5] {
                        for sy in [-0.5, 0.5] {
                            for sz in [-0.5, 0.5] {
                                let l = [sx * q.scale_x, sy * q.scale_y, sz * q.scale_z];
                                let w = [0, 1, 2].map(|i| r[i][0] * l[0] + r[i][1] * l[1] + r[i][2] * l[2]);
                                let d = [q.center_x + w[0] - b.position_x, q.center_y + w[1] - b.position_y, q.center_z + w[2] - b.position_z];
                                let local = [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]];
                                let half = [b.scale_x / 2.0, b.scale_y / 2.0, b.scale_z / 2.0];
                                for i in 0..3 {
                                    assert!(local[i].abs() <= half[i] + 1e-9, "seed {seed}: prim outside box");
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
    }
    for kind in [CommandKind::Wall, CommandKind::Door, CommandKind::Window, CommandKind::Bbox, CommandKind::Prim, CommandKind::CurvedWall] {
        assert!(seen.get(&kind).copied().unwrap_or(0) > 0, "{kind} never generated");
    }
}

#[test]
fn noiseless_cloud_lies_on_geometry() {
    let config = GenConfig { noise_sigma: 0.0, outlier_fraction: 0.0, dropout_fraction: 0.0, point_density: 20.0, ..rich_config() };
    for seed in 0..5 {
        let p = generate_scene(&config, seed).unwrap();
        let g = interpret_scene(&p).unwrap();
        let (cloud, _) = sample_point_cloud_with_stats(&g, &config, seed).unwrap();
        let tris: Vec<[Vec3; 3]> = g.meshes.iter().flat_map(|m| (0..m.mesh.triangles.len()).map(|t| m.mesh.triangle(t))).collect();
        for q in cloud.points.iter().step_by(7) {
            let d = tris.iter().map(|t| point_triangle_distance(*q, *t)).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-9, "point {q:?} is {d} from the surface");
        }
    }
}

/// Distance from a point to a triangle (closest-point construction).
fn point_triangle_distance(p: Vec3, [a, b, c]: [Vec3; 3]) -> f64 {
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(ap), ac.dot(ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return p.distance(a);
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(bp), ac.dot(bp));
    if d3 >= 0.0 && d4 <= d3 {
        return p.distance(b);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return p.distance(a + ab * (d1 / (d1 - d3)));
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(cp), ac.dot(cp));
    if d6 >= 0.0 && d5 <= d6 {
        return p.distance(c);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return p.distance(a + ac * (d2 / (d2 - d6)));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return p.distance(b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6))));
    }
    let denom = 1.0 / (va + vb + vc);
    p.distance(a + ab * (vb * denom) + ac * (vc * denom))
}

#[test]
fn doubling_density_doubles_points() {
    let config = GenConfig { noise_sigma: 0.0, outlier_fraction: 0.0, dropout_fraction: 0.0, max_points: usize::MAX, ..GenConfig::default() };
    let dense = GenConfig { point_density: 2.0 * config.point_density, ..config.clone() };
    let (mut n1, mut n2) = (0usize, 0usize);
    for seed in 0..20 {
        let g = interpret_scene(&generate_scene(&config, seed).unwrap()).unwrap();
        n1 += sample_point_cloud_with_stats(&g, &config, seed).unwrap().1.surface;
        n2 += sample_point_cloud_with_stats(&g, &dense, seed + 100).unwrap().1.surface;
    }
    let ratio = n2 as f64 / n1 as f64;
    assert!((ratio - 2.0).abs() <= 0.04, "ratio {ratio}");
}
