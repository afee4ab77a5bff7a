use super::{validate_scene, Command, ParamType, SceneProgram, Violation};
use std::cmp::Ordering;
use std::collections::HashMap;
use thiserror::Error;

/// Angles are quantized to whole degrees.
pub const ANGLE_RESOLUTION_DEG: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CanonicalizeError {
    #[error("program has {} violation(s); first: {}", .0.len(), .0[0])]
    InvalidProgram(Vec<Violation>),
}

fn cmp_values(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

pub(crate) fn canonical_cmp(a: &Command, b: &Command) -> Ordering {
    let rank = a.kind().canonical_rank().cmp(&b.kind().canonical_rank());
    if rank.is_ne() {
        return rank;
    }
    match (a, b) {
        (Command::Prim(p), Command::Prim(q)) => {
            (p.bbox_id, p.prim_num).cmp(&(q.bbox_id, q.prim_num))
        }
        (Command::WallPrim(p), Command::WallPrim(q)) => p
            .parent_wall_id
            .cmp(&q.parent_wall_id)
            .then_with(|| cmp_values(&a.values(), &b.values())),
        _ => match (a.id(), b.id()) {
            (Some(x), Some(y)) => x.cmp(&y),
            _ => cmp_values(&a.values(), &b.values()),
        },
    }
}

/// Sorts commands into canonical order (by kind, then id) and re-densifies
/// ids per kind to `0..n`, rewriting every reference. Primitive numbers are
/// re-densified within their parent box.
pub fn canonicalize(program: &SceneProgram) -> Result<SceneProgram, CanonicalizeError> {
    let violations = validate_scene(program);
    if !violations.is_empty() {
        return Err(CanonicalizeError::InvalidProgram(violations));
    }
    let mut commands = program.commands.clone();
    commands.sort_by(canonical_cmp);

    let mut wall_map = HashMap::new();
    let mut box_map = HashMap::new();
    let (mut doors, mut windows) = (0u32, 0u32);
    let mut prim_counts: HashMap<u32, u32> = HashMap::new();

    for cmd in &mut commands {
        match cmd {
            Command::Wall(w) => {
                let next = wall_map.len() as u32;
                w.id = *wall_map.entry(w.id).or_insert(next);
            }
            Command::Bbox(b) => {
                let next = box_map.len() as u32;
                b.id = *box_map.entry(b.id).or_insert(next);
            }
            _ => {}
        }
    }
    for cmd in &mut commands {
        let counter = match cmd {
            Command::Door(_) => Some(&mut doors),
            Command::Window(_) => Some(&mut windows),
            _ => None,
        };
        match cmd {
            Command::Door(o) | Command::Window(o) => {
                let counter = counter.expect("openings have a counter");
                o.id = *counter;
                *counter += 1;
                o.wall0_id = wall_map[&o.wall0_id];
                o.wall1_id = wall_map[&o.wall1_id];
            }
            Command::Prim(q) => {
                q.bbox_id = box_map[&q.bbox_id];
                let n = prim_counts.entry(q.bbox_id).or_insert(0);
                q.prim_num = *n;
                *n += 1;
            }
            Command::WallPrim(w) => w.parent_wall_id = wall_map[&w.parent_wall_id],
            _ => {}
        }
    }
    Ok(SceneProgram { commands, resolution: program.resolution })
}

fn map_values(program: &SceneProgram, mut f: impl FnMut(ParamType, f64) -> f64) -> SceneProgram {
    let commands = program
        .commands
        .iter()
        .map(|cmd| {
            let kind = cmd.kind();
            let values: Vec<f64> = kind
                .params()
                .iter()
                .zip(cmd.values())
                .map(|(spec, v)| f(spec.ty, v))
                .collect();
            Command::from_values(kind, &values)
        })
        .collect();
    SceneProgram { commands, resolution: program.resolution }
}

/// Snaps lengths and positions to multiples of `res` and angles to whole
/// degrees; wrapping angles are reduced into `[0, 360)`. The returned
/// program carries `res` as its resolution.
pub fn quantize_scene(program: &SceneProgram, res: f64) -> SceneProgram {
    assert!(res > 0.0, "resolution must be positive");
    let mut out = map_values(program, |ty, v| match ty {
        ParamType::Int => v,
        ParamType::Position(_) | ParamType::Extent => (v / res).round() * res,
        ParamType::Angle { wrap } => {
            let q = (v / ANGLE_RESOLUTION_DEG).round() * ANGLE_RESOLUTION_DEG;
            if wrap {
                q.rem_euclid(360.0)
            } else {
                q
            }
        }
    });
    out.resolution = res;
    out
}

/// Per-axis minimum over every positional parameter; zero for a program
/// without commands.
pub fn scene_origin(program: &SceneProgram) -> [f64; 3] {
    let mut min = [f64::INFINITY; 3];
    for cmd in &program.commands {
        for (spec, v) in cmd.kind().params().iter().zip(cmd.values()) {
            if let ParamType::Position(axis) = spec.ty {
                let slot = &mut min[axis.index()];
                *slot = slot.min(v);
            }
        }
    }
    min.map(|m| if m.is_finite() { m } else { 0.0 })
}

/// Adds `offset` to every positional parameter.
pub fn translate_scene(program: &SceneProgram, offset: [f64; 3]) -> SceneProgram {
    map_values(program, |ty, v| match ty {
        ParamType::Position(axis) => v + offset[axis.index()],
        _ => v,
    })
}

/// Translates the program so its positional minimum sits at the origin.
pub fn normalize_origin(program: &SceneProgram) -> SceneProgram {
    let o = scene_origin(program);
    map_values(program, |ty, v| match ty {
        ParamType::Position(axis) => v - o[axis.index()],
        _ => v,
    })
}

/// Exact for multiples of 90 degrees so axis-aligned scenes stay on grid.
pub(crate) fn cos_sin_deg(theta: f64) -> (f64, f64) {
    let t = theta.rem_euclid(360.0);
    match t {
        0.0 => (1.0, 0.0),
        90.0 => (0.0, 1.0),
        180.0 => (-1.0, 0.0),
        270.0 => (0.0, -1.0),
        _ => {
            let r = t.to_radians();
            (r.cos(), r.sin())
        }
    }
}

/// Rotates the whole program by `theta` degrees about the vertical axis
/// through `pivot`. Positions and Bezier control points rotate, `angle_z`
/// fields advance modulo 360, extents are unchanged.
pub fn apply_z_rotation(program: &SceneProgram, theta: f64, pivot: [f64; 2]) -> SceneProgram {
    if theta.rem_euclid(360.0) == 0.0 {
        return program.clone();
    }
    let (c, s) = cos_sin_deg(theta);
    let rot = |x: &mut f64, y: &mut f64| {
        let (dx, dy) = (*x - pivot[0], *y - pivot[1]);
        *x = pivot[0] + c * dx - s * dy;
        *y = pivot[1] + s * dx + c * dy;
    };
    let spin = |a: &mut f64| *a = (*a + theta).rem_euclid(360.0);
    let mut out = program.clone();
    for cmd in &mut out.commands {
        match cmd {
            Command::Wall(w) => {
                rot(&mut w.a_x, &mut w.a_y);
                rot(&mut w.b_x, &mut w.b_y);
            }
            Command::Door(o) | Command::Window(o) => rot(&mut o.position_x, &mut o.position_y),
            Command::Bbox(b) => {
                rot(&mut b.position_x, &mut b.position_y);
                spin(&mut b.angle_z);
            }
            Command::Prim(q) => {
                rot(&mut q.center_x, &mut q.center_y);
                spin(&mut q.angle_z);
            }
            Command::CurvedWall(cw) => {
                rot(&mut cw.a_x, &mut cw.a_y);
                rot(&mut cw.b_x, &mut cw.b_y);
                rot(&mut cw.c1_x, &mut cw.c1_y);
                rot(&mut cw.c2_x, &mut cw.c2_y);
            }
            Command::WallPrim(w) => rot(&mut w.pos_x, &mut w.pos_y),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_scene_text, OpeningCmd, WallCmd};

    fn wall(id: u32, ax: f64, ay: f64, bx: f64, by: f64) -> Command {
        Command::Wall(WallCmd { id, a_x: ax, a_y: ay, a_z: 0.0, b_x: bx, b_y: by, b_z: 0.0, height: 2.5 })
    }

    #[test]
    fn canonical_order_and_reindex() {
        let door = Command::Door(OpeningCmd {
            id: 5,
            wall0_id: 2,
            wall1_id: 2,
            position_x: 2.0,
            position_y: 0.0,
            position_z: 1.0,
            width: 0.9,
            height: 2.0,
            open_degree: 0.0,
            hinge_side: 0,
            open_direction: 0,
        });
        let p = SceneProgram::new(vec![door, wall(2, 0.0, 0.0, 4.0, 0.0)]);
        let c = canonicalize(&p).unwrap();
        let Command::Wall(w) = c.commands[0] else { panic!() };
        let Command::Door(d) = c.commands[1] else { panic!() };
        assert_eq!((w.id, d.id, d.wall0_id, d.wall1_id), (0, 0, 0, 0));
        assert_eq!(canonicalize(&c).unwrap(), c);
    }

    #[test]
    fn canonicalize_rejects_invalid() {
        let p = SceneProgram::new(vec![wall(0, 0.0, 0.0, 0.0, 0.0)]);
        assert!(matches!(canonicalize(&p), Err(CanonicalizeError::InvalidProgram(_))));
    }

    #[test]
    fn quantize_rounds_to_grid() {
        let p = SceneProgram::new(vec![wall(0, 1.23, 0.0, 4.0, 0.0)]);
        let q = quantize_scene(&p, 0.05);
        assert_eq!(q.walls().next().unwrap().a_x, 25.0 * 0.05);
        assert_eq!(quantize_scene(&q, 0.05), q);
    }

    #[test]
    fn quantize_wraps_box_angles() {
        let p = parse_scene_text(
            "make_bbox, id=0, class=1, position_x=1, position_y=1, position_z=0.5, angle_z=-10.4, \
             scale_x=1, scale_y=1, scale_z=1",
        )
        .unwrap();
        let q = quantize_scene(&p, 0.05);
        assert_eq!(q.bboxes().next().unwrap().angle_z, 350.0);
    }

    #[test]
    fn rotation_quarter_turn() {
        let p = SceneProgram::new(vec![wall(0, 1.0, 0.0, 2.0, 0.0)]);
        let r = apply_z_rotation(&p, 90.0, [0.0, 0.0]);
        let w = r.walls().next().unwrap();
        assert_eq!((w.a_x, w.a_y, w.b_x, w.b_y), (0.0, 1.0, 0.0, 2.0));
        assert_eq!(apply_z_rotation(&p, 0.0, [0.3, 0.7]), p);
    }

    #[test]
    fn full_turn_is_identity_within_tolerance() {
        let p = SceneProgram::new(vec![wall(0, 1.3, 0.2, 2.1, 4.0)]);
        let r = apply_z_rotation(&apply_z_rotation(&p, 200.0, [0.5, 0.5]), 160.0, [0.5, 0.5]);
        let (a, b) = (p.walls().next().unwrap(), r.walls().next().unwrap());
        for (x, y) in [(a.a_x, b.a_x), (a.a_y, b.a_y), (a.b_x, b.b_x), (a.b_y, b.b_y)] {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn origin_normalization() {
        let p = SceneProgram::new(vec![wall(0, -1.0, 2.0, 3.0, 5.0)]);
        assert_eq!(scene_origin(&p), [-1.0, 2.0, 0.0]);
        let n = normalize_origin(&p);
        assert_eq!(scene_origin(&n), [0.0, 0.0, 0.0]);
        assert_eq!(scene_origin(&SceneProgram::default()), [0.0; 3]);
    }
}
