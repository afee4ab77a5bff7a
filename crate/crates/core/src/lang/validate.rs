use super::{Command, CommandKind, OpeningCmd, ParamType, SceneProgram, WallCmd};
use serde::Serialize;
use std::collections::{HashMap, HashSet};
use std::fmt;

/// One invariant violation. `index` is the command's position in the program.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    DuplicateId { kind: CommandKind, id: u32 },
    DanglingReference { index: usize, field: &'static str, id: u32 },
    NonFiniteValue { index: usize, field: &'static str },
    NonPositiveExtent { index: usize, field: &'static str },
    NegativeThickness { index: usize },
    DegenerateWall { index: usize },
    SlopedWallBase { index: usize },
    DegenerateCurve { index: usize },
    OpeningOutsideWall { index: usize, wall_id: u32, excess: f64 },
    InvalidFlag { index: usize, field: &'static str, value: u32 },
    AngleOutOfRange { index: usize, field: &'static str, value: f64 },
    DuplicatePrimitive { bbox_id: u32, prim_num: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { kind, id } => write!(f, "duplicate {kind} id {id}"),
            Violation::DanglingReference { index, field, id } => {
                write!(f, "command {index}: {field}={id} does not resolve")
            }
            Violation::NonFiniteValue { index, field } => {
                write!(f, "command {index}: {field} is not finite")
            }
            Violation::NonPositiveExtent { index, field } => {
                write!(f, "command {index}: {field} must be positive")
            }
            Violation::NegativeThickness { index } => {
                write!(f, "command {index}: thickness must be non-negative")
            }
            Violation::DegenerateWall { index } => {
                write!(f, "command {index}: wall endpoints coincide in plan")
            }
            Violation::SlopedWallBase { index } => {
                write!(f, "command {index}: a_z and b_z differ")
            }
            Violation::DegenerateCurve { index } => {
                write!(f, "command {index}: all Bezier control points coincide")
            }
            Violation::OpeningOutsideWall { index, wall_id, excess } => write!(
                f,
                "command {index}: opening exceeds wall {wall_id} face by {excess:.4} m"
            ),
            Violation::InvalidFlag { index, field, value } => {
                write!(f, "command {index}: {field}={value} must be 0 or 1")
            }
            Violation::AngleOutOfRange { index, field, value } => {
                write!(f, "command {index}: {field}={value} out of range")
            }
            Violation::DuplicatePrimitive { bbox_id, prim_num } => {
                write!(f, "duplicate primitive {prim_num} in bbox {bbox_id}")
            }
        }
    }
}

/// How far (meters) an opening's rectangle leaves the face of `wall`: the
/// largest of its off-plane distance and its overhang past the wall's
/// horizontal and vertical extents. Zero when fully inside.
pub fn opening_face_excess(opening: &OpeningCmd, wall: &WallCmd) -> f64 {
    let (dx, dy) = (wall.b_x - wall.a_x, wall.b_y - wall.a_y);
    let len = dx.hypot(dy);
    if len < 1e-9 {
        return f64::INFINITY;
    }
    let (ux, uy) = (dx / len, dy / len);
    let (px, py) = (opening.position_x - wall.a_x, opening.position_y - wall.a_y);
    let along = px * ux + py * uy;
    let off_plane = (px * uy - py * ux).abs();
    let half_w = opening.width / 2.0;
    let half_h = opening.height / 2.0;
    let base = wall.a_z.min(wall.b_z);
    let horizontal = (half_w - along).max(along + half_w - len);
    let vertical = (base - (opening.position_z - half_h))
        .max(opening.position_z + half_h - (base + wall.height));
    off_plane.max(horizontal).max(vertical).max(0.0)
}

/// Returns every invariant violation in `program`; empty iff valid.
///
/// Openings may overhang their wall face by up to `program.resolution`,
/// which absorbs quantization of positions on rotated walls.
pub fn validate_scene(program: &SceneProgram) -> Vec<Violation> {
    let mut out = Vec::new();
    let tol = program.resolution;

    let mut seen: HashMap<CommandKind, HashSet<u32>> = HashMap::new();
    let mut walls: HashMap<u32, &WallCmd> = HashMap::new();
    let mut boxes: HashSet<u32> = HashSet::new();
    let mut prims: HashSet<(u32, u32)> = HashSet::new();
    for cmd in &program.commands {
        if let Some(id) = cmd.id() {
            if !seen.entry(cmd.kind()).or_default().insert(id) {
                out.push(Violation::DuplicateId { kind: cmd.kind(), id });
            }
        }
        match cmd {
            Command::Wall(w) => {
                walls.entry(w.id).or_insert(w);
            }
            Command::Bbox(b) => {
                boxes.insert(b.id);
            }
            Command::Prim(q) => {
                if !prims.insert((q.bbox_id, q.prim_num)) {
                    out.push(Violation::DuplicatePrimitive {
                        bbox_id: q.bbox_id,
                        prim_num: q.prim_num,
                    });
                }
            }
            _ => {}
        }
    }

    for (index, cmd) in program.commands.iter().enumerate() {
        let kind = cmd.kind();
        let values = cmd.values();
        let mut finite = true;
        for (spec, v) in kind.params().iter().zip(&values) {
            if !v.is_finite() {
                out.push(Violation::NonFiniteValue { index, field: spec.name });
                finite = false;
            } else if spec.ty == ParamType::Extent
                && *v <= 0.0
                && !(kind == CommandKind::CurvedWall && spec.name == "thickness")
            {
                out.push(Violation::NonPositiveExtent { index, field: spec.name });
            }
        }
        if !finite {
            continue;
        }
        match cmd {
            Command::Wall(w) => {
                if (w.b_x - w.a_x).hypot(w.b_y - w.a_y) < 1e-9 {
                    out.push(Violation::DegenerateWall { index });
                }
                if w.a_z != w.b_z {
                    out.push(Violation::SlopedWallBase { index });
                }
            }
            Command::Door(o) | Command::Window(o) => {
                let mut resolved = true;
                for (field, id) in [("wall0_id", o.wall0_id), ("wall1_id", o.wall1_id)] {
                    if !walls.contains_key(&id) {
                        out.push(Violation::DanglingReference { index, field, id });
                        resolved = false;
                    }
                }
                if resolved && o.width > 0.0 && o.height > 0.0 {
                    let excess = opening_face_excess(o, walls[&o.wall0_id]);
                    if excess > tol {
                        out.push(Violation::OpeningOutsideWall {
                            index,
                            wall_id: o.wall0_id,
                            excess,
                        });
                    }
                }
                if kind == CommandKind::Door {
                    if !(0.0..=180.0).contains(&o.open_degree) {
                        out.push(Violation::AngleOutOfRange {
                            index,
                            field: "open_degree",
                            value: o.open_degree,
                        });
                    }
                    for (field, value) in
                        [("hinge_side", o.hinge_side), ("open_direction", o.open_direction)]
                    {
                        if value > 1 {
                            out.push(Violation::InvalidFlag { index, field, value });
                        }
                    }
                }
            }
            Command::Prim(q) => {
                if !boxes.contains(&q.bbox_id) {
                    out.push(Violation::DanglingReference {
                        index,
                        field: "bbox_id",
                        id: q.bbox_id,
                    });
                }
            }
            Command::WallPrim(w) => {
                if !walls.contains_key(&w.parent_wall_id) {
                    out.push(Violation::DanglingReference {
                        index,
                        field: "parent_wall_id",
                        id: w.parent_wall_id,
                    });
                }
            }
            Command::CurvedWall(c) => {
                if c.thickness < 0.0 {
                    out.push(Violation::NegativeThickness { index });
                }
                let pts = [(c.a_x, c.a_y), (c.c1_x, c.c1_y), (c.c2_x, c.c2_y), (c.b_x, c.b_y)];
                if pts.iter().all(|p| (p.0 - pts[0].0).hypot(p.1 - pts[0].1) < 1e-9) {
                    out.push(Violation::DegenerateCurve { index });
                }
                if c.a_z != c.b_z {
                    out.push(Violation::SlopedWallBase { index });
                }
            }
            Command::Bbox(_) => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_scene_text;

    fn wall(id: u32, height: f64) -> Command {
        Command::Wall(WallCmd {
            id,
            a_x: 0.0,
            a_y: 0.0,
            a_z: 0.0,
            b_x: 4.0,
            b_y: 0.0,
            b_z: 0.0,
            height,
        })
    }

    fn door(wall0: u32, x: f64, width: f64) -> Command {
        Command::Door(OpeningCmd {
            id: 0,
            wall0_id: wall0,
            wall1_id: wall0,
            position_x: x,
            position_y: 0.0,
            position_z: 1.0,
            width,
            height: 2.0,
            open_degree: 0.0,
            hinge_side: 0,
            open_direction: 0,
        })
    }

    #[test]
    fn valid_room_has_no_violations() {
        let p = SceneProgram::new(vec![wall(0, 2.5), door(0, 2.0, 0.9)]);
        assert_eq!(validate_scene(&p), vec![]);
    }

    #[test]
    fn dangling_door_reference() {
        let p = SceneProgram::new(vec![wall(0, 2.5), door(99, 2.0, 0.9)]);
        let v = validate_scene(&p);
        assert_eq!(v.len(), 2, "{v:?}");
        assert!(v.iter().all(|x| matches!(x, Violation::DanglingReference { id: 99, .. })));
    }

    #[test]
    fn zero_height_wall() {
        let p = SceneProgram::new(vec![wall(0, 0.0)]);
        assert_eq!(
            validate_scene(&p),
            vec![Violation::NonPositiveExtent { index: 0, field: "height" }]
        );
    }

    #[test]
    fn opening_wider_than_wall() {
        let p = SceneProgram::new(vec![wall(0, 2.5), door(0, 2.0, 5.0)]);
        assert!(matches!(
            validate_scene(&p).as_slice(),
            [Violation::OpeningOutsideWall { index: 1, wall_id: 0, .. }]
        ));
    }

    #[test]
    fn duplicate_ids_and_sloped_base() {
        let mut w = wall(0, 2.5);
        if let Command::Wall(ref mut w) = w {
            w.b_z = 0.3;
        }
        let p = SceneProgram::new(vec![wall(0, 2.5), w]);
        let v = validate_scene(&p);
        assert!(v.contains(&Violation::DuplicateId { kind: CommandKind::Wall, id: 0 }));
        assert!(v.contains(&Violation::SlopedWallBase { index: 1 }));
    }

    #[test]
    fn door_state_ranges() {
        let p = parse_scene_text(
            "make_wall, id=0, a_x=0, a_y=0, a_z=0, b_x=4, b_y=0, b_z=0, height=2.5\n\
             make_door, id=0, wall0_id=0, wall1_id=0, position_x=2, position_y=0, position_z=1, \
             width=0.9, height=2, open_degree=200, hinge_side=2, open_direction=1",
        )
        .unwrap();
        let v = validate_scene(&p);
        assert_eq!(v.len(), 2, "{v:?}");
    }

    #[test]
    fn face_excess_measures_overhang() {
        let Command::Wall(w) = wall(0, 2.5) else { unreachable!() };
        let Command::Door(d) = door(0, 0.3, 0.9) else { unreachable!() };
        assert!((opening_face_excess(&d, &w) - 0.15).abs() < 1e-12);
    }
}
