//! The scene command language: typed commands, the program container, the
//! `key=value` text format, validation and the value-level transforms
//! (canonical ordering, quantization, origin normalization, z rotation).
//!
//! Every command kind has a fixed, ordered parameter list (see
//! [`CommandKind::params`]). That list drives text serialization, the token
//! layout and quantization, so the three always agree.

mod text;
mod transform;
mod validate;

pub use text::{parse_scene_text, serialize_scene_text, ParseError};
pub use transform::{
    apply_z_rotation, canonicalize, normalize_origin, quantize_scene, scene_origin,
    translate_scene, CanonicalizeError, ANGLE_RESOLUTION_DEG,
};
pub use validate::{opening_face_excess, validate_scene, Violation};
pub(crate) use transform::{canonical_cmp, cos_sin_deg};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Default quantization grid in meters.
pub const DEFAULT_RESOLUTION: f64 = 0.05;

/// The seven command kinds, in token-id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CommandKind {
    Wall,
    Door,
    Window,
    Bbox,
    Prim,
    CurvedWall,
    WallPrim,
}

/// Horizontal/vertical axis of a positional parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// How a parameter is stored, quantized and tokenized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamType {
    /// Integer id, class or flag; tokenized as `int(x)`.
    Int,
    /// World coordinate along an axis; shifted by origin normalization.
    Position(Axis),
    /// Length that is not a coordinate (height, width, scale, thickness).
    Extent,
    /// Angle in degrees. `wrap` angles live in `[0, 360)`.
    Angle { wrap: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub ty: ParamType,
    /// Optional keys may be omitted in text and default to zero.
    pub optional: bool,
}

const fn p(name: &'static str, ty: ParamType) -> ParamSpec {
    ParamSpec { name, ty, optional: false }
}

const fn opt(name: &'static str, ty: ParamType) -> ParamSpec {
    ParamSpec { name, ty, optional: true }
}

use ParamType::{Angle, Extent, Int, Position};

const WALL_PARAMS: &[ParamSpec] = &[
    p("id", Int),
    p("a_x", Position(Axis::X)),
    p("a_y", Position(Axis::Y)),
    p("a_z", Position(Axis::Z)),
    p("b_x", Position(Axis::X)),
    p("b_y", Position(Axis::Y)),
    p("b_z", Position(Axis::Z)),
    p("height", Extent),
];

const WINDOW_PARAMS: &[ParamSpec] = &[
    p("id", Int),
    p("wall0_id", Int),
    p("wall1_id", Int),
    p("position_x", Position(Axis::X)),
    p("position_y", Position(Axis::Y)),
    p("position_z", Position(Axis::Z)),
    p("width", Extent),
    p("height", Extent),
];

const DOOR_PARAMS: &[ParamSpec] = &[
    p("id", Int),
    p("wall0_id", Int),
    p("wall1_id", Int),
    p("position_x", Position(Axis::X)),
    p("position_y", Position(Axis::Y)),
    p("position_z", Position(Axis::Z)),
    p("width", Extent),
    p("height", Extent),
    opt("open_degree", Angle { wrap: false }),
    opt("hinge_side", Int),
    opt("open_direction", Int),
];

const BBOX_PARAMS: &[ParamSpec] = &[
    p("id", Int),
    p("class", Int),
    p("position_x", Position(Axis::X)),
    p("position_y", Position(Axis::Y)),
    p("position_z", Position(Axis::Z)),
    p("angle_z", Angle { wrap: true }),
    p("scale_x", Extent),
    p("scale_y", Extent),
    p("scale_z", Extent),
];

const PRIM_PARAMS: &[ParamSpec] = &[
    p("bbox_id", Int),
    p("prim_num", Int),
    p("class", Int),
    p("center_x", Position(Axis::X)),
    p("center_y", Position(Axis::Y)),
    p("center_z", Position(Axis::Z)),
    p("angle_x", Angle { wrap: true }),
    p("angle_y", Angle { wrap: true }),
    p("angle_z", Angle { wrap: true }),
    p("scale_x", Extent),
    p("scale_y", Extent),
    p("scale_z", Extent),
];

const CURVED_WALL_PARAMS: &[ParamSpec] = &[
    p("a_x", Position(Axis::X)),
    p("a_y", Position(Axis::Y)),
    p("a_z", Position(Axis::Z)),
    p("b_x", Position(Axis::X)),
    p("b_y", Position(Axis::Y)),
    p("b_z", Position(Axis::Z)),
    p("c1_x", Position(Axis::X)),
    p("c1_y", Position(Axis::Y)),
    p("c2_x", Position(Axis::X)),
    p("c2_y", Position(Axis::Y)),
    p("height", Extent),
    p("thickness", Extent),
];

const WALL_PRIM_PARAMS: &[ParamSpec] = &[
    p("parent_wall_id", Int),
    p("pos_x", Position(Axis::X)),
    p("pos_y", Position(Axis::Y)),
    p("pos_z", Position(Axis::Z)),
    p("size_x", Extent),
    p("size_y", Extent),
    p("size_z", Extent),
];

impl CommandKind {
    pub const ALL: [CommandKind; 7] = [
        CommandKind::Wall,
        CommandKind::Door,
        CommandKind::Window,
        CommandKind::Bbox,
        CommandKind::Prim,
        CommandKind::CurvedWall,
        CommandKind::WallPrim,
    ];

    /// Command name as written in scene text.
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Wall => "make_wall",
            CommandKind::Door => "make_door",
            CommandKind::Window => "make_window",
            CommandKind::Bbox => "make_bbox",
            CommandKind::Prim => "make_prim",
            CommandKind::CurvedWall => "make_curved_wall",
            CommandKind::WallPrim => "make_wall_prim",
        }
    }

    pub fn from_name(name: &str) -> Option<CommandKind> {
        CommandKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Ordered parameter list.
    pub fn params(self) -> &'static [ParamSpec] {
        match self {
            CommandKind::Wall => WALL_PARAMS,
            CommandKind::Door => DOOR_PARAMS,
            CommandKind::Window => WINDOW_PARAMS,
            CommandKind::Bbox => BBOX_PARAMS,
            CommandKind::Prim => PRIM_PARAMS,
            CommandKind::CurvedWall => CURVED_WALL_PARAMS,
            CommandKind::WallPrim => WALL_PRIM_PARAMS,
        }
    }

    pub fn arity(self) -> usize {
        self.params().len()
    }

    /// Position in the canonical ordering.
    pub fn canonical_rank(self) -> usize {
        match self {
            CommandKind::Wall => 0,
            CommandKind::CurvedWall => 1,
            CommandKind::WallPrim => 2,
            CommandKind::Door => 3,
            CommandKind::Window => 4,
            CommandKind::Bbox => 5,
            CommandKind::Prim => 6,
        }
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A planar, gravity-aligned wall between two base corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallCmd {
    pub id: u32,
    pub a_x: f64,
    pub a_y: f64,
    pub a_z: f64,
    pub b_x: f64,
    pub b_y: f64,
    pub b_z: f64,
    pub height: f64,
}

/// Door or window cutout. The state fields are only meaningful for doors;
/// a door without them is closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpeningCmd {
    pub id: u32,
    pub wall0_id: u32,
    pub wall1_id: u32,
    pub position_x: f64,
    pub position_y: f64,
    pub position_z: f64,
    pub width: f64,
    pub height: f64,
    pub open_degree: f64,
    pub hinge_side: u32,
    pub open_direction: u32,
}

/// Gravity-aligned oriented bounding box; `angle_z` in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BboxCmd {
    pub id: u32,
    pub class: u32,
    pub position_x: f64,
    pub position_y: f64,
    pub position_z: f64,
    pub angle_z: f64,
    pub scale_x: f64,
    pub scale_y: f64,
    pub scale_z: f64,
}

/// Volumetric primitive attached to a bounding box. `class` selects the
/// shape: 0 cuboid, 1 extruded cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimCmd {
    pub bbox_id: u32,
    pub prim_num: u32,
    pub class: u32,
    pub center_x: f64,
    pub center_y: f64,
    pub center_z: f64,
    pub angle_x: f64,
    pub angle_y: f64,
    pub angle_z: f64,
    pub scale_x: f64,
    pub scale_y: f64,
    pub scale_z: f64,
}

/// Wall whose footprint is the cubic Bezier `[a, c1, c2, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvedWallCmd {
    pub a_x: f64,
    pub a_y: f64,
    pub a_z: f64,
    pub b_x: f64,
    pub b_y: f64,
    pub b_z: f64,
    pub c1_x: f64,
    pub c1_y: f64,
    pub c2_x: f64,
    pub c2_y: f64,
    pub height: f64,
    pub thickness: f64,
}

/// Cuboid composed with a parent wall. `pos` is the world-space center;
/// `size_x` runs along the parent wall, `size_y` across it, `size_z` up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallPrimCmd {
    pub parent_wall_id: u32,
    pub pos_x: f64,
    pub pos_y: f64,
    pub pos_z: f64,
    pub size_x: f64,
    pub size_y: f64,
    pub size_z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Command {
    Wall(WallCmd),
    Door(OpeningCmd),
    Window(OpeningCmd),
    Bbox(BboxCmd),
    Prim(PrimCmd),
    CurvedWall(CurvedWallCmd),
    WallPrim(WallPrimCmd),
}

impl Command {
    pub fn kind(&self) -> CommandKind {
        match self {
            Command::Wall(_) => CommandKind::Wall,
            Command::Door(_) => CommandKind::Door,
            Command::Window(_) => CommandKind::Window,
            Command::Bbox(_) => CommandKind::Bbox,
            Command::Prim(_) => CommandKind::Prim,
            Command::CurvedWall(_) => CommandKind::CurvedWall,
            Command::WallPrim(_) => CommandKind::WallPrim,
        }
    }

    /// Parameter values in [`CommandKind::params`] order. Integers are
    /// widened to `f64`, which is exact for `u32`.
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Command::Wall(w) => vec![
                w.id as f64, w.a_x, w.a_y, w.a_z, w.b_x, w.b_y, w.b_z, w.height,
            ],
            Command::Door(o) => vec![
                o.id as f64,
                o.wall0_id as f64,
                o.wall1_id as f64,
                o.position_x,
                o.position_y,
                o.position_z,
                o.width,
                o.height,
                o.open_degree,
                o.hinge_side as f64,
                o.open_direction as f64,
            ],
            Command::Window(o) => vec![
                o.id as f64,
                o.wall0_id as f64,
                o.wall1_id as f64,
                o.position_x,
                o.position_y,
                o.position_z,
                o.width,
                o.height,
            ],
            Command::Bbox(b) => vec![
                b.id as f64,
                b.class as f64,
                b.position_x,
                b.position_y,
                b.position_z,
                b.angle_z,
                b.scale_x,
                b.scale_y,
                b.scale_z,
            ],
            Command::Prim(q) => vec![
                q.bbox_id as f64,
                q.prim_num as f64,
                q.class as f64,
                q.center_x,
                q.center_y,
                q.center_z,
                q.angle_x,
                q.angle_y,
                q.angle_z,
                q.scale_x,
                q.scale_y,
                q.scale_z,
            ],
            Command::CurvedWall(c) => vec![
                c.a_x, c.a_y, c.a_z, c.b_x, c.b_y, c.b_z, c.c1_x, c.c1_y, c.c2_x, c.c2_y,
                c.height, c.thickness,
            ],
            Command::WallPrim(w) => vec![
                w.parent_wall_id as f64,
                w.pos_x,
                w.pos_y,
                w.pos_z,
                w.size_x,
                w.size_y,
                w.size_z,
            ],
        }
    }

    /// Inverse of [`Command::values`]. Panics if `values.len()` differs from
    /// the kind's arity; integer slots are truncated toward zero.
    pub fn from_values(kind: CommandKind, v: &[f64]) -> Command {
        assert_eq!(v.len(), kind.arity(), "wrong arity for {kind}");
        let int = |x: f64| x as u32;
        match kind {
            CommandKind::Wall => Command::Wall(WallCmd {
                id: int(v[0]),
                a_x: v[1],
                a_y: v[2],
                a_z: v[3],
                b_x: v[4],
                b_y: v[5],
                b_z: v[6],
                height: v[7],
            }),
            CommandKind::Door | CommandKind::Window => {
                let mut o = OpeningCmd {
                    id: int(v[0]),
                    wall0_id: int(v[1]),
                    wall1_id: int(v[2]),
                    position_x: v[3],
                    position_y: v[4],
                    position_z: v[5],
                    width: v[6],
                    height: v[7],
                    open_degree: 0.0,
                    hinge_side: 0,
                    open_direction: 0,
                };
                if kind == CommandKind::Door {
                    o.open_degree = v[8];
                    o.hinge_side = int(v[9]);
                    o.open_direction = int(v[10]);
                    Command::Door(o)
                } else {
                    Command::Window(o)
                }
            }
            CommandKind::Bbox => Command::Bbox(BboxCmd {
                id: int(v[0]),
                class: int(v[1]),
                position_x: v[2],
                position_y: v[3],
                position_z: v[4],
                angle_z: v[5],
                scale_x: v[6],
                scale_y: v[7],
                scale_z: v[8],
            }),
            CommandKind::Prim => Command::Prim(PrimCmd {
                bbox_id: int(v[0]),
                prim_num: int(v[1]),
                class: int(v[2]),
                center_x: v[3],
                center_y: v[4],
                center_z: v[5],
                angle_x: v[6],
                angle_y: v[7],
                angle_z: v[8],
                scale_x: v[9],
                scale_y: v[10],
                scale_z: v[11],
            }),
            CommandKind::CurvedWall => Command::CurvedWall(CurvedWallCmd {
                a_x: v[0],
                a_y: v[1],
                a_z: v[2],
                b_x: v[3],
                b_y: v[4],
                b_z: v[5],
                c1_x: v[6],
                c1_y: v[7],
                c2_x: v[8],
                c2_y: v[9],
                height: v[10],
                thickness: v[11],
            }),
            CommandKind::WallPrim => Command::WallPrim(WallPrimCmd {
                parent_wall_id: int(v[0]),
                pos_x: v[1],
                pos_y: v[2],
                pos_z: v[3],
                size_x: v[4],
                size_y: v[5],
                size_z: v[6],
            }),
        }
    }

    /// Own id for kinds that carry one.
    pub fn id(&self) -> Option<u32> {
        match self {
            Command::Wall(w) => Some(w.id),
            Command::Door(o) | Command::Window(o) => Some(o.id),
            Command::Bbox(b) => Some(b.id),
            Command::Prim(_) | Command::CurvedWall(_) | Command::WallPrim(_) => None,
        }
    }
}

/// An ordered list of commands plus the quantization grid they live on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneProgram {
    pub commands: Vec<Command>,
    pub resolution: f64,
}

impl Default for SceneProgram {
    fn default() -> Self {
        SceneProgram { commands: Vec::new(), resolution: DEFAULT_RESOLUTION }
    }
}

impl SceneProgram {
    pub fn new(commands: Vec<Command>) -> Self {
        SceneProgram { commands, resolution: DEFAULT_RESOLUTION }
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn walls(&self) -> impl Iterator<Item = &WallCmd> {
        self.commands.iter().filter_map(|c| match c {
            Command::Wall(w) => Some(w),
            _ => None,
        })
    }

    pub fn bboxes(&self) -> impl Iterator<Item = &BboxCmd> {
        self.commands.iter().filter_map(|c| match c {
            Command::Bbox(b) => Some(b),
            _ => None,
        })
    }

    pub fn count(&self, kind: CommandKind) -> usize {
        self.commands.iter().filter(|c| c.kind() == kind).count()
    }
}
