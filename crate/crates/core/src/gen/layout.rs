//! Rectilinear floor plans in integer grid units. Every emitted value is an
//! exact multiple of the resolution and the scene minimum sits at the
//! origin, so generated programs are fixed points of quantization and
//! origin normalization.

use super::{GenConfig, GenError};
use crate::lang::{
    canonicalize, validate_scene, BboxCmd, Command, CurvedWallCmd, OpeningCmd, PrimCmd, SceneProgram, WallCmd,
};
use crate::tokens::{sequence_len, MAX_SEQ_LEN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rect {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl Rect {
    fn w(&self) -> i64 {
        self.x1 - self.x0
    }
    fn h(&self) -> i64 {
        self.y1 - self.y0
    }
}

/// Guillotine subdivision: repeatedly split the largest splittable room
/// across its longer side.
fn floor_plan(rng: &mut ChaCha8Rng, n: usize, min_u: i64, max_u: i64) -> Vec<Rect> {
    let a = (n as f64).sqrt().ceil() as i64;
    let b = (n as i64 + a - 1) / a;
    let w = rng.random_range(min_u * a..=max_u * a);
    let h = rng.random_range(min_u * b..=max_u * b);
    let mut rooms = vec![Rect { x0: 0, y0: 0, x1: w, y1: h }];
    while rooms.len() < n {
        let Some(k) = (0..rooms.len())
            .filter(|&k| rooms[k].w().max(rooms[k].h()) >= 2 * min_u)
            .max_by_key(|&k| (rooms[k].w() * rooms[k].h(), std::cmp::Reverse(k)))
        else {
            break;
        };
        let r = rooms[k];
        if r.w() >= r.h() {
            let x = rng.random_range(r.x0 + min_u..=r.x1 - min_u);
            rooms[k] = Rect { x1: x, ..r };
            rooms.push(Rect { x0: x, ..r });
        } else {
            let y = rng.random_range(r.y0 + min_u..=r.y1 - min_u);
            rooms[k] = Rect { y1: y, ..r };
            rooms.push(Rect { y0: y, ..r });
        }
    }
    rooms
}

/// Axis-aligned boundary segment `a → b` with `a < b`.
#[derive(Debug, Clone)]
struct Segment {
    a: (i64, i64),
    b: (i64, i64),
    rooms: Vec<usize>,
}

impl Segment {
    fn len(&self) -> i64 {
        (self.b.0 - self.a.0) + (self.b.1 - self.a.1)
    }
    fn dir(&self) -> (i64, i64) {
        ((self.b.0 - self.a.0).signum(), (self.b.1 - self.a.1).signum())
    }
    fn exterior(&self) -> bool {
        self.rooms.len() == 1
    }
}

/// Splits all room edges at every room corner lying on the same line and
/// merges duplicates, so shared walls appear once with both rooms attached.
fn boundary_segments(rooms: &[Rect]) -> Vec<Segment> {
    // Key: (vertical, line coordinate) -> edges (lo, hi, room).
    let mut lines: BTreeMap<(bool, i64), Vec<(i64, i64, usize)>> = BTreeMap::new();
    for (k, r) in rooms.iter().enumerate() {
        lines.entry((false, r.y0)).or_default().push((r.x0, r.x1, k));
        lines.entry((false, r.y1)).or_default().push((r.x0, r.x1, k));
        lines.entry((true, r.x0)).or_default().push((r.y0, r.y1, k));
        lines.entry((true, r.x1)).or_default().push((r.y0, r.y1, k));
    }
    let mut out = Vec::new();
    for ((vertical, c), edges) in lines {
        let mut cuts: Vec<i64> = edges.iter().flat_map(|e| [e.0, e.1]).collect();
        cuts.sort();
        cuts.dedup();
        let mut pieces: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        for &(lo, hi, k) in &edges {
            let inner: Vec<i64> = cuts.iter().copied().filter(|&t| t >= lo && t <= hi).collect();
            for w in inner.windows(2) {
                pieces.entry((w[0], w[1])).or_default().push(k);
            }
        }
        for ((lo, hi), rooms) in pieces {
            let (a, b) = if vertical { ((c, lo), (c, hi)) } else { ((lo, c), (hi, c)) };
            out.push(Segment { a, b, rooms });
        }
    }
    out
}

struct Opening {
    wall: usize,
    door: bool,
    /// Center offset along the wall, width, vertical center and height.
    s: i64,
    w: i64,
    z: i64,
    h: i64,
}

fn even_in(rng: &mut ChaCha8Rng, lo: i64, hi: i64) -> Option<i64> {
    let (lo, hi) = ((lo + 1) / 2, hi / 2);
    (lo <= hi).then(|| 2 * rng.random_range(lo..=hi))
}

fn units(m: f64, res: f64) -> i64 {
    (m / res).round() as i64
}

/// Tries to fit a `w`-wide opening on a wall at a random offset without
/// touching existing openings on it.
fn place_on_wall(
    rng: &mut ChaCha8Rng,
    seg: &Segment,
    wall: usize,
    w: i64,
    margin: i64,
    existing: &[Opening],
) -> Option<i64> {
    let (lo, hi) = (margin + w / 2, seg.len() - margin - w / 2);
    if lo > hi {
        return None;
    }
    for _ in 0..8 {
        let s = rng.random_range(lo..=hi);
        let clear = existing
            .iter()
            .filter(|o| o.wall == wall)
            .all(|o| (o.s - s).abs() * 2 >= o.w + w + 2 * margin);
        if clear {
            return Some(s);
        }
    }
    None
}

fn range_i(rng: &mut ChaCha8Rng, r: [u32; 2]) -> usize {
    rng.random_range(r[0]..=r[1]) as usize
}

fn try_generate(config: &GenConfig, rng: &mut ChaCha8Rng) -> SceneProgram {
    let res = config.resolution;
    let u = |m: f64| units(m, res);
    let m = |v: i64| v as f64 * res;
    let n_rooms = range_i(rng, config.rooms);
    let rooms = floor_plan(rng, n_rooms.max(1), u(config.room_size[0]), u(config.room_size[1]));
    let segs = boundary_segments(&rooms);
    let height = rng.random_range(u(config.wall_height[0])..=u(config.wall_height[1]));
    let margin = u(0.1).max(1);

    // Curved replacements for some exterior walls.
    let curved: Vec<bool> = segs
        .iter()
        .map(|s| s.exterior() && s.len() >= u(1.0) && rng.random_bool(config.curved_wall_probability))
        .collect();

    let mut openings: Vec<Opening> = Vec::new();
    for k in 0..rooms.len() {
        let own: Vec<usize> = (0..segs.len()).filter(|&i| !curved[i] && segs[i].rooms.contains(&k)).collect();
        let interior: Vec<usize> = own.iter().copied().filter(|&i| !segs[i].exterior()).collect();
        let exterior: Vec<usize> = own.iter().copied().filter(|&i| segs[i].exterior()).collect();
        let door_walls = if interior.is_empty() { &exterior } else { &interior };
        for _ in 0..range_i(rng, config.doors_per_room) {
            if door_walls.is_empty() {
                break;
            }
            let wall = door_walls[rng.random_range(0..door_walls.len())];
            let (Some(w), Some(h)) = (even_in(rng, u(0.8), u(1.0)), even_in(rng, u(2.0), (u(2.2)).min(height - margin))) else {
                continue;
            };
            if let Some(s) = place_on_wall(rng, &segs[wall], wall, w, margin, &openings) {
                openings.push(Opening { wall, door: true, s, w, z: h / 2, h });
            }
        }
        for _ in 0..range_i(rng, config.windows_per_room) {
            if exterior.is_empty() {
                break;
            }
            let wall = exterior[rng.random_range(0..exterior.len())];
            let Some(w) = even_in(rng, u(0.6), u(1.6)) else { continue };
            let Some(h) = even_in(rng, u(0.8), u(1.4).min(height - u(0.5) - 2 * margin)) else { continue };
            let bottom = rng.random_range(u(0.5)..=(height - margin - h).max(u(0.5)));
            if bottom + h > height - margin {
                continue;
            }
            if let Some(s) = place_on_wall(rng, &segs[wall], wall, w, margin, &openings) {
                openings.push(Opening { wall, door: false, s, w, z: bottom + h / 2, h });
            }
        }
    }

    let mut commands = Vec::new();
    let mut wall_ids = vec![u32::MAX; segs.len()];
    for (i, s) in segs.iter().enumerate() {
        if curved[i] {
            continue;
        }
        wall_ids[i] = commands.len() as u32;
        commands.push(Command::Wall(WallCmd {
            id: wall_ids[i],
            a_x: m(s.a.0),
            a_y: m(s.a.1),
            a_z: 0.0,
            b_x: m(s.b.0),
            b_y: m(s.b.1),
            b_z: 0.0,
            height: m(height),
        }));
    }
    for (i, s) in segs.iter().enumerate() {
        if !curved[i] {
            continue;
        }
        let r = rooms[s.rooms[0]];
        let (dx, dy) = s.dir();
        // Inward normal points towards the room center.
        let (nx, ny) = if dx != 0 {
            (0, if 2 * s.a.1 < r.y0 + r.y1 { 1 } else { -1 })
        } else {
            (if 2 * s.a.0 < r.x0 + r.x1 { 1 } else { -1 }, 0)
        };
        let depth = if dx != 0 { r.h() } else { r.w() };
        let bulge = rng.random_range(u(0.2)..=u(0.6).min(depth / 4).max(u(0.2)));
        let at = |t: i64| (s.a.0 + dx * s.len() * t / 3 + nx * bulge, s.a.1 + dy * s.len() * t / 3 + ny * bulge);
        let (c1, c2) = (at(1), at(2));
        commands.push(Command::CurvedWall(CurvedWallCmd {
            a_x: m(s.a.0),
            a_y: m(s.a.1),
            a_z: 0.0,
            b_x: m(s.b.0),
            b_y: m(s.b.1),
            b_z: 0.0,
            c1_x: m(c1.0),
            c1_y: m(c1.1),
            c2_x: m(c2.0),
            c2_y: m(c2.1),
            height: m(height),
            thickness: config.curved_wall_thickness,
        }));
    }
    let (mut doors, mut windows) = (Vec::new(), Vec::new());
    for o in &openings {
        let seg = &segs[o.wall];
        let (dx, dy) = seg.dir();
        let (open_degree, hinge_side, open_direction) = if o.door && rng.random_bool(config.door_state_probability) {
            (rng.random_range(0..=90) as f64, rng.random_range(0..=1), rng.random_range(0..=1))
        } else {
            (0.0, 0, 0)
        };
        let cmd = OpeningCmd {
            id: 0,
            wall0_id: wall_ids[o.wall],
            wall1_id: wall_ids[o.wall],
            position_x: m(seg.a.0 + dx * o.s),
            position_y: m(seg.a.1 + dy * o.s),
            position_z: m(o.z),
            width: m(o.w),
            height: m(o.h),
            open_degree,
            hinge_side,
            open_direction,
        };
        if o.door {
            doors.push(Command::Door(OpeningCmd { id: doors.len() as u32, ..cmd }));
        } else {
            windows.push(Command::Window(OpeningCmd { id: windows.len() as u32, ..cmd }));
        }
    }
    commands.extend(doors);
    commands.extend(windows);

    let (boxes, prims) = place_objects(config, rng, &rooms);
    commands.extend(boxes);
    commands.extend(prims);
    let p = SceneProgram { commands, resolution: res };
    // Curved walls have no id; canonical order sorts them by value.
    canonicalize(&p).unwrap_or(p)
}

/// Half extents of the axis-aligned hull of a yawed footprint.
fn hull_half(sx: i64, sy: i64, yaw: i64) -> (f64, f64) {
    let (s, c) = (yaw as f64).to_radians().sin_cos();
    let (hx, hy) = (sx as f64 / 2.0, sy as f64 / 2.0);
    (c.abs() * hx + s.abs() * hy, s.abs() * hx + c.abs() * hy)
}

fn place_objects(config: &GenConfig, rng: &mut ChaCha8Rng, rooms: &[Rect]) -> (Vec<Command>, Vec<Command>) {
    let res = config.resolution;
    let u = |m: f64| units(m, res);
    let m = |v: i64| v as f64 * res;
    let margin = u(0.1).max(1);
    let (mut boxes, mut prims) = (Vec::new(), Vec::new());
    // Placed hulls: (cx, cy, hx, hy) in units.
    let mut hulls: Vec<(f64, f64, f64, f64)> = Vec::new();
    for r in rooms {
        for _ in 0..range_i(rng, config.boxes_per_room) {
            for _attempt in 0..20 {
                let max_side = (r.w().min(r.h()) - 2 * margin).min(u(2.0));
                let (Some(sx), Some(sy), Some(sz)) =
                    (even_in(rng, u(0.4), max_side), even_in(rng, u(0.4), max_side), even_in(rng, u(0.4), u(2.0)))
                else {
                    break;
                };
                let yaw = if rng.random_bool(0.5) { 90 * rng.random_range(0..4) } else { rng.random_range(0..360) };
                let (hx, hy) = hull_half(sx, sy, yaw);
                let lo_x = (r.x0 as f64 + margin as f64 + hx).ceil() as i64;
                let hi_x = (r.x1 as f64 - margin as f64 - hx).floor() as i64;
                let lo_y = (r.y0 as f64 + margin as f64 + hy).ceil() as i64;
                let hi_y = (r.y1 as f64 - margin as f64 - hy).floor() as i64;
                if lo_x > hi_x || lo_y > hi_y {
                    continue;
                }
                let (cx, cy) = (rng.random_range(lo_x..=hi_x), rng.random_range(lo_y..=hi_y));
                let (fx, fy) = (cx as f64, cy as f64);
                let overlaps = hulls
                    .iter()
                    .any(|&(ox, oy, ohx, ohy)| (fx - ox).abs() < hx + ohx && (fy - oy).abs() < hy + ohy);
                if overlaps {
                    continue;
                }
                hulls.push((fx, fy, hx, hy));
                let id = boxes.len() as u32;
                boxes.push(Command::Bbox(BboxCmd {
                    id,
                    class: rng.random_range(0..config.num_classes.max(1)),
                    position_x: m(cx),
                    position_y: m(cy),
                    position_z: m(sz / 2),
                    angle_z: yaw as f64,
                    scale_x: m(sx),
                    scale_y: m(sy),
                    scale_z: m(sz),
                }));
                if config.primitives && rng.random_bool(config.prim_probability) {
                    prims.extend(box_prims(rng, id, (cx, cy), (sx, sy, sz), yaw).into_iter().map(|mut q| {
                        q.center_x *= res;
                        q.center_y *= res;
                        q.center_z *= res;
                        q.scale_x *= res;
                        q.scale_y *= res;
                        q.scale_z *= res;
                        Command::Prim(q)
                    }));
                }
                break;
            }
        }
    }
    (boxes, prims)
}

/// 1–4 stacked parts filling the box height, each inside the box. Lengths
/// are returned in grid units; xy offsets are used only for quarter-turn
/// yaws so centers stay on the grid.
fn box_prims(rng: &mut ChaCha8Rng, bbox_id: u32, c: (i64, i64), s: (i64, i64, i64), yaw: i64) -> Vec<PrimCmd> {
    let (sx, sy, sz) = s;
    let k = rng.random_range(1..=4).min(sz / 2) as usize;
    // Even layer heights summing to sz.
    let mut cuts: Vec<i64> = Vec::new();
    while cuts.len() < k - 1 {
        let t = 2 * rng.random_range(1..sz / 2);
        if !cuts.contains(&t) {
            cuts.push(t);
        }
    }
    cuts.sort();
    let bounds: Vec<i64> = std::iter::once(0).chain(cuts).chain(std::iter::once(sz)).collect();
    let quarter = yaw % 90 == 0;
    let (cs, sn) = match yaw.rem_euclid(360) {
        0 => (1, 0),
        90 => (0, 1),
        180 => (-1, 0),
        270 => (0, -1),
        _ => (1, 0),
    };
    bounds
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let px = rng.random_range((sx / 2).max(1)..=sx);
            let py = rng.random_range((sy / 2).max(1)..=sy);
            let (ox, oy) = if quarter {
                (rng.random_range(-(sx - px) / 2..=(sx - px) / 2), rng.random_range(-(sy - py) / 2..=(sy - py) / 2))
            } else {
                (0, 0)
            };
            PrimCmd {
                bbox_id,
                prim_num: i as u32,
                class: rng.random_range(0..=1),
                center_x: (c.0 + cs * ox - sn * oy) as f64,
                center_y: (c.1 + sn * ox + cs * oy) as f64,
                center_z: ((w[0] + w[1]) / 2) as f64,
                angle_x: 0.0,
                angle_y: 0.0,
                angle_z: yaw as f64,
                scale_x: px as f64,
                scale_y: py as f64,
                scale_z: (w[1] - w[0]) as f64,
            }
        })
        .collect()
}

/// Deterministic scene for `(config, seed)`. Attempts whose program fails
/// validation or exceeds the token budget are retried with the same RNG
/// stream.
pub fn generate_scene(config: &GenConfig, seed: u64) -> Result<SceneProgram, GenError> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..config.max_attempts.max(1) {
        let p = try_generate(config, &mut rng);
        if validate_scene(&p).is_empty() && sequence_len(&p) <= MAX_SEQ_LEN {
            return Ok(p);
        }
    }
    Err(GenError::GenerationFailed { seed, attempts: config.max_attempts.max(1) })
}
