use super::assign::min_cost_assignment;
use super::{f1_score, sorted_mean};
use crate::geom::OrientedBox;
use crate::lang::cos_sin_deg;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

type P2 = (f64, f64);

/// Footprint rectangle, counter-clockwise.
fn footprint(b: &OrientedBox) -> [P2; 4] {
    let (c, s) = cos_sin_deg(b.yaw);
    let (hx, hy) = (b.extents.x / 2.0, b.extents.y / 2.0);
    [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]
        .map(|(x, y)| (b.center.x + c * x - s * y, b.center.y + s * x + c * y))
}

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Sutherland–Hodgman clipping of `subject` by the convex CCW polygon
/// `clip`.
pub fn clip_convex(subject: &[P2], clip: &[P2]) -> Vec<P2> {
    let mut out: Vec<P2> = subject.to_vec();
    let scale = clip.iter().chain(subject).fold(1.0f64, |m, p| m.max(p.0.abs()).max(p.1.abs()));
    let eps = 1e-12 * scale * scale;
    for k in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[k], clip[(k + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let (p, q) = (input[i], input[(i + 1) % input.len()]);
            let (dp, dq) = (cross(a, b, p), cross(a, b, q));
            let (p_in, q_in) = (dp >= -eps, dq >= -eps);
            // Mixed sides guarantee dp - dq is bounded away from zero.
            let cut = || {
                let t = dp / (dp - dq);
                (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
            };
            if q_in {
                if !p_in {
                    out.push(cut());
                }
                out.push(q);
            } else if p_in {
                out.push(cut());
            }
        }
    }
    out
}

/// Shoelace area (positive for CCW).
pub fn polygon_area(poly: &[P2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - a.1 * b.0
        })
        .sum::<f64>()
        / 2.0
}

/// IoU of two gravity-aligned boxes: footprint intersection area times
/// vertical overlap, over the union volume.
pub fn obb_iou(b1: &OrientedBox, b2: &OrientedBox) -> f64 {
    let z_overlap = ((b1.center.z + b1.extents.z / 2.0).min(b2.center.z + b2.extents.z / 2.0)
        - (b1.center.z - b1.extents.z / 2.0).max(b2.center.z - b2.extents.z / 2.0))
    .max(0.0);
    if z_overlap == 0.0 {
        return 0.0;
    }
    let area = polygon_area(&clip_convex(&footprint(b1), &footprint(b2))).max(0.0);
    let inter = area * z_overlap;
    let union = b1.volume() + b2.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MatchCounts {
    pub fn f1(&self) -> f64 {
        f1_score(self.tp, self.fp, self.fn_)
    }
}

/// Detection results at one IoU threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetEvalReport {
    pub scenes: usize,
    pub iou_threshold: f64,
    pub per_class_f1: BTreeMap<u32, f64>,
    pub per_class_counts: BTreeMap<u32, MatchCounts>,
    /// Mean over classes present in either set; 1.0 when there are none.
    pub mean_f1: f64,
}

/// Matched IoUs per class (one-to-one, maximizing total IoU) plus counts.
fn match_boxes(pred: &[OrientedBox], gt: &[OrientedBox]) -> BTreeMap<u32, (Vec<f64>, usize, usize)> {
    let classes: BTreeSet<u32> = pred.iter().chain(gt).map(|b| b.class).collect();
    classes
        .into_iter()
        .map(|class| {
            let p: Vec<_> = pred.iter().filter(|b| b.class == class).collect();
            let g: Vec<_> = gt.iter().filter(|b| b.class == class).collect();
            let iou: Vec<Vec<f64>> = p.iter().map(|a| g.iter().map(|b| obb_iou(a, b)).collect()).collect();
            let neg: Vec<Vec<f64>> = iou.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
            let matched = min_cost_assignment(&neg)
                .into_iter()
                .enumerate()
                .filter_map(|(i, j)| j.map(|j| iou[i][j]))
                .collect();
            (class, (matched, p.len(), g.len()))
        })
        .collect()
}

/// Reports at each threshold from a single matching per class.
pub fn detection_reports(pred: &[OrientedBox], gt: &[OrientedBox], iou_thresholds: &[f64]) -> Vec<DetEvalReport> {
    let matching = match_boxes(pred, gt);
    iou_thresholds
        .iter()
        .map(|&thr| {
            let per_class_counts: BTreeMap<u32, MatchCounts> = matching
                .iter()
                .map(|(&c, (ious, np, ng))| {
                    let tp = ious.iter().filter(|&&v| v >= thr).count();
                    (c, MatchCounts { tp, fp: np - tp, fn_: ng - tp })
                })
                .collect();
            let per_class_f1: BTreeMap<u32, f64> = per_class_counts.iter().map(|(&c, m)| (c, m.f1())).collect();
            let mean_f1 = if per_class_f1.is_empty() { 1.0 } else { sorted_mean(per_class_f1.values().copied().collect()) };
            DetEvalReport { scenes: 1, iou_threshold: thr, per_class_f1, per_class_counts, mean_f1 }
        })
        .collect()
}

pub fn detection_f1(pred: &[OrientedBox], gt: &[OrientedBox], iou_thr: f64) -> DetEvalReport {
    detection_reports(pred, gt, &[iou_thr]).remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    fn unit(x: f64, yaw: f64) -> OrientedBox {
        OrientedBox { center: Vec3::new(x, 0.0, 0.0), yaw, extents: Vec3::new(1.0, 1.0, 1.0), class: 0 }
    }

    #[test]
    fn analytic_cases() {
        assert!((obb_iou(&unit(0.0, 0.0), &unit(0.0, 0.0)) - 1.0).abs() < 1e-12);
        assert_eq!(obb_iou(&unit(0.0, 0.0), &unit(3.0, 0.0)), 0.0);
        assert!((obb_iou(&unit(0.0, 0.0), &unit(0.5, 0.0)) - 1.0 / 3.0).abs() < 1e-12);
        let oct = 2.0 * (2f64.sqrt() - 1.0);
        let want = oct / (2.0 - oct);
        assert!((obb_iou(&unit(0.0, 0.0), &unit(0.0, 45.0)) - want).abs() < 1e-12);
        assert!((want - 0.7071).abs() < 1e-4);
        // Touching boxes have zero intersection.
        assert_eq!(obb_iou(&unit(0.0, 0.0), &unit(1.0, 0.0)), 0.0);
    }

    #[test]
    fn identity_rotated() {
        for yaw in [13.0, 45.0, 90.0, 271.0] {
            let b = unit(0.3, yaw);
            assert!((obb_iou(&b, &b) - 1.0).abs() < 1e-12, "yaw {yaw}");
        }
    }

    #[test]
    fn contained_box() {
        let big = OrientedBox { center: Vec3::ZERO, yaw: 30.0, extents: Vec3::new(2.0, 2.0, 2.0), class: 0 };
        let small = OrientedBox { center: Vec3::ZERO, yaw: 30.0, extents: Vec3::new(1.0, 1.0, 1.0), class: 0 };
        assert!((obb_iou(&big, &small) - 1.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn detection_threshold_boundary() {
        // IoU 0.4: two unit boxes along x at offset d give (1-d)/(1+d) = 0.4.
        let d = 0.6 / 1.4;
        let r = detection_f1(&[unit(d, 0.0)], &[unit(0.0, 0.0)], 0.25);
        assert_eq!(r.mean_f1, 1.0);
        let r = detection_f1(&[unit(d, 0.0)], &[unit(0.0, 0.0)], 0.5);
        assert_eq!(r.mean_f1, 0.0);
        assert_eq!(r.per_class_counts[&0], MatchCounts { tp: 0, fp: 1, fn_: 1 });
    }
}
