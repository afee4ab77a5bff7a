//! Evaluation metrics: layout entity distance and F1 over a threshold set,
//! oriented-box IoU and detection F1, surface-voxel geometry IoU, and
//! dataset aggregation.
//!
//! Aggregates sum sorted values, so a dataset report does not depend on the
//! order its scenes were evaluated in, bit for bit.

mod assign;
mod boxes;
mod layout;
mod voxel;

pub use assign::{bottleneck_assignment_cost, min_cost_assignment};
pub use boxes::{clip_convex, detection_f1, detection_reports, obb_iou, polygon_area, DetEvalReport, MatchCounts};
pub use layout::{
    average_f1, entity_distance, layout_f1_at_threshold, layout_report, layout_report_programs, match_layout,
    ClassMatching, DistanceStats, LayoutEvalReport, LayoutF1,
};
pub use voxel::{triangle_box_overlap, voxel_geometry_iou};

use crate::geom::EntityClass;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("entity classes differ ({0:?} vs {1:?})")]
    ClassMismatch(EntityClass, EntityClass),
    #[error("geometry occupies no voxels")]
    EmptyGeometry,
    #[error("thresholds must be positive and strictly increasing")]
    InvalidThresholds,
    #[error("nothing to aggregate")]
    NoScenes,
    #[error("reports use different threshold sets")]
    ThresholdMismatch,
}

/// IoU thresholds used for detection reports.
pub const DETECTION_IOU_THRESHOLDS: [f64; 2] = [0.25, 0.5];

/// Entity-distance thresholds in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub thresholds: Vec<f64>,
}

impl ThresholdSet {
    pub fn new(thresholds: Vec<f64>) -> Result<Self, EvalError> {
        let ok = thresholds.first().is_some_and(|&t| t > 0.0)
            && thresholds.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(ThresholdSet { thresholds })
        } else {
            Err(EvalError::InvalidThresholds)
        }
    }
}

impl Default for ThresholdSet {
    /// 1..10 cm in 1 cm steps, then 15, 25, 30, 50, 75 and 100 cm.
    fn default() -> Self {
        let cm = (1..=10).chain([15, 25, 30, 50, 75, 100]);
        ThresholdSet { thresholds: cm.map(|c| c as f64 / 100.0).collect() }
    }
}

pub(crate) fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Mean of `values` summed in ascending order.
pub(crate) fn sorted_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linear-interpolated quantile of sorted data.
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn mean_where_present<K: Ord + Copy, V>(
    items: impl Iterator<Item = BTreeMap<K, V>>,
    project: impl Fn(&V) -> Vec<f64>,
) -> BTreeMap<K, Vec<f64>> {
    let mut acc: BTreeMap<K, Vec<Vec<f64>>> = BTreeMap::new();
    for map in items {
        for (k, v) in map {
            acc.entry(k).or_default().push(project(&v));
        }
    }
    acc.into_iter()
        .map(|(k, rows)| {
            let width = rows[0].len();
            (k, (0..width).map(|i| sorted_mean(rows.iter().map(|r| r[i]).collect())).collect())
        })
        .collect()
}

/// Dataset report from per-scene reports: unweighted means over scenes
/// (per class, over the scenes where that class occurs) and distance
/// percentiles over all pooled matched pairs.
pub fn aggregate_layout(reports: &[LayoutEvalReport]) -> Result<LayoutEvalReport, EvalError> {
    let first = reports.first().ok_or(EvalError::NoScenes)?;
    if reports.iter().any(|r| r.thresholds != first.thresholds) {
        return Err(EvalError::ThresholdMismatch);
    }
    let n_t = first.thresholds.len();
    let per_class_f1 = mean_where_present(reports.iter().map(|r| r.per_class_f1.clone()), |v| v.clone());
    let per_class_average_f1 = mean_where_present(reports.iter().map(|r| r.per_class_average_f1.clone()), |v| vec![*v])
        .into_iter()
        .map(|(k, v)| (k, v[0]))
        .collect();
    let mean_f1 = (0..n_t).map(|k| sorted_mean(reports.iter().map(|r| r.mean_f1[k]).collect())).collect();
    let mean_average_f1 = sorted_mean(reports.iter().map(|r| r.mean_average_f1).collect());
    let mut distances: BTreeMap<EntityClass, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for (&c, d) in &r.distances {
            distances.entry(c).or_default().extend(d);
        }
    }
    for d in distances.values_mut() {
        d.sort_by(f64::total_cmp);
    }
    Ok(LayoutEvalReport {
        scenes: reports.iter().map(|r| r.scenes).sum(),
        thresholds: first.thresholds.clone(),
        per_class_f1,
        mean_f1,
        per_class_average_f1,
        mean_average_f1,
        distance_stats: layout::distance_stats(&distances),
        distances,
    })
}

/// Dataset detection report at one threshold: F1 means over scenes and
/// match counts summed over scenes.
pub fn aggregate_detection(reports: &[DetEvalReport]) -> Result<DetEvalReport, EvalError> {
    let first = reports.first().ok_or(EvalError::NoScenes)?;
    if reports.iter().any(|r| r.iou_threshold != first.iou_threshold) {
        return Err(EvalError::ThresholdMismatch);
    }
    let per_class_f1 = mean_where_present(reports.iter().map(|r| r.per_class_f1.clone()), |v| vec![*v])
        .into_iter()
        .map(|(k, v)| (k, v[0]))
        .collect();
    let mut per_class_counts: BTreeMap<u32, MatchCounts> = BTreeMap::new();
    for r in reports {
        for (&c, m) in &r.per_class_counts {
            let e = per_class_counts.entry(c).or_default();
            e.tp += m.tp;
            e.fp += m.fp;
            e.fn_ += m.fn_;
        }
    }
    Ok(DetEvalReport {
        scenes: reports.iter().map(|r| r.scenes).sum(),
        iou_threshold: first.iou_threshold,
        per_class_f1,
        per_class_counts,
        mean_f1: sorted_mean(reports.iter().map(|r| r.mean_f1).collect()),
    })
}

fn opt_cell(v: Option<&f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// One CSV row per scene: average F1 (mean and per class) followed by the
/// mean F1 at every threshold.
pub fn layout_csv(rows: &[(String, LayoutEvalReport)]) -> String {
    let mut out = String::from("scene,mean_average_f1,wall_average_f1,door_average_f1,window_average_f1");
    if let Some((_, r)) = rows.first() {
        for t in &r.thresholds {
            let _ = write!(out, ",f1@{:.0}cm", t * 100.0);
        }
    }
    out.push('\n');
    for (name, r) in rows {
        let _ = write!(out, "{name},{:.6}", r.mean_average_f1);
        for c in EntityClass::ALL {
            let _ = write!(out, ",{}", opt_cell(r.per_class_average_f1.get(&c)));
        }
        for f in &r.mean_f1 {
            let _ = write!(out, ",{f:.6}");
        }
        out.push('\n');
    }
    out
}

/// One CSV row per (scene, IoU threshold).
pub fn detection_csv(rows: &[(String, Vec<DetEvalReport>)]) -> String {
    let mut out = String::from("scene,iou_threshold,mean_f1,tp,fp,fn\n");
    for (name, reports) in rows {
        for r in reports {
            let c = r.per_class_counts.values().fold(MatchCounts::default(), |a, m| MatchCounts {
                tp: a.tp + m.tp,
                fp: a.fp + m.fp,
                fn_: a.fn_ + m.fn_,
            });
            let _ = writeln!(out, "{name},{},{:.6},{},{},{}", r.iou_threshold, r.mean_f1, c.tp, c.fp, c.fn_);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{EntityCorners, OrientedBox, Vec3};

    fn wall(y: f64) -> EntityCorners {
        let c = [(0.0, 0.0), (4.0, 0.0), (4.0, 2.5), (0.0, 2.5)];
        EntityCorners { class: EntityClass::Wall, corners: c.map(|(x, z)| Vec3::new(x, y, z)) }
    }

    #[test]
    fn default_thresholds() {
        let t = ThresholdSet::default();
        assert_eq!(t.thresholds.len(), 16);
        assert_eq!(t.thresholds[0], 0.01);
        assert_eq!(t.thresholds[15], 1.0);
        assert!(ThresholdSet::new(t.thresholds.clone()).is_ok());
        assert!(ThresholdSet::new(vec![0.1, 0.1]).is_err());
        assert!(ThresholdSet::new(vec![]).is_err());
    }

    #[test]
    fn percentiles() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&d, 0.5), 2.5);
        assert!((percentile(&d, 0.9) - 3.7).abs() < 1e-12);
    }

    #[test]
    fn aggregate_single_and_pair() {
        let t = ThresholdSet::default();
        let good = layout_report(&[wall(0.0)], &[wall(0.0)], &t);
        assert_eq!(aggregate_layout(std::slice::from_ref(&good)).unwrap(), good);
        let bad = layout_report(&[], &[wall(0.0)], &t);
        let agg = aggregate_layout(&[good, bad]).unwrap();
        assert_eq!(agg.mean_average_f1, 0.5);
        assert_eq!(agg.scenes, 2);
        assert!(matches!(aggregate_layout(&[]), Err(EvalError::NoScenes)));
    }

    #[test]
    fn aggregate_detection_counts() {
        let b = OrientedBox { center: Vec3::ZERO, yaw: 0.0, extents: Vec3::new(1.0, 1.0, 1.0), class: 2 };
        let r1 = detection_f1(&[b], &[b], 0.5);
        let r2 = detection_f1(&[], &[b], 0.5);
        let agg = aggregate_detection(&[r1.clone(), r2]).unwrap();
        assert_eq!(agg.mean_f1, 0.5);
        assert_eq!(agg.per_class_counts[&2], MatchCounts { tp: 1, fp: 0, fn_: 1 });
        assert_eq!(aggregate_detection(std::slice::from_ref(&r1)).unwrap(), r1);
    }

    #[test]
    fn csv_shapes() {
        let t = ThresholdSet::default();
        let r = layout_report(&[wall(0.0)], &[wall(0.0)], &t);
        let csv = layout_csv(&[("a".into(), r)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert!(lines[0].contains("f1@5cm"));
    }
}
