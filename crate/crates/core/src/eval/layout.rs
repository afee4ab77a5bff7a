use super::assign::{bottleneck_assignment_cost, min_cost_assignment};
use super::{f1_score, percentile, sorted_mean, EvalError, ThresholdSet};
use crate::geom::{extract_layout_entities, EntityClass, EntityCorners};
use crate::lang::SceneProgram;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Bottleneck corner distance: the smallest achievable maximum distance
/// between corresponding corners over all corner assignments.
pub fn entity_distance(e: &EntityCorners, e2: &EntityCorners) -> Result<f64, EvalError> {
    if e.class != e2.class {
        return Err(EvalError::ClassMismatch(e.class, e2.class));
    }
    let cost: Vec<Vec<f64>> = e
        .corners
        .iter()
        .map(|a| e2.corners.iter().map(|b| a.distance(*b)).collect())
        .collect();
    Ok(bottleneck_assignment_cost(&cost))
}

/// Per-class one-to-one matching by minimum total entity distance.
/// Returns the matched distances plus prediction and ground-truth counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassMatching {
    pub distances: Vec<f64>,
    pub n_pred: usize,
    pub n_gt: usize,
}

impl ClassMatching {
    pub fn counts_at(&self, thr: f64) -> (usize, usize, usize) {
        let tp = self.distances.iter().filter(|&&d| d <= thr).count();
        (tp, self.n_pred - tp, self.n_gt - tp)
    }

    pub fn f1_at(&self, thr: f64) -> f64 {
        let (tp, fp, fn_) = self.counts_at(thr);
        f1_score(tp, fp, fn_)
    }
}

fn of_class(entities: &[EntityCorners], class: EntityClass) -> Vec<&EntityCorners> {
    entities.iter().filter(|e| e.class == class).collect()
}

/// Matches each present class once; classes absent from both sides are
/// omitted.
pub fn match_layout(pred: &[EntityCorners], gt: &[EntityCorners]) -> BTreeMap<EntityClass, ClassMatching> {
    let mut out = BTreeMap::new();
    for class in EntityClass::ALL {
        let (p, g) = (of_class(pred, class), of_class(gt, class));
        if p.is_empty() && g.is_empty() {
            continue;
        }
        let cost: Vec<Vec<f64>> = p
            .iter()
            .map(|a| g.iter().map(|b| entity_distance(a, b).expect("same class")).collect())
            .collect();
        let distances = min_cost_assignment(&cost)
            .into_iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| cost[i][j]))
            .collect();
        out.insert(class, ClassMatching { distances, n_pred: p.len(), n_gt: g.len() });
    }
    out
}

/// F1 at one threshold, per present class and averaged over them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutF1 {
    pub per_class: BTreeMap<EntityClass, f64>,
    /// Mean over present classes; 1.0 when no class is present on either
    /// side.
    pub mean: f64,
}

fn class_mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        1.0
    } else {
        sorted_mean(v)
    }
}

pub fn layout_f1_at_threshold(pred: &[EntityCorners], gt: &[EntityCorners], thr: f64) -> LayoutF1 {
    let per_class: BTreeMap<_, _> = match_layout(pred, gt).into_iter().map(|(c, m)| (c, m.f1_at(thr))).collect();
    let mean = class_mean(per_class.values().copied());
    LayoutF1 { per_class, mean }
}

/// Mean over the threshold set of the per-threshold F1.
pub fn average_f1(pred: &[EntityCorners], gt: &[EntityCorners], thresholds: &ThresholdSet) -> LayoutF1 {
    layout_report(pred, gt, thresholds).average()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub count: usize,
    pub median: f64,
    pub p90: f64,
}

/// Layout metrics for one scene or, after aggregation, a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEvalReport {
    pub scenes: usize,
    pub thresholds: Vec<f64>,
    /// F1 per class at each threshold, averaged over the scenes where the
    /// class is present.
    pub per_class_f1: BTreeMap<EntityClass, Vec<f64>>,
    /// Mean over classes at each threshold, averaged over scenes.
    pub mean_f1: Vec<f64>,
    pub per_class_average_f1: BTreeMap<EntityClass, f64>,
    pub mean_average_f1: f64,
    /// Entity-distance percentiles over all matched pairs.
    pub distance_stats: BTreeMap<EntityClass, DistanceStats>,
    #[serde(skip)]
    pub(crate) distances: BTreeMap<EntityClass, Vec<f64>>,
}

impl LayoutEvalReport {
    fn average(&self) -> LayoutF1 {
        LayoutF1 { per_class: self.per_class_average_f1.clone(), mean: self.mean_average_f1 }
    }

    /// F1 at `thr`, which must be a member of the report's threshold set.
    pub fn f1_at(&self, thr: f64) -> Option<LayoutF1> {
        let k = self.thresholds.iter().position(|&t| t == thr)?;
        Some(LayoutF1 {
            per_class: self.per_class_f1.iter().map(|(&c, v)| (c, v[k])).collect(),
            mean: self.mean_f1[k],
        })
    }
}

pub(crate) fn distance_stats(distances: &BTreeMap<EntityClass, Vec<f64>>) -> BTreeMap<EntityClass, DistanceStats> {
    distances
        .iter()
        .filter(|(_, d)| !d.is_empty())
        .map(|(&c, d)| {
            let mut d = d.clone();
            d.sort_by(f64::total_cmp);
            (c, DistanceStats { count: d.len(), median: percentile(&d, 0.5), p90: percentile(&d, 0.9) })
        })
        .collect()
}

/// Single-scene report.
pub fn layout_report(pred: &[EntityCorners], gt: &[EntityCorners], thresholds: &ThresholdSet) -> LayoutEvalReport {
    let matching = match_layout(pred, gt);
    let t = &thresholds.thresholds;
    let per_class_f1: BTreeMap<EntityClass, Vec<f64>> =
        matching.iter().map(|(&c, m)| (c, t.iter().map(|&thr| m.f1_at(thr)).collect())).collect();
    let mean_f1: Vec<f64> = (0..t.len())
        .map(|k| class_mean(per_class_f1.values().map(|v| v[k])))
        .collect();
    let per_class_average_f1 = per_class_f1.iter().map(|(&c, v)| (c, sorted_mean(v.clone()))).collect();
    let mean_average_f1 = sorted_mean(mean_f1.clone());
    let distances: BTreeMap<_, _> = matching.into_iter().map(|(c, m)| (c, m.distances)).collect();
    LayoutEvalReport {
        scenes: 1,
        thresholds: t.clone(),
        per_class_f1,
        mean_f1,
        per_class_average_f1,
        mean_average_f1,
        distance_stats: distance_stats(&distances),
        distances,
    }
}

/// Interprets both programs leniently and evaluates their layout entities.
pub fn layout_report_programs(pred: &SceneProgram, gt: &SceneProgram, thresholds: &ThresholdSet) -> LayoutEvalReport {
    layout_report(&extract_layout_entities(pred), &extract_layout_entities(gt), thresholds)
}
