//! ICDAR-style detection scoring: one-to-one greedy IoU matching and the
//! precision / recall / F-score triple.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clip_convex, polygon_area, QuadBox};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Intersection over union of two quads. Convex pairs are clipped exactly;
/// anything else is sampled on a unit grid.
pub fn quad_iou(a: &QuadBox, b: &QuadBox) -> Result<f64> {
    let (area_a, area_b) = (a.area(), b.area());
    if area_a <= 0.0 || area_b <= 0.0 {
        return Err(Error::Geometry("IoU of a zero-area quad".into()));
    }
    let (ax0, ay0, ax1, ay1) = a.bounds();
    let (bx0, by0, bx1, by1) = b.bounds();
    if ax1 < bx0 || bx1 < ax0 || ay1 < by0 || by1 < ay0 {
        return Ok(0.0);
    }
    if a.is_convex() && b.is_convex() {
        let inter = polygon_area(&clip_convex(&a.vertices, &b.vertices));
        let union = area_a + area_b - inter;
        return Ok((inter / union).clamp(0.0, 1.0));
    }
    Ok(raster_iou(a, b))
}

fn raster_iou(a: &QuadBox, b: &QuadBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.bounds();
    let (bx0, by0, bx1, by1) = b.bounds();
    let (x0, y0) = (ax0.min(bx0).floor() as i64, ay0.min(by0).floor() as i64);
    let (x1, y1) = (ax1.max(bx1).ceil() as i64, ay1.max(by1).ceil() as i64);
    let (mut inter, mut union) = (0usize, 0usize);
    for y in y0..y1 {
        for x in x0..x1 {
            let p = crate::geometry::Point::new(x as f64 + 0.5, y as f64 + 0.5);
            let (ia, ib) = (a.contains(p), b.contains(p));
            inter += usize::from(ia && ib);
            union += usize::from(ia || ib);
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub true_positives: usize,
    /// Predictions that count (those absorbed by don't-care regions do not).
    pub predictions: usize,
    /// Ground-truth boxes that count (don't-care regions do not).
    pub ground_truth: usize,
}

impl DetectionMetrics {
    /// With no ground truth, recall is 1; with no predictions, precision is 1
    /// only if there is also no ground truth.
    pub fn from_counts(true_positives: usize, predictions: usize, ground_truth: usize) -> Self {
        let recall = if ground_truth == 0 {
            1.0
        } else {
            true_positives as f64 / ground_truth as f64
        };
        let precision = match (predictions, ground_truth) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => true_positives as f64 / predictions as f64,
        };
        let fscore = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            fscore,
            true_positives,
            predictions,
            ground_truth,
        }
    }

    /// `precision recall fscore` as percentages with three decimals.
    pub fn percent_line(&self) -> String {
        format!(
            "{:.3} {:.3} {:.3}",
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.fscore
        )
    }
}

/// Boxes of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBoxes {
    pub id: String,
    pub boxes: Vec<QuadBox>,
}

impl ImageBoxes {
    pub fn new(id: impl Into<String>, boxes: Vec<QuadBox>) -> Self {
        Self {
            id: id.into(),
            boxes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ImageCounts {
    pub true_positives: usize,
    pub predictions: usize,
    pub ground_truth: usize,
}

/// Greedy matching in descending prediction confidence. Each prediction
/// takes the unmatched cared-for ground truth with the highest IoU at or
/// above the threshold; failing that, a prediction overlapping a don't-care
/// region at the threshold is dropped from the counts.
pub fn match_image(preds: &[QuadBox], gts: &[QuadBox], iou_threshold: f64) -> Result<ImageCounts> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        let ca = preds[a].confidence.unwrap_or(f64::NEG_INFINITY);
        let cb = preds[b].confidence.unwrap_or(f64::NEG_INFINITY);
        cb.total_cmp(&ca).then(a.cmp(&b))
    });
    let mut matched = vec![false; gts.len()];
    let mut counts = ImageCounts {
        ground_truth: gts.iter().filter(|g| !g.ignore).count(),
        ..ImageCounts::default()
    };
    for &pi in &order {
        let pred = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        let mut dont_care = false;
        for (gi, gt) in gts.iter().enumerate() {
            let iou = quad_iou(pred, gt)?;
            if iou < iou_threshold {
                continue;
            }
            if gt.ignore {
                dont_care = true;
            } else if !matched[gi] && best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, _)) => {
                matched[gi] = true;
                counts.true_positives += 1;
                counts.predictions += 1;
            }
            None if dont_care => {}
            None => counts.predictions += 1,
        }
    }
    Ok(counts)
}

/// Scores predictions against ground truth, pairing images by id. Images
/// missing from either side count as having no boxes there.
pub fn evaluate(
    preds: &[ImageBoxes],
    gts: &[ImageBoxes],
    iou_threshold: f64,
) -> Result<DetectionMetrics> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::Config(format!(
            "IoU threshold must be in (0, 1], got {iou_threshold}"
        )));
    }
    fn index<'a>(set: &'a [ImageBoxes], what: &str) -> Result<BTreeMap<&'a str, &'a [QuadBox]>> {
        let mut seen = HashSet::new();
        let mut map = BTreeMap::new();
        for img in set {
            if !seen.insert(img.id.as_str()) {
                return Err(Error::Data(format!("duplicate {what} image id {:?}", img.id)));
            }
            map.insert(img.id.as_str(), img.boxes.as_slice());
        }
        Ok(map)
    }
    let p = index(preds, "prediction")?;
    let g = index(gts, "ground-truth")?;
    let ids: std::collections::BTreeSet<&str> = p.keys().chain(g.keys()).copied().collect();
    let mut total = ImageCounts::default();
    for id in ids {
        let c = match_image(
            p.get(id).copied().unwrap_or(&[]),
            g.get(id).copied().unwrap_or(&[]),
            iou_threshold,
        )?;
        total.true_positives += c.true_positives;
        total.predictions += c.predictions;
        total.ground_truth += c.ground_truth;
    }
    Ok(DetectionMetrics::from_counts(
        total.true_positives,
        total.predictions,
        total.ground_truth,
    ))
}
