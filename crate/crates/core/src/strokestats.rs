//! Per-box stroke-width statistics and the two-threshold false-positive
//! filter used when building pseudo-labels.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::QuadBox;
use crate::raster::StrokeWidthMap;

/// Self-training knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TstConfig {
    /// Fraction of candidate negatives kept as trusted negatives.
    pub eta: f64,
    /// Upper bound on the stroke-width standard deviation of a kept box.
    pub eps1: f64,
    /// Lower bound on the stroke width score of a kept box.
    pub eps2: f64,
    /// Score-map binarisation threshold for box extraction.
    pub score_threshold: f64,
    pub min_box_area: f64,
    /// Boxes with fewer stroke pixels than this are kept unconditionally.
    pub min_stroke_pixels: usize,
    /// Lower clamp on the variance in the stroke width score denominator.
    pub sigma_floor: f64,
}

impl Default for TstConfig {
    fn default() -> Self {
        Self {
            eta: 1.0 / 3.0,
            eps1: 3.0,
            eps2: 0.30,
            score_threshold: 0.8,
            min_box_area: 16.0,
            min_stroke_pixels: 10,
            sigma_floor: 1e-6,
        }
    }
}

impl TstConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta must be in (0, 1], got {}", self.eta));
        }
        if !(self.eps1 >= 0.0) || !(self.eps2 >= 0.0) {
            return bad(format!("eps1/eps2 must be >= 0, got {}/{}", self.eps1, self.eps2));
        }
        if !(self.score_threshold > 0.0 && self.score_threshold < 1.0) {
            return bad(format!("score_threshold must be in (0, 1), got {}", self.score_threshold));
        }
        if !(self.min_box_area >= 0.0) {
            return bad(format!("min_box_area must be >= 0, got {}", self.min_box_area));
        }
        if !(self.sigma_floor > 0.0) {
            return bad(format!("sigma_floor must be > 0, got {}", self.sigma_floor));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStrokeStats {
    pub n_samples: usize,
    pub mean_width: f64,
    pub std_dev: f64,
    /// Most common integer width; ties go to the smaller width.
    pub mode_width: f64,
    /// `mode_width / max(std_dev^2, sigma_floor)`.
    pub sws: f64,
}

/// Widths of stroke pixels whose centres fall inside `quad` (boundary
/// inclusive), in row-major order.
pub fn collect_widths(map: &StrokeWidthMap, quad: &QuadBox) -> Vec<f64> {
    quad.covered_pixels(map.width(), map.height())
        .into_iter()
        .filter_map(|(x, y)| map.is_stroke(x, y).then(|| map.get(x, y)))
        .collect()
}

pub fn stroke_stats(widths: &[f64], cfg: &TstConfig) -> BoxStrokeStats {
    let n = widths.len();
    if n == 0 {
        return BoxStrokeStats {
            n_samples: 0,
            mean_width: 0.0,
            std_dev: 0.0,
            mode_width: 0.0,
            sws: 0.0,
        };
    }
    let mean = widths.iter().sum::<f64>() / n as f64;
    let var = widths.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n as f64;
    let std_dev = var.sqrt();

    let mut histogram: BTreeMap<i64, usize> = BTreeMap::new();
    for w in widths {
        *histogram.entry(w.round() as i64).or_default() += 1;
    }
    // BTreeMap iterates ascending, so the first maximum is the smallest width
    let mut mode = 0i64;
    let mut best = 0usize;
    for (&width, &count) in &histogram {
        if count > best {
            best = count;
            mode = width;
        }
    }
    let mode_width = mode as f64;
    BoxStrokeStats {
        n_samples: n,
        mean_width: mean,
        std_dev,
        mode_width,
        sws: mode_width / var.max(cfg.sigma_floor),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RejectReason {
    /// Stroke-width standard deviation above `eps1`.
    Sigma,
    /// Stroke width score below `eps2`.
    Sws,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Sigma => "SIGMA",
            RejectReason::Sws => "SWS",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub index: usize,
    pub quad: QuadBox,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<QuadBox>,
    /// Statistics for every input box, index-aligned with the input.
    pub stats: Vec<BoxStrokeStats>,
    pub rejected: Vec<Rejection>,
    /// Input indices kept only because they had too few stroke pixels.
    pub low_evidence: Vec<usize>,
}

impl FilterOutcome {
    /// `box_index,reason,sigma,sws,n_samples` lines for rejected boxes.
    pub fn rejection_report(&self) -> String {
        let mut out = String::from("box_index,reason,sigma,sws,n_samples\n");
        for r in &self.rejected {
            let s = &self.stats[r.index];
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{}",
                r.index,
                r.reason.as_str(),
                s.std_dev,
                s.sws,
                s.n_samples
            );
        }
        out
    }
}

/// Sequential filter: reject when `sigma > eps1`, otherwise when
/// `sws < eps2`. Boxes with too little stroke evidence pass and are flagged.
pub fn filter_boxes(boxes: &[QuadBox], map: &StrokeWidthMap, cfg: &TstConfig) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for (index, quad) in boxes.iter().enumerate() {
        let stats = stroke_stats(&collect_widths(map, quad), cfg);
        out.stats.push(stats);
        if stats.n_samples < cfg.min_stroke_pixels {
            out.low_evidence.push(index);
            out.kept.push(quad.clone());
            continue;
        }
        let reason = if stats.std_dev > cfg.eps1 {
            Some(RejectReason::Sigma)
        } else if stats.sws < cfg.eps2 {
            Some(RejectReason::Sws)
        } else {
            None
        };
        match reason {
            Some(reason) => out.rejected.push(Rejection {
                index,
                quad: quad.clone(),
                reason,
            }),
            None => out.kept.push(quad.clone()),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::NO_STROKE;

    fn cfg() -> TstConfig {
        TstConfig {
            min_stroke_pixels: 1,
            ..TstConfig::default()
        }
    }

    #[test]
    fn uniform_widths() {
        let s = stroke_stats(&[4.0; 4], &cfg());
        assert_eq!((s.mean_width, s.std_dev, s.mode_width), (4.0, 0.0, 4.0));
        assert_eq!(s.sws, 4.0 / 1e-6);
    }

    #[test]
    fn worked_examples() {
        let s = stroke_stats(&[3.0, 3.0, 3.0, 5.0], &cfg());
        assert_eq!(s.mean_width, 3.5);
        assert_eq!(s.std_dev, 0.75f64.sqrt());
        assert_eq!(s.mode_width, 3.0);
        assert_eq!(s.sws, 4.0);

        let s = stroke_stats(&[2.0, 2.0, 10.0, 10.0], &cfg());
        assert_eq!((s.mean_width, s.std_dev, s.mode_width, s.sws), (6.0, 4.0, 2.0, 0.125));
    }

    #[test]
    fn empty_multiset_is_all_zero() {
        let s = stroke_stats(&[], &cfg());
        assert_eq!(s.n_samples, 0);
        assert_eq!((s.mean_width, s.std_dev, s.mode_width, s.sws), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn collect_excludes_sentinel() {
        let mut data = vec![4.0; 36];
        data[..2].copy_from_slice(&[3.0, 3.0]);
        data[6..8].copy_from_slice(&[NO_STROKE, 5.0]);
        let map = StrokeWidthMap::new(6, 6, data).unwrap();
        let quad = QuadBox::axis_aligned(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(collect_widths(&map, &quad), vec![3.0, 3.0, 5.0]);
        let empty = StrokeWidthMap::empty(6, 6).unwrap();
        assert!(collect_widths(&empty, &quad).is_empty());
    }

    /// Values on row 0 of a 12-row map, everything else without stroke.
    fn map_with(values: &[f64]) -> (StrokeWidthMap, QuadBox) {
        let mut data = vec![NO_STROKE; values.len() * 12];
        data[..values.len()].copy_from_slice(values);
        let map = StrokeWidthMap::new(values.len(), 12, data).unwrap();
        let quad = QuadBox::axis_aligned(-0.5, -0.5, values.len() as f64 - 0.5, 0.5).unwrap();
        (map, quad)
    }

    #[test]
    fn filter_keeps_and_rejects_per_thresholds() {
        let (map, _) = map_with(&[3.0, 3.0, 3.0, 5.0, 2.0, 2.0, 10.0, 10.0]);
        let a = QuadBox::axis_aligned(-0.5, -0.5, 3.5, 0.5).unwrap();
        let b = QuadBox::axis_aligned(3.5, -0.5, 7.5, 0.5).unwrap();
        let out = filter_boxes(&[a.clone(), b.clone()], &map, &cfg());
        assert_eq!(out.kept, vec![a]);
        assert_eq!(out.rejected.len(), 1);
        assert_eq!(out.rejected[0].index, 1);
        assert_eq!(out.rejected[0].reason, RejectReason::Sigma);
        assert_eq!(out.rejected[0].quad, b);
        assert!(out.rejection_report().contains("1,SIGMA,4.000000,0.125000,4"));
    }

    #[test]
    fn sws_rejection_after_sigma_passes() {
        // sigma = 1.5 <= 3, mode 1, sws = 1 / 2.25 = 0.444; with eps2 = 0.5 it fails
        let (map, quad) = map_with(&[1.0, 1.0, 4.0, 4.0]);
        let cfg = TstConfig {
            eps2: 0.5,
            ..cfg()
        };
        let out = filter_boxes(&[quad], &map, &cfg);
        assert_eq!(out.rejected[0].reason, RejectReason::Sws);
    }

    #[test]
    fn low_evidence_boxes_fail_open() {
        let (map, quad) = map_with(&[2.0, 10.0]);
        let cfg = TstConfig::default();
        let out = filter_boxes(&[quad.clone()], &map, &cfg);
        assert_eq!(out.kept, vec![quad]);
        assert_eq!(out.low_evidence, vec![0]);
    }

    #[test]
    fn empty_box_list() {
        let map = StrokeWidthMap::empty(2, 2).unwrap();
        let out = filter_boxes(&[], &map, &TstConfig::default());
        assert_eq!(out, FilterOutcome::default());
    }
}
