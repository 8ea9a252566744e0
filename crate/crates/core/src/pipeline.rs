//! Two-stage adaptation: adversarial pretraining, stroke-width filtered
//! pseudo-labels on the target domain, then fine-tuning on those labels.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::DatasetImage;
use crate::error::{Error, Result};
use crate::eval::{evaluate, DetectionMetrics, ImageBoxes, DEFAULT_IOU_THRESHOLD};
use crate::features::extract_features;
use crate::formats::{encode_model, read_icdar_file, read_partition, write_icdar_file, write_partition};
use crate::geometry::{min_area_rect, Point, QuadBox};
use crate::losses::{select_negatives, LossConfig};
use crate::raster::{GrayImage, PixelPartition, PixelState, ScoreMap};
use crate::strokestats::{filter_boxes, BoxStrokeStats, RejectReason, TstConfig};
use crate::swt::{stroke_width_transform, SwtConfig};
use crate::toymodel::{
    predict_from_features, pretrain, train, AtaConfig, Diagnostics, PseudoTarget, SourceSample,
    TargetSample, ToyModel,
};

/// Runs `f` on a dedicated pool of `jobs` threads, or on the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--jobs must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Binary score map with every pixel centre inside a non-ignored quad set.
pub fn boxes_to_scoremap(boxes: &[QuadBox], width: usize, height: usize) -> ScoreMap {
    let mut data = vec![0.0; width * height];
    for quad in boxes.iter().filter(|q| !q.ignore) {
        for (x, y) in quad.covered_pixels(width, height) {
            data[y * width + x] = 1.0;
        }
    }
    ScoreMap::new(width, height, data).expect("binary data is in range")
}

/// Thresholds `scores` (`>= score_threshold`), groups 8-connected pixels and
/// fits a minimum-area rectangle around each component's pixel squares.
/// Boxes under `min_box_area` are dropped; confidence is the component's
/// mean score.
pub fn extract_boxes(scores: &ScoreMap, score_threshold: f64, min_box_area: f64) -> Result<Vec<QuadBox>> {
    if !(score_threshold > 0.0 && score_threshold < 1.0) {
        return Err(Error::Config(format!(
            "score threshold must be in (0, 1), got {score_threshold}"
        )));
    }
    let (w, h) = (scores.width(), scores.height());
    let on: Vec<bool> = scores.data().iter().map(|&s| s >= score_threshold).collect();
    let mut seen = vec![false; w * h];
    let mut boxes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !on[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut corners = Vec::new();
        let mut sum = 0.0;
        let mut count = 0usize;
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            sum += scores.data()[i];
            count += 1;
            let (fx, fy) = (x as f64, y as f64);
            corners.extend([
                Point::new(fx - 0.5, fy - 0.5),
                Point::new(fx + 0.5, fy - 0.5),
                Point::new(fx + 0.5, fy + 0.5),
                Point::new(fx - 0.5, fy + 0.5),
            ]);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if on[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        let Some(rect) = min_area_rect(&corners) else { continue };
        let quad = QuadBox::new(rect)?.with_confidence(sum / count as f64);
        if quad.area() >= min_box_area {
            boxes.push(quad);
        }
    }
    Ok(boxes)
}

/// Predicted boxes for one image.
pub fn detect(model: &ToyModel, image: &GrayImage, tst: &TstConfig) -> Result<Vec<QuadBox>> {
    let scores = predict_from_features(model, &extract_features(image))?;
    extract_boxes(&scores, tst.score_threshold, tst.min_box_area)
}

/// Detection metrics of `model` on images with ground truth.
pub fn evaluate_model(model: &ToyModel, images: &[DatasetImage], tst: &TstConfig) -> Result<DetectionMetrics> {
    let preds: Vec<ImageBoxes> = images
        .par_iter()
        .map(|img| Ok(ImageBoxes::new(img.id.clone(), detect(model, &img.image, tst)?)))
        .collect::<Result<_>>()?;
    let gts: Vec<ImageBoxes> = images
        .iter()
        .map(|img| ImageBoxes::new(img.id.clone(), img.gt.clone()))
        .collect();
    evaluate(&preds, &gts, DEFAULT_IOU_THRESHOLD)
}

/// Machine-made annotation of one target image.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub id: String,
    /// Boxes that survived the stroke-width filter.
    pub boxes: Vec<QuadBox>,
    pub partition: PixelPartition,
    pub extracted: usize,
    pub rejected_sigma: usize,
    pub rejected_sws: usize,
    pub low_evidence: usize,
    /// Statistics of every extracted box.
    pub stats: Vec<BoxStrokeStats>,
}

impl PseudoLabel {
    pub fn positive_map(&self) -> ScoreMap {
        self.partition.positive_map()
    }
}

pub fn pseudo_label_image(
    model: &ToyModel,
    id: &str,
    image: &GrayImage,
    tst: &TstConfig,
    swt: &SwtConfig,
) -> Result<PseudoLabel> {
    let scores = predict_from_features(model, &extract_features(image))?;
    let extracted = extract_boxes(&scores, tst.score_threshold, tst.min_box_area)?;
    let widths = stroke_width_transform(image, swt)?;
    let outcome = filter_boxes(&extracted, &widths, tst);
    let (w, h) = (image.width(), image.height());
    let positive = boxes_to_scoremap(&outcome.kept, w, h);
    let candidates: Vec<bool> = positive.data().iter().map(|&v| v == 0.0).collect();
    let partition = select_negatives(&scores, &candidates, tst.eta)?;
    let count = |r: RejectReason| outcome.rejected.iter().filter(|x| x.reason == r).count();
    Ok(PseudoLabel {
        id: id.to_string(),
        extracted: extracted.len(),
        rejected_sigma: count(RejectReason::Sigma),
        rejected_sws: count(RejectReason::Sws),
        low_evidence: outcome.low_evidence.len(),
        stats: outcome.stats,
        boxes: outcome.kept,
        partition,
    })
}

/// Pseudo-labels for every image, in input order; images are processed in
/// parallel but each result depends only on its own image.
pub fn generate_pseudo_labels(
    model: &ToyModel,
    images: &[DatasetImage],
    tst: &TstConfig,
    swt: &SwtConfig,
) -> Result<Vec<PseudoLabel>> {
    tst.validate()?;
    swt.validate()?;
    images
        .par_iter()
        .map(|img| pseudo_label_image(model, &img.id, &img.image, tst, swt))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabelSummary {
    pub images: usize,
    pub boxes_extracted: usize,
    pub boxes_kept: usize,
    pub rejected_sigma: usize,
    pub rejected_sws: usize,
    pub low_evidence: usize,
    pub positive_pixels: usize,
    pub negative_kept_pixels: usize,
    pub ignored_pixels: usize,
}

pub fn summarize(labels: &[PseudoLabel]) -> PseudoLabelSummary {
    let mut s = PseudoLabelSummary {
        images: labels.len(),
        ..Default::default()
    };
    for l in labels {
        s.boxes_extracted += l.extracted;
        s.boxes_kept += l.boxes.len();
        s.rejected_sigma += l.rejected_sigma;
        s.rejected_sws += l.rejected_sws;
        s.low_evidence += l.low_evidence;
        s.positive_pixels += l.partition.count(PixelState::Positive);
        s.negative_kept_pixels += l.partition.count(PixelState::NegativeKept);
        s.ignored_pixels += l.partition.count(PixelState::Ignored);
    }
    s
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the canonical JSON encoding of a configuration.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("configs serialise"))
}

pub fn model_hash(model: &ToyModel) -> String {
    sha256_hex(&encode_model(model))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelEntry {
    pub id: String,
    /// Dataset image seed, when known.
    pub seed: Option<u64>,
    pub boxes_extracted: usize,
    pub boxes_kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelManifest {
    pub model_hash: String,
    pub tst_config_hash: String,
    pub swt_config_hash: String,
    pub tst: TstConfig,
    pub swt: SwtConfig,
    pub summary: PseudoLabelSummary,
    pub images: Vec<PseudoLabelEntry>,
}

/// Writes `<id>.txt` (kept boxes) and `<id>.smap` (partition codes) per
/// image plus `manifest.json`.
pub fn save_pseudo_labels(
    dir: &Path,
    labels: &[PseudoLabel],
    model: &ToyModel,
    tst: &TstConfig,
    swt: &SwtConfig,
    seeds: &dyn Fn(&str) -> Option<u64>,
) -> Result<PseudoLabelManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for l in labels {
        write_icdar_file(&l.boxes, dir.join(format!("{}.txt", l.id)))?;
        write_partition(&l.partition, dir.join(format!("{}.smap", l.id)))?;
    }
    let manifest = PseudoLabelManifest {
        model_hash: model_hash(model),
        tst_config_hash: config_hash(tst),
        swt_config_hash: config_hash(swt),
        tst: tst.clone(),
        swt: swt.clone(),
        summary: summarize(labels),
        images: labels
            .iter()
            .map(|l| PseudoLabelEntry {
                id: l.id.clone(),
                seed: seeds(&l.id),
                boxes_extracted: l.extracted,
                boxes_kept: l.boxes.len(),
            })
            .collect(),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Stored pseudo-label of one image: kept boxes and the pixel partition.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredPseudoLabel {
    pub id: String,
    pub boxes: Vec<QuadBox>,
    pub partition: PixelPartition,
}

pub fn load_pseudo_labels(dir: &Path) -> Result<(PseudoLabelManifest, Vec<StoredPseudoLabel>)> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: PseudoLabelManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let labels = manifest
        .images
        .iter()
        .map(|entry| {
            Ok(StoredPseudoLabel {
                id: entry.id.clone(),
                boxes: read_icdar_file(dir.join(format!("{}.txt", entry.id)))?,
                partition: read_partition(dir.join(format!("{}.smap", entry.id)))?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((manifest, labels))
}

pub fn source_samples(images: &[DatasetImage]) -> Vec<SourceSample> {
    images
        .par_iter()
        .map(|img| SourceSample {
            features: extract_features(&img.image),
            gt: boxes_to_scoremap(&img.gt, img.image.width(), img.image.height()),
        })
        .collect()
}

/// Target samples without labels; the images' ground truth is not read.
pub fn unlabelled_targets(images: &[DatasetImage]) -> Vec<TargetSample> {
    images
        .par_iter()
        .map(|img| TargetSample {
            features: extract_features(&img.image),
            pseudo: None,
        })
        .collect()
}

/// Attaches pseudo-labels (matched by id) to target images.
pub fn pseudo_targets(images: &[DatasetImage], labels: &[StoredPseudoLabel]) -> Result<Vec<TargetSample>> {
    images
        .par_iter()
        .map(|img| {
            let label = labels
                .iter()
                .find(|l| l.id == img.id)
                .ok_or_else(|| Error::Data(format!("no pseudo-label for image {}", img.id)))?;
            let (w, h) = (img.image.width(), img.image.height());
            if label.partition.width() != w || label.partition.height() != h {
                return Err(Error::Dimension(format!(
                    "pseudo-label for {} is {}x{}, image is {w}x{h}",
                    img.id,
                    label.partition.width(),
                    label.partition.height()
                )));
            }
            Ok(TargetSample {
                features: extract_features(&img.image),
                pseudo: Some(PseudoTarget {
                    gt: label.partition.positive_map(),
                    partition: label.partition.clone(),
                }),
            })
        })
        .collect()
}

impl From<&PseudoLabel> for StoredPseudoLabel {
    fn from(l: &PseudoLabel) -> Self {
        Self {
            id: l.id.clone(),
            boxes: l.boxes.clone(),
            partition: l.partition.clone(),
        }
    }
}

/// Continues training `model` with the weak loss on pseudo-labelled target
/// images. Without `ata` the domain branch is switched off.
pub fn fine_tune(
    model: &ToyModel,
    source: &[SourceSample],
    target: &[TargetSample],
    cfg: &AtaConfig,
    loss: LossConfig,
    ata: bool,
) -> Result<(ToyModel, Vec<Diagnostics>)> {
    if target.iter().any(|t| t.pseudo.is_none()) {
        return Err(Error::Data("fine-tuning needs a pseudo-label for every target image".into()));
    }
    let mut cfg = cfg.clone();
    if !ata {
        cfg.lambda = 0.0;
        cfg.domain_branch = false;
    }
    let out = train(model, source, target, &cfg, loss)?;
    Ok((out.model, out.curve))
}

/// Settings for the full two-stage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub pretrain: AtaConfig,
    pub finetune_iters: usize,
    /// Fine-tune learning rate; `None` reuses the pretrain rate.
    pub finetune_lr: Option<f64>,
    pub tst: TstConfig,
    pub swt: SwtConfig,
    pub loss: LossConfig,
    pub skip_selftrain: bool,
    /// Keep the domain branch and reversal layer active while fine-tuning.
    pub ata_during_finetune: bool,
    /// Pseudo-label / fine-tune rounds.
    pub rounds: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            pretrain: AtaConfig::default(),
            finetune_iters: 2000,
            finetune_lr: None,
            tst: TstConfig::default(),
            swt: SwtConfig::default(),
            loss: LossConfig::default(),
            skip_selftrain: false,
            ata_during_finetune: true,
            rounds: 1,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        self.pretrain.validate()?;
        self.tst.validate()?;
        self.swt.validate()?;
        self.loss.validate()?;
        if let Some(lr) = self.finetune_lr {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Config("fine-tune learning rate must be positive and finite".into()));
            }
        }
        if self.rounds == 0 && !self.skip_selftrain {
            return Err(Error::Config("rounds must be >= 1 unless self-training is skipped".into()));
        }
        Ok(())
    }
}

/// Summary of a training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub iters: usize,
    pub final_diagnostics: Option<Diagnostics>,
    pub model_hash: String,
    /// Metrics on the held-out evaluation set, if one was given.
    pub eval: Option<DetectionMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    pub config_hash: String,
    pub config: AdaptConfig,
    pub stages: Vec<StageReport>,
    pub pseudo_labels: Vec<PseudoLabelSummary>,
}

/// Everything produced by [`adapt`].
#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub model: ToyModel,
    pub report: AdaptReport,
    pub pretrain_curve: Vec<Diagnostics>,
    pub finetune_curve: Vec<Diagnostics>,
    /// Labels of the last round.
    pub pseudo_labels: Vec<PseudoLabel>,
}

/// Pretrain, then for each round pseudo-label the target images and
/// fine-tune. `eval_set` (with ground truth) is only used for reporting.
pub fn adapt(
    source: &[DatasetImage],
    target: &[DatasetImage],
    cfg: &AdaptConfig,
    eval_set: Option<&[DatasetImage]>,
) -> Result<AdaptOutcome> {
    cfg.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::Data("adaptation needs source and target images".into()));
    }
    let score = |m: &ToyModel| eval_set.map(|e| evaluate_model(m, e, &cfg.tst)).transpose();
    let src = source_samples(source);
    let tgt = unlabelled_targets(target);

    let pre = pretrain(&src, &tgt, &cfg.pretrain, cfg.loss)?;
    let mut model = pre.model;
    let mut stages = vec![StageReport {
        stage: "pretrain".into(),
        iters: cfg.pretrain.iters,
        final_diagnostics: pre.curve.last().copied(),
        model_hash: model_hash(&model),
        eval: score(&model)?,
    }];
    let mut summaries = Vec::new();
    let mut finetune_curve = Vec::new();
    let mut last_labels = Vec::new();

    if !cfg.skip_selftrain {
        for round in 0..cfg.rounds {
            let labels = generate_pseudo_labels(&model, target, &cfg.tst, &cfg.swt)?;
            summaries.push(summarize(&labels));
            let stored: Vec<StoredPseudoLabel> = labels.iter().map(StoredPseudoLabel::from).collect();
            let labelled = pseudo_targets(target, &stored)?;
            let mut ft_cfg = cfg.pretrain.clone();
            ft_cfg.iters = cfg.finetune_iters;
            if let Some(lr) = cfg.finetune_lr {
                ft_cfg.lr = lr;
            }
            ft_cfg.seed = cfg.pretrain.seed.wrapping_add(1 + round as u64);
            let (next, curve) = fine_tune(&model, &src, &labelled, &ft_cfg, cfg.loss, cfg.ata_during_finetune)?;
            model = next;
            stages.push(StageReport {
                stage: format!("finetune_{}", round + 1),
                iters: cfg.finetune_iters,
                final_diagnostics: curve.last().copied(),
                model_hash: model_hash(&model),
                eval: score(&model)?,
            });
            finetune_curve.extend(curve);
            last_labels = labels;
        }
    }

    Ok(AdaptOutcome {
        report: AdaptReport {
            config_hash: config_hash(cfg),
            config: cfg.clone(),
            stages,
            pseudo_labels: summaries,
        },
        model,
        pretrain_curve: pre.curve,
        finetune_curve,
        pseudo_labels: last_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_map(w: usize, h: usize, blocks: &[(usize, usize, usize, usize)]) -> ScoreMap {
        let mut data = vec![0.0; w * h];
        for &(x0, y0, x1, y1) in blocks {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    data[y * w + x] = 0.9;
                }
            }
        }
        ScoreMap::new(w, h, data).unwrap()
    }

    #[test]
    fn zero_map_has_no_boxes() {
        let m = ScoreMap::zeros(10, 10).unwrap();
        assert!(extract_boxes(&m, 0.8, 16.0).unwrap().is_empty());
    }

    #[test]
    fn single_block_box_matches_bounds() {
        let m = block_map(30, 20, &[(4, 3, 15, 9)]);
        let boxes = extract_boxes(&m, 0.8, 16.0).unwrap();
        assert_eq!(boxes.len(), 1);
        let (x0, y0, x1, y1) = boxes[0].bounds();
        for (got, want) in [(x0, 4.0), (y0, 3.0), (x1, 15.0), (y1, 9.0)] {
            assert!((got - want).abs() <= 1.0, "{got} vs {want}");
        }
        assert!((boxes[0].confidence.unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn two_blocks_two_boxes_and_area_filter() {
        let m = block_map(30, 20, &[(1, 1, 8, 8), (15, 10, 25, 15), (28, 18, 28, 18)]);
        assert_eq!(extract_boxes(&m, 0.8, 16.0).unwrap().len(), 2);
        assert_eq!(extract_boxes(&m, 0.8, 0.5).unwrap().len(), 3);
    }

    #[test]
    fn diagonal_neighbours_join() {
        let m = block_map(10, 10, &[(1, 1, 3, 3), (4, 4, 6, 6)]);
        assert_eq!(extract_boxes(&m, 0.8, 1.0).unwrap().len(), 1);
    }

    #[test]
    fn scoremap_of_boxes() {
        let q = QuadBox::axis_aligned(1.0, 1.0, 2.0, 3.0).unwrap();
        let ign = QuadBox::axis_aligned(4.0, 0.0, 5.0, 1.0).unwrap().with_ignore(true);
        let m = boxes_to_scoremap(&[q, ign], 6, 5);
        assert_eq!(m.data().iter().filter(|&&v| v == 1.0).count(), 6);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = TstConfig::default();
        let b = TstConfig {
            eta: 0.5,
            ..TstConfig::default()
        };
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
