//! Two-domain scene generator.
//!
//! Pseudo-words are square-wave meanders drawn with one constant stroke
//! width, so every word is a single connected component whose stroke widths
//! barely vary. The source domain draws them
//! dark on a flat light background. The target domain draws them with
//! jittered, often low, contrast over a value-noise texture with additive
//! noise, and adds distractors (filled ellipses and combs mixing thin and
//! thick bars) whose stroke widths vary strongly.
//!
//! Every image is generated from its own RNG derived from
//! `(seed, split, index)`, so images can be produced in any order.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{read_icdar_file, read_pgm, write_icdar_file, write_pgm};
use crate::geometry::{Point, QuadBox};
use crate::raster::GrayImage;
use crate::strokestats::{collect_widths, stroke_stats, TstConfig};
use crate::swt::{stroke_width_transform, SwtConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatagenConfig {
    pub width: usize,
    pub height: usize,
    pub words_min: usize,
    pub words_max: usize,
    pub stroke_min: usize,
    pub stroke_max: usize,
    /// Range of the light gap between neighbouring bars of a word, pixels.
    pub word_gap: (usize, usize),
    /// Largest absolute word rotation, degrees.
    pub max_rotation_deg: f64,
    pub distractors_min: usize,
    pub distractors_max: usize,
    /// Target-domain base background level range.
    pub target_background: (f64, f64),
    /// Target-domain ink contrast range (background minus ink).
    pub target_contrast: (f64, f64),
    /// Distractor contrast range (background minus distractor).
    pub distractor_contrast: (f64, f64),
    /// Peak amplitude of the target background texture.
    pub texture_amplitude: f64,
    /// Lattice spacings of the texture octaves, pixels; each octave has half
    /// the amplitude of the one before.
    pub texture_cells: Vec<f64>,
    /// Standard deviation of target additive noise.
    pub noise_sigma: f64,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            width: 96,
            height: 96,
            words_min: 1,
            words_max: 3,
            stroke_min: 3,
            stroke_max: 6,
            word_gap: (2, 2),
            max_rotation_deg: 30.0,
            distractors_min: 1,
            distractors_max: 2,
            target_background: (0.78, 0.92),
            target_contrast: (0.25, 0.45),
            distractor_contrast: (0.25, 0.5),
            texture_amplitude: 0.03,
            texture_cells: vec![48.0, 24.0],
            noise_sigma: 0.02,
        }
    }
}

impl DatagenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.width < 32 || self.height < 32 {
            return bad("images must be at least 32x32");
        }
        if self.words_min > self.words_max || self.words_max == 0 {
            return bad("need 1 <= words_max and words_min <= words_max");
        }
        if self.stroke_min < 1 || self.stroke_min > self.stroke_max {
            return bad("need 1 <= stroke_min <= stroke_max");
        }
        if self.word_gap.0 < 1 || self.word_gap.0 > self.word_gap.1 {
            return bad("need 1 <= word_gap.0 <= word_gap.1");
        }
        if self.texture_cells.iter().any(|&c| !(c >= 1.0)) {
            return bad("texture cells must be >= 1 pixel");
        }
        if self.distractors_min > self.distractors_max {
            return bad("need distractors_min <= distractors_max");
        }
        for (name, (lo, hi)) in [
            ("target_background", self.target_background),
            ("target_contrast", self.target_contrast),
            ("distractor_contrast", self.distractor_contrast),
        ] {
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return Err(Error::Config(format!("{name} must satisfy 0 < lo <= hi <= 1")));
            }
        }
        Ok(())
    }
}

/// A generated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: GrayImage,
    pub words: Vec<QuadBox>,
    /// Planted distractor regions (not text; never written as ground truth).
    pub distractors: Vec<QuadBox>,
    /// Stroke width of each word, in the same order as `words`.
    pub word_strokes: Vec<f64>,
    /// Words that could not be placed after the retry budget.
    pub dropped_words: usize,
}

/// Oriented rectangle in a local frame: centre line `a -> b`, half width
/// `r`, square caps extending `r` past both ends.
#[derive(Debug, Clone, Copy)]
struct Stroke {
    a: (f64, f64),
    b: (f64, f64),
    r: f64,
}

impl Stroke {
    fn contains(&self, u: f64, v: f64) -> bool {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len = dx.hypot(dy);
        let (tx, ty) = if len > 0.0 { (dx / len, dy / len) } else { (1.0, 0.0) };
        let (px, py) = (u - self.a.0, v - self.a.1);
        let along = px * tx + py * ty;
        let across = -px * ty + py * tx;
        along >= -self.r && along <= len + self.r && across.abs() <= self.r
    }
}

/// Union of oriented strokes and axis-aligned ellipses `(cu, cv, ru, rv)`
/// in a local frame.
struct Shape {
    strokes: Vec<Stroke>,
    ellipses: Vec<(f64, f64, f64, f64)>,
}

impl Shape {
    fn contains(&self, u: f64, v: f64) -> bool {
        self.strokes.iter().any(|st| st.contains(u, v))
            || self
                .ellipses
                .iter()
                .any(|&(cu, cv, ru, rv)| ((u - cu) / ru).powi(2) + ((v - cv) / rv).powi(2) <= 1.0)
    }
}

/// A shape in a local frame with extent `[0, w] x [0, h]`, placed with rotation `angle` about its centre at `centre`.
struct Placed {
    shape: Shape,
    w: f64,
    h: f64,
    centre: (f64, f64),
    angle: f64,
}

impl Placed {
    fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let (dx, dy) = (x - self.centre.0, y - self.centre.1);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u + self.w / 2.0, v + self.h / 2.0)
    }

    fn corners(&self) -> [Point; 4] {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        let at = |u: f64, v: f64| {
            Point::new(
                self.centre.0 + c * u - s * v,
                self.centre.1 + s * u + c * v,
            )
        };
        [at(-hw, -hh), at(hw, -hh), at(hw, hh), at(-hw, hh)]
    }

    fn quad(&self) -> QuadBox {
        QuadBox::new(self.corners()).expect("placed shapes have positive extent")
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.to_local(x, y);
        self.shape.contains(u, v)
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        self.quad().bounds()
    }
}

/// Strokes of a pseudo-word, local extent `[0, width] x [0, height]`: a
/// square-wave meander of vertical bars joined alternately at the top and
/// bottom. Only L-shaped corners occur, and bars are tall enough that the
/// stroke width transform's median pass settles the corners at the true
/// width.
fn word_strokes(
    rng: &mut ChaCha8Rng,
    stroke: f64,
    max_len: f64,
    cfg_gap: (usize, usize),
) -> (Vec<Stroke>, f64, f64) {
    let r = stroke / 2.0;
    let height = (stroke * rng.gen_range(4.5..6.0)).round();
    let mut gaps = Vec::new();
    let mut width = stroke;
    let target = rng.gen_range(3..=8usize);
    while gaps.len() + 1 < target {
        let gap = rng.gen_range(cfg_gap.0..=cfg_gap.1) as f64;
        if width + gap + stroke > max_len {
            break;
        }
        gaps.push(gap);
        width += gap + stroke;
    }
    let (top, bottom) = (r, height - r);
    let mut strokes = Vec::new();
    let mut x = r;
    let mut at_top = rng.gen_bool(0.5);
    for (i, gap) in std::iter::once(0.0).chain(gaps.iter().copied()).enumerate() {
        if i > 0 {
            let y = if at_top { top } else { bottom };
            strokes.push(Stroke {
                a: (x, y),
                b: (x + gap + stroke, y),
                r,
            });
            x += gap + stroke;
            at_top = !at_top;
        }
        strokes.push(Stroke {
            a: (x, top),
            b: (x, bottom),
            r,
        });
    }
    (strokes, width, height)
}

struct Canvas<'a> {
    cfg: &'a DatagenConfig,
    occupied: Vec<(f64, f64, f64, f64)>,
}

impl Canvas<'_> {
    /// Tries up to 100 random positions for a `w x h` shape; returns the
    /// centre and angle of a placement that stays inside the image and
    /// clear of everything placed before.
    fn place(&mut self, rng: &mut ChaCha8Rng, w: f64, h: f64, margin: f64) -> Option<((f64, f64), f64)> {
        let max_angle = self.cfg.max_rotation_deg.to_radians();
        for _ in 0..100 {
            let angle = if max_angle > 0.0 {
                rng.gen_range(-max_angle..=max_angle)
            } else {
                0.0
            };
            let (c, s) = (angle.cos().abs(), angle.sin().abs());
            let half_x = (c * w + s * h) / 2.0;
            let half_y = (s * w + c * h) / 2.0;
            let lo_x = half_x + 2.0;
            let hi_x = self.cfg.width as f64 - 1.0 - half_x - 2.0;
            let lo_y = half_y + 2.0;
            let hi_y = self.cfg.height as f64 - 1.0 - half_y - 2.0;
            if lo_x >= hi_x || lo_y >= hi_y {
                continue;
            }
            let cx = rng.gen_range(lo_x..hi_x);
            let cy = rng.gen_range(lo_y..hi_y);
            let bb = (cx - half_x - margin, cy - half_y - margin, cx + half_x + margin, cy + half_y + margin);
            let clear = self
                .occupied
                .iter()
                .all(|o| bb.2 < o.0 || o.2 < bb.0 || bb.3 < o.1 || o.3 < bb.1);
            if clear {
                self.occupied.push(bb);
                return Some(((cx, cy), angle));
            }
        }
        None
    }
}

/// Smooth value noise in roughly `[-1, 1]`: bilinear lattice noise at a few
/// octaves with smoothstep interpolation.
fn value_noise(rng: &mut ChaCha8Rng, width: usize, height: usize, cells: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; width * height];
    let mut amp = 1.0;
    let mut total = 0.0;
    for &cell in cells {
        let gw = (width as f64 / cell).ceil() as usize + 2;
        let gh = (height as f64 / cell).ceil() as usize + 2;
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for y in 0..height {
            for x in 0..width {
                let fx = x as f64 / cell;
                let fy = y as f64 / cell;
                let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
                let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
                let (tx, ty) = (smooth(fx - ix as f64), smooth(fy - iy as f64));
                let l = |i: usize, j: usize| lattice[j * gw + i];
                let top = l(ix, iy) * (1.0 - tx) + l(ix + 1, iy) * tx;
                let bot = l(ix, iy + 1) * (1.0 - tx) + l(ix + 1, iy + 1) * tx;
                out[y * width + x] += amp * (top * (1.0 - ty) + bot * ty);
            }
        }
        total += amp;
        amp *= 0.5;
    }
    out.iter_mut().for_each(|v| *v /= total.max(1.0));
    out
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn paint(data: &mut [f64], width: usize, height: usize, placed: &Placed, ink: impl Fn(usize) -> f64) {
    let (x0, y0, x1, y1) = placed.bounds();
    let xs = x0.floor().max(0.0) as usize..=(x1.ceil() as usize).min(width - 1);
    for y in y0.floor().max(0.0) as usize..=(y1.ceil() as usize).min(height - 1) {
        for x in xs.clone() {
            if placed.contains(x as f64, y as f64) {
                data[y * width + x] = ink(y * width + x);
            }
        }
    }
}

/// Builds a distractor shape sized relative to the largest word stroke
/// `unit`; the caller validates its stroke statistics.
fn distractor_shape(rng: &mut ChaCha8Rng, unit: f64, scale: f64) -> (Shape, f64, f64) {
    let thin = rng.gen_range(2..=3) as f64;
    if rng.gen_bool(0.5) {
        // blob: filled ellipse with thin spokes left, right and down
        let ru = rng.gen_range(1.0..1.6) * unit * scale;
        let rv = rng.gen_range(0.8..1.2) * unit * scale;
        let spoke = rng.gen_range(1.8..2.6) * unit * scale;
        let (w, h) = (2.0 * (ru + spoke), 2.0 * rv + spoke);
        let (cu, cv) = (w / 2.0, rv);
        let r = thin / 2.0;
        let strokes = vec![
            Stroke { a: (r, cv), b: (cu, cv), r },
            Stroke { a: (cu, cv), b: (w - r, cv), r },
            Stroke { a: (cu, cv), b: (cu, h - r), r },
        ];
        let shape = Shape {
            strokes,
            ellipses: vec![(cu, cv, ru, rv)],
        };
        (shape, w, h)
    } else {
        // comb: alternating thick and thin bars on a thin spine
        let thick = ((unit + rng.gen_range(4.0..7.0)) * scale).round();
        let bars = rng.gen_range(3..=4usize);
        let gap = 3.0;
        let height = (rng.gen_range(3.5..5.0) * unit * scale).round();
        let mut x = 0.0;
        let mut strokes = Vec::new();
        for i in 0..bars {
            let w = if i % 2 == 0 { thick } else { thin };
            strokes.push(Stroke {
                a: (x + w / 2.0, w / 2.0),
                b: (x + w / 2.0, height - w / 2.0),
                r: w / 2.0,
            });
            x += w + gap;
        }
        let width = x - gap;
        strokes.push(Stroke {
            a: (thin / 2.0, height - thin / 2.0),
            b: (width - thin / 2.0, height - thin / 2.0),
            r: thin / 2.0,
        });
        let shape = Shape {
            strokes,
            ellipses: Vec::new(),
        };
        (shape, width, height)
    }
}

/// Stroke-width standard deviation of a shape drawn alone, dark on light,
/// with the ray length the full scene would use.
fn isolated_sigma(shape: Shape, w: f64, h: f64, max_ray_len: f64) -> (f64, Shape) {
    let pad = 6.0;
    let (cw, ch) = ((w + 2.0 * pad).ceil() as usize, (h + 2.0 * pad).ceil() as usize);
    let placed = Placed {
        shape,
        w,
        h,
        centre: (cw as f64 / 2.0, ch as f64 / 2.0),
        angle: 0.0,
    };
    let mut data = vec![0.9; cw * ch];
    paint(&mut data, cw, ch, &placed, |_| 0.2);
    let image = GrayImage::new(cw, ch, data).expect("values in range");
    let cfg = SwtConfig {
        max_ray_len: Some(max_ray_len),
        ..SwtConfig::default()
    };
    let swt = stroke_width_transform(&image, &cfg).expect("ray length is positive");
    let stats = stroke_stats(&collect_widths(&swt, &placed.quad()), &TstConfig::default());
    (stats.std_dev, placed.shape)
}

pub fn render_scene(domain: Domain, seed: u64, cfg: &DatagenConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (cfg.width, cfg.height);
    let mut canvas = Canvas {
        cfg,
        occupied: Vec::new(),
    };

    let (mut data, background): (Vec<f64>, Vec<f64>) = match domain {
        Domain::Source => {
            let bg = rng.gen_range(0.8..0.95);
            (vec![bg; w * h], vec![bg; w * h])
        }
        Domain::Target => {
            let (lo, hi) = cfg.target_background;
            let base = rng.gen_range(lo..=hi);
            let noise = value_noise(&mut rng, w, h, &cfg.texture_cells);
            let bg: Vec<f64> = noise
                .iter()
                .map(|n| (base + cfg.texture_amplitude * n).clamp(0.0, 1.0))
                .collect();
            (bg.clone(), bg)
        }
    };

    let n_words = rng.gen_range(cfg.words_min..=cfg.words_max);
    let mut words = Vec::new();
    let mut word_strokes_out = Vec::new();
    let mut dropped = 0;
    let max_len = 0.8 * w.min(h) as f64;
    for _ in 0..n_words {
        let stroke = rng.gen_range(cfg.stroke_min..=cfg.stroke_max) as f64;
        let (strokes, ww, wh) = word_strokes(&mut rng, stroke, max_len, cfg.word_gap);
        let Some((centre, angle)) = canvas.place(&mut rng, ww, wh, stroke.max(3.0)) else {
            dropped += 1;
            continue;
        };
        let placed = Placed {
            shape: Shape {
                strokes,
                ellipses: Vec::new(),
            },
            w: ww,
            h: wh,
            centre,
            angle,
        };
        match domain {
            Domain::Source => {
                let ink = rng.gen_range(0.0..0.2);
                paint(&mut data, w, h, &placed, |_| ink);
            }
            Domain::Target => {
                let (lo, hi) = cfg.target_contrast;
                let contrast = rng.gen_range(lo..=hi);
                paint(&mut data, w, h, &placed, |i| (background[i] - contrast).max(0.0));
            }
        }
        words.push(placed.quad());
        word_strokes_out.push(stroke);
    }
    let mut distractors = Vec::new();
    if domain == Domain::Target {
        let ray_len = (w as f64).hypot(h as f64) / 4.0;
        let n = rng.gen_range(cfg.distractors_min..=cfg.distractors_max);
        for _ in 0..n {
            let mut accepted = None;
            for attempt in 0..20 {
                let scale = 1.0 + 0.05 * attempt as f64;
                let (shape, sw, sh) = distractor_shape(&mut rng, cfg.stroke_max as f64, scale);
                let (sigma, shape) = isolated_sigma(shape, sw, sh, ray_len);
                if sigma > 3.0 {
                    accepted = Some((shape, sw, sh));
                    break;
                }
            }
            let Some((shape, sw, sh)) = accepted else { continue };
            let Some((centre, angle)) = canvas.place(&mut rng, sw, sh, 4.0) else { continue };
            let (lo, hi) = cfg.distractor_contrast;
            let contrast = rng.gen_range(lo..=hi);
            let placed = Placed {
                shape,
                w: sw,
                h: sh,
                centre,
                angle,
            };
            paint(&mut data, w, h, &placed, |i| (background[i] - contrast).max(0.0));
            distractors.push(placed.quad());
        }
    }

    if dropped > 0 {
        eprintln!("warning: dropped {dropped} of {n_words} words that did not fit (seed {seed})");
    }

    if domain == Domain::Target && cfg.noise_sigma > 0.0 {
        for v in data.iter_mut() {
            *v = (*v + cfg.noise_sigma * gaussian(&mut rng)).clamp(0.0, 1.0);
        }
    }
    // quantise to 8 bits so in-memory scenes equal their PGM files
    for v in data.iter_mut() {
        *v = (*v * 255.0).round() / 255.0;
    }

    Ok(Scene {
        image: GrayImage::new(w, h, data)?,
        words,
        distractors,
        word_strokes: word_strokes_out,
        dropped_words: dropped,
    })
}

/// Names of the three dataset splits.
pub const SPLITS: [&str; 3] = ["source", "target_train", "target_test"];

/// Per-image seed from the dataset seed, split and index.
pub fn image_seed(seed: u64, split: usize, index: usize) -> u64 {
    // splitmix64 finaliser over a combined key
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((split as u64) << 48)
        .wrapping_add(index as u64);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn image_name(index: usize) -> String {
    format!("img_{index:05}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub n_source: usize,
    pub n_target_train: usize,
    pub n_target_test: usize,
    pub config: DatagenConfig,
    /// Per-split list of `(image id, image seed)`.
    pub images: Vec<(String, Vec<(String, u64)>)>,
}

pub fn generate_split(
    domain: Domain,
    split: usize,
    count: usize,
    seed: u64,
    cfg: &DatagenConfig,
) -> Result<Vec<Scene>> {
    (0..count)
        .into_par_iter()
        .map(|i| render_scene(domain, image_seed(seed, split, i), cfg))
        .collect()
}

/// Writes `<root>/{source,target_train,target_test}/{img_XXXXX.pgm,
/// gt_img_XXXXX.txt}` plus `manifest.json`.
pub fn make_dataset(
    root: &Path,
    n_source: usize,
    n_target_train: usize,
    n_target_test: usize,
    seed: u64,
    cfg: &DatagenConfig,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    let counts = [n_source, n_target_train, n_target_test];
    let domains = [Domain::Source, Domain::Target, Domain::Target];
    let mut images = Vec::new();
    for (split, name) in SPLITS.iter().enumerate() {
        let dir = root.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let scenes = generate_split(domains[split], split, counts[split], seed, cfg)?;
        let mut ids = Vec::new();
        for (i, scene) in scenes.iter().enumerate() {
            let id = image_name(i);
            write_pgm(&scene.image, dir.join(format!("{id}.pgm")))?;
            write_icdar_file(&scene.words, dir.join(format!("gt_{id}.txt")))?;
            ids.push((id, image_seed(seed, split, i)));
        }
        images.push((name.to_string(), ids));
    }
    let manifest = DatasetManifest {
        seed,
        n_source,
        n_target_train,
        n_target_test,
        config: cfg.clone(),
        images,
    };
    let path = root.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// An image read back from a dataset split.
#[derive(Debug, Clone)]
pub struct DatasetImage {
    pub id: String,
    pub image: GrayImage,
    pub gt: Vec<QuadBox>,
}

/// Image files of a split directory in name order.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "pgm") {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Loads images of a split; ground truth is read only when `with_gt`.
pub fn load_split(dir: &Path, with_gt: bool) -> Result<Vec<DatasetImage>> {
    list_images(dir)?
        .into_iter()
        .map(|path| {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Data(format!("bad image name {}", path.display())))?
                .to_string();
            let image = read_pgm(&path)?;
            let gt = if with_gt {
                read_icdar_file(dir.join(format!("gt_{id}.txt")))?
            } else {
                Vec::new()
            };
            Ok(DatasetImage { id, image, gt })
        })
        .collect()
}
