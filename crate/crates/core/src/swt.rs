//! Stroke Width Transform.
//!
//! Edges come from a Canny detector on Sobel derivatives (no pre-blur).
//! From every edge pixel a ray is cast along the polarity-signed gradient
//! until it meets another edge pixel; the ray is accepted only when that
//! pixel's gradient points back against the start gradient within
//! `angle_tolerance`. Accepted rays write their rounded Euclidean length to
//! every pixel they cross (keeping the minimum), then a second pass clamps
//! each ray's pixels to the ray's median width.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_4, FRAC_PI_6, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{GrayImage, StrokeWidthMap, NO_STROKE};

/// Which side of an edge the stroke lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Dark strokes on a light background: rays follow the negative gradient.
    DarkOnLight,
    /// Light strokes on a dark background: rays follow the gradient.
    LightOnDark,
    /// Run both polarities and keep the smaller width per pixel.
    Both,
}

impl Polarity {
    pub fn flipped(self) -> Self {
        match self {
            Polarity::DarkOnLight => Polarity::LightOnDark,
            Polarity::LightOnDark => Polarity::DarkOnLight,
            Polarity::Both => Polarity::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwtConfig {
    /// Hysteresis thresholds on Sobel magnitude divided by 4, so a unit step
    /// edge has magnitude 1.
    pub canny_low: f64,
    pub canny_high: f64,
    pub polarity: Polarity,
    /// Longest ray in pixels; `None` uses a quarter of the image diagonal.
    pub max_ray_len: Option<f64>,
    pub angle_tolerance: f64,
}

impl Default for SwtConfig {
    fn default() -> Self {
        Self {
            canny_low: 0.1,
            canny_high: 0.3,
            polarity: Polarity::DarkOnLight,
            max_ray_len: None,
            angle_tolerance: FRAC_PI_6,
        }
    }
}

impl SwtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.canny_low > 0.0 && self.canny_low < self.canny_high) {
            return Err(Error::Config(format!(
                "canny thresholds need 0 < low < high, got low={} high={}",
                self.canny_low, self.canny_high
            )));
        }
        if let Some(len) = self.max_ray_len {
            if !(len >= 1.0) {
                return Err(Error::Config(format!("max_ray_len must be >= 1, got {len}")));
            }
        }
        if !(self.angle_tolerance > 0.0 && self.angle_tolerance < PI) {
            return Err(Error::Config(format!(
                "angle_tolerance must be in (0, pi), got {}",
                self.angle_tolerance
            )));
        }
        Ok(())
    }

    fn ray_limit(&self, image: &GrayImage) -> f64 {
        self.max_ray_len.unwrap_or_else(|| (image.diagonal() / 4.0).max(1.0))
    }
}

/// Thin edges with the unit gradient direction at each edge pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMask {
    width: usize,
    height: usize,
    directions: Vec<Option<[f64; 2]>>,
}

impl EdgeMask {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_edge(&self, x: usize, y: usize) -> bool {
        self.directions[y * self.width + x].is_some()
    }

    /// Unit gradient (pointing towards brighter pixels) at an edge pixel.
    pub fn direction(&self, x: usize, y: usize) -> Option<[f64; 2]> {
        self.directions[y * self.width + x]
    }

    pub fn edge_count(&self) -> usize {
        self.directions.iter().filter(|d| d.is_some()).count()
    }

    pub fn edge_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.directions
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_some())
            .map(|(i, _)| (i % self.width, i / self.width))
    }
}

/// Sobel derivatives with replicated borders.
pub(crate) fn sobel(image: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (image.width(), image.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| image.get_clamped(x + dx, y + dy);
            let i = y as usize * w + x as usize;
            gx[i] = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            gy[i] = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        }
    }
    (gx, gy)
}

pub fn detect_edges(image: &GrayImage, cfg: &SwtConfig) -> Result<EdgeMask> {
    cfg.validate()?;
    let (w, h) = (image.width(), image.height());
    let (gx, gy) = sobel(image);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b) / 4.0).collect();

    // non-maximum suppression along the quantised gradient direction
    let mut thin = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m < cfg.canny_low {
                continue;
            }
            let mut angle = gy[i].atan2(gx[i]);
            if angle < 0.0 {
                angle += PI;
            }
            let (dx, dy): (isize, isize) = match ((angle / FRAC_PI_4).round() as usize) % 4 {
                0 => (1, 0),
                1 => (1, 1),
                2 => (0, 1),
                _ => (-1, 1),
            };
            let at = |sx: isize, sy: isize| -> f64 {
                let nx = x as isize + sx;
                let ny = y as isize + sy;
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    0.0
                } else {
                    mag[ny as usize * w + nx as usize]
                }
            };
            let before = at(-dx, -dy);
            let after = at(dx, dy);
            thin[i] = m > before && m >= after;
        }
    }

    // hysteresis
    let mut keep = vec![false; w * h];
    let mut queue = VecDeque::new();
    for i in 0..w * h {
        if thin[i] && mag[i] >= cfg.canny_high {
            keep[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if thin[j] && !keep[j] {
                    keep[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }

    let directions = (0..w * h)
        .map(|i| {
            keep[i].then(|| {
                let n = gx[i].hypot(gy[i]);
                [gx[i] / n, gy[i] / n]
            })
        })
        .collect();
    Ok(EdgeMask {
        width: w,
        height: h,
        directions,
    })
}

/// Grid cells crossed by a ray from the centre of `start`, in order.
struct RayWalk {
    cx: isize,
    cy: isize,
    step_x: isize,
    step_y: isize,
    t_max_x: f64,
    t_max_y: f64,
    t_delta_x: f64,
    t_delta_y: f64,
}

impl RayWalk {
    fn new(start: (usize, usize), dir: [f64; 2]) -> Self {
        let axis = |d: f64| -> (isize, f64, f64) {
            if d > 0.0 {
                (1, 0.5 / d, 1.0 / d)
            } else if d < 0.0 {
                (-1, 0.5 / -d, 1.0 / -d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (step_x, t_max_x, t_delta_x) = axis(dir[0]);
        let (step_y, t_max_y, t_delta_y) = axis(dir[1]);
        Self {
            cx: start.0 as isize,
            cy: start.1 as isize,
            step_x,
            step_y,
            t_max_x,
            t_max_y,
            t_delta_x,
            t_delta_y,
        }
    }
}

impl Iterator for RayWalk {
    type Item = (isize, isize);

    fn next(&mut self) -> Option<Self::Item> {
        if self.t_max_x <= self.t_max_y {
            self.cx += self.step_x;
            self.t_max_x += self.t_delta_x;
        } else {
            self.cy += self.step_y;
            self.t_max_y += self.t_delta_y;
        }
        Some((self.cx, self.cy))
    }
}

struct Ray {
    cells: Vec<usize>,
}

fn cast_rays(edges: &EdgeMask, sign: f64, max_len: f64, cos_tol: f64) -> Vec<(Ray, f64)> {
    let (w, h) = (edges.width, edges.height);
    let mut rays = Vec::new();
    for (x0, y0) in edges.edge_pixels() {
        let g = edges.direction(x0, y0).expect("edge pixel has a direction");
        let dir = [sign * g[0], sign * g[1]];
        let mut cells = vec![y0 * w + x0];
        for (cx, cy) in RayWalk::new((x0, y0), dir) {
            if cx < 0 || cy < 0 || cx >= w as isize || cy >= h as isize {
                break;
            }
            let (ux, uy) = (cx as usize, cy as usize);
            let dist = ((ux as f64 - x0 as f64).powi(2) + (uy as f64 - y0 as f64).powi(2)).sqrt();
            if dist > max_len {
                break;
            }
            cells.push(uy * w + ux);
            if let Some(q) = edges.direction(ux, uy) {
                // opposing gradient: angle(q, -g) <= tolerance
                if -(g[0] * q[0] + g[1] * q[1]) >= cos_tol {
                    rays.push((Ray { cells }, dist.round().max(1.0)));
                }
                break;
            }
        }
    }
    rays
}

fn single_polarity(image: &GrayImage, edges: &EdgeMask, cfg: &SwtConfig, sign: f64) -> Vec<f64> {
    let rays = cast_rays(edges, sign, cfg.ray_limit(image), cfg.angle_tolerance.cos());
    let mut widths = vec![NO_STROKE; image.len()];
    for (ray, len) in &rays {
        for &c in &ray.cells {
            if widths[c] == NO_STROKE || *len < widths[c] {
                widths[c] = *len;
            }
        }
    }
    let mut buf = Vec::new();
    for (ray, _) in &rays {
        buf.clear();
        buf.extend(ray.cells.iter().map(|&c| widths[c]));
        buf.sort_by(f64::total_cmp);
        let median = buf[buf.len() / 2];
        for &c in &ray.cells {
            if widths[c] > median {
                widths[c] = median;
            }
        }
    }
    widths
}

pub fn stroke_width_transform(image: &GrayImage, cfg: &SwtConfig) -> Result<StrokeWidthMap> {
    let edges = detect_edges(image, cfg)?;
    let data = match cfg.polarity {
        Polarity::DarkOnLight => single_polarity(image, &edges, cfg, -1.0),
        Polarity::LightOnDark => single_polarity(image, &edges, cfg, 1.0),
        Polarity::Both => {
            let a = single_polarity(image, &edges, cfg, -1.0);
            let b = single_polarity(image, &edges, cfg, 1.0);
            a.iter()
                .zip(&b)
                .map(|(&u, &v)| match (u == NO_STROKE, v == NO_STROKE) {
                    (true, _) => v,
                    (_, true) => u,
                    _ => u.min(v),
                })
                .collect()
        }
    };
    Ok(StrokeWidthMap::from_raw(image.width(), image.height(), data))
}
