//! Handcrafted per-pixel features feeding the toy backbone.
//!
//! Channels, each mapped into `[-1, 1]` with fixed constants:
//!
//! | # | feature                       | normalisation          |
//! |---|-------------------------------|------------------------|
//! | 0 | intensity                     | `2v - 1`               |
//! | 1 | 3x3 mean                      | `2m - 1`               |
//! | 2 | 3x3 population std            | `s / 0.5`              |
//! | 3 | Sobel gradient magnitude      | `g / (4 sqrt 2)`       |
//! | 4 | 4-neighbour Laplacian         | `l / 4`                |
//!
//! Borders replicate the edge pixel.

use crate::raster::GrayImage;
use crate::swt::sobel;

pub const NUM_FEATURES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRaster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FeatureRaster {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn num_features(&self) -> usize {
        NUM_FEATURES
    }

    /// Features of pixel `i` (row-major index).
    #[inline]
    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.data[i * NUM_FEATURES..(i + 1) * NUM_FEATURES]
    }

    pub fn channel(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(c).step_by(NUM_FEATURES).copied()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

pub fn extract_features(image: &GrayImage) -> FeatureRaster {
    let (w, h) = (image.width(), image.height());
    let (gx, gy) = sobel(image);
    let grad_scale = 4.0 * std::f64::consts::SQRT_2;
    let mut data = Vec::with_capacity(w * h * NUM_FEATURES);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = image.get_clamped(x, y);
            // offsets from the centre keep flat patches exactly flat
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let d = image.get_clamped(x + dx, y + dy) - c;
                    sum += d;
                    sum_sq += d * d;
                }
            }
            let offset = sum / 9.0;
            let mean = c + offset;
            let std = (sum_sq / 9.0 - offset * offset).max(0.0).sqrt();
            let lap = (image.get_clamped(x - 1, y) - c)
                + (image.get_clamped(x + 1, y) - c)
                + (image.get_clamped(x, y - 1) - c)
                + (image.get_clamped(x, y + 1) - c);
            let i = y as usize * w + x as usize;
            data.extend_from_slice(&[
                2.0 * c - 1.0,
                2.0 * mean - 1.0,
                (std / 0.5).min(1.0),
                (gx[i].hypot(gy[i]) / grad_scale).min(1.0),
                lap / 4.0,
            ]);
        }
    }
    FeatureRaster {
        width: w,
        height: h,
        data,
    }
}
