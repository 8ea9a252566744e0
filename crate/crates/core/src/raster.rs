//! Row-major rasters: luminance images, score maps, stroke-width maps and
//! per-pixel label partitions.
//!
//! Pixel `(x, y)` is the unit square centred on the integer point `(x, y)`;
//! box geometry in [`crate::geometry`] uses the same frame.

use crate::error::{Error, Result};

fn check_shape(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Dimension(format!(
            "raster must be at least 1x1, got {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::Dimension(format!(
            "{width}x{height} raster needs {} values, got {len}",
            width.saturating_mul(height)
        )));
    }
    Ok(())
}

fn check_unit_interval(data: &[f64], what: &str) -> Result<()> {
    if let Some((i, v)) = data
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::Data(format!(
            "{what} value {v} at index {i} is outside [0, 1]"
        )));
    }
    Ok(())
}

macro_rules! raster_accessors {
    ($ty:ty) => {
        impl $ty {
            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            pub fn data(&self) -> &[f64] {
                &self.data
            }

            #[inline]
            pub fn get(&self, x: usize, y: usize) -> f64 {
                self.data[y * self.width + x]
            }

            pub fn same_shape(&self, width: usize, height: usize) -> bool {
                self.width == width && self.height == height
            }
        }
    };
}

/// Luminance image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

raster_accessors!(GrayImage);

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(width, height, data.len())?;
        check_unit_interval(&data, "luminance")?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    /// Builds an image from 8-bit samples, `luminance = byte / 255`.
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        check_shape(width, height, bytes.len())?;
        Ok(Self {
            width,
            height,
            data: bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Photometric negative, `1 - v`.
    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// Clamped read; out-of-range coordinates replicate the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }
}

/// Per-pixel text confidence. Ground-truth maps hold exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

raster_accessors!(ScoreMap);

impl ScoreMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(width, height, data.len())?;
        check_unit_interval(&data, "score")?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; width.saturating_mul(height)])
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// Sentinel for pixels not covered by any accepted stroke ray.
pub const NO_STROKE: f64 = -1.0;

/// Per-pixel stroke width in pixels, or [`NO_STROKE`].
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeWidthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

raster_accessors!(StrokeWidthMap);

impl StrokeWidthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(width, height, data.len())?;
        let diag = (width as f64).hypot(height as f64);
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, &v)| v != NO_STROKE && !(1.0..=diag).contains(&v))
        {
            return Err(Error::Data(format!(
                "stroke width {v} at index {i} is outside [1, {diag:.3}]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![NO_STROKE; width.saturating_mul(height)])
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(width * height, data.len());
        Self {
            width,
            height,
            data,
        }
    }

    pub fn is_stroke(&self, x: usize, y: usize) -> bool {
        self.get(x, y) != NO_STROKE
    }

    pub fn stroke_pixel_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != NO_STROKE).count()
    }
}

/// Training state of one pixel in a pseudo-label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PixelState {
    Ignored,
    NegativeKept,
    Positive,
}

impl PixelState {
    /// Numeric code used in partition rasters on disk.
    pub fn code(self) -> u8 {
        match self {
            PixelState::Ignored => 0,
            PixelState::NegativeKept => 1,
            PixelState::Positive => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(PixelState::Ignored),
            1 => Some(PixelState::NegativeKept),
            2 => Some(PixelState::Positive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelPartition {
    width: usize,
    height: usize,
    states: Vec<PixelState>,
}

impl PixelPartition {
    pub fn new(width: usize, height: usize, states: Vec<PixelState>) -> Result<Self> {
        check_shape(width, height, states.len())?;
        Ok(Self {
            width,
            height,
            states,
        })
    }

    pub fn filled(width: usize, height: usize, state: PixelState) -> Result<Self> {
        Self::new(width, height, vec![state; width.saturating_mul(height)])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn states(&self) -> &[PixelState] {
        &self.states
    }

    pub fn get(&self, x: usize, y: usize) -> PixelState {
        self.states[y * self.width + x]
    }

    pub fn count(&self, state: PixelState) -> usize {
        self.states.iter().filter(|&&s| s == state).count()
    }

    /// Binary ground-truth map with POSITIVE pixels set to 1.
    pub fn positive_map(&self) -> ScoreMap {
        ScoreMap {
            width: self.width,
            height: self.height,
            data: self
                .states
                .iter()
                .map(|&s| if s == PixelState::Positive { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Encodes the partition as a score raster (0, 1, 2) for SMAP storage.
    pub fn to_codes(&self) -> Vec<f64> {
        self.states.iter().map(|s| f64::from(s.code())).collect()
    }

    pub fn from_codes(width: usize, height: usize, codes: &[f64]) -> Result<Self> {
        check_shape(width, height, codes.len())?;
        let states = codes
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if c.fract() == 0.0 && (0.0..=2.0).contains(&c) {
                    Ok(PixelState::from_code(c as u8).expect("code range checked"))
                } else {
                    Err(Error::Data(format!(
                        "partition code {c} at index {i} is not 0, 1 or 2"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            width,
            height,
            states,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        assert!(GrayImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ScoreMap::new(3, 1, vec![0.0; 4]).is_err());
        assert!(StrokeWidthMap::new(2, 2, vec![NO_STROKE; 5]).is_err());
        assert!(PixelPartition::new(1, 2, vec![PixelState::Ignored]).is_err());
        assert!(GrayImage::new(0, 0, vec![]).is_err());
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(GrayImage::new(1, 1, vec![1.5]).is_err());
        assert!(ScoreMap::new(1, 1, vec![-0.1]).is_err());
        assert!(ScoreMap::new(1, 1, vec![f64::NAN]).is_err());
        assert!(StrokeWidthMap::new(2, 2, vec![0.5, NO_STROKE, 1.0, 2.0]).is_err());
        // diagonal of 2x2 is 2.83
        assert!(StrokeWidthMap::new(2, 2, vec![3.0, NO_STROKE, 1.0, 2.0]).is_err());
    }

    #[test]
    fn byte_conversion_round_trips() {
        let bytes: Vec<u8> = (0..=255).collect();
        let img = GrayImage::from_bytes(16, 16, &bytes).unwrap();
        assert_eq!(img.to_bytes(), bytes);
        assert_eq!(img.data()[0], 0.0);
        assert_eq!(img.data()[255], 1.0);
    }

    #[test]
    fn partition_codes_round_trip() {
        use PixelState::*;
        let p = PixelPartition::new(3, 1, vec![Ignored, NegativeKept, Positive]).unwrap();
        assert_eq!(p.to_codes(), vec![0.0, 1.0, 2.0]);
        assert_eq!(PixelPartition::from_codes(3, 1, &p.to_codes()).unwrap(), p);
        assert!(PixelPartition::from_codes(1, 1, &[1.5]).is_err());
        assert_eq!(p.positive_map().data(), &[0.0, 0.0, 1.0]);
    }
}
