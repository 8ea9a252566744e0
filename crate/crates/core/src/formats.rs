//! On-disk formats: binary PGM (P5), SMAP float rasters, ICDAR quad text
//! files and TADM model files.
//!
//! SMAP layout: `b"SMAP"`, version `0x01`, `u32` LE width, `u32` LE height,
//! then `width * height` `f32` LE values in row-major order.
//!
//! TADM layout: `b"TADM"`, version `0x01`, three `u32` LE parameter counts
//! (backbone, head, domain classifier), then the three parameter vectors as
//! `f32` LE in the same order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point, QuadBox};
use crate::raster::{GrayImage, PixelPartition, ScoreMap, StrokeWidthMap};
use crate::toymodel::ToyModel;

pub const SMAP_MAGIC: &[u8; 4] = b"SMAP";
pub const SMAP_VERSION: u8 = 1;
pub const MODEL_MAGIC: &[u8; 4] = b"TADM";
pub const MODEL_VERSION: u8 = 1;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// PGM

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start, format!("{what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(0, "missing P5 magic"));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::format(cur.pos, "expected whitespace after magic"));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::format(
            maxval_at,
            format!("only 8-bit PGM with maxval 255 is supported, got {maxval}"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(0, format!("empty image {width}x{height}")));
    }
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::format(cur.pos, "expected single whitespace before raster"));
    }
    let data_start = cur.pos + 1;
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(0, "image dimensions overflow"))?;
    let available = bytes.len() - data_start;
    if available < expected {
        return Err(Error::format(
            bytes.len(),
            format!("truncated raster: expected {expected} bytes, found {available}"),
        ));
    }
    if available > expected {
        return Err(Error::format(
            data_start + expected,
            format!("{} trailing bytes after raster", available - expected),
        ));
    }
    GrayImage::from_bytes(width, height, &bytes[data_start..])
}

/// Canonical P5 encoding: `P5\n<w> <h>\n255\n` followed by the raster.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.to_bytes());
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_pgm(&read_file(path.as_ref())?)
}

pub fn write_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_pgm(image))
}

// ---------------------------------------------------------------------------
// SMAP

/// Raw SMAP payload; typed wrappers below enforce each raster's invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct SmapRaster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

const SMAP_HEADER: usize = 4 + 1 + 4 + 4;

pub fn decode_smap(bytes: &[u8]) -> Result<SmapRaster> {
    if bytes.len() < 4 || &bytes[..4] != SMAP_MAGIC {
        return Err(Error::format(0, "bad SMAP magic"));
    }
    if bytes.len() < SMAP_HEADER {
        return Err(Error::format(bytes.len(), "truncated SMAP header"));
    }
    if bytes[4] != SMAP_VERSION {
        return Err(Error::format(4, format!("unsupported SMAP version {}", bytes[4])));
    }
    let width = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let height = u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes")) as usize;
    if width == 0 || height == 0 {
        return Err(Error::format(5, format!("empty raster {width}x{height}")));
    }
    let payload = &bytes[SMAP_HEADER..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(5, "raster dimensions overflow"))?;
    if payload.len() != expected {
        return Err(Error::format(
            SMAP_HEADER,
            format!(
                "header says {width}x{height} ({expected} payload bytes), file has {}",
                payload.len()
            ),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(SmapRaster {
        width,
        height,
        data,
    })
}

pub fn encode_smap(raster: &SmapRaster) -> Vec<u8> {
    let mut out = Vec::with_capacity(SMAP_HEADER + raster.data.len() * 4);
    out.extend_from_slice(SMAP_MAGIC);
    out.push(SMAP_VERSION);
    out.extend_from_slice(&(raster.width as u32).to_le_bytes());
    out.extend_from_slice(&(raster.height as u32).to_le_bytes());
    for v in &raster.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn to_smap(width: usize, height: usize, data: &[f64]) -> SmapRaster {
    SmapRaster {
        width,
        height,
        data: data.iter().map(|&v| v as f32).collect(),
    }
}

fn widen(data: &[f32]) -> Vec<f64> {
    data.iter().map(|&v| f64::from(v)).collect()
}

pub fn read_smap(path: impl AsRef<Path>) -> Result<ScoreMap> {
    let raw = decode_smap(&read_file(path.as_ref())?)?;
    ScoreMap::new(raw.width, raw.height, widen(&raw.data))
}

pub fn write_smap(map: &ScoreMap, path: impl AsRef<Path>) -> Result<()> {
    write_file(
        path.as_ref(),
        &encode_smap(&to_smap(map.width(), map.height(), map.data())),
    )
}

/// Stroke-width maps use the SMAP container with `-1` for no stroke.
pub fn read_stroke_map(path: impl AsRef<Path>) -> Result<StrokeWidthMap> {
    let raw = decode_smap(&read_file(path.as_ref())?)?;
    StrokeWidthMap::new(raw.width, raw.height, widen(&raw.data))
}

pub fn write_stroke_map(map: &StrokeWidthMap, path: impl AsRef<Path>) -> Result<()> {
    write_file(
        path.as_ref(),
        &encode_smap(&to_smap(map.width(), map.height(), map.data())),
    )
}

/// Partition rasters use the SMAP container with codes 0 = ignored,
/// 1 = kept negative, 2 = positive.
pub fn read_partition(path: impl AsRef<Path>) -> Result<PixelPartition> {
    let raw = decode_smap(&read_file(path.as_ref())?)?;
    PixelPartition::from_codes(raw.width, raw.height, &widen(&raw.data))
}

pub fn write_partition(partition: &PixelPartition, path: impl AsRef<Path>) -> Result<()> {
    write_file(
        path.as_ref(),
        &encode_smap(&to_smap(
            partition.width(),
            partition.height(),
            &partition.to_codes(),
        )),
    )
}

// ---------------------------------------------------------------------------
// ICDAR quads

/// Transcription marking a don't-care region.
pub const DONT_CARE: &str = "###";

/// Parses `x1,y1,x2,y2,x3,y3,x4,y4[,extra]` lines.
///
/// `extra` of `###` marks the box ignored. A single trailing field that parses
/// as a number in `[0, 1]` is read as a detection confidence; anything else is
/// a transcription and is dropped.
pub fn parse_icdar_boxes(text: &str) -> Result<Vec<QuadBox>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut boxes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(9, ',').collect();
        if fields.len() < 8 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least 8 comma-separated fields, got {}", fields.len()),
            });
        }
        let mut coords = [0.0f64; 8];
        for (k, f) in fields[..8].iter().enumerate() {
            coords[k] = f
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("field {} ({:?}) is not a number", k + 1, f.trim()),
                })?;
        }
        let vertices = [
            Point::new(coords[0], coords[1]),
            Point::new(coords[2], coords[3]),
            Point::new(coords[4], coords[5]),
            Point::new(coords[6], coords[7]),
        ];
        let mut quad = QuadBox::new(vertices).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(extra) = fields.get(8).map(|s| s.trim()) {
            if extra == DONT_CARE {
                quad.ignore = true;
            } else if let Ok(c) = extra.parse::<f64>() {
                if (0.0..=1.0).contains(&c) {
                    quad.confidence = Some(c);
                }
            }
        }
        boxes.push(quad);
    }
    Ok(boxes)
}

/// Emits one line per box; ignored boxes carry `###`, predictions their
/// confidence.
pub fn emit_icdar_boxes(boxes: &[QuadBox]) -> String {
    let mut out = String::new();
    for b in boxes {
        let coords: Vec<String> = b
            .vertices
            .iter()
            .flat_map(|p| [p.x, p.y])
            .map(|v| format!("{v}"))
            .collect();
        out.push_str(&coords.join(","));
        if b.ignore {
            let _ = write!(out, ",{DONT_CARE}");
        } else if let Some(c) = b.confidence {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

pub fn read_icdar_file(path: impl AsRef<Path>) -> Result<Vec<QuadBox>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::format(e.utf8_error().valid_up_to(), "ICDAR file is not UTF-8"))?;
    parse_icdar_boxes(&text)
}

pub fn write_icdar_file(boxes: &[QuadBox], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), emit_icdar_boxes(boxes).as_bytes())
}

// ---------------------------------------------------------------------------
// Models

pub fn encode_model(model: &ToyModel) -> Vec<u8> {
    let spaces = [model.theta_f(), model.theta_h(), model.theta_d()];
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.push(MODEL_VERSION);
    for s in &spaces {
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    }
    for s in &spaces {
        for v in *s {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<ToyModel> {
    if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
        return Err(Error::format(0, "bad model magic"));
    }
    if bytes.len() < 5 {
        return Err(Error::format(bytes.len(), "truncated model header"));
    }
    if bytes[4] != MODEL_VERSION {
        return Err(Error::format(4, format!("unsupported model version {}", bytes[4])));
    }
    let header = 5 + 12;
    if bytes.len() < header {
        return Err(Error::format(bytes.len(), "truncated model header"));
    }
    let count = |i: usize| {
        u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().expect("4 bytes")) as usize
    };
    let counts = [count(0), count(1), count(2)];
    let total: usize = counts.iter().sum();
    let expected = header + total * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            bytes.len().min(expected),
            format!("model payload should be {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let mut offset = header;
    let mut spaces = Vec::with_capacity(3);
    for n in counts {
        let values: Vec<f32> = bytes[offset..offset + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(offset + 4 * i, "non-finite model parameter"));
        }
        offset += 4 * n;
        spaces.push(values);
    }
    let theta_d = spaces.pop().expect("three spaces");
    let theta_h = spaces.pop().expect("three spaces");
    let theta_f = spaces.pop().expect("three spaces");
    ToyModel::from_parameters(theta_f, theta_h, theta_d)
        .map_err(|e| Error::format(5, e.to_string()))
}

pub fn save_model(model: &ToyModel, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_model(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ToyModel> {
    decode_model(&read_file(path.as_ref())?)
}
