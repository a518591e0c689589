//! Axis-free line plots of signal windows, and image encoding.

use std::io::Cursor;
use std::str::FromStr;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};

pub const DEFAULT_SIZE: usize = 299;

/// Row-major 8-bit pixel grid with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl RasterImage {
    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self {
            width,
            height,
            channels,
            pixels: vec![value; width * height * channels],
        }
    }

    pub fn from_pixels(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(HarError::config("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(HarError::config(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(HarError::config(format!(
                "expected {} pixel values, got {}",
                width * height * channels,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> u8 {
        self.pixels[(row * self.width + col) * self.channels + channel]
    }

    fn set_gray(&mut self, row: usize, col: usize, value: u8) {
        let base = (row * self.width + col) * self.channels;
        self.pixels[base..base + self.channels].fill(value);
    }

    /// Replicates a single channel into RGB; RGB input is returned unchanged.
    pub fn to_rgb(&self) -> RasterImage {
        if self.channels == 3 {
            return self.clone();
        }
        RasterImage {
            width: self.width,
            height: self.height,
            channels: 3,
            pixels: self.pixels.iter().flat_map(|&p| [p, p, p]).collect(),
        }
    }

    /// Luma of each pixel (first channel for gray images, BT.601 weights for RGB).
    pub fn gray_values(&self) -> Vec<u8> {
        if self.channels == 1 {
            return self.pixels.clone();
        }
        self.pixels
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).round() as u8)
            .collect()
    }
}

/// Plot style. Anti-aliasing is never applied: pixels are either foreground
/// or background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterStyle {
    pub background: u8,
    pub foreground: u8,
    pub line_width: usize,
    pub margin: f64,
}

impl Default for RasterStyle {
    fn default() -> Self {
        Self {
            background: 255,
            foreground: 0,
            line_width: 1,
            margin: 0.05,
        }
    }
}

impl RasterStyle {
    pub fn validate(&self) -> Result<()> {
        if self.background == self.foreground {
            return Err(HarError::config("background and foreground must differ"));
        }
        if !(0.0..0.5).contains(&self.margin) {
            return Err(HarError::config(format!("margin {} must lie in [0, 0.5)", self.margin)));
        }
        if self.line_width == 0 {
            return Err(HarError::config("line width must be at least 1"));
        }
        Ok(())
    }
}

/// Maps samples to continuous pixel coordinates: x spans columns 0..=width-1,
/// y spans the margin band with the maximum at the top. A constant window
/// sits on the vertical centre.
pub fn plot_coordinates(samples: &[f64], margin: f64, width: usize, height: usize) -> Vec<(f64, f64)> {
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let top = margin * (height - 1) as f64;
    let bottom = (1.0 - margin) * (height - 1) as f64;
    let n = samples.len();
    let x_scale = if n > 1 { (width - 1) as f64 / (n - 1) as f64 } else { 0.0 };
    samples
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            (i as f64 * x_scale, bottom - t * (bottom - top))
        })
        .collect()
}

/// Draws the window as a connected polyline. Column `c` covers the x-range
/// `[c - 0.5, c + 0.5]`; every row between the rounded minimum and maximum
/// height the polyline reaches inside that range is set, widened by the line
/// width.
pub fn rasterize(samples: &[f64], style: &RasterStyle, width: usize, height: usize) -> Result<RasterImage> {
    style.validate()?;
    if width == 0 || height == 0 {
        return Err(HarError::config("image dimensions must be positive"));
    }
    if samples.is_empty() {
        return Err(HarError::data("cannot rasterize an empty window"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(HarError::data("window contains non-finite samples"));
    }
    let pts = plot_coordinates(samples, style.margin, width, height);
    let mut span = vec![(f64::INFINITY, f64::NEG_INFINITY); width];
    let mut touch = |col: usize, y: f64| {
        let s = &mut span[col];
        s.0 = s.0.min(y);
        s.1 = s.1.max(y);
    };
    let col_of = |x: f64| ((x + 0.5).floor().max(0.0) as usize).min(width - 1);

    if pts.len() == 1 {
        for col in 0..width {
            touch(col, pts[0].1);
        }
    }
    for &(x, y) in &pts {
        let c = col_of(x);
        touch(c, y);
        // a vertex on a column edge belongs to both columns
        if c > 0 && c as f64 - 0.5 == x {
            touch(c - 1, y);
        }
    }
    for seg in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (seg[0], seg[1]);
        // column boundaries at c + 0.5 strictly inside the segment
        let mut c = col_of(x0);
        loop {
            let edge = c as f64 + 0.5;
            if edge >= x1 || c + 1 >= width {
                break;
            }
            if edge > x0 {
                let y = y0 + (y1 - y0) * (edge - x0) / (x1 - x0);
                touch(c, y);
                touch(c + 1, y);
            }
            c += 1;
        }
    }

    let mut img = RasterImage::filled(width, height, 1, style.background);
    let below = (style.line_width - 1) / 2;
    let above = style.line_width / 2;
    for (col, &(lo, hi)) in span.iter().enumerate() {
        let r0 = (lo.round() as usize).saturating_sub(below);
        let r1 = (hi.round() as usize + above).min(height - 1);
        for row in r0..=r1 {
            img.set_gray(row, col, style.foreground);
        }
    }
    Ok(img)
}

/// Supported encodings. `Png` is lossless; `Jpeg` exists for backbones that
/// were trained on JPEG plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageEncoding {
    Png,
    Jpeg,
}

impl ImageEncoding {
    pub fn extension(self) -> &'static str {
        match self {
            ImageEncoding::Png => "png",
            ImageEncoding::Jpeg => "jpg",
        }
    }
}

impl FromStr for ImageEncoding {
    type Err = HarError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "png" => Ok(ImageEncoding::Png),
            "jpeg" | "jpg" => Ok(ImageEncoding::Jpeg),
            other => Err(HarError::config(format!("unsupported image format '{other}'"))),
        }
    }
}

fn to_dynamic(image: &RasterImage) -> Result<DynamicImage> {
    let (w, h) = (image.width as u32, image.height as u32);
    let bad = || HarError::Image("pixel buffer does not match dimensions".into());
    Ok(match image.channels {
        1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, image.pixels.clone()).ok_or_else(bad)?),
        3 => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, image.pixels.clone()).ok_or_else(bad)?),
        c => return Err(HarError::config(format!("unsupported channel count {c}"))),
    })
}

pub fn encode_image(image: &RasterImage, encoding: ImageEncoding) -> Result<Vec<u8>> {
    let dynamic = to_dynamic(image)?;
    let mut out = Cursor::new(Vec::new());
    let format = match encoding {
        ImageEncoding::Png => ImageFormat::Png,
        ImageEncoding::Jpeg => ImageFormat::Jpeg,
    };
    dynamic
        .write_to(&mut out, format)
        .map_err(|e| HarError::Image(e.to_string()))?;
    Ok(out.into_inner())
}

/// Decodes PNG or JPEG bytes. Gray files stay single-channel; everything
/// else is converted to RGB.
pub fn decode_image(bytes: &[u8]) -> Result<RasterImage> {
    let dynamic = image::load_from_memory(bytes).map_err(|e| HarError::Image(e.to_string()))?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    match dynamic {
        DynamicImage::ImageLuma8(g) => RasterImage::from_pixels(w, h, 1, g.into_raw()),
        other => RasterImage::from_pixels(w, h, 3, other.to_rgb8().into_raw()),
    }
}

/// Reads width and height from a PNG IHDR chunk.
pub fn png_dimensions(bytes: &[u8]) -> Option<(u32, u32)> {
    if bytes.len() < 24 || &bytes[1..4] != b"PNG" || &bytes[12..16] != b"IHDR" {
        return None;
    }
    let w = u32::from_be_bytes(bytes[16..20].try_into().ok()?);
    let h = u32::from_be_bytes(bytes[20..24].try_into().ok()?);
    Some((w, h))
}
