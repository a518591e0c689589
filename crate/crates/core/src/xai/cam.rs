use crate::embed::FeatureMapStack;
use crate::error::{HarError, Result};
use crate::label::ActivityLabel;
use crate::raster::RasterImage;
use crate::softmax::SoftmaxHead;

/// Weight of the colour ramp when blended over the source image.
pub const OVERLAY_OPACITY: f64 = 0.5;

const RAMP: [(f64, [f64; 3]); 5] = [
    (0.0, [0.0, 0.0, 255.0]),
    (0.25, [0.0, 255.0, 255.0]),
    (0.5, [0.0, 255.0, 0.0]),
    (0.75, [255.0, 255.0, 0.0]),
    (1.0, [255.0, 0.0, 0.0]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct CamMap {
    pub class: ActivityLabel,
    pub height: usize,
    pub width: usize,
    /// Row-major map in [0, 1].
    pub values: Vec<f64>,
    /// Weighted channel sum before normalisation.
    pub raw: Vec<f64>,
    /// `(width, height, values)` after bilinear upsampling, if requested.
    pub upsampled: Option<(usize, usize, Vec<f64>)>,
}

impl CamMap {
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn with_upsampled(mut self, width: usize, height: usize) -> Self {
        let up = upsample_bilinear(&self.values, self.height, self.width, height, width);
        self.upsampled = Some((width, height, up));
        self
    }
}

/// Σ_k w_k · f_k(y, x) at every spatial cell.
pub fn compute_cam_raw(maps: &FeatureMapStack, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != maps.channels {
        return Err(HarError::config(format!(
            "feature maps have {} channels but the weight row has {}",
            maps.channels,
            weights.len()
        )));
    }
    Ok(maps
        .values
        .chunks_exact(maps.channels)
        .map(|cell| cell.iter().zip(weights).map(|(&f, w)| f as f64 * w).sum())
        .collect())
}

/// Min–max scaling to [0, 1]. A constant map becomes all zeros.
pub fn normalize_map(raw: &[f64]) -> Vec<f64> {
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range > 0.0) {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|v| (v - min) / range).collect()
}

pub fn compute_cam(maps: &FeatureMapStack, head: &SoftmaxHead, class: ActivityLabel) -> Result<CamMap> {
    let weights = head
        .class_weights(class)
        .ok_or_else(|| HarError::config(format!("head has no weights for class {class}")))?;
    let raw = compute_cam_raw(maps, weights)?;
    Ok(CamMap {
        class,
        height: maps.height,
        width: maps.width,
        values: normalize_map(&raw),
        raw,
        upsampled: None,
    })
}

/// Element-wise mean of normalised maps, normalised again.
pub fn average_cam(cams: &[CamMap], class: ActivityLabel) -> Result<CamMap> {
    let first = cams.first().ok_or_else(|| HarError::data("no maps to average"))?;
    let (h, w) = (first.height, first.width);
    let mut mean = vec![0.0; h * w];
    for cam in cams {
        if cam.height != h || cam.width != w {
            return Err(HarError::config("maps to average differ in shape"));
        }
        if cam.class != class {
            return Err(HarError::config(format!("map for {} in average for {class}", cam.class)));
        }
        for (m, v) in mean.iter_mut().zip(&cam.values) {
            *m += v;
        }
    }
    let n = cams.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(CamMap {
        class,
        height: h,
        width: w,
        values: normalize_map(&mean),
        raw: mean,
        upsampled: None,
    })
}

/// Bilinear resampling with pixel centres aligned, clamped at the borders.
pub fn upsample_bilinear(values: &[f64], in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let coord = |dst: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let src = ((dst as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, src - lo as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for oy in 0..out_h {
        let (y0, y1, ty) = coord(oy, in_h, out_h);
        for ox in 0..out_w {
            let (x0, x1, tx) = coord(ox, in_w, out_w);
            let top = values[y0 * in_w + x0] * (1.0 - tx) + values[y0 * in_w + x1] * tx;
            let bottom = values[y1 * in_w + x0] * (1.0 - tx) + values[y1 * in_w + x1] * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Blue → cyan → green → yellow → red, linear between stops.
pub fn ramp_color(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    for pair in RAMP.windows(2) {
        let ((t0, c0), (t1, c1)) = (pair[0], pair[1]);
        if v <= t1 {
            let t = (v - t0) / (t1 - t0);
            return [0, 1, 2].map(|i| c0[i] + (c1[i] - c0[i]) * t);
        }
    }
    RAMP[RAMP.len() - 1].1
}

/// Blends the ramp colour of the map, resampled to the image size, over the
/// image at [`OVERLAY_OPACITY`].
pub fn render_overlay(image: &RasterImage, cam: &CamMap) -> Result<RasterImage> {
    let (w, h) = (image.width, image.height);
    let grid = match &cam.upsampled {
        Some((uw, uh, v)) if *uw == w && *uh == h => v.clone(),
        _ => upsample_bilinear(&cam.values, cam.height, cam.width, h, w),
    };
    let rgb = image.to_rgb();
    let mut pixels = Vec::with_capacity(w * h * 3);
    for (i, px) in rgb.pixels.chunks_exact(3).enumerate() {
        let color = ramp_color(grid[i]);
        for c in 0..3 {
            let v = (1.0 - OVERLAY_OPACITY) * px[c] as f64 + OVERLAY_OPACITY * color[c];
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    RasterImage::from_pixels(w, h, 3, pixels)
}
