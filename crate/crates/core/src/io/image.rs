//! 8-bit grayscale PNG export with linear windowing.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    Fixed { min: f64, max: f64 },
    /// Percentiles of the frame's own values, e.g. `(1, 99)`.
    Percentile { lo: f64, hi: f64 },
}

impl Default for Window {
    fn default() -> Self {
        Window::Percentile { lo: 1.0, hi: 99.0 }
    }
}

/// Nearest-rank percentile of `values` (`p` in `[0, 100]`).
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((p / 100.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Resolve a window to concrete bounds for `values`.
pub fn window_bounds(values: &[f64], window: Window) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::param("cannot window an empty image"));
    }
    match window {
        Window::Fixed { min, max } => {
            if !(min <= max) {
                return Err(Error::param(format!("window min {min} > max {max}")));
            }
            Ok((min, max))
        }
        Window::Percentile { lo, hi } => {
            if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo > hi {
                return Err(Error::param(format!("percentile window {lo}..{hi}")));
            }
            let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
            if sorted.is_empty() {
                return Err(Error::param("image has no finite values"));
            }
            sorted.sort_by(f64::total_cmp);
            Ok((percentile(&sorted, lo), percentile(&sorted, hi)))
        }
    }
}

/// `round(255 (v - min) / (max - min))`, clamped; a degenerate window maps
/// everything to mid gray.
pub fn quantize(v: f64, min: f64, max: f64) -> u8 {
    if max <= min {
        return 128;
    }
    let s = (v - min) / (max - min);
    (255.0 * s.clamp(0.0, 1.0)).round() as u8
}

pub fn to_gray(values: &[f64], window: Window) -> Result<Vec<u8>> {
    let (min, max) = window_bounds(values, window)?;
    Ok(values.iter().map(|&v| quantize(v, min, max)).collect())
}

/// Write a `rows x cols` frame as an 8-bit grayscale PNG.
pub fn export_png(values: &[f64], rows: usize, cols: usize, path: &Path, window: Window) -> Result<()> {
    if values.len() != rows * cols || rows == 0 || cols == 0 {
        return Err(Error::Shape(format!("{} values for a {rows}x{cols} image", values.len())));
    }
    let pixels = to_gray(values, window)?;
    let io_err = |source: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let enc_err = |e: png::EncodingError| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let file = File::create(path).map_err(io_err)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), cols as u32, rows as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(enc_err)?;
    writer.write_image_data(&pixels).map_err(enc_err)?;
    writer.finish().map_err(enc_err)?;
    Ok(())
}
