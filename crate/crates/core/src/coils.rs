//! Coil sensitivity maps: synthesis, projection `S_i m`, and combination
//! `sum_i S_i^H x_i`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensors::{Dims, Domain, DynTensor, C64};

/// Per-coil complex sensitivities, `[coil, y, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilMaps {
    coils: usize,
    rows: usize,
    cols: usize,
    data: Vec<C64>,
    normalized: bool,
}

impl CoilMaps {
    /// Wrap raw maps. When `normalize` is set every pixel is rescaled so
    /// `sum_i |S_i|^2 = 1`; pixels where all coils vanish are left at zero.
    pub fn from_raw(coils: usize, rows: usize, cols: usize, data: Vec<C64>, normalize: bool) -> Result<Self> {
        if coils == 0 || rows == 0 || cols == 0 || data.len() != coils * rows * cols {
            return Err(Error::shape(format!("maps {coils}x{rows}x{cols} with {} values", data.len())));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::param("coil maps contain non-finite values"));
        }
        let mut maps = CoilMaps {
            coils,
            rows,
            cols,
            data,
            normalized: false,
        };
        if normalize {
            maps.normalize();
        }
        Ok(maps)
    }

    /// Maps stored as a tensor with axis order `[coil, 1, y, x]`.
    pub fn from_tensor(t: &DynTensor, normalize: bool) -> Result<Self> {
        let d = t.dims();
        let coils = d.coils.ok_or_else(|| Error::shape("coil maps need a coil axis"))?;
        if d.frames != 1 {
            return Err(Error::shape(format!("coil maps must have a single frame, got {}", d.frames)));
        }
        Self::from_raw(coils, d.rows, d.cols, t.as_slice().to_vec(), normalize)
    }

    pub fn to_tensor(&self) -> DynTensor {
        DynTensor::from_vec(
            Dims::with_coils(self.coils, 1, self.rows, self.cols),
            Domain::ImageXt,
            self.data.clone(),
        )
        .expect("map dims are valid by construction")
    }

    fn normalize(&mut self) {
        let plane = self.rows * self.cols;
        for p in 0..plane {
            let energy: f64 = (0..self.coils).map(|c| self.data[c * plane + p].norm_sqr()).sum();
            if energy > 0.0 {
                let s = 1.0 / energy.sqrt();
                for c in 0..self.coils {
                    self.data[c * plane + p] *= s;
                }
            }
        }
        self.normalized = true;
    }

    pub fn n_coils(&self) -> usize {
        self.coils
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn coil(&self, c: usize) -> &[C64] {
        let plane = self.rows * self.cols;
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Largest deviation of `sum_i |S_i|^2` from one over all pixels.
    pub fn normalization_error(&self) -> f64 {
        let plane = self.rows * self.cols;
        (0..plane)
            .map(|p| {
                let e: f64 = (0..self.coils).map(|c| self.data[c * plane + p].norm_sqr()).sum();
                (e - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Circularly shift every map by `dy` rows.
    pub fn shifted_rows(&self, dy: isize) -> CoilMaps {
        let plane = self.rows * self.cols;
        let mut data = vec![C64::new(0.0, 0.0); self.data.len()];
        for c in 0..self.coils {
            for y in 0..self.rows {
                let ys = (y as isize + dy).rem_euclid(self.rows as isize) as usize;
                for x in 0..self.cols {
                    data[c * plane + ys * self.cols + x] = self.data[c * plane + y * self.cols + x];
                }
            }
        }
        CoilMaps { data, ..self.clone() }
    }

    fn check_image(&self, d: Dims) -> Result<()> {
        if d.rows != self.rows || d.cols != self.cols {
            return Err(Error::shape(format!(
                "maps are {}x{}, image is {}x{}",
                self.rows, self.cols, d.rows, d.cols
            )));
        }
        Ok(())
    }
}

/// Synthetic smooth maps: Gaussian lobes (FWHM `0.8 * max(H, W)`) centred on
/// `n_c` equally spaced points of the border ellipse, each carrying a linear
/// phase ramp of `pi` across the field of view, normalized per pixel.
pub fn synth_maps(n_c: usize, rows: usize, cols: usize, seed: u64) -> Result<CoilMaps> {
    if n_c == 0 || rows == 0 || cols == 0 {
        return Err(Error::param("synth_maps needs n_c, H, W >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rotation = rng.random_range(0.0..2.0 * PI);
    let fwhm = 0.8 * rows.max(cols) as f64;
    let sigma = fwhm / (2.0 * (2.0 * 2f64.ln()).sqrt());
    let (cy, cx) = (rows as f64 / 2.0, cols as f64 / 2.0);
    let mut data = Vec::with_capacity(n_c * rows * cols);
    for c in 0..n_c {
        let angle = rotation + 2.0 * PI * c as f64 / n_c as f64;
        let (sin, cos) = angle.sin_cos();
        let (py, px) = (cy + cy * sin, cx + cx * cos);
        let offset = rng.random_range(-PI..PI);
        for y in 0..rows {
            for x in 0..cols {
                let (yy, xx) = (y as f64 + 0.5, x as f64 + 0.5);
                let r2 = (yy - py).powi(2) + (xx - px).powi(2);
                let amp = (-r2 / (2.0 * sigma * sigma)).exp();
                let phase = offset + PI * ((xx - cx) / cols as f64 * cos + (yy - cy) / rows as f64 * sin);
                data.push(C64::from_polar(amp, phase));
            }
        }
    }
    CoilMaps::from_raw(n_c, rows, cols, data, true)
}

/// `sigma_i = S_i m`, broadcast over frames.
pub fn project(m: &DynTensor, maps: &CoilMaps) -> Result<DynTensor> {
    let d = m.dims();
    if d.coils.is_some() {
        return Err(Error::shape("project expects a coil-combined image"));
    }
    m.expect_domain(Domain::ImageXt)?;
    maps.check_image(d)?;
    let plane = d.frame_len();
    let out = Dims::with_coils(maps.coils, d.frames, d.rows, d.cols);
    let src = m.as_slice();
    let mut data = Vec::with_capacity(out.len());
    for c in 0..maps.coils {
        let s = maps.coil(c);
        for frame in src.chunks_exact(plane) {
            data.extend(frame.iter().zip(s).map(|(v, w)| v * w));
        }
    }
    DynTensor::from_vec(out, Domain::ImageXt, data)
}

/// `sum_i conj(S_i) x_i`.
pub fn combine(x: &DynTensor, maps: &CoilMaps) -> Result<DynTensor> {
    let d = x.dims();
    if d.coils != Some(maps.coils) {
        return Err(Error::shape(format!(
            "combine: tensor has {:?} coils, maps have {}",
            d.coils, maps.coils
        )));
    }
    maps.check_image(d)?;
    let plane = d.frame_len();
    let mut out = DynTensor::zeros(d.combined(), x.domain());
    let acc = out.as_mut_slice();
    for c in 0..maps.coils {
        let s = maps.coil(c);
        for (frame_out, frame_in) in acc.chunks_exact_mut(plane).zip(x.coil(c).chunks_exact(plane)) {
            for ((o, v), w) in frame_out.iter_mut().zip(frame_in).zip(s) {
                *o += w.conj() * v;
            }
        }
    }
    Ok(out)
}
