//! Synthetic cine phantom and acquisition simulation.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::coils::{project, CoilMaps};
use crate::error::{Error, Result};
use crate::sampling::{apply_mask, SamplingMask};
use crate::tensors::{Dims, Domain, DynTensor, C64};
use crate::transforms::Fourier;

const SUPERSAMPLE: usize = 4;

/// An ellipse whose semi-axes pulsate as `r0 (1 + a sin(2 pi t / T))` and whose
/// centre moves as `c + d sin(2 pi t / T)`. Coordinates are in pixels, `(y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub axes: (f64, f64),
    pub intensity: f64,
    pub pulsation: f64,
    pub translation: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
    /// Painted in order; later ellipses cover earlier ones.
    pub ellipses: Vec<Ellipse>,
    pub background: f64,
    /// Complex k-space noise standard deviation.
    pub noise: f64,
    pub seed: u64,
    /// Linear phase (radians across the FOV) along `(y, x)`.
    pub phase_ramp: (f64, f64),
}

impl Default for PhantomSpec {
    /// 64x64, 16 frames: a static "chest wall" and a pulsating "ventricle".
    fn default() -> Self {
        PhantomSpec::scaled(16, 64, 64)
    }
}

impl PhantomSpec {
    /// The default geometry rescaled to an arbitrary grid.
    pub fn scaled(frames: usize, rows: usize, cols: usize) -> Self {
        let (sy, sx) = (rows as f64 / 64.0, cols as f64 / 64.0);
        PhantomSpec {
            frames,
            rows,
            cols,
            ellipses: vec![
                Ellipse {
                    center: (32.0 * sy, 32.0 * sx),
                    axes: (26.0 * sy, 28.0 * sx),
                    intensity: 0.5,
                    pulsation: 0.0,
                    translation: (0.0, 0.0),
                },
                Ellipse {
                    center: (30.0 * sy, 34.0 * sx),
                    axes: (9.0 * sy, 8.0 * sx),
                    intensity: 1.0,
                    pulsation: 0.3,
                    translation: (0.0, 0.0),
                },
            ],
            background: 0.2,
            noise: 0.0,
            seed: 0,
            phase_ramp: (0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.rows == 0 || self.cols == 0 {
            return Err(Error::param("phantom needs T, H, W >= 1"));
        }
        if !(0.0..=1.0).contains(&self.background) {
            return Err(Error::param(format!("background {} outside [0, 1]", self.background)));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::param(format!("noise {} must be >= 0", self.noise)));
        }
        for (i, e) in self.ellipses.iter().enumerate() {
            if !(0.0..=1.0).contains(&e.intensity) {
                return Err(Error::param(format!("ellipse {i}: intensity {} outside [0, 1]", e.intensity)));
            }
            if !(0.0..=0.5).contains(&e.pulsation) {
                return Err(Error::param(format!("ellipse {i}: pulsation {} outside [0, 0.5]", e.pulsation)));
            }
            if !(e.axes.0 > 0.0 && e.axes.1 > 0.0) {
                return Err(Error::param(format!("ellipse {i}: axes must be positive")));
            }
            let grow = 1.0 + e.pulsation;
            let ext_y = e.axes.0 * grow + e.translation.0.abs();
            let ext_x = e.axes.1 * grow + e.translation.1.abs();
            if e.center.0 - ext_y < 0.0
                || e.center.0 + ext_y > self.rows as f64
                || e.center.1 - ext_x < 0.0
                || e.center.1 + ext_x > self.cols as f64
            {
                return Err(Error::param(format!("ellipse {i} leaves the field of view")));
            }
        }
        Ok(())
    }

    /// Render at continuous time `t` (frames are `t = 0, 1, ..`).
    pub fn render_frame(&self, t: f64) -> Vec<C64> {
        let phase_t = (2.0 * PI * t / self.frames as f64).sin();
        let shapes: Vec<_> = self
            .ellipses
            .iter()
            .map(|e| {
                let s = 1.0 + e.pulsation * phase_t;
                (
                    e.center.0 + e.translation.0 * phase_t,
                    e.center.1 + e.translation.1 * phase_t,
                    1.0 / (e.axes.0 * s).powi(2),
                    1.0 / (e.axes.1 * s).powi(2),
                    e.intensity,
                )
            })
            .collect();
        let sub = 1.0 / SUPERSAMPLE as f64;
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for y in 0..self.rows {
            for x in 0..self.cols {
                let mut acc = 0.0;
                for i in 0..SUPERSAMPLE {
                    let py = y as f64 + (i as f64 + 0.5) * sub;
                    for j in 0..SUPERSAMPLE {
                        let px = x as f64 + (j as f64 + 0.5) * sub;
                        let mut v = self.background;
                        for &(cy, cx, iy, ix, val) in &shapes {
                            if (py - cy).powi(2) * iy + (px - cx).powi(2) * ix <= 1.0 {
                                v = val;
                            }
                        }
                        acc += v;
                    }
                }
                let mag = acc * sub * sub;
                let phase = self.phase_ramp.0 * ((y as f64 + 0.5) / self.rows as f64 - 0.5)
                    + self.phase_ramp.1 * ((x as f64 + 0.5) / self.cols as f64 - 0.5);
                out.push(C64::from_polar(mag, phase));
            }
        }
        out
    }
}

/// Ground-truth image sequence `m_gt`.
pub fn generate(spec: &PhantomSpec) -> Result<DynTensor> {
    spec.validate()?;
    let dims = Dims::new(spec.frames, spec.rows, spec.cols);
    let mut data = Vec::with_capacity(dims.len());
    for t in 0..spec.frames {
        data.extend(spec.render_frame(t as f64));
    }
    DynTensor::from_vec(dims, Domain::ImageXt, data)
}

/// Masked multi-coil k-space `v_i = D (F_s S_i m + n)`. The complex noise has
/// standard deviation `noise` per entry (`noise / sqrt 2` on each of the real
/// and imaginary parts).
pub fn acquire(m_gt: &DynTensor, maps: &CoilMaps, mask: &SamplingMask, noise: f64, seed: u64) -> Result<DynTensor> {
    if !(noise >= 0.0) {
        return Err(Error::param(format!("noise {noise} must be >= 0")));
    }
    let coil_imgs = project(m_gt, maps)?;
    let mut k = Fourier::new(coil_imgs.dims()).fs(&coil_imgs)?;
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = noise / 2f64.sqrt();
        for z in k.as_mut_slice() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z += C64::new(re * s, im * s);
        }
    }
    apply_mask(&k, mask)
}
