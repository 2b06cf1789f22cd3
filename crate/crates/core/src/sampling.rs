//! Cartesian k-t undersampling on the `(t, k_y)` grid.
//!
//! Masks are stored in DFT index order along `k_y` (index 0 is the zero
//! frequency), matching the k-space tensors. Every `k_x` of a sampled line is
//! acquired.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coils::{combine, CoilMaps};
use crate::error::{Error, Result};
use crate::tensors::{Dims, Domain, DynTensor, C64};
use crate::transforms::{centered_index, index_of_frequency, Fourier};

/// Binary `(t, k_y)` sampling pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    frames: usize,
    lines: usize,
    data: Vec<u8>,
    target: f64,
    center_band: usize,
}

impl SamplingMask {
    pub fn from_raw(frames: usize, lines: usize, data: Vec<u8>, target: f64, center_band: usize) -> Result<Self> {
        if frames == 0 || lines == 0 || data.len() != frames * lines {
            return Err(Error::shape(format!("mask {frames}x{lines} with {} values", data.len())));
        }
        if data.iter().any(|&b| b > 1) {
            return Err(Error::param("mask values must be 0 or 1"));
        }
        Ok(SamplingMask {
            frames,
            lines,
            data,
            target,
            center_band,
        })
    }

    pub fn full(frames: usize, lines: usize) -> Self {
        SamplingMask {
            frames,
            lines,
            data: vec![1; frames * lines],
            target: 1.0,
            center_band: lines,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn target_acceleration(&self) -> f64 {
        self.target
    }

    pub fn center_band(&self) -> usize {
        self.center_band
    }

    #[inline]
    pub fn is_sampled(&self, t: usize, ky: usize) -> bool {
        self.data[t * self.lines + ky] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&b| b as usize).sum()
    }

    /// `T * H / samples`; infinite for an empty mask.
    pub fn acceleration(&self) -> f64 {
        (self.frames * self.lines) as f64 / self.count() as f64
    }

    pub fn per_frame_counts(&self) -> Vec<usize> {
        self.data
            .chunks_exact(self.lines)
            .map(|row| row.iter().map(|&b| b as usize).sum())
            .collect()
    }

    /// Number of frames that sample each `k_y` index.
    pub fn times_sampled(&self) -> Vec<usize> {
        (0..self.lines)
            .map(|ky| (0..self.frames).filter(|&t| self.is_sampled(t, ky)).count())
            .collect()
    }

    /// Whether every line of the centred band `[-b/2, b/2)` is sampled in at
    /// least one frame.
    pub fn covers_center(&self, band: usize) -> bool {
        let counts = self.times_sampled();
        center_lines(band, self.lines).into_iter().all(|ky| counts[ky] > 0)
    }

    fn check(&self, dims: Dims) -> Result<()> {
        if dims.frames != self.frames || dims.rows != self.lines {
            return Err(Error::shape(format!(
                "mask is {}x{} (t, k_y) but data has {} frames and {} rows",
                self.frames, self.lines, dims.frames, dims.rows
            )));
        }
        Ok(())
    }
}

/// DFT indices of the centred band of `band` lines.
pub fn center_lines(band: usize, lines: usize) -> Vec<usize> {
    let band = band.min(lines) as isize;
    (-(band / 2)..band - band / 2).map(|k| index_of_frequency(k, lines)).collect()
}

/// Frame-offset rule for [`mask_lattice`]: frame `t` samples the lines
/// `k_y = t * stride (mod R)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeOffset {
    pub stride: usize,
}

impl Default for LatticeOffset {
    fn default() -> Self {
        LatticeOffset { stride: 1 }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Regular sheared lattice: every `R`-th line per frame.
pub fn mask_lattice(frames: usize, lines: usize, accel: usize, rule: LatticeOffset) -> Result<SamplingMask> {
    if frames == 0 || lines == 0 {
        return Err(Error::param("mask needs T, H >= 1"));
    }
    if accel == 0 || accel > lines {
        return Err(Error::param(format!("lattice acceleration {accel} must be in 1..={lines}")));
    }
    if accel > 1 && gcd(rule.stride % accel, accel) != 1 {
        return Err(Error::param(format!("stride {} is not coprime with R = {accel}", rule.stride)));
    }
    let mut data = vec![0u8; frames * lines];
    for t in 0..frames {
        let offset = (t * rule.stride) % accel;
        for ky in (offset..lines).step_by(accel) {
            data[t * lines + ky] = 1;
        }
    }
    SamplingMask::from_raw(frames, lines, data, accel as f64, 0)
}

/// Parameters of [`mask_vista_like`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VistaParams {
    /// Exponent of `(1 + |k_y| / H)` in the sample weight.
    pub density_decay: f64,
    /// Lines around `k_y = 0` guaranteed in the time-averaged union.
    pub center_band: usize,
    pub seed: u64,
}

impl Default for VistaParams {
    fn default() -> Self {
        VistaParams {
            density_decay: 1.0,
            center_band: 4,
            seed: 0,
        }
    }
}

const RIESZ_EXPONENT: i32 = 2;

/// Greedy Riesz-energy placement of `ceil(T H / R)` samples on the `(t, k_y)`
/// grid.
///
/// Each new sample goes to the free cell with the smallest energy increase
/// `w(c) * sum_p w(p) / d(c, p)^2`, restricted to the frames that currently
/// hold the fewest samples. Distances are circular in `t` (scaled by `H / T`)
/// and linear in signed `k_y`. Ties go to the smallest `|k_y|`, then the
/// earliest frame. A post-pass adds any missing centre-band line to the
/// least populated frame.
pub fn mask_vista_like(frames: usize, lines: usize, accel: f64, params: VistaParams) -> Result<SamplingMask> {
    if frames == 0 || lines == 0 {
        return Err(Error::param("mask needs T, H >= 1"));
    }
    if !(accel >= 1.0) || !accel.is_finite() {
        return Err(Error::param(format!("acceleration {accel} must be >= 1")));
    }
    let cells = frames * lines;
    let n = (cells as f64 / accel).ceil() as usize;
    if n < frames {
        return Err(Error::param(format!(
            "R = {accel} leaves {n} samples for {frames} frames; need at least one per frame"
        )));
    }
    let n = n.min(cells);

    let weight: Vec<f64> = (0..lines)
        .map(|ky| (1.0 + centered_index(ky, lines).unsigned_abs() as f64 / lines as f64).powf(params.density_decay))
        .collect();
    let t_scale = lines as f64 / frames as f64;
    // Squared distance lookups along each axis.
    let dt2: Vec<f64> = (0..frames)
        .map(|d| {
            let d = d.min(frames - d) as f64 * t_scale;
            d * d
        })
        .collect();
    let signed: Vec<isize> = (0..lines).map(|ky| centered_index(ky, lines)).collect();

    let mut data = vec![0u8; cells];
    let mut potential = vec![0.0f64; cells];
    let mut per_frame = vec![0usize; frames];

    let place = |t: usize, ky: usize, data: &mut Vec<u8>, potential: &mut Vec<f64>, per_frame: &mut Vec<usize>| {
        data[t * lines + ky] = 1;
        per_frame[t] += 1;
        let w = weight[ky];
        for tt in 0..frames {
            let dt = dt2[(tt + frames - t) % frames];
            for kk in 0..lines {
                let dk = (signed[kk] - signed[ky]) as f64;
                let d2 = dt + dk * dk;
                if d2 > 0.0 {
                    potential[tt * lines + kk] += w / d2.powi(RIESZ_EXPONENT / 2);
                }
            }
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let t0 = rng.random_range(0..frames);
    place(t0, 0, &mut data, &mut potential, &mut per_frame);

    for _ in 1..n {
        let fewest = *per_frame.iter().min().expect("frames >= 1");
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for (t, &count) in per_frame.iter().enumerate() {
            if count != fewest {
                continue;
            }
            for ky in 0..lines {
                let cell = t * lines + ky;
                if data[cell] != 0 {
                    continue;
                }
                let cand = (weight[ky] * potential[cell], signed[ky].unsigned_abs(), t, ky);
                if best.is_none_or(|b| cand < b) {
                    best = Some(cand);
                }
            }
        }
        let (_, _, t, ky) = best.expect("a frame with the fewest samples has a free cell");
        place(t, ky, &mut data, &mut potential, &mut per_frame);
    }

    let mut mask = SamplingMask::from_raw(frames, lines, data, accel, params.center_band)?;
    let union = mask.times_sampled();
    for ky in center_lines(params.center_band, lines) {
        if union[ky] == 0 {
            let counts = mask.per_frame_counts();
            let t = (0..frames).min_by_key(|&t| (counts[t], t)).expect("frames >= 1");
            mask.data[t * lines + ky] = 1;
        }
    }
    Ok(mask)
}

/// Zero k-space samples on lines the mask does not acquire.
pub fn apply_mask(v: &DynTensor, mask: &SamplingMask) -> Result<DynTensor> {
    v.expect_domain(Domain::KspaceKt)?;
    let d = v.dims();
    mask.check(d)?;
    let mut out = v.clone();
    let w = d.cols;
    for (r, row) in out.as_mut_slice().chunks_exact_mut(w).enumerate() {
        let ky = r % d.rows;
        let t = (r / d.rows) % d.frames;
        if !mask.is_sampled(t, ky) {
            row.fill(C64::new(0.0, 0.0));
        }
    }
    Ok(out)
}

/// Sensitivity-combined image of the time-averaged acquired k-space,
/// replicated to every frame (the baseline `m_bar`).
///
/// Each k-space location is divided by `max(1, times sampled)`.
pub fn temporal_average(v: &DynTensor, mask: &SamplingMask, maps: &CoilMaps) -> Result<DynTensor> {
    v.expect_domain(Domain::KspaceKt)?;
    let d = v.dims();
    mask.check(d)?;
    let n_c = d.coils.ok_or_else(|| Error::shape("temporal_average expects per-coil k-space"))?;
    let divisor: Vec<f64> = mask.times_sampled().into_iter().map(|c| c.max(1) as f64).collect();
    let plane = d.frame_len();
    let avg_dims = Dims::with_coils(n_c, 1, d.rows, d.cols);
    let mut avg = DynTensor::zeros(avg_dims, Domain::KspaceKt);
    {
        let acc = avg.as_mut_slice();
        for c in 0..n_c {
            let dst = &mut acc[c * plane..(c + 1) * plane];
            for frame in v.coil(c).chunks_exact(plane) {
                for (o, s) in dst.iter_mut().zip(frame) {
                    *o += s;
                }
            }
            for (i, o) in dst.iter_mut().enumerate() {
                *o /= divisor[i / d.cols];
            }
        }
    }
    let img = Fourier::new(avg_dims).fs_h(&avg)?;
    let combined = combine(&img, maps)?;
    let frame = combined.as_slice();
    let out = Dims::new(d.frames, d.rows, d.cols);
    let mut data = Vec::with_capacity(out.len());
    for _ in 0..d.frames {
        data.extend_from_slice(frame);
    }
    DynTensor::from_vec(out, Domain::ImageXt, data)
}
