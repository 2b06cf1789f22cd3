//! Unitary spatial (`y`,`x`) and temporal (`t`) DFTs.
//!
//! Both directions carry a `1/sqrt(n)` factor so the adjoint is the inverse.
//! Zero frequency sits at index 0; [`centered_index`] maps an index to its
//! signed frequency for display or density weighting.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensors::{Dims, Domain, DynTensor, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisSet {
    Spatial,
    Temporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Adjoint,
}

/// A prepared unitary transform over one axis set.
#[derive(Clone)]
pub struct FftPlan {
    axes: AxisSet,
    direction: Direction,
    lengths: Vec<usize>,
    kernels: Vec<Arc<dyn Fft<f64>>>,
    scale: f64,
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan")
            .field("axes", &self.axes)
            .field("direction", &self.direction)
            .field("lengths", &self.lengths)
            .finish()
    }
}

impl FftPlan {
    pub fn new(planner: &mut FftPlanner<f64>, axes: AxisSet, direction: Direction, dims: Dims) -> Self {
        let lengths = match axes {
            AxisSet::Spatial => vec![dims.rows, dims.cols],
            AxisSet::Temporal => vec![dims.frames],
        };
        let kernels = lengths
            .iter()
            .map(|&n| match direction {
                Direction::Forward => planner.plan_fft_forward(n),
                Direction::Adjoint => planner.plan_fft_inverse(n),
            })
            .collect();
        let scale = 1.0 / (lengths.iter().product::<usize>() as f64).sqrt();
        FftPlan {
            axes,
            direction,
            lengths,
            kernels,
            scale,
        }
    }

    pub fn axes(&self) -> AxisSet {
        self.axes
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    fn check(&self, dims: Dims) -> Result<()> {
        let ok = match self.axes {
            AxisSet::Spatial => self.lengths == [dims.rows, dims.cols],
            AxisSet::Temporal => self.lengths == [dims.frames],
        };
        if !ok {
            return Err(Error::shape(format!("plan lengths {:?} do not fit {dims:?}", self.lengths)));
        }
        Ok(())
    }

    /// Apply in place, ignoring domain tags.
    pub fn apply_raw(&self, dims: Dims, data: &mut [C64]) -> Result<()> {
        self.check(dims)?;
        match self.axes {
            AxisSet::Spatial => self.apply_spatial(dims, data),
            AxisSet::Temporal => self.apply_temporal(dims, data),
        }
        Ok(())
    }

    fn apply_spatial(&self, dims: Dims, data: &mut [C64]) {
        let (h, w) = (dims.rows, dims.cols);
        let row_fft = &self.kernels[1];
        let col_fft = &self.kernels[0];
        let mut col = vec![C64::new(0.0, 0.0); h];
        let mut scratch = vec![C64::new(0.0, 0.0); row_fft.get_inplace_scratch_len().max(col_fft.get_inplace_scratch_len())];
        for slab in data.chunks_exact_mut(h * w) {
            for row in slab.chunks_exact_mut(w) {
                row_fft.process_with_scratch(row, &mut scratch);
            }
            for x in 0..w {
                for y in 0..h {
                    col[y] = slab[y * w + x];
                }
                col_fft.process_with_scratch(&mut col, &mut scratch);
                for y in 0..h {
                    slab[y * w + x] = col[y] * self.scale;
                }
            }
        }
    }

    fn apply_temporal(&self, dims: Dims, data: &mut [C64]) {
        let t_len = dims.frames;
        let plane = dims.frame_len();
        let fft = &self.kernels[0];
        let mut line = vec![C64::new(0.0, 0.0); t_len];
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for coil in data.chunks_exact_mut(t_len * plane) {
            for p in 0..plane {
                for t in 0..t_len {
                    line[t] = coil[t * plane + p];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for t in 0..t_len {
                    coil[t * plane + p] = line[t] * self.scale;
                }
            }
        }
    }
}

/// Forward and adjoint plans for both axis sets at one tensor size.
#[derive(Debug, Clone)]
pub struct Fourier {
    dims: Dims,
    fs: FftPlan,
    fs_h: FftPlan,
    ft: FftPlan,
    ft_h: FftPlan,
}

impl Fourier {
    pub fn new(dims: Dims) -> Self {
        let mut planner = FftPlanner::new();
        Fourier {
            dims,
            fs: FftPlan::new(&mut planner, AxisSet::Spatial, Direction::Forward, dims),
            fs_h: FftPlan::new(&mut planner, AxisSet::Spatial, Direction::Adjoint, dims),
            ft: FftPlan::new(&mut planner, AxisSet::Temporal, Direction::Forward, dims),
            ft_h: FftPlan::new(&mut planner, AxisSet::Temporal, Direction::Adjoint, dims),
        }
    }

    fn fits(&self, x: &DynTensor) -> Result<()> {
        let d = x.dims();
        if (d.frames, d.rows, d.cols) != (self.dims.frames, self.dims.rows, self.dims.cols) {
            return Err(Error::shape(format!("transform planned for {:?}, got {d:?}", self.dims)));
        }
        Ok(())
    }

    fn run(&self, plan: &FftPlan, x: &DynTensor, from: Domain, to: Domain) -> Result<DynTensor> {
        x.expect_domain(from)?;
        self.fits(x)?;
        let mut out = x.clone().with_domain(to);
        let dims = out.dims();
        plan.apply_raw(dims, out.as_mut_slice())?;
        Ok(out)
    }

    /// `F_s`: image-xt -> kspace-kt.
    pub fn fs(&self, x: &DynTensor) -> Result<DynTensor> {
        self.run(&self.fs, x, Domain::ImageXt, Domain::KspaceKt)
    }

    /// `F_s^H`: kspace-kt -> image-xt.
    pub fn fs_h(&self, x: &DynTensor) -> Result<DynTensor> {
        self.run(&self.fs_h, x, Domain::KspaceKt, Domain::ImageXt)
    }

    /// `F_t`: image-xt -> xf.
    pub fn ft(&self, x: &DynTensor) -> Result<DynTensor> {
        self.run(&self.ft, x, Domain::ImageXt, Domain::Xf)
    }

    /// `F_t^H`: xf -> image-xt.
    pub fn ft_h(&self, x: &DynTensor) -> Result<DynTensor> {
        self.run(&self.ft_h, x, Domain::Xf, Domain::ImageXt)
    }
}

pub fn fft_spatial(x: &DynTensor) -> Result<DynTensor> {
    Fourier::new(x.dims()).fs(x)
}

pub fn ifft_spatial(x: &DynTensor) -> Result<DynTensor> {
    Fourier::new(x.dims()).fs_h(x)
}

pub fn fft_temporal(x: &DynTensor) -> Result<DynTensor> {
    Fourier::new(x.dims()).ft(x)
}

pub fn ifft_temporal(x: &DynTensor) -> Result<DynTensor> {
    Fourier::new(x.dims()).ft_h(x)
}

/// Signed frequency of DFT index `i` for length `n`: `0, 1, .., -2, -1`.
pub fn centered_index(i: usize, n: usize) -> isize {
    if i < n.div_ceil(2) {
        i as isize
    } else {
        i as isize - n as isize
    }
}

/// DFT index holding signed frequency `k` for length `n`.
pub fn index_of_frequency(k: isize, n: usize) -> usize {
    k.rem_euclid(n as isize) as usize
}

/// Reorder one plane so zero frequency is in the middle, for viewing.
pub fn centered_view(plane: &[C64], rows: usize, cols: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); plane.len()];
    for y in 0..rows {
        for x in 0..cols {
            let ys = (y + rows / 2) % rows;
            let xs = (x + cols / 2) % cols;
            out[ys * cols + xs] = plane[y * cols + x];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random(dims: Dims, domain: Domain, seed: u64) -> DynTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DynTensor::from_fn(dims, domain, |_, _, _, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    /// O(N^2) unitary DFT of one line.
    fn naive_dft(input: &[C64], sign: f64) -> Vec<C64> {
        let n = input.len();
        (0..n)
            .map(|k| {
                let mut acc = C64::new(0.0, 0.0);
                for (j, v) in input.iter().enumerate() {
                    let ang = sign * 2.0 * PI * (k * j % n) as f64 / n as f64;
                    acc += v * C64::new(ang.cos(), ang.sin());
                }
                acc / (n as f64).sqrt()
            })
            .collect()
    }

    fn naive_dft2(plane: &[C64], h: usize, w: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); h * w];
        for ky in 0..h {
            for kx in 0..w {
                let mut acc = C64::new(0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let ang = -2.0 * PI * ((ky * y % h) as f64 / h as f64 + (kx * x % w) as f64 / w as f64);
                        acc += plane[y * w + x] * C64::new(ang.cos(), ang.sin());
                    }
                }
                out[ky * w + kx] = acc / ((h * w) as f64).sqrt();
            }
        }
        out
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn constant_image_has_single_dc_bin() {
        let dims = Dims::new(2, 6, 5);
        let c = C64::new(0.7, -0.2);
        let x = DynTensor::from_fn(dims, Domain::ImageXt, |_, _, _, _| c);
        let k = fft_spatial(&x).unwrap();
        assert_eq!(k.domain(), Domain::KspaceKt);
        for t in 0..2 {
            for y in 0..6 {
                for xx in 0..5 {
                    let v = k.get(0, t, y, xx);
                    let expect = if y == 0 && xx == 0 { c * (30f64).sqrt() } else { C64::new(0.0, 0.0) };
                    assert!((v - expect).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dc_delta_gives_constant_image() {
        let dims = Dims::new(1, 4, 8);
        let mut k = DynTensor::zeros(dims, Domain::KspaceKt);
        k.as_mut_slice()[0] = C64::new(1.0, 0.0);
        let img = ifft_spatial(&k).unwrap();
        for v in img.as_slice() {
            assert!((v - C64::new(1.0 / 32f64.sqrt(), 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn spatial_matches_naive_dft() {
        let dims = Dims::new(1, 8, 8);
        let x = random(dims, Domain::ImageXt, 3);
        let k = fft_spatial(&x).unwrap();
        let oracle = naive_dft2(x.as_slice(), 8, 8);
        assert!(max_diff(k.as_slice(), &oracle) < 1e-10);
    }

    #[test]
    fn temporal_cases() {
        let dims = Dims::new(5, 2, 3);
        let frame = random(Dims::new(1, 2, 3), Domain::ImageXt, 9);
        let stat = DynTensor::from_fn(dims, Domain::ImageXt, |_, _, y, x| frame.get(0, 0, y, x));
        let f = fft_temporal(&stat).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                assert!((f.get(0, 0, y, x) - frame.get(0, 0, y, x) * 5f64.sqrt()).norm() < 1e-12);
                for t in 1..5 {
                    assert!(f.get(0, t, y, x).norm() < 1e-12);
                }
            }
        }

        let single = random(Dims::new(1, 3, 3), Domain::ImageXt, 10);
        let f1 = fft_temporal(&single).unwrap();
        assert!(max_diff(f1.as_slice(), single.as_slice()) < 1e-15);
    }

    #[test]
    fn temporal_matches_naive_dft() {
        let dims = Dims::with_coils(2, 7, 3, 2);
        let x = random(dims, Domain::ImageXt, 11);
        let f = fft_temporal(&x).unwrap();
        for c in 0..2 {
            for y in 0..3 {
                for xx in 0..2 {
                    let line: Vec<C64> = (0..7).map(|t| x.get(c, t, y, xx)).collect();
                    let oracle = naive_dft(&line, -1.0);
                    let got: Vec<C64> = (0..7).map(|t| f.get(c, t, y, xx)).collect();
                    assert!(max_diff(&got, &oracle) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn wrong_domain_is_rejected() {
        let x = random(Dims::new(2, 2, 2), Domain::KspaceKt, 1);
        assert!(matches!(fft_spatial(&x), Err(Error::Domain { .. })));
        assert!(matches!(ifft_temporal(&x), Err(Error::Domain { .. })));
    }

    #[test]
    fn round_trips_and_adjointness() {
        let dims = Dims::with_coils(3, 4, 9, 6);
        let f = Fourier::new(dims);
        let a = random(dims, Domain::ImageXt, 21);
        let b = random(dims, Domain::KspaceKt, 22);
        let back = f.fs_h(&f.fs(&a).unwrap()).unwrap();
        assert!(max_diff(back.as_slice(), a.as_slice()) < 1e-12);
        let lhs = f.fs(&a).unwrap().inner(&b).unwrap();
        let rhs = a.inner(&f.fs_h(&b).unwrap()).unwrap();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));

        let bx = random(dims, Domain::Xf, 23);
        let lhs = f.ft(&a).unwrap().inner(&bx).unwrap();
        let rhs = a.inner(&f.ft_h(&bx).unwrap()).unwrap();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn centered_helpers() {
        assert_eq!((0..5).map(|i| centered_index(i, 5)).collect::<Vec<_>>(), vec![0, 1, 2, -2, -1]);
        assert_eq!((0..4).map(|i| centered_index(i, 4)).collect::<Vec<_>>(), vec![0, 1, -2, -1]);
        for n in [4usize, 5] {
            for i in 0..n {
                assert_eq!(index_of_frequency(centered_index(i, n), n), i);
            }
        }
        let plane: Vec<C64> = (0..4).map(|i| C64::new(i as f64, 0.0)).collect();
        let v = centered_view(&plane, 2, 2);
        assert_eq!(v[3], C64::new(0.0, 0.0));
    }
}
