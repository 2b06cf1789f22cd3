//! Real-valued multi-channel convolution over a 3-D grid with per-axis
//! kernel size, dilation and boundary handling, plus its two adjoints.

use crate::error::{Error, Result};
use crate::tensors::{Dims, Domain, DynTensor, C64};

/// Boundary rule along one grid axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Zero,
    Circular,
}

impl Padding {
    pub fn as_str(self) -> &'static str {
        match self {
            Padding::Zero => "zero",
            Padding::Circular => "circular",
        }
    }

    pub fn parse(s: &str) -> Option<Padding> {
        match s {
            "zero" => Some(Padding::Zero),
            "circular" => Some(Padding::Circular),
            _ => None,
        }
    }
}

/// Channels over a `[d0, d1, d2]` grid, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub grid: [usize; 3],
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, grid: [usize; 3]) -> Self {
        FeatureMap {
            channels,
            grid,
            data: vec![0.0; channels * grid[0] * grid[1] * grid[2]],
        }
    }

    pub fn plane(&self) -> usize {
        self.grid[0] * self.grid[1] * self.grid[2]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane();
        &self.data[c * n..(c + 1) * n]
    }

    /// Complex combined tensor `[t, y, x]` to two channels (real, imag) on the
    /// grid `[t, y, x]`.
    pub fn from_complex(x: &DynTensor) -> Result<Self> {
        let d = x.dims();
        if d.coils.is_some() {
            return Err(Error::shape("network input must be coil-combined"));
        }
        let grid = [d.frames, d.rows, d.cols];
        let n = d.len();
        let mut data = vec![0.0; 2 * n];
        for (i, z) in x.as_slice().iter().enumerate() {
            data[i] = z.re;
            data[n + i] = z.im;
        }
        Ok(FeatureMap { channels: 2, grid, data })
    }

    pub fn to_complex(&self, dims: Dims, domain: Domain) -> Result<DynTensor> {
        if self.channels != 2 || [dims.frames, dims.rows, dims.cols] != self.grid || dims.coils.is_some() {
            return Err(Error::shape(format!(
                "{} channels on {:?} cannot form {dims:?}",
                self.channels, self.grid
            )));
        }
        let n = self.plane();
        let data = (0..n).map(|i| C64::new(self.data[i], self.data[n + i])).collect();
        DynTensor::from_vec(dims, domain, data)
    }

    pub fn add_assign(&mut self, other: &FeatureMap) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: [usize; 3],
    pub dilation: [usize; 3],
    pub padding: [Padding; 3],
}

impl ConvGeom {
    pub fn taps(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if self.kernel[a].is_multiple_of(2) || self.dilation[a] == 0 {
                return Err(Error::param(format!(
                    "kernel sizes must be odd and dilations positive, got {:?} / {:?}",
                    self.kernel, self.dilation
                )));
            }
        }
        Ok(())
    }
}

/// Contiguous copy run: `dst[d..d+len]` reads `src[s..s+len]`.
#[derive(Debug, Clone, Copy)]
struct Run {
    dst: usize,
    src: usize,
    len: usize,
}

/// Runs for every tap along one axis of length `n`.
fn axis_runs(n: usize, k: usize, dil: usize, pad: Padding) -> Vec<Vec<Run>> {
    let half = (k / 2) as isize;
    (0..k)
        .map(|tap| {
            let off = (tap as isize - half) * dil as isize;
            let mut runs = Vec::new();
            match pad {
                Padding::Zero => {
                    let lo = (-off).max(0) as usize;
                    let hi = (n as isize - off).min(n as isize).max(0) as usize;
                    if lo < hi {
                        runs.push(Run {
                            dst: lo,
                            src: (lo as isize + off) as usize,
                            len: hi - lo,
                        });
                    }
                }
                Padding::Circular => {
                    let mut p = 0;
                    while p < n {
                        let s = (p as isize + off).rem_euclid(n as isize) as usize;
                        let len = (n - p).min(n - s);
                        runs.push(Run { dst: p, src: s, len });
                        p += len;
                    }
                }
            }
            runs
        })
        .collect()
}

/// Precomputed index runs for one geometry on one grid.
#[derive(Debug, Clone)]
pub(crate) struct ConvPlan {
    grid: [usize; 3],
    runs: [Vec<Vec<Run>>; 3],
    kernel: [usize; 3],
}

impl ConvPlan {
    pub(crate) fn new(geom: &ConvGeom, grid: [usize; 3]) -> Self {
        let runs = [0, 1, 2].map(|a| axis_runs(grid[a], geom.kernel[a], geom.dilation[a], geom.padding[a]));
        ConvPlan {
            grid,
            runs,
            kernel: geom.kernel,
        }
    }

    /// Call `f(dst_offset, src_offset, len, tap)` for every contiguous run of
    /// every tap, offsets relative to one channel plane.
    fn for_each(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let [_, n1, n2] = self.grid;
        let [_, k1, k2] = self.kernel;
        for (t0, r0s) in self.runs[0].iter().enumerate() {
            for (t1, r1s) in self.runs[1].iter().enumerate() {
                for (t2, r2s) in self.runs[2].iter().enumerate() {
                    let tap = (t0 * k1 + t1) * k2 + t2;
                    for r0 in r0s {
                        for i0 in 0..r0.len {
                            let (d0, s0) = (r0.dst + i0, r0.src + i0);
                            for r1 in r1s {
                                for i1 in 0..r1.len {
                                    let (d1, s1) = (r1.dst + i1, r1.src + i1);
                                    let drow = (d0 * n1 + d1) * n2;
                                    let srow = (s0 * n1 + s1) * n2;
                                    for r2 in r2s {
                                        f(drow + r2.dst, srow + r2.src, r2.len, tap);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `out[o] += sum_c sum_tap w[o, c, tap] * shift_tap(input[c])`.
pub(crate) fn conv_accumulate(plan: &ConvPlan, w: &[f64], c_in: usize, c_out: usize, input: &FeatureMap, out: &mut FeatureMap) {
    let plane = input.plane();
    let taps: usize = plan.kernel.iter().product();
    debug_assert_eq!(w.len(), c_out * c_in * taps);
    for o in 0..c_out {
        let dst = &mut out.data[o * plane..(o + 1) * plane];
        for c in 0..c_in {
            let src = &input.data[c * plane..(c + 1) * plane];
            let wc = &w[(o * c_in + c) * taps..(o * c_in + c + 1) * taps];
            plan.for_each(|d, s, len, tap| {
                let wt = wc[tap];
                for (a, b) in dst[d..d + len].iter_mut().zip(&src[s..s + len]) {
                    *a += wt * b;
                }
            });
        }
    }
}

/// Adjoint in the input: `g_in[c] += sum_o sum_tap w[o, c, tap] * shift_tap^T(g_out[o])`.
pub(crate) fn conv_backward_input(plan: &ConvPlan, w: &[f64], c_in: usize, c_out: usize, g_out: &FeatureMap, g_in: &mut FeatureMap) {
    let plane = g_out.plane();
    let taps: usize = plan.kernel.iter().product();
    for c in 0..c_in {
        let dst = &mut g_in.data[c * plane..(c + 1) * plane];
        for o in 0..c_out {
            let src = &g_out.data[o * plane..(o + 1) * plane];
            let wc = &w[(o * c_in + c) * taps..(o * c_in + c + 1) * taps];
            plan.for_each(|d, s, len, tap| {
                let wt = wc[tap];
                for (a, b) in dst[s..s + len].iter_mut().zip(&src[d..d + len]) {
                    *a += wt * b;
                }
            });
        }
    }
}

/// Gradient in the weights: `g_w[o, c, tap] += <g_out[o], shift_tap(input[c])>`.
pub(crate) fn conv_backward_weight(plan: &ConvPlan, c_in: usize, c_out: usize, input: &FeatureMap, g_out: &FeatureMap, g_w: &mut [f64]) {
    let plane = input.plane();
    let taps: usize = plan.kernel.iter().product();
    for o in 0..c_out {
        let go = &g_out.data[o * plane..(o + 1) * plane];
        for c in 0..c_in {
            let src = &input.data[c * plane..(c + 1) * plane];
            let gw = &mut g_w[(o * c_in + c) * taps..(o * c_in + c + 1) * taps];
            plan.for_each(|d, s, len, tap| {
                gw[tap] += go[d..d + len].iter().zip(&src[s..s + len]).map(|(a, b)| a * b).sum::<f64>();
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(channels: usize, grid: [usize; 3], rng: &mut ChaCha8Rng) -> FeatureMap {
        let mut f = FeatureMap::zeros(channels, grid);
        f.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        f
    }

    /// Direct definition with explicit index arithmetic.
    fn naive_conv(geom: &ConvGeom, w: &[f64], c_in: usize, c_out: usize, x: &FeatureMap) -> FeatureMap {
        let g = x.grid;
        let mut out = FeatureMap::zeros(c_out, g);
        let k = geom.kernel;
        let src = |a: usize, p: usize, tap: usize| -> Option<usize> {
            let off = (tap as isize - (k[a] / 2) as isize) * geom.dilation[a] as isize;
            let q = p as isize + off;
            match geom.padding[a] {
                Padding::Zero => (q >= 0 && q < g[a] as isize).then_some(q as usize),
                Padding::Circular => Some(q.rem_euclid(g[a] as isize) as usize),
            }
        };
        for o in 0..c_out {
            for p0 in 0..g[0] {
                for p1 in 0..g[1] {
                    for p2 in 0..g[2] {
                        let mut acc = 0.0;
                        for c in 0..c_in {
                            for t0 in 0..k[0] {
                                for t1 in 0..k[1] {
                                    for t2 in 0..k[2] {
                                        if let (Some(q0), Some(q1), Some(q2)) = (src(0, p0, t0), src(1, p1, t1), src(2, p2, t2)) {
                                            let wi = (o * c_in + c) * geom.taps() + (t0 * k[1] + t1) * k[2] + t2;
                                            acc += w[wi] * x.data[c * x.plane() + (q0 * g[1] + q1) * g[2] + q2];
                                        }
                                    }
                                }
                            }
                        }
                        out.data[o * x.plane() + (p0 * g[1] + p1) * g[2] + p2] = acc;
                    }
                }
            }
        }
        out
    }

    fn geoms() -> Vec<ConvGeom> {
        use Padding::*;
        vec![
            ConvGeom { kernel: [3, 3, 3], dilation: [1, 1, 1], padding: [Circular, Zero, Zero] },
            ConvGeom { kernel: [3, 1, 3], dilation: [1, 1, 2], padding: [Circular, Zero, Zero] },
            ConvGeom { kernel: [1, 3, 5], dilation: [1, 2, 3], padding: [Zero, Circular, Zero] },
            // Dilation reaching past the whole axis.
            ConvGeom { kernel: [3, 3, 1], dilation: [5, 4, 1], padding: [Circular, Zero, Zero] },
        ]
    }

    #[test]
    fn matches_naive_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for geom in geoms() {
            let grid = [3, 4, 5];
            let (c_in, c_out) = (2, 3);
            let x = random_map(c_in, grid, &mut rng);
            let w: Vec<f64> = (0..c_in * c_out * geom.taps()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let plan = ConvPlan::new(&geom, grid);
            let mut out = FeatureMap::zeros(c_out, grid);
            conv_accumulate(&plan, &w, c_in, c_out, &x, &mut out);
            let oracle = naive_conv(&geom, &w, c_in, c_out, &x);
            for (a, b) in out.data.iter().zip(&oracle.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn input_adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for geom in geoms() {
            let grid = [4, 3, 6];
            let (c_in, c_out) = (3, 2);
            let x = random_map(c_in, grid, &mut rng);
            let g = random_map(c_out, grid, &mut rng);
            let w: Vec<f64> = (0..c_in * c_out * geom.taps()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let plan = ConvPlan::new(&geom, grid);
            let mut y = FeatureMap::zeros(c_out, grid);
            conv_accumulate(&plan, &w, c_in, c_out, &x, &mut y);
            let mut gx = FeatureMap::zeros(c_in, grid);
            conv_backward_input(&plan, &w, c_in, c_out, &g, &mut gx);
            let lhs: f64 = y.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data.iter().zip(&gx.data).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let geom = geoms()[0];
        let grid = [3, 3, 4];
        let (c_in, c_out) = (2, 2);
        let x = random_map(c_in, grid, &mut rng);
        let g = random_map(c_out, grid, &mut rng);
        let w: Vec<f64> = (0..c_in * c_out * geom.taps()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let plan = ConvPlan::new(&geom, grid);
        let loss = |w: &[f64]| {
            let mut y = FeatureMap::zeros(c_out, grid);
            conv_accumulate(&plan, w, c_in, c_out, &x, &mut y);
            y.data.iter().zip(&g.data).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut gw = vec![0.0; w.len()];
        conv_backward_weight(&plan, c_in, c_out, &x, &g, &mut gw);
        let h = 1e-5;
        for i in 0..w.len() {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[i] += h;
            wm[i] -= h;
            let fd = (loss(&wp) - loss(&wm)) / (2.0 * h);
            assert!((fd - gw[i]).abs() <= 1e-6 * gw[i].abs().max(1.0));
        }
    }

    #[test]
    fn complex_round_trip() {
        let t = DynTensor::from_fn(Dims::new(2, 3, 4), Domain::Xf, |_, t, y, x| C64::new(t as f64, (y * 4 + x) as f64));
        let f = FeatureMap::from_complex(&t).unwrap();
        assert_eq!(f.grid, [2, 3, 4]);
        assert_eq!(f.to_complex(t.dims(), Domain::Xf).unwrap(), t);
        assert!(f.to_complex(Dims::new(2, 4, 3), Domain::Xf).is_err());
    }

    #[test]
    fn even_kernel_rejected() {
        let g = ConvGeom { kernel: [2, 3, 3], dilation: [1, 1, 1], padding: [Padding::Zero; 3] };
        assert!(g.validate().is_err());
    }
}
