//! Image quality metrics: NMSE and PSNR on complex images, SSIM and HFEN on
//! magnitudes, all evaluated inside a crop around the moving anatomy.
//!
//! Conventions: SSIM uses an 11x11 Gaussian window (sigma 1.5, K1 = 0.01,
//! K2 = 0.03, L = 1) over fully contained windows; HFEN uses a 15x15
//! Laplacian-of-Gaussian (sigma 1.5, zero-sum) with symmetric reflection at
//! the borders. PSNR takes `max |ref|` inside the crop as the peak.

use crate::error::{Error, Result};
use crate::tensors::{DynTensor, RealTensor};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const LOG_SIZE: usize = 15;
const LOG_SIGMA: f64 = 1.5;
const DYNAMIC_FRACTION: f64 = 0.05;

/// Half-open pixel box `[y0, y1) x [x0, x1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropBox {
    pub y0: usize,
    pub y1: usize,
    pub x0: usize,
    pub x1: usize,
    /// Set when the input had no temporal variation and the full FOV was used.
    pub full_fov: bool,
}

impl CropBox {
    pub fn contains(&self, other: &CropBox) -> bool {
        self.y0 <= other.y0 && self.x0 <= other.x0 && self.y1 >= other.y1 && self.x1 >= other.x1
    }

    pub fn apply(&self, x: &DynTensor) -> Result<DynTensor> {
        x.crop(self.y0..self.y1, self.x0..self.x1)
    }
}

/// Bounding box of pixels whose temporal standard deviation of `|gt|` exceeds
/// 5% of the largest one, grown by `margin` and clipped to the FOV.
pub fn crop_dynamic(gt: &DynTensor, margin: usize) -> Result<CropBox> {
    let d = gt.dims();
    if d.coils.is_some() {
        return Err(Error::shape("crop_dynamic expects a coil-combined sequence"));
    }
    if d.frames < 2 {
        return Err(Error::param("crop_dynamic needs at least two frames"));
    }
    let mag = gt.magnitude()?;
    let plane = d.frame_len();
    let nt = d.frames as f64;
    let std: Vec<f64> = (0..plane)
        .map(|p| {
            let mean = (0..d.frames).map(|t| mag.as_slice()[t * plane + p]).sum::<f64>() / nt;
            let var = (0..d.frames).map(|t| (mag.as_slice()[t * plane + p] - mean).powi(2)).sum::<f64>() / nt;
            var.sqrt()
        })
        .collect();
    let max_std = std.iter().copied().fold(0.0, f64::max);
    let scale = mag.max().max(1.0);
    if max_std <= 1e-12 * scale {
        return Ok(CropBox {
            y0: 0,
            y1: d.rows,
            x0: 0,
            x1: d.cols,
            full_fov: true,
        });
    }
    let thresh = DYNAMIC_FRACTION * max_std;
    let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
    for y in 0..d.rows {
        for x in 0..d.cols {
            if std[y * d.cols + x] > thresh {
                y0 = y0.min(y);
                y1 = y1.max(y + 1);
                x0 = x0.min(x);
                x1 = x1.max(x + 1);
            }
        }
    }
    Ok(CropBox {
        y0: y0.saturating_sub(margin),
        y1: (y1 + margin).min(d.rows),
        x0: x0.saturating_sub(margin),
        x1: (x1 + margin).min(d.cols),
        full_fov: false,
    })
}

fn check_pair(x: &DynTensor, reference: &DynTensor) -> Result<()> {
    if x.dims() != reference.dims() {
        return Err(Error::shape(format!("{:?} vs {:?}", x.dims(), reference.dims())));
    }
    Ok(())
}

/// `||x - ref||^2 / ||ref||^2`.
pub fn nmse(x: &DynTensor, reference: &DynTensor) -> Result<f64> {
    check_pair(x, reference)?;
    let den: f64 = reference.as_slice().iter().map(|z| z.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::param("nmse reference is all zero"));
    }
    let num: f64 = x.as_slice().iter().zip(reference.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(num / den)
}

/// `10 log10(max |ref|^2 / mean |x - ref|^2)`; `+inf` for identical inputs.
pub fn psnr(x: &DynTensor, reference: &DynTensor) -> Result<f64> {
    check_pair(x, reference)?;
    let peak = reference.max_abs();
    if peak == 0.0 {
        return Err(Error::param("psnr reference is all zero"));
    }
    let n = x.as_slice().len() as f64;
    let mse: f64 = x.as_slice().iter().zip(reference.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64 - c, (i % size) as f64 - c);
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Laplacian-of-Gaussian kernel shifted to sum to zero.
pub fn log_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let s2 = sigma * sigma;
    let mut k: Vec<f64> = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64 - c, (i % size) as f64 - c);
            let r2 = (x * x + y * y) / (2.0 * s2);
            -1.0 / (std::f64::consts::PI * s2 * s2) * (1.0 - r2) * (-r2).exp()
        })
        .collect();
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    k
}

fn check_real_pair(x: &RealTensor, reference: &RealTensor) -> Result<()> {
    if (x.frames, x.rows, x.cols) != (reference.frames, reference.rows, reference.cols) {
        return Err(Error::shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            x.frames, x.rows, x.cols, reference.frames, reference.rows, reference.cols
        )));
    }
    Ok(())
}

fn ssim_frame(a: &[f64], b: &[f64], rows: usize, cols: usize, window: &[f64]) -> f64 {
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let n = SSIM_WINDOW;
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=rows - n {
        for x in 0..=cols - n {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let w = window[i * n + j];
                    let p = (y + i) * cols + x + j;
                    let (va, vb) = (a[p], b[p]);
                    ma += w * va;
                    mb += w * vb;
                    saa += w * va * va;
                    sbb += w * vb * vb;
                    sab += w * va * vb;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Mean SSIM per frame, for magnitudes already scaled to `[0, 1]`.
pub fn ssim_per_frame(x: &RealTensor, reference: &RealTensor) -> Result<Vec<f64>> {
    check_real_pair(x, reference)?;
    if x.rows < SSIM_WINDOW || x.cols < SSIM_WINDOW {
        return Err(Error::param(format!(
            "ssim window {SSIM_WINDOW} is larger than the {}x{} image",
            x.rows, x.cols
        )));
    }
    let window = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    Ok((0..x.frames)
        .map(|t| ssim_frame(x.frame(t), reference.frame(t), x.rows, x.cols, &window))
        .collect())
}

pub fn ssim(x: &RealTensor, reference: &RealTensor) -> Result<f64> {
    let f = ssim_per_frame(x, reference)?;
    Ok(f.iter().sum::<f64>() / f.len() as f64)
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut k = i.rem_euclid(period);
    if k >= n {
        k = period - 1 - k;
    }
    k as usize
}

fn filter_log(img: &[f64], rows: usize, cols: usize, kernel: &[f64]) -> Vec<f64> {
    let half = (LOG_SIZE / 2) as isize;
    let mut out = vec![0.0; rows * cols];
    for y in 0..rows {
        for x in 0..cols {
            let mut acc = 0.0;
            for i in 0..LOG_SIZE {
                let yy = reflect(y as isize + i as isize - half, rows);
                for j in 0..LOG_SIZE {
                    let xx = reflect(x as isize + j as isize - half, cols);
                    acc += kernel[i * LOG_SIZE + j] * img[yy * cols + xx];
                }
            }
            out[y * cols + x] = acc;
        }
    }
    out
}

/// `||LoG(x) - LoG(ref)|| / ||LoG(ref)||` per frame.
pub fn hfen_per_frame(x: &RealTensor, reference: &RealTensor) -> Result<Vec<f64>> {
    check_real_pair(x, reference)?;
    let kernel = log_kernel(LOG_SIZE, LOG_SIGMA);
    (0..x.frames)
        .map(|t| {
            let fx = filter_log(x.frame(t), x.rows, x.cols, &kernel);
            let fr = filter_log(reference.frame(t), x.rows, x.cols, &kernel);
            let den = fr.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale: f64 = reference.frame(t).iter().map(|v| v.abs()).sum();
            if den <= 1e-12 * scale {
                return Err(Error::param(format!("hfen reference frame {t} has no high-frequency content")));
            }
            let num = fx.iter().zip(&fr).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            Ok(num / den)
        })
        .collect()
}

pub fn hfen(x: &RealTensor, reference: &RealTensor) -> Result<f64> {
    let f = hfen_per_frame(x, reference)?;
    Ok(f.iter().sum::<f64>() / f.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetrics {
    pub nmse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub hfen: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub nmse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub hfen: f64,
    pub crop: CropBox,
    pub per_frame: Vec<FrameMetrics>,
}

fn frame_of(x: &DynTensor, t: usize) -> Result<DynTensor> {
    let d = x.dims();
    let plane = d.frame_len();
    DynTensor::from_vec(
        crate::tensors::Dims::new(1, d.rows, d.cols),
        x.domain(),
        x.as_slice()[t * plane..(t + 1) * plane].to_vec(),
    )
}

/// All four metrics inside the dynamic crop of `gt` (grown by `margin`).
/// SSIM and HFEN see magnitudes divided by `max |gt|` inside the crop.
pub fn evaluate(x: &DynTensor, gt: &DynTensor, margin: usize) -> Result<EvalReport> {
    check_pair(x, gt)?;
    let crop = crop_dynamic(gt, margin)?;
    evaluate_in(x, gt, crop)
}

pub fn evaluate_in(x: &DynTensor, gt: &DynTensor, crop: CropBox) -> Result<EvalReport> {
    check_pair(x, gt)?;
    let xc = crop.apply(x)?;
    let gc = crop.apply(gt)?;
    let peak = gc.max_abs();
    if peak == 0.0 {
        return Err(Error::param("reference is zero inside the crop"));
    }
    let xm = xc.magnitude()?.map(|v| v / peak);
    let gm = gc.magnitude()?.map(|v| v / peak);
    let ssim_f = ssim_per_frame(&xm, &gm)?;
    let hfen_f = hfen_per_frame(&xm, &gm)?;
    let mut per_frame = Vec::with_capacity(xc.dims().frames);
    for t in 0..xc.dims().frames {
        let (xf, gf) = (frame_of(&xc, t)?, frame_of(&gc, t)?);
        per_frame.push(FrameMetrics {
            nmse: nmse(&xf, &gf)?,
            psnr: psnr(&xf, &gf)?,
            ssim: ssim_f[t],
            hfen: hfen_f[t],
        });
    }
    let n = per_frame.len() as f64;
    Ok(EvalReport {
        nmse: nmse(&xc, &gc)?,
        psnr: psnr(&xc, &gc)?,
        ssim: ssim_f.iter().sum::<f64>() / n,
        hfen: hfen_f.iter().sum::<f64>() / n,
        crop,
        per_frame,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate, PhantomSpec};
    use crate::tensors::{Dims, Domain, C64};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: Dims, seed: u64) -> DynTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DynTensor::from_fn(dims, Domain::ImageXt, |_, _, _, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn static_sequence_falls_back_to_full_fov() {
        let frame = random(Dims::new(1, 8, 9), 1);
        let s = DynTensor::from_fn(Dims::new(3, 8, 9), Domain::ImageXt, |_, _, y, x| frame.get(0, 0, y, x));
        let b = crop_dynamic(&s, 2).unwrap();
        assert!(b.full_fov);
        assert_eq!((b.y0, b.y1, b.x0, b.x1), (0, 8, 0, 9));
        assert!(crop_dynamic(&frame, 0).is_err());
    }

    #[test]
    fn crop_contains_pulsating_ellipse() {
        let spec = PhantomSpec {
            ellipses: vec![PhantomSpec::default().ellipses[1].clone()],
            ..PhantomSpec::default()
        };
        let gt = generate(&spec).unwrap();
        let b = crop_dynamic(&gt, 0).unwrap();
        let e = &spec.ellipses[0];
        // Extent of the ring swept between the smallest and largest radius.
        let (ry, rx) = (e.axes.0 * (1.0 + e.pulsation), e.axes.1 * (1.0 + e.pulsation));
        assert!(b.y0 as f64 <= (e.center.0 - ry).ceil() && b.y1 as f64 >= (e.center.0 + ry).floor());
        assert!(b.x0 as f64 <= (e.center.1 - rx).ceil() && b.x1 as f64 >= (e.center.1 + rx).floor());
        let wide = crop_dynamic(&gt, 4).unwrap();
        assert!(wide.contains(&b));
    }

    #[test]
    fn nmse_psnr_cases() {
        let r = random(Dims::new(2, 4, 4), 2);
        assert_eq!(nmse(&r, &r).unwrap(), 0.0);
        assert_eq!(psnr(&r, &r).unwrap(), f64::INFINITY);
        assert!(nmse(&r, &r.zeros_like()).is_err());

        // |ref| <= 1 with a unit peak, constant error of modulus e.
        let mut reference = r.map(|z| z * 0.5);
        reference = reference.map(|z| if z.norm() > 0.7 { z / z.norm() * 0.7 } else { z });
        let peak_idx = 3;
        let mut data = reference.clone().into_vec();
        data[peak_idx] = C64::new(0.0, 1.0);
        let reference = DynTensor::from_vec(r.dims(), Domain::ImageXt, data).unwrap();
        let e = 0.03;
        let x = reference.map(|z| z + C64::from_polar(e, 0.4));
        assert!((psnr(&x, &reference).unwrap() + 20.0 * e.log10()).abs() < 1e-9);
    }

    #[test]
    fn nmse_psnr_match_direct_summation() {
        let a = random(Dims::new(3, 5, 4), 3);
        let b = random(Dims::new(3, 5, 4), 4);
        let (mut num, mut den, mut peak) = (0.0, 0.0, 0.0f64);
        for i in 0..a.as_slice().len() {
            let (x, r) = (a.as_slice()[i], b.as_slice()[i]);
            num += (x.re - r.re).powi(2) + (x.im - r.im).powi(2);
            den += r.re * r.re + r.im * r.im;
            peak = peak.max((r.re * r.re + r.im * r.im).sqrt());
        }
        assert!((nmse(&a, &b).unwrap() - num / den).abs() < 1e-12);
        let expect = 10.0 * (peak * peak / (num / 60.0)).log10();
        assert!((psnr(&a, &b).unwrap() - expect).abs() < 1e-12);
    }

    fn phantom_mag() -> RealTensor {
        let gt = generate(&PhantomSpec::scaled(2, 32, 32)).unwrap();
        gt.magnitude().unwrap()
    }

    #[test]
    fn ssim_cases() {
        let m = phantom_mag();
        assert!((ssim(&m, &m).unwrap() - 1.0).abs() < 1e-12);
        let inv = m.map(|v| 1.0 - v);
        assert!(ssim(&inv, &m).unwrap() < 0.5);
        let c = RealTensor::from_vec(1, 12, 12, vec![0.4; 144]).unwrap();
        assert!((ssim(&c, &c).unwrap() - 1.0).abs() < 1e-12);
        let small = RealTensor::from_vec(1, 8, 8, vec![0.4; 64]).unwrap();
        assert!(ssim(&small, &small).is_err());
    }

    #[test]
    fn ssim_is_symmetric() {
        let m = phantom_mag();
        let n = m.map(|v| (v * 0.9 + 0.05 * (v * 17.0).sin()).abs());
        assert!((ssim(&m, &n).unwrap() - ssim(&n, &m).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn hfen_cases() {
        let k = log_kernel(LOG_SIZE, LOG_SIGMA);
        assert!(k.iter().sum::<f64>().abs() < 1e-12);
        let m = phantom_mag();
        assert_eq!(hfen(&m, &m).unwrap(), 0.0);
        let shifted = m.map(|v| v + 0.25);
        assert!(hfen(&shifted, &m).unwrap() < 1e-6);
        let flat = RealTensor::from_vec(1, 16, 16, vec![0.3; 256]).unwrap();
        assert!(hfen(&flat, &flat).is_err());
    }

    #[test]
    fn scale_invariance() {
        let gt = generate(&PhantomSpec::scaled(4, 32, 32)).unwrap();
        let x = gt.map(|z| z * 0.95 + C64::new(0.01, -0.02));
        let c = C64::new(2.5, -1.0);
        let a = nmse(&x, &gt).unwrap();
        let b = nmse(&x.scale(c), &gt.scale(c)).unwrap();
        assert!((a - b).abs() <= 1e-10 * a);
        let (xm, gm) = (x.magnitude().unwrap(), gt.magnitude().unwrap());
        let h1 = hfen(&xm, &gm).unwrap();
        let h2 = hfen(&xm.map(|v| v * 3.0), &gm.map(|v| v * 3.0)).unwrap();
        assert!((h1 - h2).abs() <= 1e-10 * h1);
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let gt = generate(&PhantomSpec::scaled(2, 16, 16)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<C64> = (0..gt.as_slice().len())
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut last = f64::INFINITY;
        for s in [0.001, 0.005, 0.02, 0.05, 0.1] {
            let x = DynTensor::from_vec(
                gt.dims(),
                Domain::ImageXt,
                gt.as_slice().iter().zip(&noise).map(|(g, n)| g + n * s).collect(),
            )
            .unwrap();
            let p = psnr(&x, &gt).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn evaluate_identity() {
        let gt = generate(&PhantomSpec::default()).unwrap();
        let r = evaluate(&gt, &gt, 4).unwrap();
        assert_eq!(r.nmse, 0.0);
        assert!((r.ssim - 1.0).abs() < 1e-12);
        assert_eq!(r.hfen, 0.0);
        assert_eq!(r.per_frame.len(), 16);
        assert!(!r.crop.full_fov);
    }
}
