//! Supervised training of the two networks through the unrolled solver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use super::adam::{AdamConfig, TrainState};
use crate::coils::CoilMaps;
use crate::error::{Error, Result};
use crate::coils::synth_maps;
use crate::phantom::{acquire, generate, PhantomSpec};
use crate::sampling::{mask_vista_like, temporal_average, SamplingMask, VistaParams};
use crate::solver::{unrolled_backward, unrolled_forward, NetPair, SolverConfig};
use crate::tensors::{Dims, Domain, DynTensor, C64};

/// One training instance. `v` and `gt` share the normalization scale.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub v: DynTensor,
    pub mask: SamplingMask,
    pub maps: CoilMaps,
    pub gt: DynTensor,
}

impl TrainingSample {
    /// Divide `v` and `gt` by the peak magnitude of the temporal-average
    /// baseline.
    pub fn normalized(v: DynTensor, mask: SamplingMask, maps: CoilMaps, gt: DynTensor) -> Result<Self> {
        let peak = temporal_average(&v, &mask, &maps)?.max_abs();
        if !(peak > 0.0) || !peak.is_finite() {
            return Err(Error::param("temporal average is zero; cannot normalize"));
        }
        let s = C64::new(1.0 / peak, 0.0);
        Ok(TrainingSample {
            v: v.scale(s),
            mask,
            maps,
            gt: gt.scale(s),
        })
    }

    /// Simulate the acquisition of `gt` and normalize.
    pub fn simulate(gt: &DynTensor, maps: &CoilMaps, mask: &SamplingMask, noise: f64, seed: u64) -> Result<Self> {
        let v = acquire(gt, maps, mask, noise, seed)?;
        Self::normalized(v, mask.clone(), maps.clone(), gt.clone())
    }
}

/// Mean absolute error `sum |gt - m| / n` and its gradient in `m`.
///
/// Residuals at rounding level (below `1e-12 max|gt|`) take the zero
/// subgradient.
pub fn l1_loss(m: &DynTensor, gt: &DynTensor) -> Result<(f64, DynTensor)> {
    let n = m.dims().len() as f64;
    let floor = 1e-12 * gt.max_abs();
    let mut loss = 0.0;
    let grad = m.zip_map(gt, |a, b| {
        let d = a - b;
        let r = d.norm();
        loss += r;
        if r > floor {
            d / (r * n)
        } else {
            C64::new(0.0, 0.0)
        }
    })?;
    Ok((loss / n, grad))
}

/// Loss without gradients.
pub fn evaluate_loss(nets: &NetPair, sample: &TrainingSample, cfg: &SolverConfig) -> Result<f64> {
    let (m, _) = unrolled_forward(&sample.v, &sample.mask, &sample.maps, cfg, nets)?;
    Ok(l1_loss(&m, &sample.gt)?.0)
}

/// Loss and parameter gradients `(xf, xt)` for one sample.
pub fn loss_and_grad(nets: &NetPair, sample: &TrainingSample, cfg: &SolverConfig) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (m, tape) = unrolled_forward(&sample.v, &sample.mask, &sample.maps, cfg, nets)?;
    let (loss, g_m) = l1_loss(&m, &sample.gt)?;
    let grads = unrolled_backward(&tape, nets, &g_m)?;
    Ok((loss, grads.xf, grads.xt))
}

/// One optimizer step on one sample; returns the loss before the step.
pub fn train_step(nets: &mut NetPair, sample: &TrainingSample, cfg: &SolverConfig, state: &mut TrainState) -> Result<f64> {
    let (loss, g_xf, g_xt) = loss_and_grad(nets, sample, cfg)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            iteration: state.steps() as usize,
            stage: "loss",
            max_abs: f64::NAN,
        });
    }
    let n_xf = g_xf.len();
    let mut grad = g_xf;
    grad.extend(g_xt);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            iteration: state.steps() as usize,
            stage: "gradient",
            max_abs: grad.iter().filter(|g| g.is_finite()).fold(0.0, |a: f64, g| a.max(g.abs())),
        });
    }
    let mut theta: Vec<f64> = nets.xf.params().iter().chain(nets.xt.params()).copied().collect();
    state.step(&mut theta, &mut grad)?;
    nets.xf.params_mut().copy_from_slice(&theta[..n_xf]);
    nets.xt.params_mut().copy_from_slice(&theta[n_xf..]);
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Random 90-degree rotations / flips and intensity scaling, with
    /// k-space regenerated from the augmented image.
    pub augment: bool,
    pub noise: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 200,
            adam: AdamConfig::default(),
            seed: 0,
            augment: false,
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Loss of the sample used at each step, before that step.
    pub step_losses: Vec<f64>,
    /// Mean loss over all samples before and after training.
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Minibatch-1 training cycling through `samples` in order.
pub fn train(nets: &mut NetPair, samples: &[TrainingSample], solver: &SolverConfig, cfg: &TrainConfig) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(Error::param("training needs at least one sample"));
    }
    let mean_loss = |nets: &NetPair| -> Result<f64> {
        let mut total = 0.0;
        for s in samples {
            total += evaluate_loss(nets, s, solver)?;
        }
        Ok(total / samples.len() as f64)
    };
    let initial_loss = mean_loss(nets)?;
    let mut state = TrainState::new(nets.xf.n_params() + nets.xt.n_params(), cfg.adam)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut step_losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let base = &samples[step % samples.len()];
        let loss = if cfg.augment {
            let aug = augment(base, cfg.noise, &mut rng)?;
            train_step(nets, &aug, solver, &mut state)?
        } else {
            train_step(nets, base, solver, &mut state)?
        };
        step_losses.push(loss);
    }
    Ok(TrainReport {
        step_losses,
        initial_loss,
        final_loss: mean_loss(nets)?,
    })
}

/// Random dihedral transform of the image plane plus intensity scaling in
/// `[0.9, 1.1]`; k-space is re-simulated. Quarter turns are used only for
/// square images.
pub fn augment(sample: &TrainingSample, noise: f64, rng: &mut ChaCha8Rng) -> Result<TrainingSample> {
    let d = sample.gt.dims();
    let square = d.rows == d.cols;
    let turn = if square { rng.random_range(0..4) } else { 2 * rng.random_range(0..2) };
    let flip = rng.random_bool(0.5);
    let scale = rng.random_range(0.9..=1.1);
    let seed = rng.random();
    let map_point = |y: usize, x: usize| -> (usize, usize) {
        let (h, w) = (d.rows, d.cols);
        let (y, x) = if flip { (y, w - 1 - x) } else { (y, x) };
        match turn {
            0 => (y, x),
            1 => (x, h - 1 - y),
            2 => (h - 1 - y, w - 1 - x),
            _ => (w - 1 - x, y),
        }
    };
    let gt = DynTensor::from_fn(d, Domain::ImageXt, |_, t, y, x| {
        let (sy, sx) = map_point(y, x);
        sample.gt.get(0, t, sy, sx) * scale
    });
    let n_c = sample.maps.n_coils();
    let mut raw = Vec::with_capacity(n_c * d.rows * d.cols);
    for c in 0..n_c {
        let coil = sample.maps.coil(c);
        for y in 0..d.rows {
            for x in 0..d.cols {
                let (sy, sx) = map_point(y, x);
                raw.push(coil[sy * d.cols + sx]);
            }
        }
    }
    let maps = CoilMaps::from_raw(n_c, d.rows, d.cols, raw, true)?;
    let v = acquire(&gt, &maps, &sample.mask, noise, seed)?;
    Ok(TrainingSample { v, mask: sample.mask.clone(), maps, gt })
}

/// Split a sample into bands of `width` columns (the fully sampled readout
/// axis), `stride` apart. Each band keeps every phase-encoding line, so the
/// mask is unchanged; k-space is cropped in the hybrid `(k_y, x)` space.
pub fn extract_patches(sample: &TrainingSample, width: usize, stride: usize) -> Result<Vec<TrainingSample>> {
    let d = sample.v.dims();
    if width == 0 || width > d.cols || stride == 0 {
        return Err(Error::param(format!("patch width {width} / stride {stride} for {} columns", d.cols)));
    }
    let n_c = d.n_coils();
    let mut planner = FftPlanner::<f64>::new();
    let inv = planner.plan_fft_inverse(d.cols);
    let fwd = planner.plan_fft_forward(width);
    let (s_in, s_out) = (1.0 / (d.cols as f64).sqrt(), 1.0 / (width as f64).sqrt());
    let mut hybrid = sample.v.as_slice().to_vec();
    for row in hybrid.chunks_exact_mut(d.cols) {
        inv.process(row);
        row.iter_mut().for_each(|z| *z *= s_in);
    }
    let mut out = Vec::new();
    let mut x0 = 0;
    while x0 + width <= d.cols {
        let mut data = Vec::with_capacity(n_c * d.frames * d.rows * width);
        for row in hybrid.chunks_exact(d.cols) {
            let mut band = row[x0..x0 + width].to_vec();
            fwd.process(&mut band);
            band.iter_mut().for_each(|z| *z *= s_out);
            data.extend(band);
        }
        let v = DynTensor::from_vec(Dims::with_coils(n_c, d.frames, d.rows, width), Domain::KspaceKt, data)?;
        let gt = sample.gt.crop(0..d.rows, x0..x0 + width)?;
        let mut raw = Vec::with_capacity(n_c * d.rows * width);
        for c in 0..n_c {
            let coil = sample.maps.coil(c);
            for y in 0..d.rows {
                raw.extend_from_slice(&coil[y * d.cols + x0..y * d.cols + x0 + width]);
            }
        }
        let maps = CoilMaps::from_raw(n_c, d.rows, width, raw, true)?;
        out.push(TrainingSample { v, mask: sample.mask.clone(), maps, gt });
        x0 += stride;
    }
    Ok(out)
}

/// `count` simulated sequences derived from `base`: sequence `s` pulsates at
/// `0.2 + 0.1 s`, has its dynamic ellipse shifted `s` pixels along x, and
/// uses coil maps and mask drawn with seed `seed + s`.
pub fn synthetic_samples(
    base: &PhantomSpec,
    coils: usize,
    accel: f64,
    vista: VistaParams,
    count: usize,
    noise: f64,
) -> Result<Vec<TrainingSample>> {
    (0..count)
        .map(|s| {
            let mut spec = base.clone();
            if let Some(e) = spec.ellipses.iter_mut().find(|e| e.pulsation != 0.0) {
                e.pulsation = 0.2 + 0.1 * s as f64;
                e.center.1 += s as f64;
            }
            let seed = base.seed.wrapping_add(s as u64);
            let gt = generate(&spec)?;
            let maps = synth_maps(coils, spec.rows, spec.cols, seed)?;
            let mask = mask_vista_like(spec.frames, spec.rows, accel, VistaParams { seed, ..vista })?;
            TrainingSample::simulate(&gt, &maps, &mask, noise, seed)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coils::synth_maps;
    use crate::learned::{ConvRecNet, NetConfig};
    use crate::phantom::{generate, PhantomSpec};
    use crate::sampling::{mask_lattice, LatticeOffset};
    use crate::solver::Mode;
    use crate::tensors::NormKind;

    fn sample(frames: usize, n: usize, accel: usize, seed: u64) -> TrainingSample {
        let mut spec = PhantomSpec::scaled(frames, n, n);
        spec.seed = seed;
        let gt = generate(&spec).unwrap();
        let maps = synth_maps(2, n, n, seed).unwrap();
        let mask = mask_lattice(frames, n, accel, LatticeOffset::default()).unwrap();
        TrainingSample::simulate(&gt, &maps, &mask, 0.0, seed).unwrap()
    }

    fn nets(hidden: usize, seed: u64) -> NetPair {
        NetPair {
            xf: ConvRecNet::new(NetConfig::xf(hidden), seed).unwrap(),
            xt: ConvRecNet::new(NetConfig::xt(hidden), seed + 1).unwrap(),
        }
    }

    #[test]
    fn loss_is_non_negative_and_zero_at_truth() {
        let s = sample(4, 8, 2, 0);
        let (l, g) = l1_loss(&s.gt, &s.gt).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.as_slice().iter().all(|z| z.norm() == 0.0));
        let (l, _) = l1_loss(&s.gt.zeros_like(), &s.gt).unwrap();
        assert!(l > 0.0);
    }

    #[test]
    fn consistent_start_gives_zero_loss_and_gradient() {
        let mut spec = PhantomSpec::scaled(4, 8, 8);
        spec.ellipses.iter_mut().for_each(|e| {
            e.pulsation = 0.0;
            e.translation = (0.0, 0.0);
        });
        let gt = generate(&spec).unwrap();
        let maps = synth_maps(2, 8, 8, 1).unwrap();
        let full = SamplingMask::full(4, 8);
        let s = TrainingSample::simulate(&gt, &maps, &full, 0.0, 0).unwrap();
        let zero = NetPair {
            xf: ConvRecNet::zeros(NetConfig::xf(2)).unwrap(),
            xt: ConvRecNet::zeros(NetConfig::xt(2)).unwrap(),
        };
        let cfg = SolverConfig { mode: Mode::Learned, lambda0: 0.0, n_it: 3, ..Default::default() };
        let (loss, gxf, gxt) = loss_and_grad(&zero, &s, &cfg).unwrap();
        assert!(loss < 1e-12, "loss {loss}");
        assert!(gxf.iter().chain(&gxt).all(|g| *g == 0.0));
    }

    #[test]
    fn training_is_deterministic() {
        let s = vec![sample(4, 8, 2, 3)];
        let cfg = SolverConfig { mode: Mode::Learned, n_it: 2, ..Default::default() };
        let tc = TrainConfig { steps: 3, ..Default::default() };
        let mut a = nets(2, 5);
        let mut b = nets(2, 5);
        let ra = train(&mut a, &s, &cfg, &tc).unwrap();
        let rb = train(&mut b, &s, &cfg, &tc).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.xf.params(), b.xf.params());
        assert_eq!(a.xt.params(), b.xt.params());
    }

    #[test]
    fn augmentation_preserves_energy_up_to_scale() {
        let s = sample(4, 8, 1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..6 {
            let a = augment(&s, 0.0, &mut rng).unwrap();
            let ratio = a.gt.norm(NormKind::L2) / s.gt.norm(NormKind::L2);
            assert!((0.9 - 1e-12..=1.1 + 1e-12).contains(&ratio));
            assert!(a.maps.normalization_error() < 1e-9);
            // Full sampling: zero-filled equals the augmented image.
            let zf = crate::solver::zero_filled(&a.v, &a.maps).unwrap();
            assert!(zf.sub(&a.gt).unwrap().norm(NormKind::L2) < 1e-9 * a.gt.norm(NormKind::L2));
        }
    }

    #[test]
    fn patches_match_direct_acquisition() {
        let s = sample(4, 8, 2, 6);
        let patches = extract_patches(&s, 4, 2).unwrap();
        assert_eq!(patches.len(), 3);
        for (i, p) in patches.iter().enumerate() {
            assert_eq!(p.v.dims(), Dims::with_coils(2, 4, 8, 4));
            // Hybrid-space cropping of per-coil data equals acquiring the
            // cropped coil images, since the readout is fully sampled.
            let x0 = 2 * i;
            let full = crate::solver::zero_filled(&s.v, &s.maps).unwrap();
            let cropped = full.crop(0..8, x0..x0 + 4).unwrap();
            let back = crate::solver::zero_filled(&p.v, &p.maps).unwrap();
            assert!(back.sub(&cropped).unwrap().norm(NormKind::L2) < 1e-10);
        }
        assert!(extract_patches(&s, 9, 1).is_err());
    }
}
