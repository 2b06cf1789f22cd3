//! Variable-splitting reconstruction over complementary x-f and x-t domains.
//!
//! One iteration reads `m^k` and computes, in order,
//!
//! ```text
//! rho     = F_t m_bar + f_xf(F_t m^k - F_t m_bar)
//! u       = m_bar + f_xt(m^k - m_bar)
//! sigma_i = F_s^H [ Lambda F_s S_i m^k + (1 - lambda0) v_i ]
//! m^{k+1} = alpha0 u + beta0 F_t^H rho + (1 - alpha0 - beta0) sum_i S_i^H sigma_i
//! ```
//!
//! where `Lambda` is `lambda0` on sampled k-space lines and one elsewhere.

mod unrolled;

use std::sync::Arc;

pub use unrolled::{unrolled_backward, unrolled_forward, UnrolledGrads, UnrolledTape};

use crate::coils::{combine, project, CoilMaps};
use crate::error::{Error, Result};
use crate::learned::{ConvRecNet, HiddenState};
use crate::regularizers::{xf_regularize, xt_regularize, ProxKind, ProxSpec};
use crate::sampling::{temporal_average, SamplingMask};
use crate::tensors::{Domain, DynTensor, NormKind};
use crate::transforms::Fourier;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Classical,
    Learned,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "classical" => Some(Mode::Classical),
            "learned" => Some(Mode::Learned),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Classical => "classical",
            Mode::Learned => "learned",
        }
    }
}

/// Weights of the penalty objective. They only affect objective reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        PenaltyWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            lambda: 9.0,
            mu: 1.0,
        }
    }
}

impl PenaltyWeights {
    /// The weights for which every update is the exact block minimizer of the
    /// objective with unit-weight `l1` x-f term: `beta = 1 / tau_xf`, the
    /// coupling weights proportional to `(alpha0, beta0, 1 - alpha0 - beta0)`,
    /// `lambda = gamma (1 - lambda0) / lambda0` and `mu = tau_xt * alpha`.
    pub fn consistent(cfg: &SolverConfig) -> Result<Self> {
        if !(cfg.beta0 > 0.0) || !(cfg.tau_xf > 0.0) || !(cfg.lambda0 > 0.0) {
            return Err(Error::param(
                "consistent weights need beta0 > 0, tau_xf > 0 and lambda0 > 0",
            ));
        }
        let beta = 1.0 / cfg.tau_xf;
        let s = beta / cfg.beta0;
        let alpha = cfg.alpha0 * s;
        let gamma = (1.0 - cfg.alpha0 - cfg.beta0) * s;
        Ok(PenaltyWeights {
            alpha,
            beta,
            gamma,
            lambda: gamma * (1.0 - cfg.lambda0) / cfg.lambda0,
            mu: cfg.tau_xt * alpha,
        })
    }

    /// `(lambda0, alpha0, beta0)` implied by these weights.
    pub fn implied_coefficients(&self) -> (f64, f64, f64) {
        let total = self.alpha + self.beta + self.gamma;
        (self.gamma / (self.lambda + self.gamma), self.alpha / total, self.beta / total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda0: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub n_it: usize,
    pub mode: Mode,
    pub tau_xf: f64,
    pub tau_xt: f64,
    pub weights: PenaltyWeights,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda0: 0.1,
            alpha0: 0.1,
            beta0: 0.1,
            n_it: 5,
            mode: Mode::Classical,
            tau_xf: 0.5,
            tau_xt: 0.3,
            weights: PenaltyWeights::default(),
        }
    }
}

impl SolverConfig {
    /// Range checks. `n_it = 0` is accepted and returns the zero-filled image.
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.lambda0) {
            return Err(Error::param(format!("lambda0 = {} outside [0, 1]", self.lambda0)));
        }
        if !unit.contains(&self.alpha0) || !unit.contains(&self.beta0) || !(self.alpha0 + self.beta0 < 1.0) {
            return Err(Error::param(format!(
                "alpha0 = {}, beta0 = {}: need both in [0, 1] with alpha0 + beta0 < 1",
                self.alpha0, self.beta0
            )));
        }
        if !(self.tau_xf >= 0.0) || !(self.tau_xt >= 0.0) {
            return Err(Error::param("thresholds must be >= 0"));
        }
        Ok(())
    }
}

/// The two learned de-aliasing networks.
#[derive(Debug, Clone)]
pub struct NetPair {
    pub xf: ConvRecNet,
    pub xt: ConvRecNet,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub m: DynTensor,
    pub u: DynTensor,
    pub rho: DynTensor,
    pub sigma: DynTensor,
    pub m_bar: DynTensor,
    pub hidden_xf: Option<HiddenState>,
    pub hidden_xt: Option<HiddenState>,
    pub iteration: usize,
    /// Objective after initialization and after every iteration (classical
    /// mode only).
    pub trace: Vec<f64>,
}

fn check_inputs(v: &DynTensor, mask: &SamplingMask, maps: &CoilMaps) -> Result<()> {
    v.expect_domain(Domain::KspaceKt)?;
    let d = v.dims();
    if d.coils != Some(maps.n_coils()) || d.rows != maps.rows() || d.cols != maps.cols() {
        return Err(Error::shape(format!(
            "k-space {d:?} does not match {} maps of {}x{}",
            maps.n_coils(),
            maps.rows(),
            maps.cols()
        )));
    }
    if mask.frames() != d.frames || mask.lines() != d.rows {
        return Err(Error::shape(format!(
            "mask {}x{} does not match {} frames x {} lines",
            mask.frames(),
            mask.lines(),
            d.frames,
            d.rows
        )));
    }
    if !maps.is_normalized() {
        return Err(Error::param("coil maps must be normalized (sum |S_i|^2 = 1)"));
    }
    Ok(())
}

fn check_lambda0(lambda0: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda0) {
        return Err(Error::param(format!("lambda0 = {lambda0} outside [0, 1]")));
    }
    Ok(())
}

fn check_coupling(alpha0: f64, beta0: f64) -> Result<()> {
    if !(alpha0 >= 0.0) || !(beta0 >= 0.0) || alpha0 + beta0 > 1.0 {
        return Err(Error::param(format!(
            "alpha0 = {alpha0}, beta0 = {beta0}: need non-negative with sum <= 1"
        )));
    }
    Ok(())
}

/// Multiply each k-space row by `lambda0` where sampled, one elsewhere.
pub(crate) fn apply_lambda(k: &mut DynTensor, mask: &SamplingMask, lambda0: f64) {
    let d = k.dims();
    for (r, row) in k.as_mut_slice().chunks_exact_mut(d.cols).enumerate() {
        let ky = r % d.rows;
        let t = (r / d.rows) % d.frames;
        if mask.is_sampled(t, ky) {
            row.iter_mut().for_each(|z| *z *= lambda0);
        }
    }
}

pub(crate) fn pdc_with(
    f: &Fourier,
    m: &DynTensor,
    maps: &CoilMaps,
    v: &DynTensor,
    mask: &SamplingMask,
    lambda0: f64,
) -> Result<DynTensor> {
    let mut k = f.fs(&project(m, maps)?)?;
    apply_lambda(&mut k, mask, lambda0);
    k.axpy(1.0 - lambda0, v);
    f.fs_h(&k)
}

/// Coil-wise, point-wise data consistency.
pub fn pdc(m: &DynTensor, maps: &CoilMaps, v: &DynTensor, mask: &SamplingMask, lambda0: f64) -> Result<DynTensor> {
    check_lambda0(lambda0)?;
    check_inputs(v, mask, maps)?;
    if m.dims() != v.dims().combined() {
        return Err(Error::shape(format!("image {:?} vs k-space {:?}", m.dims(), v.dims())));
    }
    pdc_with(&Fourier::new(m.dims()), m, maps, v, mask, lambda0)
}

pub(crate) fn wcp_with(
    f: &Fourier,
    u: &DynTensor,
    rho: &DynTensor,
    sigma: &DynTensor,
    maps: &CoilMaps,
    alpha0: f64,
    beta0: f64,
) -> Result<DynTensor> {
    let mut m = combine(sigma, maps)?.scale((1.0 - alpha0 - beta0).into());
    m.axpy(alpha0, u);
    m.axpy(beta0, &f.ft_h(rho)?);
    Ok(m)
}

/// Weighted coupling of the x-t, x-f and data-consistent estimates.
pub fn wcp(u: &DynTensor, rho: &DynTensor, sigma: &DynTensor, maps: &CoilMaps, alpha0: f64, beta0: f64) -> Result<DynTensor> {
    check_coupling(alpha0, beta0)?;
    u.expect_domain(Domain::ImageXt)?;
    rho.expect_domain(Domain::Xf)?;
    sigma.expect_domain(Domain::ImageXt)?;
    if u.dims() != rho.dims() || u.dims() != sigma.dims().combined() {
        return Err(Error::shape(format!(
            "u {:?}, rho {:?}, sigma {:?} disagree",
            u.dims(),
            rho.dims(),
            sigma.dims()
        )));
    }
    wcp_with(&Fourier::new(u.dims()), u, rho, sigma, maps, alpha0, beta0)
}

/// `rho = F_t m_bar + f(F_t m - F_t m_bar)`.
pub fn xf_update(m: &DynTensor, m_bar: &DynTensor, spec: &ProxSpec, hidden: &mut Option<HiddenState>) -> Result<DynTensor> {
    let f = Fourier::new(m.dims());
    xf_regularize(&f.ft(m)?, &f.ft(m_bar)?, spec, hidden)
}

/// `u = m_bar + f(m - m_bar)`.
pub fn xt_update(m: &DynTensor, m_bar: &DynTensor, spec: &ProxSpec, hidden: &mut Option<HiddenState>) -> Result<DynTensor> {
    xt_regularize(m, m_bar, spec, hidden)
}

fn l1_term(spec: &ProxSpec, x: &DynTensor, baseline: &DynTensor) -> Result<f64> {
    Ok(match spec.kind {
        ProxKind::Identity => 0.0,
        _ if spec.residual => x.sub(baseline)?.norm(NormKind::L1),
        _ => x.norm(NormKind::L1),
    })
}

/// Penalty objective with `l1` regularizers on the residuals:
///
/// ```text
/// ||rho - F_t m_bar||_1 + mu ||u - m_bar||_1 + lambda/2 sum ||D F_s sigma_i - v_i||^2
///   + alpha/2 ||u - m||^2 + beta/2 ||rho - F_t m||^2 + gamma/2 sum ||sigma_i - S_i m||^2
/// ```
pub fn objective(state: &SolverState, v: &DynTensor, mask: &SamplingMask, maps: &CoilMaps, w: &PenaltyWeights) -> Result<f64> {
    let soft = ProxSpec::soft(0.0);
    objective_with(&Fourier::new(state.m.dims()), state, v, mask, maps, w, &soft, &soft)
}

#[allow(clippy::too_many_arguments)]
fn objective_with(
    f: &Fourier,
    s: &SolverState,
    v: &DynTensor,
    mask: &SamplingMask,
    maps: &CoilMaps,
    w: &PenaltyWeights,
    xf_spec: &ProxSpec,
    xt_spec: &ProxSpec,
) -> Result<f64> {
    let sq = |x: DynTensor| x.norm(NormKind::L2).powi(2);
    let r_xf = l1_term(xf_spec, &s.rho, &f.ft(&s.m_bar)?)?;
    let r_xt = l1_term(xt_spec, &s.u, &s.m_bar)?;
    let mut k = f.fs(&s.sigma)?;
    let d = k.dims();
    for (r, row) in k.as_mut_slice().chunks_exact_mut(d.cols).enumerate() {
        if !mask.is_sampled((r / d.rows) % d.frames, r % d.rows) {
            row.fill(0.0.into());
        }
    }
    let fidelity = sq(k.sub(v)?);
    let c_u = sq(s.u.sub(&s.m)?);
    let c_rho = sq(s.rho.sub(&f.ft(&s.m)?)?);
    let c_sigma = sq(s.sigma.sub(&project(&s.m, maps)?)?);
    Ok(r_xf
        + w.mu * r_xt
        + 0.5 * (w.lambda * fidelity + w.alpha * c_u + w.beta * c_rho + w.gamma * c_sigma))
}

fn guard(x: &DynTensor, iteration: usize, stage: &'static str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        let max_abs = x.as_slice().iter().map(|z| z.norm()).filter(|a| a.is_finite()).fold(0.0, f64::max);
        Err(Error::NonFinite {
            iteration,
            stage,
            max_abs,
        })
    }
}

/// Zero-filled coil-combined image `sum_i S_i^H F_s^H v_i`.
pub fn zero_filled(v: &DynTensor, maps: &CoilMaps) -> Result<DynTensor> {
    combine(&Fourier::new(v.dims()).fs_h(v)?, maps)
}

/// Regularizer specs for a configuration: soft-thresholding in classical
/// mode, the given networks in learned mode.
pub fn specs_for(cfg: &SolverConfig, nets: Option<&NetPair>) -> Result<(ProxSpec, ProxSpec)> {
    match cfg.mode {
        Mode::Classical => Ok((ProxSpec::soft(cfg.tau_xf), ProxSpec::soft(cfg.tau_xt))),
        Mode::Learned => {
            let nets = nets.ok_or_else(|| Error::param("learned mode needs trained networks"))?;
            Ok((
                ProxSpec::learned(Arc::new(nets.xf.clone())),
                ProxSpec::learned(Arc::new(nets.xt.clone())),
            ))
        }
    }
}

/// Full reconstruction. Hidden states start at zero for every call.
pub fn ctf_solve(
    v: &DynTensor,
    mask: &SamplingMask,
    maps: &CoilMaps,
    cfg: &SolverConfig,
    nets: Option<&NetPair>,
) -> Result<(DynTensor, SolverState)> {
    let (xf_spec, xt_spec) = specs_for(cfg, nets)?;
    solve_with_specs(v, mask, maps, cfg, &xf_spec, &xt_spec)
}

/// As `ctf_solve` with explicit regularizers. The objective trace is
/// recorded when neither regularizer is learned.
pub fn solve_with_specs(
    v: &DynTensor,
    mask: &SamplingMask,
    maps: &CoilMaps,
    cfg: &SolverConfig,
    xf_spec: &ProxSpec,
    xt_spec: &ProxSpec,
) -> Result<(DynTensor, SolverState)> {
    cfg.validate()?;
    check_inputs(v, mask, maps)?;
    xf_spec.validate()?;
    xt_spec.validate()?;
    let f = Fourier::new(v.dims());
    let m0 = combine(&f.fs_h(v)?, maps)?;
    guard(&m0, 0, "zero-filled")?;
    let m_bar = temporal_average(v, mask, maps)?;
    let rho_bar = f.ft(&m_bar)?;
    let tracing = !xf_spec.is_learned() && !xt_spec.is_learned();
    let mut state = SolverState {
        u: m0.clone(),
        rho: f.ft(&m0)?,
        sigma: project(&m0, maps)?,
        m: m0,
        m_bar,
        hidden_xf: None,
        hidden_xt: None,
        iteration: 0,
        trace: Vec::new(),
    };
    let record = |state: &mut SolverState| -> Result<()> {
        if tracing {
            let obj = objective_with(&f, state, v, mask, maps, &cfg.weights, xf_spec, xt_spec)?;
            state.trace.push(obj);
        }
        Ok(())
    };
    record(&mut state)?;
    for k in 0..cfg.n_it {
        let rho = xf_regularize(&f.ft(&state.m)?, &rho_bar, xf_spec, &mut state.hidden_xf)?;
        guard(&rho, k, "xf")?;
        let u = xt_regularize(&state.m, &state.m_bar, xt_spec, &mut state.hidden_xt)?;
        guard(&u, k, "xt")?;
        let sigma = pdc_with(&f, &state.m, maps, v, mask, cfg.lambda0)?;
        guard(&sigma, k, "pdc")?;
        let m = wcp_with(&f, &u, &rho, &sigma, maps, cfg.alpha0, cfg.beta0)?;
        guard(&m, k, "wcp")?;
        state.rho = rho;
        state.u = u;
        state.sigma = sigma;
        state.m = m;
        state.iteration = k + 1;
        record(&mut state)?;
    }
    Ok((state.m.clone(), state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coils::synth_maps;
    use crate::phantom::{acquire, generate, PhantomSpec};
    use crate::sampling::{apply_mask, mask_lattice, LatticeOffset};
    use crate::tensors::{Dims, C64};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: Dims, domain: Domain, seed: u64) -> DynTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DynTensor::from_fn(dims, domain, |_, _, _, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn rel(a: &DynTensor, b: &DynTensor) -> f64 {
        a.sub(b).unwrap().norm(NormKind::L2) / b.norm(NormKind::L2).max(1e-300)
    }

    struct Case {
        maps: CoilMaps,
        mask: SamplingMask,
        v: DynTensor,
        m: DynTensor,
    }

    fn case(seed: u64) -> Case {
        let dims = Dims::new(4, 8, 6);
        let maps = synth_maps(3, 8, 6, seed).unwrap();
        let mask = mask_lattice(4, 8, 2, LatticeOffset::default()).unwrap();
        let v = apply_mask(&random(Dims::with_coils(3, 4, 8, 6), Domain::KspaceKt, seed + 1), &mask).unwrap();
        Case { maps, mask, v, m: random(dims, Domain::ImageXt, seed + 2) }
    }

    #[test]
    fn pdc_limits() {
        let c = case(1);
        let ignore = pdc(&c.m, &c.maps, &c.v, &c.mask, 1.0).unwrap();
        assert!(rel(&ignore, &project(&c.m, &c.maps).unwrap()) < 1e-12);
        let hard = pdc(&c.m, &c.maps, &c.v, &c.mask, 0.0).unwrap();
        let f = Fourier::new(c.m.dims());
        let k = f.fs(&hard).unwrap();
        let s_hat = f.fs(&project(&c.m, &c.maps).unwrap()).unwrap();
        let d = k.dims();
        for i in 0..k.as_slice().len() {
            let ky = (i / d.cols) % d.rows;
            let t = (i / (d.cols * d.rows)) % d.frames;
            let expect = if c.mask.is_sampled(t, ky) { c.v.as_slice()[i] } else { s_hat.as_slice()[i] };
            assert!((k.as_slice()[i] - expect).norm() <= 1e-10 * expect.norm().max(1.0));
        }
        assert!(pdc(&c.m, &c.maps, &c.v, &c.mask, 1.5).is_err());
    }

    #[test]
    fn wcp_limits() {
        let c = case(2);
        let f = Fourier::new(c.m.dims());
        let u = random(c.m.dims(), Domain::ImageXt, 7);
        let rho = f.ft(&random(c.m.dims(), Domain::ImageXt, 8)).unwrap();
        let sigma = random(c.v.dims(), Domain::ImageXt, 9);
        assert!(rel(&wcp(&u, &rho, &sigma, &c.maps, 1.0, 0.0).unwrap(), &u) < 1e-15);
        let m = wcp(&u, &rho, &sigma, &c.maps, 0.0, 0.0).unwrap();
        assert!(rel(&m, &combine(&sigma, &c.maps).unwrap()) < 1e-15);
        assert!(wcp(&u, &rho, &sigma, &c.maps, 0.6, 0.6).is_err());
    }

    #[test]
    fn consistent_weights_round_trip() {
        let cfg = SolverConfig::default();
        let w = PenaltyWeights::consistent(&cfg).unwrap();
        let (l0, a0, b0) = w.implied_coefficients();
        assert!((l0 - cfg.lambda0).abs() < 1e-12);
        assert!((a0 - cfg.alpha0).abs() < 1e-12);
        assert!((b0 - cfg.beta0).abs() < 1e-12);
        assert!((1.0 / w.beta - cfg.tau_xf).abs() < 1e-12);
        assert!((w.mu / w.alpha - cfg.tau_xt).abs() < 1e-12);
        let (l0, a0, b0) = PenaltyWeights::default().implied_coefficients();
        assert!((l0 - 0.1).abs() < 1e-12 && (a0 - 1.0 / 3.0).abs() < 1e-12 && (b0 - 1.0 / 3.0).abs() < 1e-12);
    }

    fn phantom_case(frames: usize, n: usize, accel: usize, seed: u64) -> (DynTensor, CoilMaps, SamplingMask, DynTensor) {
        let mut spec = PhantomSpec::scaled(frames, n, n);
        spec.seed = seed;
        let gt = generate(&spec).unwrap();
        let maps = synth_maps(4, n, n, seed).unwrap();
        let mask = mask_lattice(frames, n, accel, LatticeOffset::default()).unwrap();
        let v = acquire(&gt, &maps, &mask, 0.0, seed).unwrap();
        (gt, maps, mask, v)
    }

    #[test]
    fn full_sampling_hard_dc_recovers_truth() {
        let (gt, maps, _, _) = phantom_case(4, 16, 1, 0);
        let full = SamplingMask::full(4, 16);
        let v = acquire(&gt, &maps, &full, 0.0, 0).unwrap();
        let cfg = SolverConfig { lambda0: 0.0, alpha0: 0.0, beta0: 0.0, n_it: 1, ..Default::default() };
        let (m, _) = ctf_solve(&v, &full, &maps, &cfg, None).unwrap();
        assert!(rel(&m, &gt) < 1e-10);
    }

    #[test]
    fn zero_iterations_return_zero_filled() {
        let (_, maps, mask, v) = phantom_case(4, 16, 4, 1);
        let cfg = SolverConfig { n_it: 0, ..Default::default() };
        let (m, state) = ctf_solve(&v, &mask, &maps, &cfg, None).unwrap();
        assert_eq!(m, zero_filled(&v, &maps).unwrap());
        assert_eq!(state.trace.len(), 1);
    }

    #[test]
    fn consistent_objective_is_monotone() {
        for seed in 0..3 {
            let (_, maps, mask, v) = phantom_case(8, 16, 4, seed);
            let mut cfg = SolverConfig { n_it: 8, ..Default::default() };
            cfg.weights = PenaltyWeights::consistent(&cfg).unwrap();
            let (_, state) = ctf_solve(&v, &mask, &maps, &cfg, None).unwrap();
            assert_eq!(state.trace.len(), 9);
            for w in state.trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9), "{:?}", state.trace);
            }
        }
    }

    #[test]
    fn reconstruction_beats_zero_filling() {
        let (gt, maps, mask, v) = phantom_case(16, 32, 4, 2);
        let zf = zero_filled(&v, &maps).unwrap();
        let (m, _) = ctf_solve(&v, &mask, &maps, &SolverConfig::default(), None).unwrap();
        assert!(rel(&m, &gt) < rel(&zf, &gt));
    }

    #[test]
    fn xf_and_xt_updates() {
        let (gt, maps, mask, v) = phantom_case(8, 16, 4, 3);
        let m_bar = temporal_average(&v, &mask, &maps).unwrap();
        let f = Fourier::new(gt.dims());
        let rho = xf_update(&m_bar, &m_bar, &ProxSpec::soft(0.1), &mut None).unwrap();
        assert!(rel(&rho, &f.ft(&m_bar).unwrap()) < 1e-15);
        let m = zero_filled(&v, &maps).unwrap();
        let rho = xf_update(&m, &m_bar, &ProxSpec::identity(), &mut None).unwrap();
        assert!(rel(&rho, &f.ft(&m).unwrap()) < 1e-12);
        let u = xt_update(&m, &m_bar, &ProxSpec::identity(), &mut None).unwrap();
        assert!(rel(&u, &m) < 1e-12);
    }

    #[test]
    fn non_finite_input_is_reported() {
        let (_, maps, mask, mut v) = phantom_case(4, 8, 2, 4);
        v.as_mut_slice()[0] = C64::new(f64::NAN, 0.0);
        match ctf_solve(&v, &mask, &maps, &SolverConfig::default(), None) {
            Err(Error::NonFinite { iteration, .. }) => assert_eq!(iteration, 0),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn learned_mode_needs_nets() {
        let (_, maps, mask, v) = phantom_case(4, 8, 2, 5);
        let cfg = SolverConfig { mode: Mode::Learned, ..Default::default() };
        assert!(ctf_solve(&v, &mask, &maps, &cfg, None).is_err());
    }

    #[test]
    fn pdc_matches_direct_formula() {
        let c = case(6);
        let l0 = 0.1;
        let sigma = pdc(&c.m, &c.maps, &c.v, &c.mask, l0).unwrap();
        let f = Fourier::new(c.v.dims());
        let k = f.fs(&sigma).unwrap();
        let s_hat = f.fs(&project(&c.m, &c.maps).unwrap()).unwrap();
        let d = k.dims();
        for i in 0..k.as_slice().len() {
            let ky = (i / d.cols) % d.rows;
            let t = (i / (d.cols * d.rows)) % d.frames;
            let s = s_hat.as_slice()[i];
            let expect = if c.mask.is_sampled(t, ky) { s * l0 + c.v.as_slice()[i] * (1.0 - l0) } else { s };
            assert!((k.as_slice()[i] - expect).norm() <= 1e-12);
        }
    }

    #[test]
    fn classical_updates_move_toward_truth() {
        let (gt, maps, mask, v) = phantom_case(16, 32, 8, 7);
        let f = Fourier::new(gt.dims());
        let m0 = zero_filled(&v, &maps).unwrap();
        let m_bar = temporal_average(&v, &mask, &maps).unwrap();
        let rho_gt = f.ft(&gt).unwrap();
        let rho = xf_update(&m0, &m_bar, &ProxSpec::soft(0.5), &mut None).unwrap();
        let before = f.ft(&m0).unwrap().sub(&rho_gt).unwrap().norm(NormKind::L2);
        assert!(rho.sub(&rho_gt).unwrap().norm(NormKind::L2) < before);
        let u = xt_update(&m0, &m_bar, &ProxSpec::soft(0.3), &mut None).unwrap();
        assert!(u.sub(&gt).unwrap().norm(NormKind::L2) < m0.sub(&gt).unwrap().norm(NormKind::L2));
    }

    #[test]
    fn objective_is_linear_in_fidelity_weight() {
        let (_, maps, mask, v) = phantom_case(4, 16, 4, 8);
        let cfg = SolverConfig { n_it: 2, ..Default::default() };
        let (_, state) = ctf_solve(&v, &mask, &maps, &cfg, None).unwrap();
        let at = |lambda: f64| objective(&state, &v, &mask, &maps, &PenaltyWeights { lambda, ..cfg.weights }).unwrap();
        let (o0, o1, o2) = (at(0.0), at(9.0), at(18.0));
        assert!(((o2 - o0) - 2.0 * (o1 - o0)).abs() <= 1e-12 * o2.abs());
        assert!(o1 > o0);
    }

    #[test]
    fn objective_of_exact_solution_is_regularizer_only() {
        let (gt, maps, _, _) = phantom_case(4, 16, 1, 9);
        let full = SamplingMask::full(4, 16);
        let v = acquire(&gt, &maps, &full, 0.0, 0).unwrap();
        let f = Fourier::new(gt.dims());
        let m_bar = temporal_average(&v, &full, &maps).unwrap();
        let state = SolverState {
            m: gt.clone(),
            u: gt.clone(),
            rho: f.ft(&gt).unwrap(),
            sigma: project(&gt, &maps).unwrap(),
            m_bar: m_bar.clone(),
            hidden_xf: None,
            hidden_xt: None,
            iteration: 0,
            trace: Vec::new(),
        };
        let w = PenaltyWeights::default();
        let r_terms = f.ft(&gt).unwrap().sub(&f.ft(&m_bar).unwrap()).unwrap().norm(NormKind::L1)
            + w.mu * gt.sub(&m_bar).unwrap().norm(NormKind::L1);
        let o = objective(&state, &v, &full, &maps, &w).unwrap();
        assert!((o - r_terms).abs() <= 1e-9 * r_terms);
    }

    #[test]
    fn reconstruction_commutes_with_circular_y_shift() {
        let (gt, maps, mask, v) = phantom_case(8, 16, 4, 10);
        let shift = |x: &DynTensor| {
            let d = x.dims();
            DynTensor::from_fn(d, x.domain(), |c, t, y, xx| x.get(c, t, (y + d.rows - 1) % d.rows, xx))
        };
        let gt_s = shift(&gt);
        let maps_s = maps.shifted_rows(1);
        let v_s = acquire(&gt_s, &maps_s, &mask, 0.0, 0).unwrap();
        let cfg = SolverConfig::default();
        let (m, _) = ctf_solve(&v, &mask, &maps, &cfg, None).unwrap();
        let (m_s, _) = ctf_solve(&v_s, &mask, &maps_s, &cfg, None).unwrap();
        assert!(rel(&m_s, &shift(&m)) < 1e-6);
    }
}
