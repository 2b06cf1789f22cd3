//! Learned-mode solve with a recorded tape and its reverse pass.
//!
//! Gradients of a real loss with respect to a complex tensor use the
//! convention `g = dL/dRe + i dL/dIm`, so a complex-linear map `y = A x`
//! propagates `g_x = A^H g_y`.

use super::{apply_lambda, check_inputs, guard, pdc_with, wcp_with, NetPair, SolverConfig};
use crate::coils::{combine, project, CoilMaps};
use crate::error::{Error, Result};
use crate::learned::{FeatureMap, HiddenState, NetTape};
use crate::sampling::{temporal_average, SamplingMask};
use crate::tensors::{Dims, Domain, DynTensor, C64};
use crate::transforms::Fourier;

#[derive(Debug, Clone)]
pub struct UnrolledTape {
    cfg: SolverConfig,
    maps: CoilMaps,
    mask: SamplingMask,
    kdims: Dims,
    xf: Vec<NetTape>,
    xt: Vec<NetTape>,
}

#[derive(Debug, Clone)]
pub struct UnrolledGrads {
    pub xf: Vec<f64>,
    pub xt: Vec<f64>,
    /// Gradient with respect to the k-space input.
    pub v: DynTensor,
}

fn grad_map(g: &DynTensor) -> FeatureMap {
    FeatureMap::from_complex(g).expect("combined gradient")
}

/// Learned-mode forward pass. Matches `ctf_solve` in learned mode and
/// records what the reverse pass needs.
pub fn unrolled_forward(
    v: &DynTensor,
    mask: &SamplingMask,
    maps: &CoilMaps,
    cfg: &SolverConfig,
    nets: &NetPair,
) -> Result<(DynTensor, UnrolledTape)> {
    cfg.validate()?;
    check_inputs(v, mask, maps)?;
    let f = Fourier::new(v.dims());
    let mut m = combine(&f.fs_h(v)?, maps)?;
    guard(&m, 0, "zero-filled")?;
    let m_bar = temporal_average(v, mask, maps)?;
    let rho_bar = f.ft(&m_bar)?;
    let (mut h_xf, mut h_xt): (Option<HiddenState>, Option<HiddenState>) = (None, None);
    let mut tape = UnrolledTape {
        cfg: cfg.clone(),
        maps: maps.clone(),
        mask: mask.clone(),
        kdims: v.dims(),
        xf: Vec::with_capacity(cfg.n_it),
        xt: Vec::with_capacity(cfg.n_it),
    };
    for k in 0..cfg.n_it {
        let r = FeatureMap::from_complex(&f.ft(&m)?.sub(&rho_bar)?)?;
        let (y, h, t) = nets.xf.forward(&r, h_xf.as_ref(), true)?;
        let rho = y.to_complex(m.dims(), Domain::Xf)?.add(&rho_bar)?;
        guard(&rho, k, "xf")?;
        h_xf = Some(h);
        tape.xf.push(t.expect("recorded"));

        let r = FeatureMap::from_complex(&m.sub(&m_bar)?)?;
        let (y, h, t) = nets.xt.forward(&r, h_xt.as_ref(), true)?;
        let u = y.to_complex(m.dims(), Domain::ImageXt)?.add(&m_bar)?;
        guard(&u, k, "xt")?;
        h_xt = Some(h);
        tape.xt.push(t.expect("recorded"));

        let sigma = pdc_with(&f, &m, maps, v, mask, cfg.lambda0)?;
        guard(&sigma, k, "pdc")?;
        m = wcp_with(&f, &u, &rho, &sigma, maps, cfg.alpha0, cfg.beta0)?;
        guard(&m, k, "wcp")?;
    }
    Ok((m, tape))
}

/// Reverse pass from `g_m`, the loss gradient at the final estimate.
pub fn unrolled_backward(tape: &UnrolledTape, nets: &NetPair, g_m: &DynTensor) -> Result<UnrolledGrads> {
    let cfg = &tape.cfg;
    if tape.xf.len() != cfg.n_it || tape.xt.len() != cfg.n_it {
        return Err(Error::shape("missing tape: forward was not recorded for every iteration"));
    }
    let idims = tape.kdims.combined();
    g_m.expect_domain(Domain::ImageXt)?;
    g_m.expect_dims(idims)?;
    let f = Fourier::new(idims);
    let maps = &tape.maps;
    let (a0, b0, l0) = (cfg.alpha0, cfg.beta0, cfg.lambda0);

    let mut g_xf = vec![0.0; nets.xf.n_params()];
    let mut g_xt = vec![0.0; nets.xt.n_params()];
    let mut g_v = DynTensor::zeros(tape.kdims, Domain::KspaceKt);
    let mut g_mbar = DynTensor::zeros(idims, Domain::ImageXt);
    let mut g_rhobar = DynTensor::zeros(idims, Domain::Xf);
    let (mut dh_xf, mut dh_xt): (Option<HiddenState>, Option<HiddenState>) = (None, None);
    let mut g = g_m.clone();

    for k in (0..cfg.n_it).rev() {
        // wcp
        let g_u = g.scale(C64::new(a0, 0.0));
        let g_rho = f.ft(&g)?.scale(C64::new(b0, 0.0));
        let g_sigma = project(&g, maps)?.scale(C64::new(1.0 - a0 - b0, 0.0));

        // pdc
        let g_k = f.fs(&g_sigma)?;
        g_v.axpy(1.0 - l0, &g_k);
        let mut g_shat = g_k;
        apply_lambda(&mut g_shat, &tape.mask, l0);
        let mut g_prev = combine(&f.fs_h(&g_shat)?, maps)?;

        // xt branch: u = m_bar + net(m - m_bar)
        g_mbar.axpy(1.0, &g_u);
        let (gx, gh) = nets.xt.backward_into(&tape.xt[k], &grad_map(&g_u), dh_xt.as_ref(), &mut g_xt)?;
        let g_r = gx.to_complex(idims, Domain::ImageXt)?;
        g_prev.axpy(1.0, &g_r);
        g_mbar.axpy(-1.0, &g_r);
        dh_xt = gh;

        // xf branch: rho = rho_bar + net(F_t m - rho_bar)
        g_rhobar.axpy(1.0, &g_rho);
        let (gx, gh) = nets.xf.backward_into(&tape.xf[k], &grad_map(&g_rho), dh_xf.as_ref(), &mut g_xf)?;
        let g_r = gx.to_complex(idims, Domain::Xf)?;
        g_prev.axpy(1.0, &f.ft_h(&g_r)?);
        g_rhobar.axpy(-1.0, &g_r);
        dh_xf = gh;

        g = g_prev;
    }

    // m0 = sum_i S_i^H F_s^H v_i
    g_v.axpy(1.0, &f.fs(&project(&g, maps)?)?);
    // m_bar, and rho_bar = F_t m_bar
    g_mbar.axpy(1.0, &f.ft_h(&g_rhobar)?);
    temporal_average_adjoint(&g_mbar, &tape.mask, maps, &mut g_v)?;

    Ok(UnrolledGrads { xf: g_xf, xt: g_xt, v: g_v })
}

/// Accumulate the adjoint of `temporal_average` applied to `g` into `g_v`.
fn temporal_average_adjoint(g: &DynTensor, mask: &SamplingMask, maps: &CoilMaps, g_v: &mut DynTensor) -> Result<()> {
    let d = g.dims();
    let plane = d.frame_len();
    let mut summed = DynTensor::zeros(Dims::new(1, d.rows, d.cols), Domain::ImageXt);
    for frame in g.as_slice().chunks_exact(plane) {
        for (o, s) in summed.as_mut_slice().iter_mut().zip(frame) {
            *o += s;
        }
    }
    let one = Fourier::new(summed.dims());
    let k = one.fs(&project(&summed, maps)?)?;
    let divisor: Vec<f64> = mask.times_sampled().into_iter().map(|c| c.max(1) as f64).collect();
    let n_c = maps.n_coils();
    let out = g_v.as_mut_slice();
    for c in 0..n_c {
        let src = k.coil(c);
        for t in 0..d.frames {
            let base = (c * d.frames + t) * plane;
            for (i, s) in src.iter().enumerate() {
                out[base + i] += s / divisor[i / d.cols];
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coils::synth_maps;
    use crate::learned::{ConvRecNet, NetConfig};
    use crate::sampling::{apply_mask, mask_lattice, LatticeOffset};
    use crate::solver::{ctf_solve, Mode};
    use crate::tensors::NormKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: Dims, domain: Domain, seed: u64) -> DynTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DynTensor::from_fn(dims, domain, |_, _, _, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn forward_matches_learned_solve() {
        let maps = synth_maps(2, 6, 5, 0).unwrap();
        let mask = mask_lattice(4, 6, 2, LatticeOffset::default()).unwrap();
        let v = apply_mask(&random(Dims::with_coils(2, 4, 6, 5), Domain::KspaceKt, 1), &mask).unwrap();
        let nets = NetPair {
            xf: ConvRecNet::new(NetConfig::xf(3), 1).unwrap(),
            xt: ConvRecNet::new(NetConfig::xt(3), 2).unwrap(),
        };
        let cfg = SolverConfig { mode: Mode::Learned, n_it: 3, ..Default::default() };
        let (a, _) = unrolled_forward(&v, &mask, &maps, &cfg, &nets).unwrap();
        let (b, state) = ctf_solve(&v, &mask, &maps, &cfg, Some(&nets)).unwrap();
        assert!(a.sub(&b).unwrap().norm(NormKind::Linf) < 1e-12);
        assert!(state.trace.is_empty());
    }

    #[test]
    fn temporal_average_adjoint_identity() {
        let maps = synth_maps(2, 6, 4, 3).unwrap();
        let mask = mask_lattice(3, 6, 3, LatticeOffset::default()).unwrap();
        let v = random(Dims::with_coils(2, 3, 6, 4), Domain::KspaceKt, 4);
        let g = random(Dims::new(3, 6, 4), Domain::ImageXt, 5);
        let lhs = temporal_average(&v, &mask, &maps).unwrap().inner(&g).unwrap();
        let mut gv = DynTensor::zeros(v.dims(), Domain::KspaceKt);
        temporal_average_adjoint(&g, &mask, &maps, &mut gv).unwrap();
        let rhs = v.inner(&gv).unwrap();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
    }
}
