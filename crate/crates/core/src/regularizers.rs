//! De-aliasing operators for the x-f and x-t sub-problems.
//!
//! Each operator has the residual form `baseline + f(input - baseline)`, where
//! `f` is the identity, exact complex soft-thresholding (the proximal map of
//! `tau * ||.||_1`), or a learned convolutional-recurrent network.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::learned::{ConvRecNet, FeatureMap, HiddenState};
use crate::tensors::{Domain, DynTensor, C64};

#[derive(Debug, Clone)]
pub enum ProxKind {
    /// `f(r) = r`, the proximal map of the zero regularizer.
    Identity,
    /// `f(r) = soft(r, tau)`.
    SoftThreshold { tau: f64 },
    Learned(Arc<ConvRecNet>),
}

#[derive(Debug, Clone)]
pub struct ProxSpec {
    pub kind: ProxKind,
    /// Apply `f` to `input - baseline` and add the baseline back. When unset
    /// `f` acts on the input directly.
    pub residual: bool,
}

impl ProxSpec {
    pub fn identity() -> Self {
        ProxSpec {
            kind: ProxKind::Identity,
            residual: true,
        }
    }

    pub fn soft(tau: f64) -> Self {
        ProxSpec {
            kind: ProxKind::SoftThreshold { tau },
            residual: true,
        }
    }

    pub fn learned(net: Arc<ConvRecNet>) -> Self {
        ProxSpec {
            kind: ProxKind::Learned(net),
            residual: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ProxKind::SoftThreshold { tau } = self.kind {
            if !(tau >= 0.0) {
                return Err(Error::param(format!("threshold {tau} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn is_learned(&self) -> bool {
        matches!(self.kind, ProxKind::Learned(_))
    }
}

/// Complex soft-thresholding `x * max(|x| - tau, 0) / |x|`, the minimizer of
/// `0.5 |y - x|^2 + tau |y|`.
#[inline]
pub fn shrink(x: C64, tau: f64) -> C64 {
    let r = x.norm();
    if r <= tau {
        C64::new(0.0, 0.0)
    } else {
        x * ((r - tau) / r)
    }
}

pub fn prox_soft(x: &DynTensor, tau: f64) -> Result<DynTensor> {
    if !(tau >= 0.0) {
        return Err(Error::param(format!("threshold {tau} must be >= 0")));
    }
    Ok(x.map(|z| shrink(z, tau)))
}

fn regularize(
    input: &DynTensor,
    baseline: &DynTensor,
    spec: &ProxSpec,
    hidden: &mut Option<HiddenState>,
    domain: Domain,
) -> Result<DynTensor> {
    input.expect_domain(domain)?;
    baseline.expect_domain(domain)?;
    if input.dims() != baseline.dims() {
        return Err(Error::shape(format!(
            "input {:?} vs baseline {:?}",
            input.dims(),
            baseline.dims()
        )));
    }
    spec.validate()?;
    let r = if spec.residual { input.sub(baseline)? } else { input.clone() };
    let f = match &spec.kind {
        ProxKind::Identity => r,
        ProxKind::SoftThreshold { tau } => prox_soft(&r, *tau)?,
        ProxKind::Learned(net) => {
            let x = FeatureMap::from_complex(&r)?;
            let (y, h_next, _) = net.forward(&x, hidden.as_ref(), false)?;
            *hidden = Some(h_next);
            y.to_complex(r.dims(), domain)?
        }
    };
    if spec.residual {
        f.add(baseline)
    } else {
        Ok(f)
    }
}

/// `rho = rho_bar + f(rho_in - rho_bar)` in the x-f domain.
pub fn xf_regularize(
    rho_in: &DynTensor,
    baseline: &DynTensor,
    spec: &ProxSpec,
    hidden: &mut Option<HiddenState>,
) -> Result<DynTensor> {
    regularize(rho_in, baseline, spec, hidden, Domain::Xf)
}

/// `u = m_bar + f(m_in - m_bar)` in the x-t domain.
pub fn xt_regularize(
    m_in: &DynTensor,
    baseline: &DynTensor,
    spec: &ProxSpec,
    hidden: &mut Option<HiddenState>,
) -> Result<DynTensor> {
    regularize(m_in, baseline, spec, hidden, Domain::ImageXt)
}
