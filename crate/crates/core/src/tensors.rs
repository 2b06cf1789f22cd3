//! Complex dynamic tensors with a fixed `[coil, t, y, x]` axis order.
//!
//! Every array in the toolkit (images, k-space, x-f signals, splitting
//! variables) is a [`DynTensor`]. The optional coil axis is outermost and the
//! readout axis `x` is innermost. Transforms never permute axes.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Which space a tensor's samples live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    /// Spatio-temporal image domain.
    ImageXt,
    /// k-space per frame.
    KspaceKt,
    /// Image space along `y`/`x`, temporal frequency along the frame axis.
    Xf,
}

/// Tensor extents. `coils` is `None` for coil-combined data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub coils: Option<usize>,
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Dims {
    pub fn new(frames: usize, rows: usize, cols: usize) -> Self {
        Dims {
            coils: None,
            frames,
            rows,
            cols,
        }
    }

    pub fn with_coils(coils: usize, frames: usize, rows: usize, cols: usize) -> Self {
        Dims {
            coils: Some(coils),
            frames,
            rows,
            cols,
        }
    }

    pub fn n_coils(&self) -> usize {
        self.coils.unwrap_or(1)
    }

    pub fn frame_len(&self) -> usize {
        self.rows * self.cols
    }

    /// Samples in one coil (all frames).
    pub fn coil_len(&self) -> usize {
        self.frames * self.rows * self.cols
    }

    pub fn len(&self) -> usize {
        self.n_coils() * self.coil_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same extents without the coil axis.
    pub fn combined(&self) -> Dims {
        Dims {
            coils: None,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.rows == 0 || self.cols == 0 || self.coils == Some(0) {
            return Err(Error::shape(format!("all extents must be >= 1, got {self:?}")));
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, coil: usize, t: usize, y: usize, x: usize) -> usize {
        ((coil * self.frames + t) * self.rows + y) * self.cols + x
    }
}

/// Complex-valued 3-D/4-D array with a domain tag.
#[derive(Debug, Clone, PartialEq)]
pub struct DynTensor {
    dims: Dims,
    domain: Domain,
    data: Vec<C64>,
}

impl DynTensor {
    pub fn zeros(dims: Dims, domain: Domain) -> Self {
        DynTensor {
            dims,
            domain,
            data: vec![C64::new(0.0, 0.0); dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, domain: Domain, data: Vec<C64>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(Error::shape(format!(
                "data length {} does not match dims {:?} (expected {})",
                data.len(),
                dims,
                dims.len()
            )));
        }
        Ok(DynTensor { dims, domain, data })
    }

    pub fn from_fn(dims: Dims, domain: Domain, mut f: impl FnMut(usize, usize, usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for c in 0..dims.n_coils() {
            for t in 0..dims.frames {
                for y in 0..dims.rows {
                    for x in 0..dims.cols {
                        data.push(f(c, t, y, x));
                    }
                }
            }
        }
        DynTensor { dims, domain, data }
    }

    pub fn zeros_like(&self) -> Self {
        DynTensor::zeros(self.dims, self.domain)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub(crate) fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    /// Re-tag without touching the samples. Used by file loaders, which do
    /// not store the domain.
    pub fn retagged(self, domain: Domain) -> Self {
        self.with_domain(domain)
    }

    #[inline]
    pub fn get(&self, coil: usize, t: usize, y: usize, x: usize) -> C64 {
        self.data[self.dims.index(coil, t, y, x)]
    }

    /// Samples of one coil, all frames.
    pub fn coil(&self, coil: usize) -> &[C64] {
        let n = self.dims.coil_len();
        &self.data[coil * n..(coil + 1) * n]
    }

    pub fn expect_domain(&self, expected: Domain) -> Result<()> {
        if self.domain != expected {
            return Err(Error::Domain {
                expected,
                found: self.domain,
            });
        }
        Ok(())
    }

    pub fn expect_dims(&self, dims: Dims) -> Result<()> {
        if self.dims != dims {
            return Err(Error::shape(format!("expected {dims:?}, found {:?}", self.dims)));
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(C64) -> C64) -> DynTensor {
        DynTensor {
            dims: self.dims,
            domain: self.domain,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn zip_map(&self, other: &DynTensor, mut f: impl FnMut(C64, C64) -> C64) -> Result<DynTensor> {
        if self.dims != other.dims {
            return Err(Error::shape(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(DynTensor {
            dims: self.dims,
            domain: self.domain,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &DynTensor) -> Result<DynTensor> {
        elementwise(self, Operand::Tensor(other), ElementOp::Add)
    }

    pub fn sub(&self, other: &DynTensor) -> Result<DynTensor> {
        elementwise(self, Operand::Tensor(other), ElementOp::Sub)
    }

    pub fn mul(&self, other: &DynTensor) -> Result<DynTensor> {
        elementwise(self, Operand::Tensor(other), ElementOp::Mul)
    }

    pub fn scale(&self, c: C64) -> DynTensor {
        self.map(|z| z * c)
    }

    /// `self += c * other`, in place.
    pub(crate) fn axpy(&mut self, c: f64, other: &DynTensor) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * c;
        }
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        norms(self, kind)
    }

    /// `<self, other> = sum conj(self_j) * other_j`.
    pub fn inner(&self, other: &DynTensor) -> Result<C64> {
        if self.dims != other.dims {
            return Err(Error::shape(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Pointwise modulus, dropping the coil axis requirement (coil-free only).
    pub fn magnitude(&self) -> Result<RealTensor> {
        if self.dims.coils.is_some() {
            return Err(Error::shape("magnitude expects a coil-combined tensor"));
        }
        RealTensor::from_vec(
            self.dims.frames,
            self.dims.rows,
            self.dims.cols,
            self.data.iter().map(|z| z.norm()).collect(),
        )
    }

    /// Extract a sub-box `[y0, y1) x [x0, x1)` of every frame (coil-free only).
    pub fn crop(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Result<DynTensor> {
        let d = self.dims;
        if d.coils.is_some() || rows.end > d.rows || cols.end > d.cols || rows.is_empty() || cols.is_empty() {
            return Err(Error::shape(format!("invalid crop {rows:?} x {cols:?} of {d:?}")));
        }
        let out = Dims::new(d.frames, rows.len(), cols.len());
        Ok(DynTensor::from_fn(out, self.domain, |_, t, y, x| {
            self.get(0, t, y + rows.start, x + cols.start)
        }))
    }
}

/// Elementwise operators supported by [`elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementOp {
    Add,
    Sub,
    Mul,
    Scale,
}

pub enum Operand<'a> {
    Tensor(&'a DynTensor),
    Scalar(C64),
}

/// Elementwise arithmetic. `Scale` takes a scalar operand, everything else a
/// tensor of identical dims; add/sub also require matching domains.
pub fn elementwise(a: &DynTensor, b: Operand<'_>, op: ElementOp) -> Result<DynTensor> {
    match (op, b) {
        (ElementOp::Scale, Operand::Scalar(c)) => Ok(a.scale(c)),
        (ElementOp::Scale, Operand::Tensor(_)) => Err(Error::param("scale takes a scalar operand")),
        (_, Operand::Scalar(_)) => Err(Error::param(format!("{op:?} takes a tensor operand"))),
        (op, Operand::Tensor(b)) => {
            if matches!(op, ElementOp::Add | ElementOp::Sub) && a.domain != b.domain {
                return Err(Error::Domain {
                    expected: a.domain,
                    found: b.domain,
                });
            }
            match op {
                ElementOp::Add => a.zip_map(b, |x, y| x + y),
                ElementOp::Sub => a.zip_map(b, |x, y| x - y),
                ElementOp::Mul => a.zip_map(b, |x, y| x * y),
                ElementOp::Scale => unreachable!(),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    Linf,
}

pub fn norms(a: &DynTensor, kind: NormKind) -> f64 {
    match kind {
        NormKind::L1 => a.data.iter().map(|z| z.norm()).sum(),
        NormKind::L2 => a.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
        NormKind::Linf => a.max_abs(),
    }
}

/// Real-valued `[t, y, x]` array, mostly magnitude images.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTensor {
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl RealTensor {
    pub fn from_vec(frames: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || rows == 0 || cols == 0 || data.len() != frames * rows * cols {
            return Err(Error::shape(format!(
                "real tensor {frames}x{rows}x{cols} with {} values",
                data.len()
            )));
        }
        Ok(RealTensor {
            frames,
            rows,
            cols,
            data,
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealTensor {
        RealTensor {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }
}
