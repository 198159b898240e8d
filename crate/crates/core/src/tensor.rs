//! Dense order-n tensors and the mode-wise operations built on them.
//!
//! Storage is generalized column-major: the mode-1 index varies fastest, then
//! mode-2, and so on. A frontal slice `A(:, :, i3, ..., in)` is therefore one
//! contiguous `m1 * m2` block, which lets it be viewed as a column-major
//! [`DMatrix`] without reshuffling.
//!
//! Mode indices in this API are zero-based (`0` is mode-1).

use nalgebra::{Complex, ComplexField, DMatrix};
use rayon::prelude::*;

use crate::error::{dim_err, Error, Result};

pub type Complex64 = Complex<f64>;

/// Scalar types a tensor may hold: `f64` in the spatial domain and
/// `Complex<f64>` in the transform domain.
pub trait Element: ComplexField<RealField = f64> + Copy + Send + Sync {}

impl Element for f64 {}
impl Element for Complex64 {}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

/// Real order-n tensor: samples, scatters and subspaces all live here.
pub type DenseTensor = Tensor<f64>;
/// Complex order-n tensor, used as the transform-domain carrier.
pub type ComplexTensor = Tensor<Complex64>;

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(dim_err(format!(
            "tensors need at least two modes, got dims {dims:?}"
        )));
    }
    // Mode-2 is the sample/column mode and may be empty (a batch of zero samples).
    if dims.iter().enumerate().any(|(k, &d)| d == 0 && k != 1) {
        return Err(dim_err(format!("zero-length mode in dims {dims:?}")));
    }
    Ok(())
}

impl<T: Element> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        check_dims(&dims)?;
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(dim_err(format!(
                "dims {dims:?} need {expected} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims)?;
        let len = dims.iter().product();
        Ok(Self {
            dims,
            data: vec![T::zero(); len],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        check_dims(&dims)?;
        let len: usize = dims.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            for (i, d) in idx.iter_mut().zip(&dims) {
                *i += 1;
                if *i < *d {
                    break;
                }
                *i = 0;
            }
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.dims.len(), "index order mismatch");
        let mut off = 0;
        let mut stride = 1;
        for (&i, &d) in idx.iter().zip(&self.dims) {
            assert!(i < d, "index {idx:?} out of bounds for dims {:?}", self.dims);
            off += i * stride;
            stride *= d;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: T) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    /// Dimensions of modes 3..n (empty for a matrix).
    pub fn trailing_dims(&self) -> &[usize] {
        &self.dims[2..]
    }

    /// Number of frontal slices, `m3 * ... * mn`.
    pub fn slice_count(&self) -> usize {
        self.trailing_dims().iter().product()
    }

    pub fn frontal_slice(&self, t: usize) -> DMatrix<T> {
        let (r, c) = (self.dims[0], self.dims[1]);
        DMatrix::from_column_slice(r, c, &self.data[t * r * c..(t + 1) * r * c])
    }

    pub fn frontal_slices(&self) -> Vec<DMatrix<T>> {
        (0..self.slice_count())
            .map(|t| self.frontal_slice(t))
            .collect()
    }

    /// Reassembles a tensor from frontal slices listed in storage order.
    pub fn from_frontal_slices(
        rows: usize,
        cols: usize,
        trailing: &[usize],
        slices: &[DMatrix<T>],
    ) -> Result<Self> {
        let mut dims = vec![rows, cols];
        dims.extend_from_slice(trailing);
        check_dims(&dims)?;
        let count: usize = trailing.iter().product();
        if slices.len() != count {
            return Err(dim_err(format!(
                "expected {count} frontal slices, got {}",
                slices.len()
            )));
        }
        let mut data = Vec::with_capacity(rows * cols * count);
        for s in slices {
            if s.shape() != (rows, cols) {
                return Err(dim_err(format!(
                    "frontal slice shape {:?} differs from ({rows}, {cols})",
                    s.shape()
                )));
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self { dims, data })
    }

    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

impl DenseTensor {
    pub fn to_complex(&self) -> ComplexTensor {
        self.map(|x| Complex64::new(x, 0.0))
    }
}

/// Decodes a frontal-slice number into its zero-based trailing multi-index.
pub fn slice_multi_index(mut t: usize, trailing: &[usize]) -> Vec<usize> {
    trailing
        .iter()
        .map(|&d| {
            let i = t % d;
            t /= d;
            i
        })
        .collect()
}

fn check_mode(order: usize, mode: usize) -> Result<()> {
    if mode >= order {
        return Err(Error::ModeIndex { mode, order });
    }
    Ok(())
}

/// Splits dims around `mode`: (product of earlier modes, product of later modes).
fn mode_strides(dims: &[usize], mode: usize) -> (usize, usize) {
    let lo = dims[..mode].iter().product();
    let hi = dims[mode + 1..].iter().product();
    (lo, hi)
}

/// Mode-`k` unfolding: a `m_k x prod(other modes)` matrix whose columns are the
/// mode-`k` fibers, remaining indices ordered by ascending mode with the
/// earliest mode varying fastest.
pub fn unfold<T: Element>(a: &Tensor<T>, mode: usize) -> Result<DMatrix<T>> {
    check_mode(a.order(), mode)?;
    let mk = a.dims[mode];
    let (lo_n, hi_n) = mode_strides(&a.dims, mode);
    let mut m = DMatrix::<T>::zeros(mk, lo_n * hi_n);
    for hi in 0..hi_n {
        for i in 0..mk {
            let base = lo_n * (i + mk * hi);
            for lo in 0..lo_n {
                m[(i, lo + lo_n * hi)] = a.data[base + lo];
            }
        }
    }
    Ok(m)
}

/// Inverse of [`unfold`]: `fold(&unfold(a, k)?, k, a.dims()) == a`.
pub fn fold<T: Element>(m: &DMatrix<T>, mode: usize, dims: &[usize]) -> Result<Tensor<T>> {
    check_dims(dims)?;
    check_mode(dims.len(), mode)?;
    let mk = dims[mode];
    let (lo_n, hi_n) = mode_strides(dims, mode);
    if m.nrows() != mk || m.ncols() != lo_n * hi_n {
        return Err(dim_err(format!(
            "matrix {}x{} cannot fold into mode {mode} of dims {dims:?}",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut data = vec![T::zero(); mk * lo_n * hi_n];
    for hi in 0..hi_n {
        for i in 0..mk {
            let base = lo_n * (i + mk * hi);
            for lo in 0..lo_n {
                data[base + lo] = m[(i, lo + lo_n * hi)];
            }
        }
    }
    Ok(Tensor {
        dims: dims.to_vec(),
        data,
    })
}

/// Mode-`k` product `A x_k B` for a `d x m_k` matrix `B`; mode `k` of the
/// result has length `d`.
pub fn mode_product<T: Element>(a: &Tensor<T>, b: &DMatrix<T>, mode: usize) -> Result<Tensor<T>> {
    check_mode(a.order(), mode)?;
    let mk = a.dims[mode];
    if b.ncols() != mk {
        return Err(dim_err(format!(
            "mode-{mode} product needs {mk} matrix columns, got {}",
            b.ncols()
        )));
    }
    let d = b.nrows();
    let (lo_n, hi_n) = mode_strides(&a.dims, mode);
    let mut dims = a.dims.clone();
    dims[mode] = d;
    check_dims(&dims)?;
    let mut out = vec![T::zero(); d * lo_n * hi_n];
    for hi in 0..hi_n {
        for j in 0..mk {
            let src = &a.data[lo_n * (j + mk * hi)..lo_n * (j + mk * hi + 1)];
            for r in 0..d {
                let coef = b[(r, j)];
                if coef == T::zero() {
                    continue;
                }
                let dst = &mut out[lo_n * (r + d * hi)..lo_n * (r + d * hi + 1)];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o += coef * s;
                }
            }
        }
    }
    Ok(Tensor { dims, data: out })
}

/// Facewise product: matrix product of corresponding frontal slices.
pub fn facewise_product<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.order() != b.order() || a.trailing_dims() != b.trailing_dims() || a.dims[1] != b.dims[0]
    {
        return Err(dim_err(format!(
            "facewise product of {:?} and {:?} is not conformable",
            a.dims, b.dims
        )));
    }
    let slices: Vec<DMatrix<T>> = (0..a.slice_count())
        .into_par_iter()
        .map(|t| a.frontal_slice(t) * b.frontal_slice(t))
        .collect();
    Tensor::from_frontal_slices(a.dims[0], b.dims[1], a.trailing_dims(), &slices)
}

pub fn frobenius_norm<T: Element>(a: &Tensor<T>) -> f64 {
    a.data
        .iter()
        .map(|x| x.modulus_squared())
        .sum::<f64>()
        .sqrt()
}

/// Lateral slice `A(:, j, :, ..., :)`, keeping mode-2 as a singleton.
pub fn lateral_slice<T: Element>(a: &Tensor<T>, j: usize) -> Result<Tensor<T>> {
    select_lateral(a, &[j])
}

/// Gathers the listed lateral slices, in the given order, into a new tensor.
pub fn select_lateral<T: Element>(a: &Tensor<T>, indices: &[usize]) -> Result<Tensor<T>> {
    let (m1, l) = (a.dims[0], a.dims[1]);
    if let Some(&bad) = indices.iter().find(|&&j| j >= l) {
        return Err(dim_err(format!(
            "lateral slice {bad} out of range for mode-2 length {l}"
        )));
    }
    let mut dims = a.dims.clone();
    dims[1] = indices.len();
    let mut data = Vec::with_capacity(m1 * indices.len() * a.slice_count());
    for t in 0..a.slice_count() {
        for &j in indices {
            let start = m1 * (j + l * t);
            data.extend_from_slice(&a.data[start..start + m1]);
        }
    }
    Ok(Tensor { dims, data })
}

/// Stacks samples of shape `m1 x m2 x ... x mn` as lateral slices of a
/// `m1 x l x m2 x ... x mn` tensor.
pub fn stack_lateral<T: Element>(samples: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = samples
        .first()
        .ok_or_else(|| dim_err("cannot stack an empty sample list"))?;
    if let Some(s) = samples.iter().find(|s| s.dims != first.dims) {
        return Err(dim_err(format!(
            "heterogeneous sample shapes {:?} and {:?}",
            first.dims, s.dims
        )));
    }
    let m1 = first.dims[0];
    let trailing: usize = first.dims[1..].iter().product();
    let mut dims = vec![m1, samples.len()];
    dims.extend_from_slice(&first.dims[1..]);
    let mut data = Vec::with_capacity(m1 * samples.len() * trailing);
    for t in 0..trailing {
        for s in samples {
            data.extend_from_slice(&s.data[m1 * t..m1 * (t + 1)]);
        }
    }
    Ok(Tensor { dims, data })
}

/// Concatenates tensors along mode-2.
pub fn concat_lateral<T: Element>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| dim_err("cannot concatenate an empty list"))?;
    if parts
        .iter()
        .any(|p| p.dims[0] != first.dims[0] || p.trailing_dims() != first.trailing_dims())
    {
        return Err(dim_err("lateral concatenation needs matching mode-1 and trailing modes"));
    }
    let m1 = first.dims[0];
    let mut dims = first.dims.clone();
    dims[1] = parts.iter().map(|p| p.dims[1]).sum();
    let mut data = Vec::with_capacity(dims.iter().product());
    for t in 0..first.slice_count() {
        for p in parts {
            let block = m1 * p.dims[1];
            data.extend_from_slice(&p.data[block * t..block * (t + 1)]);
        }
    }
    Ok(Tensor { dims, data })
}
