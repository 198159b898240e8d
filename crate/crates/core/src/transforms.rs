//! Invertible per-mode transforms (DFT, DCT, level-1 Haar, identity) applied
//! along modes 3..n, plus the zero-padding policy the Haar transform needs.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::tensor::{frobenius_norm, mode_product, Complex64, ComplexTensor, DenseTensor, Tensor};

/// Imaginary parts up to this fraction of the transform-domain norm are
/// treated as rounding and dropped on the way back to the spatial domain.
pub const IMAG_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    /// Unitary discrete Fourier transform.
    Dft,
    /// Orthonormal type-II discrete cosine transform.
    Dct,
    /// Orthonormal level-1 Haar wavelet transform.
    Haar,
    Identity,
}

impl TransformKind {
    pub const ALL: [TransformKind; 4] = [
        TransformKind::Dft,
        TransformKind::Dct,
        TransformKind::Haar,
        TransformKind::Identity,
    ];

    /// True when the transform matrices are real, so slices stay real.
    pub fn is_real(self) -> bool {
        !matches!(self, TransformKind::Dft)
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformKind::Dft => "dft",
            TransformKind::Dct => "dct",
            TransformKind::Haar => "dwt",
            TransformKind::Identity => "identity",
        })
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dft" | "fft" => Ok(TransformKind::Dft),
            "dct" => Ok(TransformKind::Dct),
            "dwt" | "haar" => Ok(TransformKind::Haar),
            "identity" | "none" => Ok(TransformKind::Identity),
            other => Err(Error::Parameter(format!("unknown transform {other:?}"))),
        }
    }
}

/// Which modes get transformed, and how the data tensor was padded.
///
/// `transformed_modes` are zero-based; by default every mode from the third
/// on. `padded_dims` differs from `original_dims` only on transformed modes
/// of odd length under the Haar transform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub transformed_modes: Vec<usize>,
    pub original_dims: Vec<usize>,
    pub padded_dims: Vec<usize>,
}

impl TransformSpec {
    /// Spec for a stacked data tensor of the given dims.
    pub fn new(kind: TransformKind, dims: &[usize]) -> Self {
        let transformed_modes: Vec<usize> = (2..dims.len()).collect();
        let mut padded_dims = dims.to_vec();
        if kind == TransformKind::Haar {
            for &m in &transformed_modes {
                padded_dims[m] += padded_dims[m] % 2;
            }
        }
        Self {
            kind,
            transformed_modes,
            original_dims: dims.to_vec(),
            padded_dims,
        }
    }

    /// Trailing (mode 3..n) lengths every operand must have after padding.
    pub fn trailing_dims(&self) -> &[usize] {
        &self.padded_dims[2..]
    }

    pub fn is_padded(&self) -> bool {
        self.original_dims != self.padded_dims
    }

    fn check_operand(&self, dims: &[usize]) -> Result<()> {
        if dims.len() != self.padded_dims.len() || dims[2..] != self.padded_dims[2..] {
            return Err(dim_err(format!(
                "operand dims {dims:?} do not match transform trailing dims {:?}",
                self.trailing_dims()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TransformMatrixPair {
    pub forward: DMatrix<Complex64>,
    pub inverse: DMatrix<Complex64>,
}

/// Explicit transform matrix of size `m` and its inverse.
pub fn make_transform(kind: TransformKind, m: usize) -> Result<TransformMatrixPair> {
    if m == 0 {
        return Err(Error::Parameter("transform size must be positive".into()));
    }
    let forward = match kind {
        TransformKind::Identity => DMatrix::identity(m, m),
        TransformKind::Dft => {
            let scale = 1.0 / (m as f64).sqrt();
            DMatrix::from_fn(m, m, |j, k| {
                // reduce j*k mod m first so large sizes keep full phase accuracy
                let phase = -2.0 * PI * ((j * k) % m) as f64 / m as f64;
                Complex64::from_polar(scale, phase)
            })
        }
        TransformKind::Dct => DMatrix::from_fn(m, m, |k, n| {
            let s = if k == 0 {
                (1.0 / m as f64).sqrt()
            } else {
                (2.0 / m as f64).sqrt()
            };
            let v = s * (PI * (2 * n + 1) as f64 * k as f64 / (2 * m) as f64).cos();
            Complex64::new(v, 0.0)
        }),
        TransformKind::Haar => {
            if !m.is_multiple_of(2) {
                return Err(Error::PaddingRequired(m));
            }
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let half = m / 2;
            DMatrix::from_fn(m, m, |r, c| {
                let v = if r < half {
                    if c / 2 == r {
                        h
                    } else {
                        0.0
                    }
                } else if c / 2 == r - half {
                    if c % 2 == 0 {
                        h
                    } else {
                        -h
                    }
                } else {
                    0.0
                };
                Complex64::new(v, 0.0)
            })
        }
    };
    // Every kind is unitary, so the inverse is the adjoint.
    let inverse = forward.adjoint();
    Ok(TransformMatrixPair { forward, inverse })
}

/// Appends zero hyperslices so every transformed mode has the padded length.
/// A no-op for non-Haar specs and for tensors that are already padded.
pub fn pad_for_transform(a: &DenseTensor, spec: &TransformSpec) -> Result<DenseTensor> {
    if !spec.is_padded() || a.dims()[2..] == spec.padded_dims[2..] {
        return Ok(a.clone());
    }
    if a.order() != spec.original_dims.len() || a.dims()[2..] != spec.original_dims[2..] {
        return Err(dim_err(format!(
            "cannot pad dims {:?} to trailing dims {:?}",
            a.dims(),
            spec.trailing_dims()
        )));
    }
    let mut dims = a.dims().to_vec();
    dims[2..].copy_from_slice(&spec.padded_dims[2..]);
    let src = a.dims().to_vec();
    Tensor::from_fn(dims, |idx| {
        if idx.iter().zip(&src).all(|(i, d)| i < d) {
            a.get(idx)
        } else {
            0.0
        }
    })
}

/// Drops Haar padding, restoring the original trailing lengths.
pub fn truncate_padding(a: &DenseTensor, spec: &TransformSpec) -> Result<DenseTensor> {
    if a.dims()[2..] == spec.original_dims[2..] {
        return Ok(a.clone());
    }
    spec.check_operand(a.dims())?;
    let mut dims = a.dims().to_vec();
    dims[2..].copy_from_slice(&spec.original_dims[2..]);
    Tensor::from_fn(dims, |idx| a.get(idx))
}

/// A complex tensor known to live in the transform domain of `spec`.
#[derive(Debug, Clone)]
pub struct TransformedTensor {
    pub data: ComplexTensor,
    pub spec: TransformSpec,
}

enum Direction {
    Forward,
    Inverse,
}

fn apply_dft(a: &ComplexTensor, mode: usize, dir: Direction) -> ComplexTensor {
    let dims = a.dims();
    let m = dims[mode];
    if m == 1 {
        return a.clone();
    }
    let lo_n: usize = dims[..mode].iter().product();
    let hi_n: usize = dims[mode + 1..].iter().product();
    let fft = FftPlanner::new().plan_fft(
        m,
        match dir {
            Direction::Forward => FftDirection::Forward,
            Direction::Inverse => FftDirection::Inverse,
        },
    );
    // gather fibers contiguously, transform them in one batch, scatter back
    let mut buf = vec![Complex64::new(0.0, 0.0); a.len()];
    let src = a.data();
    for hi in 0..hi_n {
        for lo in 0..lo_n {
            let fiber = &mut buf[m * (lo + lo_n * hi)..m * (lo + lo_n * hi + 1)];
            for (j, f) in fiber.iter_mut().enumerate() {
                *f = src[lo + lo_n * (j + m * hi)];
            }
        }
    }
    if !buf.is_empty() {
        fft.process(&mut buf);
    }
    let scale = 1.0 / (m as f64).sqrt();
    let mut out = a.clone();
    let dst = out.data_mut();
    for hi in 0..hi_n {
        for lo in 0..lo_n {
            let fiber = &buf[m * (lo + lo_n * hi)..m * (lo + lo_n * hi + 1)];
            for (j, f) in fiber.iter().enumerate() {
                dst[lo + lo_n * (j + m * hi)] = f * scale;
            }
        }
    }
    out
}

fn apply_modes(a: &ComplexTensor, spec: &TransformSpec, dir: Direction) -> Result<ComplexTensor> {
    spec.check_operand(a.dims())?;
    let mut out = a.clone();
    if spec.kind == TransformKind::Identity {
        return Ok(out);
    }
    let modes: Vec<usize> = match dir {
        Direction::Forward => spec.transformed_modes.clone(),
        Direction::Inverse => spec.transformed_modes.iter().rev().copied().collect(),
    };
    for mode in modes {
        out = match spec.kind {
            TransformKind::Dft => apply_dft(
                &out,
                mode,
                match dir {
                    Direction::Forward => Direction::Forward,
                    Direction::Inverse => Direction::Inverse,
                },
            ),
            _ => {
                let pair = make_transform(spec.kind, out.dims()[mode])?;
                let mat = match dir {
                    Direction::Forward => pair.forward,
                    Direction::Inverse => pair.inverse,
                };
                mode_product(&out, &mat, mode)?
            }
        };
    }
    Ok(out)
}

/// Forward transform of a complex tensor along the spec's modes.
pub fn forward_complex(a: &ComplexTensor, spec: &TransformSpec) -> Result<ComplexTensor> {
    apply_modes(a, spec, Direction::Forward)
}

/// Inverse transform of a complex tensor along the spec's modes.
pub fn inverse_complex(a: &ComplexTensor, spec: &TransformSpec) -> Result<ComplexTensor> {
    apply_modes(a, spec, Direction::Inverse)
}

/// `A x_3 L_3 x_4 ... x_n L_n`.
pub fn to_transform_domain(a: &DenseTensor, spec: &TransformSpec) -> Result<TransformedTensor> {
    Ok(TransformedTensor {
        data: forward_complex(&a.to_complex(), spec)?,
        spec: spec.clone(),
    })
}

/// Drops imaginary parts after checking they are rounding noise relative to
/// `reference_norm`.
pub fn into_real(a: &ComplexTensor, reference_norm: f64) -> Result<DenseTensor> {
    let max_imag = a.data().iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    let tolerance = IMAG_TOLERANCE * reference_norm;
    if max_imag > tolerance || max_imag.is_nan() {
        return Err(Error::NonReal {
            max_imag,
            tolerance,
        });
    }
    Ok(a.map(|z| z.re))
}

/// `Ã x_n L_n^{-1} ... x_3 L_3^{-1}`, returned as a real tensor. With
/// `truncate`, Haar padding is removed afterwards.
pub fn from_transform_domain(t: &TransformedTensor, truncate: bool) -> Result<DenseTensor> {
    let back = inverse_complex(&t.data, &t.spec)?;
    let real = into_real(&back, frobenius_norm(&t.data))?;
    if truncate {
        truncate_padding(&real, &t.spec)
    } else {
        Ok(real)
    }
}
