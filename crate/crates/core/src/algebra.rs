//! The `*_L` operator family: product, identity, transpose, inverse,
//! eigendecomposition and per-slice condition numbers, each computed facewise
//! in the transform domain.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, CMatrix, DIAGONALIZABLE_CONDITION, SINGULAR_CONDITION};
use crate::tensor::{frobenius_norm, slice_multi_index, Complex64, ComplexTensor, DenseTensor};
use crate::transforms::{forward_complex, into_real, inverse_complex, TransformSpec};

/// Frontal slices at or above this Frobenius condition number are ill-conditioned.
pub const DEFAULT_KAPPA_THRESHOLD: f64 = 1e5;

/// Applies `f` to every frontal slice (in parallel) and reassembles the
/// result. The first failing slice in storage order wins, so errors do not
/// depend on scheduling.
pub(crate) fn map_slices<F>(a: &ComplexTensor, f: F) -> Result<ComplexTensor>
where
    F: Fn(usize, CMatrix) -> Result<CMatrix> + Sync,
{
    let results: Vec<Result<CMatrix>> = (0..a.slice_count())
        .into_par_iter()
        .map(|t| f(t, a.frontal_slice(t)))
        .collect();
    let slices = results.into_iter().collect::<Result<Vec<_>>>()?;
    let (rows, cols) = slices
        .first()
        .map(|s| s.shape())
        .unwrap_or((a.dims()[0], a.dims()[1]));
    ComplexTensor::from_frontal_slices(rows, cols, a.trailing_dims(), &slices)
}

fn transformed(a: &DenseTensor, spec: &TransformSpec) -> Result<ComplexTensor> {
    forward_complex(&a.to_complex(), spec)
}

/// Inverse-transforms a transform-domain result and checks it is real.
pub(crate) fn back_to_real(t: &ComplexTensor, spec: &TransformSpec) -> Result<DenseTensor> {
    into_real(&inverse_complex(t, spec)?, frobenius_norm(t))
}

/// `A *_L B`.
pub fn tl_product(a: &DenseTensor, b: &DenseTensor, spec: &TransformSpec) -> Result<DenseTensor> {
    if a.dims()[1] != b.dims()[0] || a.trailing_dims() != b.trailing_dims() {
        return Err(dim_err(format!(
            "*_L product of {:?} and {:?} is not conformable",
            a.dims(),
            b.dims()
        )));
    }
    let (at, bt) = (transformed(a, spec)?, transformed(b, spec)?);
    let c = crate::tensor::facewise_product(&at, &bt)?;
    back_to_real(&c, spec)
}

/// Identity tensor: every transform-domain frontal slice is `I_m`.
pub fn tl_identity(m: usize, trailing: &[usize], spec: &TransformSpec) -> Result<DenseTensor> {
    let mut dims = vec![m, m];
    dims.extend_from_slice(trailing);
    let eye = ComplexTensor::from_fn(dims, |i| {
        if i[0] == i[1] {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })?;
    back_to_real(&eye, spec)
}

/// How transform-domain slices are transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TransposeMode {
    /// Conjugate transpose; scatter slices come out Hermitian.
    #[default]
    Conjugate,
    /// Plain transpose of complex slices.
    Plain,
}

pub fn tl_transpose(a: &DenseTensor, spec: &TransformSpec) -> Result<DenseTensor> {
    tl_transpose_with(a, spec, TransposeMode::Conjugate)
}

pub fn tl_transpose_with(
    a: &DenseTensor,
    spec: &TransformSpec,
    mode: TransposeMode,
) -> Result<DenseTensor> {
    let at = transformed(a, spec)?;
    let bt = map_slices(&at, |_, s| {
        Ok(match mode {
            TransposeMode::Conjugate => s.adjoint(),
            TransposeMode::Plain => s.transpose(),
        })
    })?;
    back_to_real(&bt, spec)
}

fn check_square(a: &ComplexTensor) -> Result<()> {
    if a.dims()[0] != a.dims()[1] {
        return Err(dim_err(format!(
            "operation needs square frontal slices, got {:?}",
            a.dims()
        )));
    }
    Ok(())
}

/// Inverts one transform-domain slice, reporting singularity by multi-index.
pub(crate) fn invert_slice(s: &CMatrix, t: usize, trailing: &[usize]) -> Result<CMatrix> {
    let singular = || Error::SingularSlice {
        index: slice_multi_index(t, trailing),
    };
    let inv = linalg::invert(s).ok_or_else(singular)?;
    if s.norm() * inv.norm() >= SINGULAR_CONDITION {
        return Err(singular());
    }
    Ok(inv)
}

/// `inv_L(A)`: facewise inverse in the transform domain.
pub fn tl_inverse(a: &DenseTensor, spec: &TransformSpec) -> Result<DenseTensor> {
    let at = transformed(a, spec)?;
    check_square(&at)?;
    let trailing = at.trailing_dims().to_vec();
    let inv = map_slices(&at, |t, s| invert_slice(&s, t, &trailing))?;
    back_to_real(&inv, spec)
}

/// Transform-domain eigen factors, one decomposition per frontal slice.
#[derive(Debug, Clone)]
pub struct TransformedEig {
    pub vectors: ComplexTensor,
    pub values: ComplexTensor,
    pub slices: Vec<linalg::SliceEig>,
}

pub(crate) fn eig_slice(s: &CMatrix, t: usize, trailing: &[usize]) -> Result<linalg::SliceEig> {
    let index = || slice_multi_index(t, trailing);
    let eig = linalg::eigen(s).ok_or_else(|| Error::NonDiagonalizable {
        index: index(),
        condition: f64::NAN,
    })?;
    if !(eig.vector_condition < DIAGONALIZABLE_CONDITION) {
        return Err(Error::NonDiagonalizable {
            index: index(),
            condition: eig.vector_condition,
        });
    }
    Ok(eig)
}

/// Facewise eigendecomposition of a tensor already in the transform domain.
pub fn t_eig_transformed(at: &ComplexTensor) -> Result<TransformedEig> {
    check_square(at)?;
    let trailing = at.trailing_dims().to_vec();
    let results: Vec<Result<linalg::SliceEig>> = (0..at.slice_count())
        .into_par_iter()
        .map(|t| eig_slice(&at.frontal_slice(t), t, &trailing))
        .collect();
    let slices = results.into_iter().collect::<Result<Vec<_>>>()?;
    let m = at.dims()[0];
    let q: Vec<CMatrix> = slices.iter().map(|e| e.vectors.clone()).collect();
    let s: Vec<CMatrix> = slices
        .iter()
        .map(|e| CMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone())))
        .collect();
    Ok(TransformedEig {
        vectors: ComplexTensor::from_frontal_slices(m, m, &trailing, &q)?,
        values: ComplexTensor::from_frontal_slices(m, m, &trailing, &s)?,
        slices,
    })
}

/// `Q, S = t-eig_L(A)` with `A = Q *_L S *_L inv_L(Q)`.
#[derive(Debug, Clone)]
pub struct TEigFactors {
    pub q: DenseTensor,
    pub s: DenseTensor,
    pub spec: TransformSpec,
    /// Eigenvalues of each transform-domain slice, descending modulus.
    pub slice_eigs: Vec<Vec<Complex64>>,
}

pub fn t_eig(a: &DenseTensor, spec: &TransformSpec) -> Result<TEigFactors> {
    let e = t_eig_transformed(&transformed(a, spec)?)?;
    Ok(TEigFactors {
        q: back_to_real(&e.vectors, spec)?,
        s: back_to_real(&e.values, spec)?,
        spec: spec.clone(),
        slice_eigs: e.slices.into_iter().map(|s| s.values).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceCondition {
    /// Zero-based trailing multi-index of the frontal slice.
    pub index: Vec<usize>,
    pub kappa: f64,
    pub ill: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceConditionReport {
    pub threshold: f64,
    pub slices: Vec<SliceCondition>,
}

impl SliceConditionReport {
    pub fn kappas(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.kappa).collect()
    }

    pub fn ill_count(&self) -> usize {
        self.slices.iter().filter(|s| s.ill).count()
    }
}

/// Condition report for a tensor already in the transform domain.
pub fn condition_report_transformed(at: &ComplexTensor, threshold: f64) -> Result<SliceConditionReport> {
    check_square(at)?;
    let trailing = at.trailing_dims();
    let kappas: Vec<f64> = (0..at.slice_count())
        .into_par_iter()
        .map(|t| linalg::slice_condition(&at.frontal_slice(t)))
        .collect();
    let slices = kappas
        .into_iter()
        .enumerate()
        .map(|(t, kappa)| SliceCondition {
            index: slice_multi_index(t, trailing),
            kappa,
            ill: kappa >= threshold,
        })
        .collect();
    Ok(SliceConditionReport { threshold, slices })
}

/// Frobenius condition number of every transform-domain frontal slice.
pub fn slice_condition_numbers(
    a: &DenseTensor,
    spec: &TransformSpec,
    threshold: f64,
) -> Result<SliceConditionReport> {
    condition_report_transformed(&transformed(a, spec)?, threshold)
}

/// Converts a real matrix into a single-slice complex matrix.
pub fn to_cmatrix(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use crate::transforms::TransformKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor {
        Tensor::from_fn(dims.to_vec(), |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn rel_err(a: &DenseTensor, b: &DenseTensor) -> f64 {
        assert_eq!(a.dims(), b.dims());
        let diff: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        diff / frobenius_norm(b).max(f64::MIN_POSITIVE)
    }

    fn spec(kind: TransformKind, trailing: &[usize]) -> TransformSpec {
        let mut dims = vec![1, 1];
        dims.extend_from_slice(trailing);
        TransformSpec::new(kind, &dims)
    }

    #[test]
    fn identity_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in TransformKind::ALL {
            let sp = spec(kind, &[4, 2]);
            let a = random(&[3, 3, 4, 2], &mut rng);
            let eye = tl_identity(3, &[4, 2], &sp).unwrap();
            assert!(rel_err(&tl_product(&a, &eye, &sp).unwrap(), &a) < 1e-10);
            assert!(rel_err(&tl_product(&eye, &a, &sp).unwrap(), &a) < 1e-10);
        }
    }

    #[test]
    fn identity_spec_identity_has_identity_slices() {
        let sp = spec(TransformKind::Identity, &[3]);
        let eye = tl_identity(2, &[3], &sp).unwrap();
        for t in 0..3 {
            assert_eq!(eye.frontal_slice(t), DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn dft_identity_concentrates_in_first_slice() {
        // unitary DFT: the spatial identity is sqrt(m3*m4) * I in the first
        // frontal slice and zero elsewhere
        let sp = spec(TransformKind::Dft, &[4, 3]);
        let eye = tl_identity(2, &[4, 3], &sp).unwrap();
        let scale = 12f64.sqrt();
        for t in 0..12 {
            let s = eye.frontal_slice(t);
            let expect = if t == 0 {
                DMatrix::identity(2, 2) * scale
            } else {
                DMatrix::zeros(2, 2)
            };
            assert!((s - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn degenerate_product_is_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sp = spec(TransformKind::Identity, &[1]);
        let a = random(&[3, 4, 1], &mut rng);
        let b = random(&[4, 2, 1], &mut rng);
        let c = tl_product(&a, &b, &sp).unwrap();
        let expect = a.frontal_slice(0) * b.frontal_slice(0);
        assert_eq!(c.frontal_slice(0), expect);
    }

    #[test]
    fn dft_product_matches_naive_algorithm() {
        // Transform with explicit matrices, multiply slice by slice, invert.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sp = spec(TransformKind::Dft, &[4, 2]);
        let a = random(&[2, 3, 4, 2], &mut rng);
        let b = random(&[3, 2, 4, 2], &mut rng);
        let c = tl_product(&a, &b, &sp).unwrap();

        let l3 = crate::transforms::make_transform(TransformKind::Dft, 4).unwrap();
        let l4 = crate::transforms::make_transform(TransformKind::Dft, 2).unwrap();
        let lift = |x: &DenseTensor, rows: usize, cols: usize| {
            let mut out = vec![CMatrix::zeros(rows, cols); 8];
            for k3 in 0..4 {
                for k4 in 0..2 {
                    for n3 in 0..4 {
                        for n4 in 0..2 {
                            let w = l3.forward[(k3, n3)] * l4.forward[(k4, n4)];
                            for r in 0..rows {
                                for col in 0..cols {
                                    out[k3 + 4 * k4][(r, col)] += w * x.get(&[r, col, n3, n4]);
                                }
                            }
                        }
                    }
                }
            }
            out
        };
        let at = lift(&a, 2, 3);
        let bt = lift(&b, 3, 2);
        let ct: Vec<CMatrix> = at.iter().zip(&bt).map(|(x, y)| x * y).collect();
        for n3 in 0..4 {
            for n4 in 0..2 {
                for r in 0..2 {
                    for col in 0..2 {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for k3 in 0..4 {
                            for k4 in 0..2 {
                                acc += l3.inverse[(n3, k3)] * l4.inverse[(n4, k4)]
                                    * ct[k3 + 4 * k4][(r, col)];
                            }
                        }
                        assert!(acc.im.abs() < 1e-12);
                        assert!((acc.re - c.get(&[r, col, n3, n4])).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn transpose_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in TransformKind::ALL {
            let sp = spec(kind, &[4]);
            let a = random(&[2, 3, 4], &mut rng);
            let b = random(&[3, 2, 4], &mut rng);
            let at = tl_transpose(&a, &sp).unwrap();
            assert_eq!(at.dims(), &[3, 2, 4]);
            assert!(rel_err(&tl_transpose(&at, &sp).unwrap(), &a) < 1e-10);
            let lhs = tl_transpose(&tl_product(&a, &b, &sp).unwrap(), &sp).unwrap();
            let rhs = tl_product(&tl_transpose(&b, &sp).unwrap(), &at, &sp).unwrap();
            assert!(rel_err(&lhs, &rhs) < 1e-10, "{kind}");
        }
    }

    #[test]
    fn symmetric_slices_are_fixed_by_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sp = spec(TransformKind::Identity, &[3]);
        let mut a = random(&[3, 3, 3], &mut rng);
        for t in 0..3 {
            for i in 0..3 {
                for j in 0..i {
                    let v = a.get(&[i, j, t]);
                    a.set(&[j, i, t], v);
                }
            }
        }
        assert_eq!(tl_transpose(&a, &sp).unwrap(), a);
    }

    #[test]
    fn inverse_cases() {
        let sp = spec(TransformKind::Dct, &[3]);
        let eye = tl_identity(3, &[3], &sp).unwrap();
        assert!(rel_err(&tl_inverse(&eye, &sp).unwrap(), &eye) < 1e-12);

        let sp = spec(TransformKind::Identity, &[2]);
        let two = DenseTensor::from_fn(vec![2, 2, 2], |i| if i[0] == i[1] { 2.0 } else { 0.0 })
            .unwrap();
        let half = tl_inverse(&two, &sp).unwrap();
        for t in 0..2 {
            assert_eq!(half.frontal_slice(t), DMatrix::identity(2, 2) * 0.5);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sp = spec(TransformKind::Dft, &[3, 2]);
        let a = random(&[4, 4, 3, 2], &mut rng);
        let inv = tl_inverse(&a, &sp).unwrap();
        let eye = tl_identity(4, &[3, 2], &sp).unwrap();
        assert!(rel_err(&tl_product(&a, &inv, &sp).unwrap(), &eye) < 1e-8);
        assert!(rel_err(&tl_product(&inv, &a, &sp).unwrap(), &eye) < 1e-8);
    }

    #[test]
    fn singular_slice_reports_index() {
        let sp = spec(TransformKind::Identity, &[2, 2]);
        let mut a = DenseTensor::from_fn(vec![2, 2, 2, 2], |i| if i[0] == i[1] { 1.0 } else { 0.0 })
            .unwrap();
        a.set(&[1, 1, 1, 0], 0.0);
        match tl_inverse(&a, &sp) {
            Err(Error::SingularSlice { index }) => assert_eq!(index, vec![1, 0]),
            other => panic!("expected singular slice, got {other:?}"),
        }
    }

    #[test]
    fn t_eig_diagonal_and_scalar() {
        let sp = spec(TransformKind::Identity, &[2]);
        let a = DenseTensor::from_fn(vec![3, 3, 2], |i| {
            if i[0] == i[1] {
                [1.0, 3.0, 2.0][i[0]] + i[2] as f64 * 10.0
            } else {
                0.0
            }
        })
        .unwrap();
        let f = t_eig(&a, &sp).unwrap();
        for t in 0..2 {
            let s = f.s.frontal_slice(t);
            let off = 10.0 * t as f64;
            assert_eq!(s[(0, 0)], 3.0 + off);
            assert_eq!(s[(1, 1)], 2.0 + off);
            assert_eq!(s[(2, 2)], 1.0 + off);
            let q = f.q.frontal_slice(t);
            assert_eq!(q[(1, 0)], 1.0);
            assert_eq!(q[(2, 1)], 1.0);
            assert_eq!(q[(0, 2)], 1.0);
        }

        let sp = spec(TransformKind::Dft, &[3]);
        let a = random(&[1, 1, 3], &mut ChaCha8Rng::seed_from_u64(7));
        let f = t_eig(&a, &sp).unwrap();
        assert!(rel_err(&f.s, &a) < 1e-12);
        assert!(rel_err(&f.q, &tl_identity(1, &[3], &sp).unwrap()) < 1e-12);
    }

    #[test]
    fn t_eig_hermitian_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for kind in TransformKind::ALL {
            let sp = spec(kind, &[4, 2]);
            let x = random(&[4, 6, 4, 2], &mut rng);
            let a = tl_product(&x, &tl_transpose(&x, &sp).unwrap(), &sp).unwrap();
            let f = t_eig(&a, &sp).unwrap();
            for eigs in &f.slice_eigs {
                assert!(eigs.iter().all(|l| l.im.abs() < 1e-10));
            }
            let qinv = tl_inverse(&f.q, &sp).unwrap();
            let rec = tl_product(&tl_product(&f.q, &f.s, &sp).unwrap(), &qinv, &sp).unwrap();
            assert!(rel_err(&rec, &a) < 1e-8, "{kind}");
        }
    }

    #[test]
    fn condition_report() {
        let sp = spec(TransformKind::Identity, &[2]);
        let mut a = DenseTensor::from_fn(vec![3, 3, 2], |i| if i[0] == i[1] { 1.0 } else { 0.0 })
            .unwrap();
        a.set(&[2, 2, 1], 1e-9);
        let r = slice_condition_numbers(&a, &sp, DEFAULT_KAPPA_THRESHOLD).unwrap();
        assert_eq!(r.threshold, 1e5);
        assert!((r.slices[0].kappa - 3.0).abs() < 1e-12);
        assert!(!r.slices[0].ill);
        assert!(r.slices[1].kappa >= 1e9);
        assert!(r.slices[1].ill);
        assert_eq!(r.slices[1].index, vec![1]);
    }

    #[test]
    fn plain_transpose_mode_differs_under_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sp = spec(TransformKind::Dct, &[3]);
        let a = random(&[2, 3, 3], &mut rng);
        // real transforms: both modes agree
        let c = tl_transpose_with(&a, &sp, TransposeMode::Conjugate).unwrap();
        let p = tl_transpose_with(&a, &sp, TransposeMode::Plain).unwrap();
        assert!(rel_err(&c, &p) < 1e-12);
    }
}
