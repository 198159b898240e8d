//! Dense complex matrix kernels applied to individual frontal slices.

use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::tensor::Complex64;

pub type CMatrix = DMatrix<Complex64>;

/// Slices whose Frobenius condition reaches this are singular to working precision.
pub const SINGULAR_CONDITION: f64 = 1.0 / f64::EPSILON;

/// Eigenvector matrices with a normalized condition above this are treated as
/// defective.
pub const DIAGONALIZABLE_CONDITION: f64 = 1e10;

const HERMITIAN_TOL: f64 = 1e-12;

/// Components below this magnitude (on a unit vector) do not count as the
/// "first nonzero" entry when fixing eigenvector phase.
const PHASE_TOL: f64 = 1e-10;

/// LU-based inverse; `None` for an exactly singular pivot or a non-finite result.
pub fn invert(m: &CMatrix) -> Option<CMatrix> {
    let inv = m.clone().lu().try_inverse()?;
    inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(inv)
}

pub fn is_hermitian(m: &CMatrix) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.norm();
    (m - m.adjoint()).norm() <= HERMITIAN_TOL * scale
}

/// `||M||_F ||M^{-1}||_F`, or infinity when `M` cannot be inverted.
pub fn frobenius_condition(m: &CMatrix) -> f64 {
    match invert(m) {
        Some(inv) => {
            let k = m.norm() * inv.norm();
            if k.is_finite() {
                k
            } else {
                f64::INFINITY
            }
        }
        None => f64::INFINITY,
    }
}

/// Frobenius condition of a normal matrix from its eigenvalues:
/// `sqrt(sum |l|^2) * sqrt(sum |l|^-2)`.
pub fn spectral_frobenius_condition(eigs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sq, mut inv_sq) = (0.0, 0.0);
    for l in eigs {
        if l == 0.0 {
            return f64::INFINITY;
        }
        sq += l * l;
        inv_sq += 1.0 / (l * l);
    }
    let k = sq.sqrt() * inv_sq.sqrt();
    if k.is_finite() {
        k
    } else {
        f64::INFINITY
    }
}

/// Frobenius condition number of a square slice. Hermitian slices use their
/// eigenvalues; anything else goes through an explicit inverse.
pub fn slice_condition(m: &CMatrix) -> f64 {
    if is_hermitian(m) {
        let eig = SymmetricEigen::new(hermitian_part(m));
        spectral_frobenius_condition(eig.eigenvalues.iter().copied())
    } else {
        frobenius_condition(m)
    }
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).map(|z| z * 0.5)
}

/// Eigendecomposition `M = V diag(values) V^{-1}` of one slice.
///
/// Eigenpairs are sorted by descending modulus, ties by descending real part
/// and then by the solver's original position. Each eigenvector has unit
/// 2-norm with its first nonzero component on the positive real axis.
#[derive(Debug, Clone)]
pub struct SliceEig {
    pub values: Vec<Complex64>,
    pub vectors: CMatrix,
    /// `||V||_F ||V^{-1}||_F / n`: 1 for unitary `V`, infinite when singular.
    pub vector_condition: f64,
}

impl SliceEig {
    /// Reassembles `V diag(values) V^{-1}`.
    pub fn reconstruct(&self) -> Option<CMatrix> {
        self.rebuild(&self.values)
    }

    /// `V diag(values) V^{-1}` with substituted eigenvalues.
    pub fn rebuild(&self, values: &[Complex64]) -> Option<CMatrix> {
        let inv = invert(&self.vectors)?;
        let mut scaled = self.vectors.clone();
        for (mut col, &l) in scaled.column_iter_mut().zip(values) {
            col *= l;
        }
        Some(scaled * inv)
    }
}

/// Eigendecomposition of a square slice; `None` if the Schur iteration fails
/// to converge.
pub fn eigen(m: &CMatrix) -> Option<SliceEig> {
    assert!(m.is_square(), "eigen needs a square slice");
    let n = m.nrows();
    if n == 0 {
        return Some(SliceEig {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
            vector_condition: 1.0,
        });
    }
    let (values, vectors) = if is_hermitian(m) {
        let eig = SymmetricEigen::new(hermitian_part(m));
        let values: Vec<Complex64> = eig
            .eigenvalues
            .iter()
            .map(|&l| Complex64::new(l, 0.0))
            .collect();
        (values, eig.eigenvectors)
    } else {
        general_eigen(m)?
    };
    Some(finish(values, vectors))
}

/// Complex Schur form `M = Z T Z^H`, then eigenvectors of the triangular
/// factor by back-substitution.
fn general_eigen(m: &CMatrix) -> Option<(Vec<Complex64>, CMatrix)> {
    let n = m.nrows();
    let (z, t) = m.clone().try_schur(f64::EPSILON, 10_000)?.unpack();
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    // Clustered eigenvalues make the back-substitution denominators vanish;
    // clamp them to a small multiple of the matrix scale.
    let smin = (f64::EPSILON * t.norm()).max(f64::MIN_POSITIVE);
    let mut x = CMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        x[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = t[(i, k)];
            for j in i + 1..k {
                acc += t[(i, j)] * x[(j, k)];
            }
            let mut denom = t[(i, i)] - lambda;
            if denom.norm() < smin {
                denom = Complex64::new(smin, 0.0);
            }
            x[(i, k)] = -acc / denom;
        }
    }
    Some((values, z * x))
}

fn finish(values: Vec<Complex64>, vectors: CMatrix) -> SliceEig {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (la, lb) = (values[a], values[b]);
        lb.norm()
            .partial_cmp(&la.norm())
            .unwrap_or(Ordering::Equal)
            .then(lb.re.partial_cmp(&la.re).unwrap_or(Ordering::Equal))
            .then(a.cmp(&b))
    });
    let sorted_values: Vec<Complex64> = order.iter().map(|&i| values[i]).collect();
    let mut sorted = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = vectors.column(src).into_owned();
        let norm = v.norm();
        if norm > 0.0 {
            v /= Complex64::new(norm, 0.0);
        }
        if let Some(lead) = v.iter().find(|z| z.norm() > PHASE_TOL) {
            let phase = lead.conj() / lead.norm();
            v *= phase;
        }
        sorted.set_column(dst, &v);
    }
    let vector_condition = frobenius_condition(&sorted) / n as f64;
    SliceEig {
        values: sorted_values,
        vectors: sorted,
        vector_condition,
    }
}
