#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tlda_core::algebra::tl_product;
use tlda_core::tensor::Tensor;
use tlda_core::{frobenius_norm, DenseTensor, TransformKind, TransformSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(dims: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor {
    Tensor::from_fn(dims.to_vec(), |_| rng.random_range(-1.0..1.0)).unwrap()
}

pub fn rel_err(a: &DenseTensor, b: &DenseTensor) -> f64 {
    assert_eq!(a.dims(), b.dims());
    let diff = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    diff / frobenius_norm(b).max(f64::MIN_POSITIVE)
}

pub fn dims_with(rows: usize, cols: usize, trailing: &[usize]) -> Vec<usize> {
    let mut d = vec![rows, cols];
    d.extend_from_slice(trailing);
    d
}

/// Trailing dims of order 0..=3 extra modes, lengths 1..=4 (Haar: even).
pub fn random_trailing(rng: &mut ChaCha8Rng, kind: TransformKind) -> Vec<usize> {
    let extra = rng.random_range(1..=3);
    (0..extra)
        .map(|_| {
            let m: usize = rng.random_range(1..=4);
            if kind == TransformKind::Haar {
                2 * m.div_ceil(2)
            } else {
                m
            }
        })
        .collect()
}

pub fn spec_for(kind: TransformKind, trailing: &[usize]) -> TransformSpec {
    TransformSpec::new(kind, &dims_with(1, 1, trailing))
}

/// `c I_L + R` with `c` large enough that every transform-domain slice is
/// well conditioned.
pub fn well_conditioned(m: usize, trailing: &[usize], spec: &TransformSpec, rng: &mut ChaCha8Rng) -> DenseTensor {
    let r = random_tensor(&dims_with(m, m, trailing), rng);
    let eye = tlda_core::tl_identity(m, trailing, spec).unwrap();
    let c = 2.0 * frobenius_norm(&r) + 1.0;
    let data = r.data().iter().zip(eye.data()).map(|(x, i)| x + c * i).collect();
    DenseTensor::new(r.dims().to_vec(), data).unwrap()
}

/// `R + trans_L(R)`: every transform-domain slice is Hermitian.
pub fn hermitian_slices(m: usize, trailing: &[usize], spec: &TransformSpec, rng: &mut ChaCha8Rng) -> DenseTensor {
    let r = random_tensor(&dims_with(m, m, trailing), rng);
    let t = tlda_core::tl_transpose(&r, spec).unwrap();
    let data = r.data().iter().zip(t.data()).map(|(a, b)| a + b).collect();
    DenseTensor::new(r.dims().to_vec(), data).unwrap()
}

/// `P *_L D *_L inv_L(P)` where every transform-domain slice of `D` is
/// `diag(1, ..., m)`: diagonalizable with a real, well-separated spectrum.
pub fn diagonalizable(m: usize, trailing: &[usize], spec: &TransformSpec, rng: &mut ChaCha8Rng) -> DenseTensor {
    let p = well_conditioned(m, trailing, spec, rng);
    let eye = tlda_core::tl_identity(m, trailing, spec).unwrap();
    let mut d = eye.clone();
    let n = d.len();
    for k in 0..n {
        let row = k % m;
        d.data_mut()[k] *= (row + 1) as f64;
    }
    let p_inv = tlda_core::tl_inverse(&p, spec).unwrap();
    tl_product(&tl_product(&p, &d, spec).unwrap(), &p_inv, spec).unwrap()
}
