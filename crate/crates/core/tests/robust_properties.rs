mod common;

use common::*;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

use tlda_core::algebra::to_cmatrix;
use tlda_core::linalg;
use tlda_core::{
    reestimate_eigs, robust_within_scatter, synthesize, within_conditioning, DenseTensor,
    RobustParams, SynthSpec, TransformKind, TransformSpec,
};

fn descending(values: Vec<f64>) -> Vec<f64> {
    let mut v = values;
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Symmetric PSD slices `Q diag(l) Q^T` with a random orthogonal `Q` and a
/// spectrum spread over many decades.
fn psd_slices(m: usize, count: usize, rng: &mut rand_chacha::ChaCha8Rng) -> (DenseTensor, Vec<DMatrix<f64>>) {
    let mut bases = Vec::new();
    let mats: Vec<DMatrix<f64>> = (0..count)
        .map(|_| {
            let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
            let q = a.qr().q();
            let spectrum: Vec<f64> = (0..m)
                .map(|_| 10f64.powf(rng.random_range(-12.0..1.0)))
                .collect();
            bases.push(q.clone());
            &q * DMatrix::from_diagonal(&DVector::from_vec(spectrum)) * q.transpose()
        })
        .collect();
    let w = DenseTensor::from_frontal_slices(m, m, &[count], &mats).unwrap();
    (w, bases)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reestimation_is_idempotent(
        values in prop::collection::vec(0.0f64..10.0, 1..8),
        energy in 0.5f64..1.0,
    ) {
        let params = RobustParams { energy, ..RobustParams::default() };
        let lambdas = descending(values);
        prop_assume!(lambdas[0] > 0.0);
        let (_, once) = reestimate_eigs(&lambdas, &params).unwrap();
        let (_, twice) = reestimate_eigs(&once, &params).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-14 * once[0]);
        }
    }

    #[test]
    fn reestimation_keeps_leading_values(
        values in prop::collection::vec(0.0f64..10.0, 1..8),
        energy in 0.5f64..1.0,
    ) {
        let params = RobustParams { energy, ..RobustParams::default() };
        let lambdas = descending(values);
        prop_assume!(lambdas[0] > 0.0);
        let (k, out) = reestimate_eigs(&lambdas, &params).unwrap();
        prop_assert!(k >= 1 && k <= lambdas.len());
        prop_assert_eq!(&out[..k], &lambdas[..k]);
        let total: f64 = lambdas.iter().sum();
        let kept: f64 = lambdas[..k].iter().sum();
        prop_assert!(kept / total >= energy);
        if k > 1 {
            let before: f64 = lambdas[..k - 1].iter().sum();
            prop_assert!(before / total < energy);
        }
        if k < out.len() {
            let tail = &lambdas[k..];
            let mean = tail.iter().sum::<f64>() / tail.len() as f64;
            let expect = mean.max(params.lambda_floor_ratio * lambdas[0]);
            prop_assert!(out[k..].iter().all(|&l| l == expect));
        }
    }

    #[test]
    fn pass_through_is_exact_and_rebuilt_slices_improve(seed in any::<u64>(), m in 2usize..=5) {
        let mut r = rng(seed);
        let (w, _) = psd_slices(m, 4, &mut r);
        let spec = TransformSpec::new(TransformKind::Identity, w.dims());
        let params = RobustParams::default();
        let out = robust_within_scatter(&w, &spec, &params).unwrap();
        for t in 0..4 {
            let before = w.frontal_slice(t);
            let after = out.frontal_slice(t);
            let k_before = linalg::slice_condition(&to_cmatrix(&before));
            let k_after = linalg::slice_condition(&to_cmatrix(&after));
            if k_before < params.kappa_threshold {
                prop_assert_eq!(&before, &after);
            } else {
                prop_assert!(k_after <= k_before);
                prop_assert!(k_after < params.kappa_threshold);
                let eig = SymmetricEigen::new(after.clone());
                let max = eig.eigenvalues.max();
                prop_assert!(eig.eigenvalues.min() >= -1e-10 * max);
            }
        }
    }

    #[test]
    fn rebuilt_slices_keep_leading_eigenpairs(seed in any::<u64>(), m in 2usize..=5) {
        let mut r = rng(seed);
        let (w, bases) = psd_slices(m, 3, &mut r);
        let spec = TransformSpec::new(TransformKind::Identity, w.dims());
        let params = RobustParams::default();
        let out = robust_within_scatter(&w, &spec, &params).unwrap();
        for t in 0..3 {
            let before = SymmetricEigen::new(w.frontal_slice(t));
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| before.eigenvalues[b].total_cmp(&before.eigenvalues[a]));
            let lambdas: Vec<f64> = order.iter().map(|&i| before.eigenvalues[i]).collect();
            let (k, _) = reestimate_eigs(&lambdas, &params).unwrap();
            let after = out.frontal_slice(t);
            // every original eigenvector stays an eigenvector
            let q = &bases[t];
            for col in q.column_iter() {
                let v = &after * col;
                let rayleigh = col.dot(&v);
                prop_assert!((v - col * rayleigh).norm() <= 1e-10 * after.norm());
            }
            // leading k eigenvalues unchanged
            let rebuilt = SymmetricEigen::new(after);
            let mut got: Vec<f64> = rebuilt.eigenvalues.iter().copied().collect();
            got.sort_by(|a, b| b.total_cmp(a));
            for i in 0..k {
                prop_assert!((got[i] - lambdas[i]).abs() <= 1e-10 * lambdas[0]);
            }
        }
    }
}

#[test]
fn floor_example() {
    let (k, out) = reestimate_eigs(&[1.0, 0.0, 0.0, 0.0], &RobustParams::default()).unwrap();
    assert_eq!((k, out), (1, vec![1.0, 1e-12, 1e-12, 1e-12]));
}

#[test]
fn pass_through_under_every_transform() {
    let ds = synthesize(&SynthSpec {
        classes: 3,
        samples_per_class: 8,
        sample_dims: vec![3, 3, 2],
        class_separation: 3.0,
        noise_sigma: 1.0,
        seed: 1,
        force_singular: false,
    })
    .unwrap();
    for kind in TransformKind::ALL {
        let spec = ds.transform_spec(kind);
        let cond = within_conditioning(&ds, &spec, &RobustParams::default()).unwrap();
        let after = cond.after.unwrap();
        assert_eq!(cond.before.ill_count(), 0);
        assert_eq!(cond.before.kappas(), after.kappas());
        let w = tlda_core::within_class_scatter(&ds, &spec).unwrap();
        let out = robust_within_scatter(&w, &spec, &RobustParams::default()).unwrap();
        assert!(rel_err(&out, &w) <= 1e-10, "{kind}");
    }
}

#[test]
fn singular_slices_are_repaired_below_threshold() {
    let ds = synthesize(&SynthSpec {
        classes: 2,
        samples_per_class: 30,
        sample_dims: vec![6, 3, 3],
        class_separation: 10.0,
        noise_sigma: 1.0,
        seed: 3,
        force_singular: true,
    })
    .unwrap();
    for kind in TransformKind::ALL {
        let spec = ds.transform_spec(kind);
        let cond = within_conditioning(&ds, &spec, &RobustParams::default()).unwrap();
        let after = cond.after.unwrap();
        for (pre, post) in cond.before.slices.iter().zip(&after.slices) {
            assert!(pre.ill, "{kind}: slice {:?} should be flagged", pre.index);
            assert!(post.kappa < 1e5 && post.kappa <= pre.kappa, "{kind}: {:?}", post);
        }
    }
}

#[test]
fn thresholds_drive_behavior() {
    let ds = synthesize(&SynthSpec {
        classes: 2,
        samples_per_class: 12,
        sample_dims: vec![4, 2, 2],
        class_separation: 3.0,
        noise_sigma: 1.0,
        seed: 6,
        force_singular: false,
    })
    .unwrap();
    let spec = ds.transform_spec(TransformKind::Dct);
    // a threshold of 1 flags every slice
    let all = RobustParams { kappa_threshold: 1.0, ..RobustParams::default() };
    let cond = within_conditioning(&ds, &spec, &all).unwrap();
    assert_eq!(cond.before.ill_count(), cond.before.slices.len());
    // full energy keeps every spectrum as it was
    let keep = RobustParams { kappa_threshold: 1.0, energy: 1.0, ..RobustParams::default() };
    let w = tlda_core::within_class_scatter(&ds, &spec).unwrap();
    let out = robust_within_scatter(&w, &spec, &keep).unwrap();
    assert!(rel_err(&out, &w) <= 1e-12);
}
