//! Robust variant: ill-conditioned within-class scatter slices get their
//! trailing eigenvalues replaced by the mean of those eigenvalues before
//! inversion.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{back_to_real, condition_report_transformed, SliceCondition, SliceConditionReport};
use crate::discriminant::{
    fit_tensor, transformed_scatters, Conditioning, DiscriminantModel, LabeledTensorDataset,
};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, CMatrix};
use crate::tensor::{Complex64, ComplexTensor, DenseTensor};
use crate::transforms::{forward_complex, pad_for_transform, TransformSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustParams {
    /// Slices with a Frobenius condition number at or above this are rebuilt.
    pub kappa_threshold: f64,
    /// Fraction of the spectrum's energy kept verbatim.
    pub energy: f64,
    /// Lower bound on the replacement eigenvalue, relative to the largest.
    pub lambda_floor_ratio: f64,
}

impl Default for RobustParams {
    fn default() -> Self {
        Self {
            kappa_threshold: 1e5,
            energy: 0.98,
            lambda_floor_ratio: 1e-12,
        }
    }
}

impl RobustParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.energy > 0.0 && self.energy <= 1.0) {
            return Err(Error::Parameter(format!(
                "energy must lie in (0, 1], got {}",
                self.energy
            )));
        }
        // Every slice has Frobenius condition >= its size >= 1, so a
        // threshold of 1 flags them all.
        if !(self.kappa_threshold >= 1.0) {
            return Err(Error::Parameter(format!(
                "kappa threshold must be at least 1, got {}",
                self.kappa_threshold
            )));
        }
        if !(self.lambda_floor_ratio >= 0.0 && self.lambda_floor_ratio < 1.0) {
            return Err(Error::Parameter(format!(
                "lambda floor ratio must lie in [0, 1), got {}",
                self.lambda_floor_ratio
            )));
        }
        Ok(())
    }

    /// Floor ratio used when rebuilding an `m x m` slice. A replacement
    /// eigenvalue of at least `2m / threshold` times the largest bounds the
    /// rebuilt Frobenius condition by `threshold / 2`.
    fn floor_for(&self, m: usize) -> f64 {
        let conditioned = 2.0 * m as f64 / self.kappa_threshold;
        if conditioned < 1.0 {
            self.lambda_floor_ratio.max(conditioned)
        } else {
            self.lambda_floor_ratio
        }
    }
}

/// Re-estimates a descending spectrum. Returns the number `k` of leading
/// eigenvalues kept and the corrected list, where entries past `k` are
/// replaced by their mean (floored at `lambda_floor_ratio * lambda_1`).
///
/// Tiny negative values are clamped to zero first. An energy of 1 keeps the
/// whole spectrum.
pub fn reestimate_eigs(lambdas: &[f64], params: &RobustParams) -> Result<(usize, Vec<f64>)> {
    let clamped: Vec<f64> = lambdas.iter().map(|&l| l.max(0.0)).collect();
    let n = clamped.len();
    let total: f64 = clamped.iter().sum();
    if n == 0 || total <= 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    if params.energy >= 1.0 {
        return Ok((n, clamped));
    }
    let mut cumulative = 0.0;
    let mut k = n;
    for (i, l) in clamped.iter().enumerate() {
        cumulative += l;
        if cumulative / total >= params.energy {
            k = i + 1;
            break;
        }
    }
    if k == n {
        return Ok((n, clamped));
    }
    let tail = &clamped[k..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let replacement = mean.max(params.lambda_floor_ratio * clamped[0]);
    let mut out = clamped;
    out[k..].iter_mut().for_each(|l| *l = replacement);
    Ok((k, out))
}

/// Rebuilds one Hermitian PSD slice; `None` when the spectrum is kept whole.
fn reestimate_slice(s: &CMatrix, params: &RobustParams) -> Result<Option<CMatrix>> {
    let m = s.nrows();
    let eig = linalg::eigen(s).ok_or_else(|| dim_err("eigen solver did not converge"))?;
    let mut order: Vec<usize> = (0..m).collect();
    let re: Vec<f64> = eig.values.iter().map(|z| z.re.max(0.0)).collect();
    order.sort_by(|&a, &b| re[b].total_cmp(&re[a]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| re[i]).collect();

    let local = RobustParams {
        lambda_floor_ratio: params.floor_for(m),
        ..*params
    };
    let (k, values) = match reestimate_eigs(&sorted, &local) {
        Ok(r) => r,
        Err(Error::ZeroSpectrum) => {
            let eye = CMatrix::identity(m, m) * Complex64::new(params.lambda_floor_ratio, 0.0);
            return Ok(Some(eye));
        }
        Err(e) => return Err(e),
    };
    if k == m {
        return Ok(None);
    }
    let mut q = CMatrix::zeros(m, m);
    for (dst, &src) in order.iter().enumerate() {
        q.set_column(dst, &eig.vectors.column(src));
    }
    let q_inv = linalg::invert(&q).ok_or_else(|| dim_err("eigenvector matrix is singular"))?;
    let diag = DVector::from_iterator(m, values.iter().map(|&l| Complex64::new(l, 0.0)));
    Ok(Some(q * CMatrix::from_diagonal(&diag) * q_inv))
}

/// Rebuilds every slice flagged in `before`; the rest pass through untouched.
/// Returns the re-estimated tensor and its condition report.
pub(crate) fn reestimate_transformed(
    wt: &ComplexTensor,
    before: &SliceConditionReport,
    params: &RobustParams,
) -> Result<(ComplexTensor, SliceConditionReport)> {
    params.validate()?;
    let results: Vec<Result<(Option<CMatrix>, f64)>> = (0..wt.slice_count())
        .into_par_iter()
        .map(|t| {
            let info = &before.slices[t];
            if !info.ill {
                return Ok((None, info.kappa));
            }
            let rebuilt = reestimate_slice(&wt.frontal_slice(t), params)?;
            let kappa = match &rebuilt {
                Some(s) => linalg::slice_condition(s),
                None => info.kappa,
            };
            Ok((rebuilt, kappa))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut out = wt.clone();
    let block = wt.dims()[0] * wt.dims()[1];
    let mut slices = Vec::with_capacity(results.len());
    for (t, (rebuilt, kappa)) in results.into_iter().enumerate() {
        if let Some(s) = rebuilt {
            out.data_mut()[t * block..(t + 1) * block].copy_from_slice(s.as_slice());
        }
        slices.push(SliceCondition {
            index: before.slices[t].index.clone(),
            kappa,
            ill: kappa >= params.kappa_threshold,
        });
    }
    let report = SliceConditionReport {
        threshold: params.kappa_threshold,
        slices,
    };
    Ok((out, report))
}

/// `W` with its ill-conditioned transform-domain slices re-estimated.
pub fn robust_within_scatter(
    w: &DenseTensor,
    spec: &TransformSpec,
    params: &RobustParams,
) -> Result<DenseTensor> {
    params.validate()?;
    let padded = pad_for_transform(w, spec)?;
    let wt = forward_complex(&padded.to_complex(), spec)?;
    let before = condition_report_transformed(&wt, params.kappa_threshold)?;
    let (rebuilt, _) = reestimate_transformed(&wt, &before, params)?;
    back_to_real(&rebuilt, spec)
}

/// Pre- and post-re-estimation condition numbers of the within-class scatter
/// slices of `ds`.
pub fn within_conditioning(
    ds: &LabeledTensorDataset,
    spec: &TransformSpec,
    params: &RobustParams,
) -> Result<Conditioning> {
    params.validate()?;
    let wt = transformed_scatters(ds, spec)?.within;
    let before = condition_report_transformed(&wt, params.kappa_threshold)?;
    let (_, after) = reestimate_transformed(&wt, &before, params)?;
    Ok(Conditioning {
        before,
        after: Some(after),
    })
}

pub fn rhomlda_fit(
    ds: &LabeledTensorDataset,
    p: Option<usize>,
    spec: &TransformSpec,
    params: &RobustParams,
) -> Result<DiscriminantModel> {
    fit_tensor(ds, p, spec, Some(params))
}
