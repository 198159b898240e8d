//! High-order multilinear discriminant analysis.
//!
//! Samples are lateral slices of a `m1 x l x m3 x ... x mn` data tensor. The
//! within- and between-class scatter tensors are `m1 x m1 x m3 x ... x mn`;
//! the projection tensor collects the `p` leading eigentensors of
//! `inv_L(W) *_L B`, and data are projected with `trans_L(U_p) *_L A`.
//!
//! Scatter sums are accumulated directly in the transform domain (transform
//! each sample once, sum slice outer products there), which is the same
//! quantity as summing spatial `*_L` products by linearity of the transform.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    back_to_real, condition_report_transformed, invert_slice, map_slices, SliceConditionReport,
    DEFAULT_KAPPA_THRESHOLD,
};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, CMatrix};
use crate::robust::{self, RobustParams};
use crate::tensor::{select_lateral, slice_multi_index, Complex64, ComplexTensor, DenseTensor};
use crate::transforms::{forward_complex, pad_for_transform, TransformKind, TransformSpec};

/// Samples stacked as lateral slices, with one class label per sample.
#[derive(Debug, Clone)]
pub struct LabeledTensorDataset {
    data: DenseTensor,
    labels: Vec<String>,
    class_index: BTreeMap<String, Vec<usize>>,
}

impl LabeledTensorDataset {
    pub fn new(data: DenseTensor, labels: Vec<String>) -> Result<Self> {
        if labels.len() != data.dims()[1] {
            return Err(dim_err(format!(
                "{} labels for {} lateral slices",
                labels.len(),
                data.dims()[1]
            )));
        }
        let mut class_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (j, l) in labels.iter().enumerate() {
            class_index.entry(l.clone()).or_default().push(j);
        }
        Ok(Self {
            data,
            labels,
            class_index,
        })
    }

    pub fn data(&self) -> &DenseTensor {
        &self.data
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Sample indices per class, classes in lexicographic order.
    pub fn class_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.class_index
    }

    pub fn class_ids(&self) -> Vec<String> {
        self.class_index.keys().cloned().collect()
    }

    pub fn num_classes(&self) -> usize {
        self.class_index.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Position of each sample's class in [`Self::class_ids`].
    pub fn class_positions(&self) -> Vec<usize> {
        let pos: BTreeMap<&str, usize> = self
            .class_index
            .keys()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i))
            .collect();
        self.labels.iter().map(|l| pos[l.as_str()]).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let data = select_lateral(&self.data, indices)?;
        let labels = indices.iter().map(|&j| self.labels[j].clone()).collect();
        Self::new(data, labels)
    }

    pub fn transform_spec(&self, kind: TransformKind) -> TransformSpec {
        TransformSpec::new(kind, self.data.dims())
    }
}

#[derive(Debug, Clone)]
pub struct ClassMeans {
    pub class_ids: Vec<String>,
    pub counts: Vec<usize>,
    /// Per-class mean lateral slices, `m1 x 1 x m3 x ... x mn`.
    pub means: Vec<DenseTensor>,
    /// Mean over all samples.
    pub global: DenseTensor,
}

fn average_lateral(a: &DenseTensor, indices: &[usize]) -> Result<DenseTensor> {
    let m1 = a.dims()[0];
    let l = a.dims()[1];
    let mut dims = a.dims().to_vec();
    dims[1] = 1;
    let mut out = DenseTensor::zeros(dims)?;
    let n = indices.len() as f64;
    for t in 0..a.slice_count() {
        for i in 0..m1 {
            let sum: f64 = indices.iter().map(|&j| a.data()[i + m1 * (j + l * t)]).sum();
            out.data_mut()[i + m1 * t] = sum / n;
        }
    }
    Ok(out)
}

pub fn class_means(ds: &LabeledTensorDataset) -> Result<ClassMeans> {
    if ds.is_empty() {
        return Err(Error::EmptyClass("<all>".into()));
    }
    let mut means = Vec::with_capacity(ds.num_classes());
    let mut counts = Vec::with_capacity(ds.num_classes());
    for (id, idx) in &ds.class_index {
        if idx.is_empty() {
            return Err(Error::EmptyClass(id.clone()));
        }
        means.push(average_lateral(&ds.data, idx)?);
        counts.push(idx.len());
    }
    let all: Vec<usize> = (0..ds.len()).collect();
    Ok(ClassMeans {
        class_ids: ds.class_ids(),
        counts,
        means,
        global: average_lateral(&ds.data, &all)?,
    })
}

/// `X X^H` with mirrored entries exact conjugates of each other.
fn hermitian_gram(x: &CMatrix) -> CMatrix {
    let (m, n) = x.shape();
    let mut g = CMatrix::zeros(m, m);
    for i in 0..m {
        for k in 0..=i {
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..n {
                s += x[(i, j)] * x[(k, j)].conj();
            }
            if i == k {
                s.im = 0.0;
            }
            g[(i, k)] = s;
            g[(k, i)] = s.conj();
        }
    }
    g
}

pub(crate) struct TransformedScatters {
    pub within: ComplexTensor,
    pub between: ComplexTensor,
}

pub(crate) fn transformed_scatters(
    ds: &LabeledTensorDataset,
    spec: &TransformSpec,
) -> Result<TransformedScatters> {
    if ds.is_empty() {
        return Err(Error::EmptyClass("<all>".into()));
    }
    let padded = pad_for_transform(&ds.data, spec)?;
    let at = forward_complex(&padded.to_complex(), spec)?;
    let class_of = ds.class_positions();
    let counts: Vec<usize> = ds.class_index.values().map(Vec::len).collect();
    let (m1, l, c) = (at.dims()[0], at.dims()[1], counts.len());

    let per_slice: Vec<(CMatrix, CMatrix)> = (0..at.slice_count())
        .into_par_iter()
        .map(|t| {
            let x = at.frontal_slice(t);
            let mut sums = CMatrix::zeros(m1, c);
            for j in 0..l {
                let mut col = sums.column_mut(class_of[j]);
                col += x.column(j);
            }
            let mut total = DVector::<Complex64>::zeros(m1);
            for j in 0..l {
                total += x.column(j);
            }
            total /= Complex64::new(l as f64, 0.0);
            let mut means = sums;
            for (i, &n) in counts.iter().enumerate() {
                let mut col = means.column_mut(i);
                col /= Complex64::new(n as f64, 0.0);
            }
            let mut centered = x;
            for j in 0..l {
                let mut col = centered.column_mut(j);
                col -= means.column(class_of[j]);
            }
            let within = hermitian_gram(&centered);
            let mut spread = CMatrix::zeros(m1, c);
            for (i, &n) in counts.iter().enumerate() {
                let d = means.column(i) - &total;
                spread.set_column(i, &(d * Complex64::new((n as f64).sqrt(), 0.0)));
            }
            (within, hermitian_gram(&spread))
        })
        .collect();

    let trailing = at.trailing_dims();
    let (w, b): (Vec<CMatrix>, Vec<CMatrix>) = per_slice.into_iter().unzip();
    Ok(TransformedScatters {
        within: ComplexTensor::from_frontal_slices(m1, m1, trailing, &w)?,
        between: ComplexTensor::from_frontal_slices(m1, m1, trailing, &b)?,
    })
}

/// Within-class scatter `W = sum_i sum_{j in c_i} (A_j - M_i) *_L trans_L(A_j - M_i)`.
pub fn within_class_scatter(ds: &LabeledTensorDataset, spec: &TransformSpec) -> Result<DenseTensor> {
    back_to_real(&transformed_scatters(ds, spec)?.within, spec)
}

/// Between-class scatter `B = sum_i n_i (M_i - M) *_L trans_L(M_i - M)`.
pub fn between_class_scatter(ds: &LabeledTensorDataset, spec: &TransformSpec) -> Result<DenseTensor> {
    back_to_real(&transformed_scatters(ds, spec)?.between, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Homlda,
    Rhomlda,
    MatrixLda,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Homlda => "homlda",
            Method::Rhomlda => "rhomlda",
            Method::MatrixLda => "matrix-lda",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "homlda" => Ok(Method::Homlda),
            "rhomlda" => Ok(Method::Rhomlda),
            "matrix-lda" | "lda" => Ok(Method::MatrixLda),
            other => Err(Error::Parameter(format!("unknown method {other:?}"))),
        }
    }
}

/// Condition numbers of the within-class scatter slices before and, for the
/// robust method, after re-estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub before: SliceConditionReport,
    pub after: Option<SliceConditionReport>,
}

#[derive(Debug, Clone)]
pub struct DiscriminantModel {
    /// `U_p`, shaped `m1 x p x m3 x ... x mn` (Haar-padded trailing modes).
    pub projection: DenseTensor,
    pub p: usize,
    pub spec: TransformSpec,
    pub method: Method,
    pub class_ids: Vec<String>,
    pub robust: Option<RobustParams>,
    pub conditioning: Conditioning,
    /// `trans_L(U_p) *_L A` for the training tensor.
    pub train_projections: DenseTensor,
    pub train_labels: Vec<String>,
}

/// Resolves the retained dimension, defaulting to `c - 1`.
pub fn resolve_p(classes: usize, p: Option<usize>) -> Result<usize> {
    if classes < 2 {
        return Err(Error::Parameter(format!(
            "discriminant analysis needs at least two classes, got {classes}"
        )));
    }
    let p = p.unwrap_or(classes - 1);
    if p == 0 || p > classes - 1 {
        return Err(Error::Parameter(format!(
            "p = {p} outside 1..={} (at most c - 1 discriminant directions)",
            classes - 1
        )));
    }
    Ok(p)
}

pub fn homlda_fit(
    ds: &LabeledTensorDataset,
    p: Option<usize>,
    spec: &TransformSpec,
) -> Result<DiscriminantModel> {
    fit_tensor(ds, p, spec, None)
}

pub(crate) fn fit_tensor(
    ds: &LabeledTensorDataset,
    p: Option<usize>,
    spec: &TransformSpec,
    robust: Option<&RobustParams>,
) -> Result<DiscriminantModel> {
    let p = resolve_p(ds.num_classes(), p)?;
    if spec.original_dims != ds.data.dims() && spec.original_dims[2..] != ds.data.dims()[2..] {
        return Err(dim_err(format!(
            "transform spec built for {:?}, data has {:?}",
            spec.original_dims,
            ds.data.dims()
        )));
    }
    if let Some(params) = robust {
        params.validate()?;
    }
    let scatters = transformed_scatters(ds, spec)?;
    let threshold = robust.map_or(DEFAULT_KAPPA_THRESHOLD, |r| r.kappa_threshold);
    let before = condition_report_transformed(&scatters.within, threshold)?;
    let (within, after) = match robust {
        None => (scatters.within, None),
        Some(params) => {
            let (w, post) = robust::reestimate_transformed(&scatters.within, &before, params)?;
            (w, Some(post))
        }
    };

    let trailing = within.trailing_dims().to_vec();
    let between = &scatters.between;
    let leading = map_slices(&within, |t, w| {
        let winv = invert_slice(&w, t, &trailing)?;
        let m = winv * between.frontal_slice(t);
        // Only the p leading eigenvectors are kept; the null cluster of
        // inv(W) B need not be well separated.
        let eig = linalg::eigen(&m).ok_or_else(|| Error::NonDiagonalizable {
            index: slice_multi_index(t, &trailing),
            condition: f64::NAN,
        })?;
        Ok(eig.vectors.columns(0, p).into_owned())
    })?;
    let projection = back_to_real(&leading, spec)?;

    let mut train_dims = vec![p, 0];
    train_dims.extend_from_slice(&trailing);
    let mut model = DiscriminantModel {
        projection,
        p,
        spec: spec.clone(),
        method: if robust.is_some() {
            Method::Rhomlda
        } else {
            Method::Homlda
        },
        class_ids: ds.class_ids(),
        robust: robust.cloned(),
        conditioning: Conditioning { before, after },
        train_projections: DenseTensor::zeros(train_dims)?,
        train_labels: ds.labels.clone(),
    };
    model.train_projections = project(&model, &ds.data)?;
    Ok(model)
}

/// `T = trans_L(U_p) *_L X`: shape `p x q x m3 x ... x mn`.
pub fn project(model: &DiscriminantModel, x: &DenseTensor) -> Result<DenseTensor> {
    let u = &model.projection;
    if x.order() != u.order() || x.dims()[0] != u.dims()[0] {
        return Err(dim_err(format!(
            "samples {:?} do not match projection {:?}",
            x.dims(),
            u.dims()
        )));
    }
    let padded = pad_for_transform(x, &model.spec)?;
    if padded.trailing_dims() != u.trailing_dims() {
        return Err(dim_err(format!(
            "samples {:?} do not match projection {:?}",
            x.dims(),
            u.dims()
        )));
    }
    let ut = forward_complex(&u.to_complex(), &model.spec)?;
    let xt = forward_complex(&padded.to_complex(), &model.spec)?;
    let t = map_slices(&xt, |t, s| Ok(ut.frontal_slice(t).adjoint() * s))?;
    back_to_real(&t, &model.spec)
}

/// Stacks every lateral slice, vectorized mode-1 fastest, as a column.
pub fn vectorize_samples(data: &DenseTensor) -> DMatrix<f64> {
    let (m1, l) = (data.dims()[0], data.dims()[1]);
    let slices = data.slice_count();
    DMatrix::from_fn(m1 * slices, l, |r, j| {
        let (i, t) = (r % m1, r / m1);
        data.data()[i + m1 * (j + l * t)]
    })
}

/// Classic LDA solution.
#[derive(Debug, Clone)]
pub struct MatrixLda {
    /// `D x p`, unit-norm columns.
    pub projection: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

/// Classic LDA on column vectors: `S_B u = lambda S_W u`, solved through the
/// Cholesky factor of `S_W`. Columns of `vectors` are samples.
pub fn matrix_lda_fit(vectors: &DMatrix<f64>, labels: &[String], p: Option<usize>) -> Result<MatrixLda> {
    let (dim, n) = vectors.shape();
    if labels.len() != n {
        return Err(dim_err(format!("{} labels for {n} samples", labels.len())));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (j, l) in labels.iter().enumerate() {
        groups.entry(l.as_str()).or_default().push(j);
    }
    let p = resolve_p(groups.len(), p)?;
    let total = vectors.column_mean();
    let mut sw = DMatrix::<f64>::zeros(dim, dim);
    let mut sb = DMatrix::<f64>::zeros(dim, dim);
    for idx in groups.values() {
        let mut mean = DVector::<f64>::zeros(dim);
        for &j in idx {
            mean += vectors.column(j);
        }
        mean /= idx.len() as f64;
        for &j in idx {
            let d = vectors.column(j) - &mean;
            sw += &d * d.transpose();
        }
        let d = &mean - &total;
        sb += (&d * d.transpose()) * idx.len() as f64;
    }
    let chol = sw
        .cholesky()
        .ok_or(Error::SingularMatrix("within-class scatter matrix"))?;
    let l = chol.l();
    let linv_sb = l
        .solve_lower_triangular(&sb)
        .ok_or(Error::SingularMatrix("within-class scatter matrix"))?;
    let c = l
        .solve_lower_triangular(&linv_sb.transpose())
        .ok_or(Error::SingularMatrix("within-class scatter matrix"))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let lt = l.transpose();
    let mut projection = DMatrix::<f64>::zeros(dim, p);
    for (col, &k) in order.iter().take(p).enumerate() {
        let mut u = lt
            .solve_upper_triangular(&eig.eigenvectors.column(k).into_owned())
            .ok_or(Error::SingularMatrix("within-class scatter matrix"))?;
        u /= u.norm();
        if let Some(lead) = u.iter().find(|x| x.abs() > 1e-10) {
            if *lead < 0.0 {
                u = -u;
            }
        }
        projection.set_column(col, &u);
    }
    Ok(MatrixLda {
        projection,
        eigenvalues: order.iter().take(p).map(|&k| eig.eigenvalues[k]).collect(),
    })
}

/// Matrix LDA over vectorized lateral slices, kept as a classifier baseline.
#[derive(Debug, Clone)]
pub struct MatrixLdaModel {
    pub projection: DMatrix<f64>,
    pub p: usize,
    pub class_ids: Vec<String>,
    /// Mode-1 length followed by the trailing lengths of the training data.
    pub sample_dims: Vec<usize>,
    /// `p x l` projections of the training samples.
    pub train_projections: DMatrix<f64>,
    pub train_labels: Vec<String>,
}

impl MatrixLdaModel {
    pub fn fit(ds: &LabeledTensorDataset, p: Option<usize>) -> Result<Self> {
        let vectors = vectorize_samples(&ds.data);
        let lda = matrix_lda_fit(&vectors, &ds.labels, p)?;
        let mut sample_dims = vec![ds.data.dims()[0]];
        sample_dims.extend_from_slice(ds.data.trailing_dims());
        Ok(Self {
            train_projections: lda.projection.transpose() * &vectors,
            p: lda.projection.ncols(),
            projection: lda.projection,
            class_ids: ds.class_ids(),
            sample_dims,
            train_labels: ds.labels.clone(),
        })
    }

    pub fn project(&self, x: &DenseTensor) -> Result<DMatrix<f64>> {
        if x.dims()[0] != self.sample_dims[0] || x.trailing_dims() != &self.sample_dims[1..] {
            return Err(dim_err(format!(
                "samples {:?} do not match model sample dims {:?}",
                x.dims(),
                self.sample_dims
            )));
        }
        Ok(self.projection.transpose() * vectorize_samples(x))
    }
}
