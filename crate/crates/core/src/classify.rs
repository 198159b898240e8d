//! Nearest-neighbor classification in the projected space and stratified
//! k-fold cross-validation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discriminant::{
    homlda_fit, project, DiscriminantModel, LabeledTensorDataset, MatrixLdaModel, Method,
};
use crate::error::{Error, Result};
use crate::robust::{rhomlda_fit, RobustParams};
use crate::tensor::DenseTensor;
use crate::transforms::TransformKind;

pub const DEFAULT_FOLDS: usize = 5;

/// A fitted model that maps samples to points compared by Euclidean
/// (Frobenius) distance.
pub trait Embedding {
    /// One flattened point per lateral slice of `x`.
    fn embed(&self, x: &DenseTensor) -> Result<Vec<Vec<f64>>>;
    fn train_points(&self) -> Vec<Vec<f64>>;
    fn train_labels(&self) -> &[String];
}

fn lateral_points(t: &DenseTensor) -> Vec<Vec<f64>> {
    let (rows, cols) = (t.dims()[0], t.dims()[1]);
    let slices = t.slice_count();
    (0..cols)
        .map(|j| {
            let mut v = Vec::with_capacity(rows * slices);
            for s in 0..slices {
                let start = rows * (j + cols * s);
                v.extend_from_slice(&t.data()[start..start + rows]);
            }
            v
        })
        .collect()
}

impl Embedding for DiscriminantModel {
    fn embed(&self, x: &DenseTensor) -> Result<Vec<Vec<f64>>> {
        Ok(lateral_points(&project(self, x)?))
    }

    fn train_points(&self) -> Vec<Vec<f64>> {
        lateral_points(&self.train_projections)
    }

    fn train_labels(&self) -> &[String] {
        &self.train_labels
    }
}

impl Embedding for MatrixLdaModel {
    fn embed(&self, x: &DenseTensor) -> Result<Vec<Vec<f64>>> {
        let y = self.project(x)?;
        Ok(y.column_iter().map(|c| c.iter().copied().collect()).collect())
    }

    fn train_points(&self) -> Vec<Vec<f64>> {
        self.train_projections
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect()
    }

    fn train_labels(&self) -> &[String] {
        &self.train_labels
    }
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Tensor(DiscriminantModel),
    Matrix(MatrixLdaModel),
}

impl TrainedModel {
    pub fn method(&self) -> Method {
        match self {
            TrainedModel::Tensor(m) => m.method,
            TrainedModel::Matrix(_) => Method::MatrixLda,
        }
    }

    pub fn class_ids(&self) -> &[String] {
        match self {
            TrainedModel::Tensor(m) => &m.class_ids,
            TrainedModel::Matrix(m) => &m.class_ids,
        }
    }
}

impl Embedding for TrainedModel {
    fn embed(&self, x: &DenseTensor) -> Result<Vec<Vec<f64>>> {
        match self {
            TrainedModel::Tensor(m) => m.embed(x),
            TrainedModel::Matrix(m) => m.embed(x),
        }
    }

    fn train_points(&self) -> Vec<Vec<f64>> {
        match self {
            TrainedModel::Tensor(m) => m.train_points(),
            TrainedModel::Matrix(m) => m.train_points(),
        }
    }

    fn train_labels(&self) -> &[String] {
        match self {
            TrainedModel::Tensor(m) => m.train_labels(),
            TrainedModel::Matrix(m) => m.train_labels(),
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Label of the nearest training projection for every lateral slice of `x`;
/// ties go to the lowest training index.
pub fn nn_classify<M: Embedding + ?Sized>(model: &M, x: &DenseTensor) -> Result<Vec<String>> {
    let queries = model.embed(x)?;
    let train = model.train_points();
    let labels = model.train_labels();
    if train.is_empty() {
        return Err(Error::Parameter("model has no training samples".into()));
    }
    Ok(queries
        .par_iter()
        .map(|q| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, t) in train.iter().enumerate() {
                let d = squared_distance(q, t);
                if d < best_d {
                    best = i;
                    best_d = d;
                }
            }
            labels[best].clone()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: Method,
    /// Retained dimension; `None` means `c - 1`.
    pub p: Option<usize>,
    pub transform: TransformKind,
    /// Used by the robust method only.
    pub robust: RobustParams,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: Method::Homlda,
            p: None,
            transform: TransformKind::Dft,
            robust: RobustParams::default(),
        }
    }
}

pub fn fit(ds: &LabeledTensorDataset, cfg: &FitConfig) -> Result<TrainedModel> {
    let spec = ds.transform_spec(cfg.transform);
    Ok(match cfg.method {
        Method::Homlda => TrainedModel::Tensor(homlda_fit(ds, cfg.p, &spec)?),
        Method::Rhomlda => TrainedModel::Tensor(rhomlda_fit(ds, cfg.p, &spec, &cfg.robust)?),
        Method::MatrixLda => TrainedModel::Matrix(MatrixLdaModel::fit(ds, cfg.p)?),
    })
}

/// Fold index for every sample. Each class (in lexicographic order) is
/// shuffled with one seeded generator and dealt round-robin, continuing the
/// rotation where the previous class stopped.
pub fn stratified_folds(ds: &LabeledTensorDataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Parameter(format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; ds.len()];
    let mut offset = 0;
    for (class, members) in ds.class_index() {
        if members.len() < folds {
            return Err(Error::Stratification {
                class: class.clone(),
                count: members.len(),
                folds,
            });
        }
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for (r, &j) in shuffled.iter().enumerate() {
            assignment[j] = (offset + r) % folds;
        }
        offset += members.len();
    }
    Ok(assignment)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub config: FitConfig,
    pub folds: usize,
    pub seed: u64,
    /// Fold index of every sample.
    pub assignment: Vec<usize>,
    /// Held-out prediction for every sample.
    pub predictions: Vec<String>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation of the fold accuracies (0 for one fold).
    pub std: f64,
    pub class_ids: Vec<String>,
    /// Per fold, `confusion[true][predicted]` over `class_ids`.
    pub confusions: Vec<Vec<Vec<usize>>>,
    pub wall_seconds: Vec<f64>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct FoldOutcome {
    held_out: Vec<usize>,
    predictions: Vec<String>,
    seconds: f64,
}

pub fn kfold_cv(
    ds: &LabeledTensorDataset,
    folds: usize,
    cfg: &FitConfig,
    seed: u64,
) -> Result<CvReport> {
    let assignment = stratified_folds(ds, folds, seed)?;
    let outcomes: Vec<Result<FoldOutcome>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let start = Instant::now();
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..ds.len()).partition(|&j| assignment[j] == f);
            let model = fit(&ds.subset(&train)?, cfg)?;
            let test_ds = ds.subset(&test)?;
            let predictions = nn_classify(&model, test_ds.data())?;
            Ok(FoldOutcome {
                held_out: test,
                predictions,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let class_ids = ds.class_ids();
    let position = |label: &str| class_ids.binary_search_by(|c| c.as_str().cmp(label)).ok();
    let mut predictions = vec![String::new(); ds.len()];
    let mut accuracies = Vec::with_capacity(folds);
    let mut confusions = Vec::with_capacity(folds);
    let mut wall_seconds = Vec::with_capacity(folds);
    for outcome in outcomes {
        let mut confusion = vec![vec![0usize; class_ids.len()]; class_ids.len()];
        let mut correct = 0usize;
        for (&j, pred) in outcome.held_out.iter().zip(&outcome.predictions) {
            let truth = &ds.labels()[j];
            if truth == pred {
                correct += 1;
            }
            if let (Some(r), Some(c)) = (position(truth), position(pred)) {
                confusion[r][c] += 1;
            }
            predictions[j] = pred.clone();
        }
        accuracies.push(correct as f64 / outcome.held_out.len() as f64);
        confusions.push(confusion);
        wall_seconds.push(outcome.seconds);
    }
    let (mean, std) = mean_std(&accuracies);
    Ok(CvReport {
        config: cfg.clone(),
        folds,
        seed,
        assignment,
        predictions,
        accuracies,
        mean,
        std,
        class_ids,
        confusions,
        wall_seconds,
    })
}
