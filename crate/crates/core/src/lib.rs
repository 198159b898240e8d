//! Tensor discriminant analysis under transform-domain tensor products.
//!
//! A data set is a real tensor whose lateral slices (mode 2) are samples.
//! Products, inverses and eigendecompositions are taken facewise after an
//! invertible transform (DFT, DCT, Haar or identity) along modes 3 onward.
//! [`homlda_fit`] and [`rhomlda_fit`] learn a projection tensor from labeled
//! samples; [`nn_classify`] and [`kfold_cv`] evaluate it.

pub mod algebra;
pub mod classify;
pub mod discriminant;
pub mod error;
pub mod io;
pub mod linalg;
pub mod robust;
pub mod synth;
pub mod tensor;
pub mod transforms;

pub use nalgebra;

pub use algebra::{
    slice_condition_numbers, t_eig, tl_identity, tl_inverse, tl_product, tl_transpose,
    tl_transpose_with, SliceCondition, SliceConditionReport, TEigFactors, TransposeMode,
    DEFAULT_KAPPA_THRESHOLD,
};
pub use classify::{
    fit, kfold_cv, nn_classify, stratified_folds, CvReport, Embedding, FitConfig, TrainedModel,
    DEFAULT_FOLDS,
};
pub use discriminant::{
    between_class_scatter, class_means, homlda_fit, matrix_lda_fit, project, within_class_scatter,
    ClassMeans, Conditioning, DiscriminantModel, LabeledTensorDataset, MatrixLda, MatrixLdaModel,
    Method,
};
pub use error::{Error, Result};
pub use robust::{
    reestimate_eigs, rhomlda_fit, robust_within_scatter, within_conditioning, RobustParams,
};
pub use synth::{synthesize, SynthSpec};
pub use tensor::{
    fold, frobenius_norm, mode_product, unfold, Complex64, ComplexTensor, DenseTensor, Tensor,
};
pub use transforms::{TransformKind, TransformSpec};
