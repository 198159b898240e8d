//! Seeded synthetic labeled tensor datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::discriminant::LabeledTensorDataset;
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    /// Dims of one sample: mode 1, then the trailing modes.
    pub sample_dims: Vec<usize>,
    /// Mean offset between consecutive classes along the random direction.
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Copy feature row 0 onto row 1 in every sample, making every
    /// within-class scatter slice singular.
    pub force_singular: bool,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.samples_per_class == 0 {
            return Err(Error::Parameter("class and sample counts must be at least 1".into()));
        }
        if self.sample_dims.is_empty() || self.sample_dims.contains(&0) {
            return Err(Error::Parameter(format!(
                "sample dims must be nonempty and positive, got {:?}",
                self.sample_dims
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.class_separation.is_finite() {
            return Err(Error::Parameter("sigma must be >= 0 and separation finite".into()));
        }
        if self.force_singular && self.sample_dims[0] < 2 {
            return Err(Error::Parameter("forcing singularity needs mode-1 length >= 2".into()));
        }
        Ok(())
    }

    /// Dims of the stacked data tensor, samples along mode 2.
    pub fn data_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.sample_dims[0], self.classes * self.samples_per_class];
        dims.extend_from_slice(&self.sample_dims[1..]);
        dims
    }
}

/// Samples are stacked class by class; class `i` is labeled `"i"` (zero-padded
/// so lexicographic order matches numeric order).
pub fn synthesize(spec: &SynthSpec) -> Result<LabeledTensorDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sample_len: usize = spec.sample_dims.iter().product();
    let mut direction: Vec<f64> = (0..sample_len).map(|_| rng.sample(StandardNormal)).collect();
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|x| *x /= norm);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Parameter(e.to_string()))?;

    let dims = spec.data_dims();
    let (m1, l) = (dims[0], dims[1]);
    let slices = sample_len / m1;
    let mut data = vec![0.0; m1 * l * slices];
    let width = (spec.classes - 1).to_string().len();
    let mut labels = Vec::with_capacity(l);
    for class in 0..spec.classes {
        let offset = spec.class_separation * class as f64;
        for s in 0..spec.samples_per_class {
            let j = class * spec.samples_per_class + s;
            // sample entries in the sample's own storage order (mode 1 fastest)
            for (r, u) in direction.iter().enumerate() {
                let (i, t) = (r % m1, r / m1);
                data[i + m1 * (j + l * t)] = offset * u + noise.sample(&mut rng);
            }
            labels.push(format!("{class:0width$}"));
        }
    }
    if spec.force_singular {
        for j in 0..l {
            for t in 0..slices {
                data[1 + m1 * (j + l * t)] = data[m1 * (j + l * t)];
            }
        }
    }
    LabeledTensorDataset::new(DenseTensor::new(dims, data)?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discriminant::within_class_scatter;
    use crate::tensor::frobenius_norm;
    use crate::transforms::TransformKind;

    fn spec() -> SynthSpec {
        SynthSpec {
            classes: 3,
            samples_per_class: 4,
            sample_dims: vec![3, 2, 2],
            class_separation: 5.0,
            noise_sigma: 1.0,
            seed: 9,
            force_singular: false,
        }
    }

    #[test]
    fn same_seed_same_bits() {
        let a = synthesize(&spec()).unwrap();
        let b = synthesize(&spec()).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(a.labels(), b.labels());
        assert_eq!(a.data().dims(), &[3, 12, 2, 2]);
        assert_eq!(a.class_ids(), vec!["0", "1", "2"]);
    }

    #[test]
    fn noiseless_data_has_zero_within_scatter() {
        let s = SynthSpec {
            noise_sigma: 0.0,
            ..spec()
        };
        let ds = synthesize(&s).unwrap();
        let w = within_class_scatter(&ds, &ds.transform_spec(TransformKind::Dft)).unwrap();
        assert_eq!(frobenius_norm(&w), 0.0);
    }

    #[test]
    fn class_means_step_by_separation() {
        let s = SynthSpec {
            noise_sigma: 0.0,
            ..spec()
        };
        let ds = synthesize(&s).unwrap();
        let a = ds.data();
        let step = |j: usize| -> f64 {
            (0..3)
                .flat_map(|i| (0..2).flat_map(move |t3| (0..2).map(move |t4| (i, t3, t4))))
                .map(|(i, t3, t4)| a.get(&[i, j, t3, t4]).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        assert_eq!(step(0), 0.0);
        assert!((step(4) - 5.0).abs() < 1e-12);
        assert!((step(8) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn forced_singular_duplicates_row() {
        let s = SynthSpec {
            force_singular: true,
            ..spec()
        };
        let ds = synthesize(&s).unwrap();
        let a = ds.data();
        for j in 0..12 {
            assert_eq!(a.get(&[0, j, 1, 1]), a.get(&[1, j, 1, 1]));
        }
    }

    #[test]
    fn invalid_specs() {
        for bad in [
            SynthSpec { classes: 0, ..spec() },
            SynthSpec { sample_dims: vec![], ..spec() },
            SynthSpec { noise_sigma: -1.0, ..spec() },
            SynthSpec { sample_dims: vec![1, 2], force_singular: true, ..spec() },
        ] {
            assert!(matches!(synthesize(&bad), Err(Error::Parameter(_))));
        }
    }
}
