//! Seeded synthetic corpora standing in for extractor output.
//!
//! Each class gets a random mean on the segments relevant to its task; every
//! other segment has mean zero for all classes. Samples are the class mean
//! plus isotropic Gaussian noise on every coordinate. Values are rounded to
//! f32 at generation so a corpus survives the `SFD1` round trip bit-exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::DescriptorCorpus;
use crate::descriptor::{Descriptor, SegmentMask, DESCRIPTOR_DIM};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticTask {
    /// Classes differ in expression, rotation and translation.
    Expression,
    /// Classes differ in shape and texture.
    Identity,
}

impl SyntheticTask {
    pub fn mask(self) -> SegmentMask {
        match self {
            SyntheticTask::Expression => SegmentMask::EXPRESSION,
            SyntheticTask::Identity => SegmentMask::IDENTITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub class_count: usize,
    pub samples_per_class: usize,
    pub class_mean_scale: f64,
    pub noise_scale: f64,
    pub seed: u64,
    pub task: SyntheticTask,
}

impl SyntheticConfig {
    pub fn new(
        task: SyntheticTask,
        class_count: usize,
        samples_per_class: usize,
        seed: u64,
    ) -> Self {
        SyntheticConfig {
            class_count,
            samples_per_class,
            class_mean_scale: 1.0,
            noise_scale: 0.1,
            seed,
            task,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 || self.class_count > u16::MAX as usize + 1 {
            return Err(Error::Config(format!(
                "class_count must be in 1..=65536, got {}",
                self.class_count
            )));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Config("samples_per_class must be positive".into()));
        }
        for (name, v) in [
            ("class_mean_scale", self.class_mean_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.noise_scale >= self.class_mean_scale {
            return Err(Error::Config(format!(
                "noise_scale {} must be below class_mean_scale {} for a separable corpus",
                self.noise_scale, self.class_mean_scale
            )));
        }
        Ok(())
    }
}

/// A generated corpus together with the class means it was drawn around.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub corpus: DescriptorCorpus,
    pub class_means: Vec<Descriptor>,
}

/// Samples are emitted round-robin over classes (item `i` has label
/// `i % class_count`), so any regular holdout stays class balanced.
pub fn generate_synthetic_corpus(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mean_dist = Normal::new(0.0, cfg.class_mean_scale).unwrap();
    let noise_dist = Normal::new(0.0, cfg.noise_scale).unwrap();
    let mask = cfg.task.mask();

    let class_means = (0..cfg.class_count)
        .map(|_| {
            let mut values = vec![0.0; DESCRIPTOR_DIM];
            for segment in mask.segments() {
                for v in &mut values[segment.range()] {
                    *v = mean_dist.sample(&mut rng);
                }
            }
            Descriptor::new(values)
        })
        .collect::<Result<Vec<_>>>()?;

    let total = cfg.class_count * cfg.samples_per_class;
    let mut vectors = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for _ in 0..cfg.samples_per_class {
        for (class, mean) in class_means.iter().enumerate() {
            let values = mean
                .values()
                .iter()
                .map(|m| (m + noise_dist.sample(&mut rng)) as f32 as f64)
                .collect();
            vectors.push(Descriptor::new(values)?);
            labels.push(class as u16);
        }
    }
    Ok(SyntheticCorpus {
        corpus: DescriptorCorpus::new(vectors, Some(labels))?,
        class_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::Segment;

    fn empirical_means(corpus: &DescriptorCorpus) -> Vec<Vec<f64>> {
        let labels = corpus.labels().unwrap();
        let k = corpus.class_count();
        let mut sums = vec![vec![0.0; DESCRIPTOR_DIM]; k];
        let mut counts = vec![0usize; k];
        for (v, &l) in corpus.vectors().iter().zip(labels) {
            counts[l as usize] += 1;
            for (s, x) in sums[l as usize].iter_mut().zip(v.values()) {
                *s += x;
            }
        }
        for (s, n) in sums.iter_mut().zip(counts) {
            s.iter_mut().for_each(|x| *x /= n as f64);
        }
        sums
    }

    fn nearest_mean_accuracy(corpus: &DescriptorCorpus) -> f64 {
        let means = empirical_means(corpus);
        let labels = corpus.labels().unwrap();
        let correct = corpus
            .vectors()
            .iter()
            .zip(labels)
            .filter(|(v, &l)| {
                let best = means
                    .iter()
                    .enumerate()
                    .map(|(c, m)| {
                        let d: f64 = m.iter().zip(v.values()).map(|(a, b)| (a - b).powi(2)).sum();
                        (c, d)
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap()
                    .0;
                best == l as usize
            })
            .count();
        correct as f64 / corpus.len() as f64
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = SyntheticConfig::new(SyntheticTask::Expression, 8, 20, 7);
        let a = generate_synthetic_corpus(&cfg).unwrap().corpus;
        let b = generate_synthetic_corpus(&cfg).unwrap().corpus;
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
        let other = generate_synthetic_corpus(&SyntheticConfig { seed: 8, ..cfg })
            .unwrap()
            .corpus;
        assert_ne!(a, other);
    }

    #[test]
    fn shape_of_output() {
        let cfg = SyntheticConfig::new(SyntheticTask::Expression, 8, 200, 7);
        let out = generate_synthetic_corpus(&cfg).unwrap();
        assert_eq!(out.corpus.len(), 1600);
        assert_eq!(out.corpus.class_count(), 8);
        assert_eq!(
            out.corpus.labels().unwrap()[..9],
            [0, 1, 2, 3, 4, 5, 6, 7, 0]
        );
    }

    #[test]
    fn rejects_inseparable_config() {
        let mut cfg = SyntheticConfig::new(SyntheticTask::Identity, 4, 4, 1);
        cfg.noise_scale = 1.0;
        assert!(matches!(
            generate_synthetic_corpus(&cfg),
            Err(Error::Config(_))
        ));
        cfg.noise_scale = 0.1;
        cfg.class_count = 0;
        assert!(matches!(
            generate_synthetic_corpus(&cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn nearest_mean_oracle_separates_classes() {
        for (task, classes, per) in [
            (SyntheticTask::Expression, 8, 100),
            (SyntheticTask::Identity, 32, 25),
        ] {
            let cfg = SyntheticConfig::new(task, classes, per, 11);
            let corpus = generate_synthetic_corpus(&cfg).unwrap().corpus;
            let acc = nearest_mean_accuracy(&corpus);
            assert!(acc >= 0.99, "{task:?}: nearest-mean accuracy {acc}");
        }
    }

    #[test]
    fn class_means_live_only_on_task_segments() {
        for task in [SyntheticTask::Expression, SyntheticTask::Identity] {
            let cfg = SyntheticConfig::new(task, 8, 400, 3);
            let out = generate_synthetic_corpus(&cfg).unwrap();
            let means = empirical_means(&out.corpus);
            // standard error of a 400-sample mean at noise 0.1 is 0.005
            let tol = 6.0 * cfg.noise_scale / (cfg.samples_per_class as f64).sqrt();
            for segment in Segment::ALL {
                let relevant = task.mask().contains(segment);
                let max_spread = segment
                    .range()
                    .map(|i| {
                        let col: Vec<f64> = means.iter().map(|m| m[i]).collect();
                        let hi = col.iter().cloned().fold(f64::MIN, f64::max);
                        let lo = col.iter().cloned().fold(f64::MAX, f64::min);
                        hi - lo
                    })
                    .fold(0.0, f64::max);
                if relevant {
                    assert!(max_spread > 0.5, "{task:?} {segment}: {max_spread}");
                } else {
                    assert!(max_spread < 2.0 * tol, "{task:?} {segment}: {max_spread}");
                }
            }
        }
    }
}
