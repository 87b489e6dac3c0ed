use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::checkpoint::ModelKind;
use crate::corpus::DescriptorCorpus;
use crate::descriptor::{Descriptor, Segment, SegmentMask};
use crate::error::{Error, Result};
use crate::heads::{
    normalize_embedding, train_core, HeadArchitecture, HeadCore, HeadEpochLoss, HeadTrainConfig,
    TrainedHead,
};

pub const EMBEDDING_WIDTH: usize = 512;

/// Identity embedding network over the shape and texture segments.
#[derive(Clone, Debug, PartialEq)]
pub struct VerificationHead {
    core: HeadCore,
}

impl VerificationHead {
    pub const MASK: SegmentMask = SegmentMask::IDENTITY;

    pub fn width(&self) -> usize {
        self.core.network.output_width()
    }

    pub fn embed(&self, descriptor: &Descriptor) -> Result<Vec<f64>> {
        self.core.run(&descriptor.project(Self::MASK))
    }

    pub fn embed_segments(&self, shape: &[f64], texture: &[f64]) -> Result<Vec<f64>> {
        let mut active = Vec::with_capacity(Self::MASK.active_dim());
        for (segment, values) in [(Segment::Shape, shape), (Segment::Texture, texture)] {
            if values.len() != segment.dim() {
                return Err(Error::SegmentLength {
                    segment,
                    expected: segment.dim(),
                    actual: values.len(),
                });
            }
            active.extend_from_slice(values);
        }
        self.core.run(&active)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.core.to_bytes(ModelKind::Verification)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<VerificationHead> {
        Ok(VerificationHead {
            core: HeadCore::from_bytes(bytes, ModelKind::Verification, Self::MASK)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<VerificationHead> {
        VerificationHead::from_bytes(&std::fs::read(path)?)
    }
}

/// Stand-in for a pretrained face-embedding network: a fixed random linear
/// map applied to each identity's mean shape and texture, then normalized
/// to unit length.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingOracle {
    /// Row-major `EMBEDDING_WIDTH x 160`.
    map: Vec<f64>,
}

impl EmbeddingOracle {
    pub fn new(seed: u64) -> EmbeddingOracle {
        let inputs = VerificationHead::MASK.active_dim();
        let dist = Normal::new(0.0, 1.0 / (inputs as f64).sqrt()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingOracle {
            map: (0..EMBEDDING_WIDTH * inputs)
                .map(|_| dist.sample(&mut rng))
                .collect(),
        }
    }

    /// Unit-length embedding of an identity-segment vector.
    pub fn embed(&self, identity: &[f64]) -> Vec<f64> {
        let y: Vec<f64> = self
            .map
            .chunks_exact(identity.len())
            .map(|row| row.iter().zip(identity).map(|(a, b)| a * b).sum())
            .collect();
        normalize_embedding(&y)
    }

    /// One target per item: the embedding of its identity's empirical mean.
    pub fn targets(&self, corpus: &DescriptorCorpus) -> Result<Vec<Vec<f64>>> {
        let labels = corpus.require_labels("embedding targets")?;
        let k = corpus.class_count();
        let width = VerificationHead::MASK.active_dim();
        let mut sums = vec![vec![0.0; width]; k];
        let mut counts = vec![0usize; k];
        for (d, &l) in corpus.vectors().iter().zip(labels) {
            counts[l as usize] += 1;
            for (s, v) in sums[l as usize]
                .iter_mut()
                .zip(d.project(VerificationHead::MASK))
            {
                *s += v;
            }
        }
        let per_class: Vec<Vec<f64>> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &n)| {
                let mean: Vec<f64> = s.iter().map(|v| v / n.max(1) as f64).collect();
                self.embed(&mean)
            })
            .collect();
        Ok(labels
            .iter()
            .map(|&l| per_class[l as usize].clone())
            .collect())
    }
}

/// Mean-squared-error regression onto `targets`, one per corpus item.
pub fn train_verification(
    corpus: &DescriptorCorpus,
    targets: &[Vec<f64>],
    arch: HeadArchitecture,
    cfg: &HeadTrainConfig,
    on_epoch: impl FnMut(&HeadEpochLoss),
) -> Result<TrainedHead<VerificationHead>> {
    if targets.len() != corpus.len() {
        return Err(Error::Config(format!(
            "{} target embeddings for {} descriptors",
            targets.len(),
            corpus.len()
        )));
    }
    let width = targets.first().map_or(EMBEDDING_WIDTH, Vec::len);
    if targets.iter().any(|t| t.len() != width) {
        return Err(Error::Config("target embeddings differ in width".into()));
    }
    let rows: Vec<Vec<f64>> = corpus
        .vectors()
        .iter()
        .map(|d| d.project(VerificationHead::MASK))
        .collect();
    let (core, losses) = train_core(
        VerificationHead::MASK,
        &rows,
        width,
        arch,
        cfg,
        |i, y, grad| {
            let mut loss = 0.0;
            for ((g, p), t) in grad.iter_mut().zip(y).zip(&targets[i]) {
                let d = p - t;
                loss += d * d;
                *g = 2.0 * d / width as f64;
            }
            loss / width as f64
        },
        on_epoch,
    )?;
    Ok(TrainedHead {
        head: VerificationHead { core },
        losses,
    })
}
