use std::path::Path;

use crate::checkpoint::ModelKind;
use crate::corpus::DescriptorCorpus;
use crate::descriptor::{Descriptor, Segment, SegmentMask};
use crate::error::{Error, Result};
use crate::heads::{
    train_core, HeadArchitecture, HeadCore, HeadEpochLoss, HeadTrainConfig, TrainedHead,
};

pub const DEFAULT_EXPRESSION_CLASSES: usize = 8;

/// Expression classifier over the expression, rotation and translation segments.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionHead {
    core: HeadCore,
}

impl ExpressionHead {
    pub const MASK: SegmentMask = SegmentMask::EXPRESSION;

    pub fn classes(&self) -> usize {
        self.core.network.output_width()
    }

    /// Raw class scores for a full descriptor; only the head's segments are read.
    pub fn scores(&self, descriptor: &Descriptor) -> Result<Vec<f64>> {
        self.core.run(&descriptor.project(Self::MASK))
    }

    /// Scores from the three segments directly.
    pub fn infer(
        &self,
        expression: &[f64],
        rotation: &[f64],
        translation: &[f64],
    ) -> Result<Vec<f64>> {
        let mut active = Vec::with_capacity(Self::MASK.active_dim());
        for (segment, values) in [
            (Segment::Expression, expression),
            (Segment::Rotation, rotation),
            (Segment::Translation, translation),
        ] {
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

    pub fn predict(&self, descriptor: &Descriptor) -> Result<usize> {
        Ok(argmax(&self.scores(descriptor)?))
    }

    /// Fraction of labeled descriptors classified correctly.
    pub fn accuracy(&self, corpus: &DescriptorCorpus) -> Result<f64> {
        let labels = corpus.require_labels("expression accuracy")?;
        let mut correct = 0usize;
        for (d, &l) in corpus.vectors().iter().zip(labels) {
            correct += (self.predict(d)? == l as usize) as usize;
        }
        Ok(correct as f64 / corpus.len().max(1) as f64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.core.to_bytes(ModelKind::Expression)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ExpressionHead> {
        Ok(ExpressionHead {
            core: HeadCore::from_bytes(bytes, ModelKind::Expression, Self::MASK)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExpressionHead> {
        ExpressionHead::from_bytes(&std::fs::read(path)?)
    }
}

/// First index of the largest score.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy training over softmax scores.
pub fn train_expression(
    corpus: &DescriptorCorpus,
    classes: usize,
    arch: HeadArchitecture,
    cfg: &HeadTrainConfig,
    on_epoch: impl FnMut(&HeadEpochLoss),
) -> Result<TrainedHead<ExpressionHead>> {
    let labels = corpus.require_labels("expression training")?;
    if classes == 0 || corpus.class_count() > classes {
        return Err(Error::Config(format!(
            "corpus has labels up to {}, head configured for {classes} classes",
            corpus.class_count()
        )));
    }
    let rows: Vec<Vec<f64>> = corpus
        .vectors()
        .iter()
        .map(|d| d.project(ExpressionHead::MASK))
        .collect();
    let (core, losses) = train_core(
        ExpressionHead::MASK,
        &rows,
        classes,
        arch,
        cfg,
        |i, scores, grad| {
            let target = labels[i] as usize;
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            for (k, (g, s)) in grad.iter_mut().zip(scores).enumerate() {
                *g = (s - max).exp() / z - (k == target) as u8 as f64;
            }
            z.ln() + max - scores[target]
        },
        on_epoch,
    )?;
    Ok(TrainedHead {
        head: ExpressionHead { core },
        losses,
    })
}
