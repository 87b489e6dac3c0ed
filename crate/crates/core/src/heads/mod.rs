//! Task networks that run directly on (reconstructed) descriptors.
//!
//! Both heads standardize their segment slice with training statistics and
//! share one shape: `Dense(in, w) -> ReLU -> residual blocks -> ReLU ->
//! Dense(w, out)`, each block `Dense -> ReLU -> Dense` with an identity
//! shortcut.

mod expression;
mod threshold;
mod verification;

pub use expression::{train_expression, ExpressionHead, DEFAULT_EXPRESSION_CLASSES};
pub use threshold::{
    find_threshold, normalize_embedding, pair_distances, Pair, PairSet, ThresholdFit,
};
pub use verification::{train_verification, EmbeddingOracle, VerificationHead, EMBEDDING_WIDTH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{ByteReader, ByteWriter};
use crate::checkpoint::{read_header, write_header, ModelKind};
use crate::descriptor::SegmentMask;
use crate::error::{Error, Result};
use crate::nn::serial::{read_network, write_network};
use crate::nn::{AdamConfig, AdamState, Dense, Layer, Network, Residual};
use crate::standardize::Standardizer;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadArchitecture {
    pub width: usize,
    pub blocks: usize,
}

impl Default for HeadArchitecture {
    fn default() -> Self {
        HeadArchitecture {
            width: 256,
            blocks: 3,
        }
    }
}

impl HeadArchitecture {
    pub fn network(&self, inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Network {
        let w = self.width;
        let mut layers = vec![Layer::Dense(Dense::he_uniform(inputs, w, rng)), Layer::Relu];
        for _ in 0..self.blocks {
            layers.push(Layer::Residual(Residual::new(
                vec![
                    Layer::Dense(Dense::he_uniform(w, w, rng)),
                    Layer::Relu,
                    Layer::Dense(Dense::scaled_uniform(w, w, 0.1, rng)),
                ],
                None,
            )));
        }
        layers.push(Layer::Relu);
        // zero output layer: predictions start at the origin instead of at
        // random offsets far larger than the targets
        layers.push(Layer::Dense(Dense::zeros(w, outputs)));
        Network::new(inputs, layers).expect("head widths chain")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadTrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: u32,
    pub seed: u64,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        HeadTrainConfig {
            adam: AdamConfig::default(),
            batch_size: 64,
            epochs: 30,
            seed: 0,
        }
    }
}

impl HeadTrainConfig {
    fn validate(&self) -> Result<()> {
        // negated so a NaN learning rate is rejected too
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if self.batch_size == 0 || self.epochs == 0 || !(self.adam.lr > 0.0) {
            return Err(Error::Config(
                "head training needs positive batch size, epochs and learning rate".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadEpochLoss {
    pub epoch: u32,
    pub loss: f64,
}

/// A trained head and its per-epoch mean loss.
#[derive(Clone, Debug)]
pub struct TrainedHead<H> {
    pub head: H,
    pub losses: Vec<HeadEpochLoss>,
}

/// Network plus input statistics; the common body of both heads.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct HeadCore {
    pub mask: SegmentMask,
    pub standardizer: Standardizer,
    pub network: Network,
    pub seed: u64,
    pub epochs: u32,
}

impl HeadCore {
    pub fn run(&self, active: &[f64]) -> Result<Vec<f64>> {
        if active.len() != self.standardizer.dim() {
            return Err(Error::Shape(format!(
                "head expects {} inputs, got {}",
                self.standardizer.dim(),
                active.len()
            )));
        }
        self.network.forward(&self.standardizer.apply(active))
    }

    pub fn to_bytes(&self, kind: ModelKind) -> Vec<u8> {
        let mut w = ByteWriter::new();
        write_header(&mut w, kind, self.mask, &self.standardizer);
        w.len_u32(self.network.output_width());
        w.u64(self.seed);
        w.u32(self.epochs);
        write_network(&mut w, &self.network);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8], kind: ModelKind, mask: SegmentMask) -> Result<HeadCore> {
        let mut r = ByteReader::new(bytes, "SFM1 head checkpoint");
        let (found_mask, standardizer) = read_header(&mut r, kind)?;
        if found_mask != mask {
            return Err(Error::Incompatible(format!(
                "{} checkpoint reads segments {found_mask}, expected {mask}",
                kind.name()
            )));
        }
        let outputs = r.u32()? as usize;
        let seed = r.u64()?;
        let epochs = r.u32()?;
        let network = read_network(&mut r)?;
        r.expect_end()?;
        if network.input_width() != standardizer.dim() || network.input_width() != mask.active_dim()
        {
            return Err(Error::Format(format!(
                "head network takes {} inputs for {} standardized dims",
                network.input_width(),
                standardizer.dim()
            )));
        }
        if network.output_width() != outputs {
            return Err(Error::Format(format!(
                "head declares {outputs} outputs, network has {}",
                network.output_width()
            )));
        }
        Ok(HeadCore {
            mask,
            standardizer,
            network,
            seed,
            epochs,
        })
    }
}

/// Minibatch Adam over `(input, target)` rows. `loss` returns the sample
/// loss and writes dL/d(output) into its last argument.
pub(crate) fn train_core(
    mask: SegmentMask,
    rows: &[Vec<f64>],
    outputs: usize,
    arch: HeadArchitecture,
    cfg: &HeadTrainConfig,
    mut loss: impl FnMut(usize, &[f64], &mut [f64]) -> f64,
    mut on_epoch: impl FnMut(&HeadEpochLoss),
) -> Result<(HeadCore, Vec<HeadEpochLoss>)> {
    cfg.validate()?;
    if rows.is_empty() {
        return Err(Error::Config(
            "cannot train a head on an empty corpus".into(),
        ));
    }
    let standardizer = Standardizer::fit(rows)?;
    let inputs: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.apply(r)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut network = arch.network(mask.active_dim(), outputs, &mut rng);
    let mut grads = network.zeros_like();
    let shapes: Vec<usize> = network.params().iter().map(|p| p.len()).collect();
    let mut adam = AdamState::new(cfg.adam, &shapes);

    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut grad_out = vec![0.0; outputs];
    let mut losses = Vec::with_capacity(cfg.epochs as usize);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            grads.fill_zero();
            for &i in chunk {
                let (y, trace) = network.forward_traced(&inputs[i])?;
                grad_out.fill(0.0);
                let l = loss(i, &y, &mut grad_out);
                if !l.is_finite() {
                    return Err(Error::Training {
                        epoch: epoch as usize,
                        batch,
                        reason: format!("non-finite loss {l}"),
                    });
                }
                sum += l;
                network.backward(&trace, &grad_out, &mut grads)?;
            }
            let inv = 1.0 / chunk.len() as f64;
            let scaled: Vec<Vec<f64>> = grads
                .params()
                .iter()
                .map(|g| g.iter().map(|v| v * inv).collect())
                .collect();
            adam.step(
                network.params_mut(),
                scaled.iter().map(|g| g.as_slice()).collect(),
            )?;
        }
        let l = HeadEpochLoss {
            epoch,
            loss: sum / inputs.len() as f64,
        };
        on_epoch(&l);
        losses.push(l);
    }
    Ok((
        HeadCore {
            mask,
            standardizer,
            network,
            seed: cfg.seed,
            epochs: cfg.epochs,
        },
        losses,
    ))
}
