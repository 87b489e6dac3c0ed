//! Rate-accuracy evaluation of task heads on transmitted descriptors.

use std::fmt;
use std::io::Write;

use crate::codec::CodecModel;
use crate::corpus::DescriptorCorpus;
use crate::descriptor::{Descriptor, SegmentMask};
use crate::error::{Error, Result};
use crate::heads::{find_threshold, ExpressionHead, PairSet, VerificationHead};

/// How descriptors reach the receiver.
#[derive(Clone, Copy, Debug)]
pub enum Channel<'a> {
    /// Compress with the codec's own mask (full or retrained partial codec).
    Codec(&'a CodecModel),
    /// Zero the segments outside `keep`, then send through a full-descriptor codec.
    ZeroPad {
        codec: &'a CodecModel,
        keep: SegmentMask,
    },
    /// Deliver descriptors untouched at zero cost; the clean reference.
    Bypass,
}

impl Channel<'_> {
    /// Received descriptor and the serialized bits spent on it.
    pub fn transmit(&self, descriptor: &Descriptor) -> Result<(Descriptor, u64)> {
        match *self {
            Channel::Codec(codec) => {
                let stream = codec.compress(descriptor)?;
                Ok((codec.decompress(&stream)?, stream.total_bits()))
            }
            Channel::ZeroPad { codec, keep } => {
                if !codec.mask().is_full() {
                    return Err(Error::Incompatible(format!(
                        "zero-pad mode needs a full-descriptor codec, got mask {}",
                        codec.mask()
                    )));
                }
                let stream = codec.compress(&descriptor.zero_pad(keep))?;
                Ok((codec.decompress(&stream)?, stream.total_bits()))
            }
            Channel::Bypass => Ok((descriptor.clone(), 0)),
        }
    }

    /// Transmits every descriptor, returning the received corpus (labels
    /// kept) and the mean bits per descriptor.
    pub fn transmit_corpus(&self, corpus: &DescriptorCorpus) -> Result<(DescriptorCorpus, f64)> {
        let mut received = Vec::with_capacity(corpus.len());
        let mut bits = 0u64;
        for d in corpus.vectors() {
            let (r, b) = self.transmit(d)?;
            received.push(r);
            bits += b;
        }
        let avg = bits as f64 / corpus.len().max(1) as f64;
        Ok((
            DescriptorCorpus::new(received, corpus.labels().map(<[u16]>::to_vec))?,
            avg,
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaPoint {
    pub avg_bits: f64,
    pub accuracy: f64,
}

pub fn evaluate_expression_ra(
    channel: Channel<'_>,
    head: &ExpressionHead,
    corpus: &DescriptorCorpus,
) -> Result<RaPoint> {
    let (received, avg_bits) = channel.transmit_corpus(corpus)?;
    Ok(RaPoint {
        avg_bits,
        accuracy: head.accuracy(&received)?,
    })
}

/// Pair accuracy at the best threshold for the received embeddings.
pub fn evaluate_verification_ra(
    channel: Channel<'_>,
    head: &VerificationHead,
    corpus: &DescriptorCorpus,
    pairs: &PairSet,
) -> Result<RaPoint> {
    let (received, avg_bits) = channel.transmit_corpus(corpus)?;
    let embeddings = received
        .vectors()
        .iter()
        .map(|d| head.embed(d))
        .collect::<Result<Vec<_>>>()?;
    Ok(RaPoint {
        avg_bits,
        accuracy: find_threshold(pairs, &embeddings)?.accuracy,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Expression,
    Verification,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Expression => "expression",
            Task::Verification => "verification",
        })
    }
}

/// Which transmission arm produced a row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Full,
    PortionZeroPad,
    PortionRetrained,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::PortionZeroPad => "portion-zeropad",
            Mode::PortionRetrained => "portion-retrained",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaRow {
    pub task: Task,
    pub mode: Mode,
    pub lambda_r: f64,
    pub point: RaPoint,
}

/// Writes `task,mode,lambda_r,avg_bits,accuracy` rows.
pub fn write_ra_csv<W: Write>(out: W, rows: &[RaRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["task", "mode", "lambda_r", "avg_bits", "accuracy"])?;
    for r in rows {
        w.write_record([
            r.task.to_string(),
            r.mode.to_string(),
            r.lambda_r.to_string(),
            r.point.avg_bits.to_string(),
            r.point.accuracy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
