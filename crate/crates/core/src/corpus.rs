//! Descriptor corpora and the `SFD1` file format.
//!
//! Layout (little-endian): magic `SFD1`, `u8` version = 1, `u8` has_labels,
//! `u16` dim = 257, `u32` count, `count * dim` f32 values row-major, then
//! `count` u16 labels when has_labels is 1.

use std::path::Path;

use crate::binio::{ByteReader, ByteWriter};
use crate::descriptor::{Descriptor, DESCRIPTOR_DIM};
use crate::error::{Error, Result};

pub const CORPUS_MAGIC: [u8; 4] = *b"SFD1";
pub const CORPUS_VERSION: u8 = 1;

/// An ordered collection of descriptors with optional integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorCorpus {
    vectors: Vec<Descriptor>,
    labels: Option<Vec<u16>>,
}

impl DescriptorCorpus {
    pub fn new(vectors: Vec<Descriptor>, labels: Option<Vec<u16>>) -> Result<Self> {
        if let Some(labels) = &labels {
            if labels.len() != vectors.len() {
                return Err(Error::Config(format!(
                    "{} labels for {} descriptors",
                    labels.len(),
                    vectors.len()
                )));
            }
        }
        Ok(DescriptorCorpus { vectors, labels })
    }

    pub fn unlabeled(vectors: Vec<Descriptor>) -> Self {
        DescriptorCorpus {
            vectors,
            labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Descriptor] {
        &self.vectors
    }

    pub fn labels(&self) -> Option<&[u16]> {
        self.labels.as_deref()
    }

    /// Labels, or a configuration error naming `purpose` when absent.
    pub fn require_labels(&self, purpose: &str) -> Result<&[u16]> {
        self.labels()
            .ok_or_else(|| Error::Config(format!("{purpose} requires a labeled corpus")))
    }

    /// One past the largest label, or 0 for an unlabeled corpus.
    pub fn class_count(&self) -> usize {
        self.labels()
            .and_then(|l| l.iter().max())
            .map_or(0, |&m| m as usize + 1)
    }

    pub fn subset(&self, indices: &[usize]) -> DescriptorCorpus {
        DescriptorCorpus {
            vectors: indices.iter().map(|&i| self.vectors[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Deterministic holdout split: every `k`-th item (index % k == k - 1)
    /// goes to the second corpus.
    pub fn split_every(&self, k: usize) -> (DescriptorCorpus, DescriptorCorpus) {
        assert!(k >= 2, "split_every needs k >= 2");
        let (test, train): (Vec<usize>, Vec<usize>) = (0..self.len()).partition(|i| i % k == k - 1);
        (self.subset(&train), self.subset(&test))
    }

    /// Appends `other`. Labels survive only when both sides carry them.
    pub fn concat(&self, other: &DescriptorCorpus) -> DescriptorCorpus {
        let mut vectors = self.vectors.clone();
        vectors.extend(other.vectors.iter().cloned());
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        DescriptorCorpus { vectors, labels }
    }

    pub fn without_labels(&self) -> DescriptorCorpus {
        DescriptorCorpus::unlabeled(self.vectors.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let count = u32::try_from(self.len())
            .map_err(|_| Error::Config("corpus too large for SFD1".into()))?;
        let mut w = ByteWriter::new();
        w.bytes(&CORPUS_MAGIC);
        w.u8(CORPUS_VERSION);
        w.u8(self.labels.is_some() as u8);
        w.u16(DESCRIPTOR_DIM as u16);
        w.u32(count);
        for v in &self.vectors {
            for &x in v.values() {
                w.f32(x as f32);
            }
        }
        if let Some(labels) = &self.labels {
            for &l in labels {
                w.u16(l);
            }
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<DescriptorCorpus> {
        let mut r = ByteReader::new(bytes, "SFD1 corpus");
        r.magic(&CORPUS_MAGIC)?;
        let version = r.u8()?;
        if version != CORPUS_VERSION {
            return Err(Error::Version(version));
        }
        let has_labels = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::Format(format!("has_labels flag {other}"))),
        };
        let dim = r.u16()? as usize;
        if dim != DESCRIPTOR_DIM {
            return Err(Error::Dimension {
                expected: DESCRIPTOR_DIM,
                found: dim,
            });
        }
        let count = r.u32()? as usize;
        let mut vectors = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let mut values = Vec::with_capacity(DESCRIPTOR_DIM);
            for _ in 0..DESCRIPTOR_DIM {
                values.push(r.f32()? as f64);
            }
            vectors.push(Descriptor::new(values)?);
        }
        let labels = if has_labels {
            Some((0..count).map(|_| r.u16()).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        r.expect_end()?;
        DescriptorCorpus::new(vectors, labels)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<DescriptorCorpus> {
        DescriptorCorpus::from_bytes(&std::fs::read(path)?)
    }
}
