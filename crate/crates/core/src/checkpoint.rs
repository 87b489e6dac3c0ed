//! Shared pieces of the `SFM1` model checkpoint format.
//!
//! Layout (little-endian): magic `SFM1`, `u8` version = 1, `u8` kind
//! (1 codec, 2 expression head, 3 verification head), `u8` segment mask,
//! standardization (`u32` dim, dim f64 means, dim f64 deviations), then a
//! kind-specific body written by the owning module.

use crate::binio::{ByteReader, ByteWriter};
use crate::descriptor::SegmentMask;
use crate::error::{Error, Result};
use crate::standardize::Standardizer;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SFM1";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Codec,
    Expression,
    Verification,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::Codec => 1,
            ModelKind::Expression => 2,
            ModelKind::Verification => 3,
        }
    }

    fn from_tag(tag: u8) -> Result<ModelKind> {
        match tag {
            1 => Ok(ModelKind::Codec),
            2 => Ok(ModelKind::Expression),
            3 => Ok(ModelKind::Verification),
            other => Err(Error::Format(format!("unknown checkpoint kind {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Codec => "codec",
            ModelKind::Expression => "expression head",
            ModelKind::Verification => "verification head",
        }
    }
}

/// Reads only the kind tag, leaving validation of the rest to the owner.
pub fn peek_kind(bytes: &[u8]) -> Result<ModelKind> {
    let mut r = ByteReader::new(bytes, "SFM1 checkpoint");
    r.magic(&CHECKPOINT_MAGIC)?;
    let version = r.u8()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version(version));
    }
    ModelKind::from_tag(r.u8()?)
}

pub(crate) fn write_header(
    w: &mut ByteWriter,
    kind: ModelKind,
    mask: SegmentMask,
    norm: &Standardizer,
) {
    w.bytes(&CHECKPOINT_MAGIC);
    w.u8(CHECKPOINT_VERSION);
    w.u8(kind.tag());
    w.u8(mask.bits());
    w.len_u32(norm.dim());
    w.f64s(norm.mean());
    w.f64s(norm.std());
}

pub(crate) fn read_header(
    r: &mut ByteReader<'_>,
    expected: ModelKind,
) -> Result<(SegmentMask, Standardizer)> {
    r.magic(&CHECKPOINT_MAGIC)?;
    let version = r.u8()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version(version));
    }
    let kind = ModelKind::from_tag(r.u8()?)?;
    if kind != expected {
        return Err(Error::Incompatible(format!(
            "checkpoint holds a {}, expected a {}",
            kind.name(),
            expected.name()
        )));
    }
    let mask_byte = r.u8()?;
    let mask = SegmentMask::from_bits(mask_byte)
        .map_err(|_| Error::Format(format!("invalid segment mask byte {mask_byte:#04x}")))?;
    let dim = r.u32()? as usize;
    if dim > 1 << 16 {
        return Err(Error::Format(format!("standardization width {dim}")));
    }
    let mean = r.f64s(dim)?;
    let std = r.f64s(dim)?;
    Ok((mask, Standardizer::new(mean, std)?))
}
