//! Lossless coding of quantized latents and the `SFC1` container.
//!
//! Integers pass through zigzag, zero-order exp-Golomb and a binary PPM
//! model driving a range coder. Each bitstream is self-contained: model
//! counts start fresh for every descriptor.
//!
//! `SFC1` layout (little-endian): magic `SFC1`, `u8` version = 1, `u8`
//! segment mask, `u16` latent length, `u32` payload bit count, payload.
//! Trailing zero bytes of the coder output are dropped (the decoder reads
//! zeros past the end), so the payload is exactly `ceil(bits / 8)` bytes
//! with the unused low bits of the last byte zero.

mod bits;
mod expgolomb;
mod ppm;
mod range;

use std::path::Path;

pub use bits::BitBuffer;
pub use expgolomb::{exp_golomb_len, read_exp_golomb, unzigzag, write_exp_golomb, zigzag};
pub use ppm::{
    ppm_decode, ppm_encode, ppm_model_cost, PpmDecoder, PpmEncoder, DEFAULT_PPM_ORDER,
    MAX_PPM_ORDER,
};
pub use range::{RangeDecoder, RangeEncoder};

use crate::binio::{ByteReader, ByteWriter};
use crate::descriptor::SegmentMask;
use crate::entropy::LatentCode;
use crate::error::{Error, Result};

pub const BITSTREAM_MAGIC: [u8; 4] = *b"SFC1";
pub const BITSTREAM_VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 12;
pub const ARCHIVE_MAGIC: [u8; 4] = *b"SFCS";

/// Largest accepted latent magnitude.
pub const LATENT_MAGNITUDE_CAP: i64 = 1 << 20;

/// Longest exp-Golomb prefix a capped latent can produce.
const MAX_PREFIX_ZEROS: u32 = 21;

/// One coded descriptor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    mask: SegmentMask,
    latent_len: u16,
    payload_bits: u32,
    payload: Vec<u8>,
}

impl Bitstream {
    pub fn mask(&self) -> SegmentMask {
        self.mask
    }

    pub fn latent_len(&self) -> usize {
        self.latent_len as usize
    }

    /// Significant payload bits, as recorded in the header.
    pub fn payload_bits(&self) -> u64 {
        self.payload_bits as u64
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Serialized size in bits, header included.
    pub fn total_bits(&self) -> u64 {
        8 * (HEADER_BYTES + self.payload.len()) as u64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(&BITSTREAM_MAGIC);
        w.u8(BITSTREAM_VERSION);
        w.u8(self.mask.bits());
        w.u16(self.latent_len);
        w.u32(self.payload_bits);
        w.bytes(&self.payload);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Bitstream> {
        let mut r = ByteReader::new(bytes, "SFC1 bitstream");
        r.magic(&BITSTREAM_MAGIC)?;
        let version = r.u8()?;
        if version != BITSTREAM_VERSION {
            return Err(Error::Version(version));
        }
        let mask_byte = r.u8()?;
        let mask = SegmentMask::from_bits(mask_byte)
            .map_err(|_| Error::Format(format!("invalid segment mask byte {mask_byte:#04x}")))?;
        let latent_len = r.u16()?;
        let payload_bits = r.u32()?;
        let expected = (payload_bits as usize).div_ceil(8);
        let payload = r.take(r.remaining())?.to_vec();
        if payload.len() < expected {
            return Err(Error::Truncated(format!(
                "SFC1 payload: header declares {payload_bits} bits, found {} bytes",
                payload.len()
            )));
        }
        if payload.len() > expected {
            return Err(Error::Format(format!(
                "SFC1 payload: {} bytes beyond the declared {payload_bits} bits",
                payload.len() - expected
            )));
        }
        let spare = expected * 8 - payload_bits as usize;
        if let Some(&last) = payload.last() {
            if spare > 0 && last & ((1u8 << spare) - 1) != 0 {
                return Err(Error::Format(
                    "SFC1 payload padding bits are not zero".into(),
                ));
            }
        }
        Ok(Bitstream {
            mask,
            latent_len,
            payload_bits,
            payload,
        })
    }
}

/// Codes integer latents. Magnitudes above [`LATENT_MAGNITUDE_CAP`] are rejected.
pub fn compress_integers(values: &[i64], mask: SegmentMask) -> Result<Bitstream> {
    let latent_len = u16::try_from(values.len())
        .map_err(|_| Error::Shape(format!("latent length {} exceeds u16", values.len())))?;
    let mut symbols = BitBuffer::new();
    for &v in values {
        if v.unsigned_abs() > LATENT_MAGNITUDE_CAP as u64 {
            return Err(Error::LatentRange {
                value: v,
                cap: LATENT_MAGNITUDE_CAP,
            });
        }
        write_exp_golomb(&mut symbols, zigzag(v));
    }
    let mut payload = ppm_encode(&symbols, DEFAULT_PPM_ORDER)?;
    while payload.last() == Some(&0) {
        payload.pop();
    }
    let payload_bits = match payload.last() {
        Some(&last) => 8 * payload.len() as u32 - last.trailing_zeros(),
        None => 0,
    };
    Ok(Bitstream {
        mask,
        latent_len,
        payload_bits,
        payload,
    })
}

pub fn decompress_integers(stream: &Bitstream) -> Result<Vec<i64>> {
    let mut dec = PpmDecoder::new(&stream.payload, DEFAULT_PPM_ORDER)?;
    let mut values = Vec::with_capacity(stream.latent_len());
    for _ in 0..stream.latent_len() {
        let n = expgolomb::read_exp_golomb_with(MAX_PREFIX_ZEROS, || dec.next_bit())?;
        let v = unzigzag(n);
        if v.abs() > LATENT_MAGNITUDE_CAP {
            return Err(Error::Format(format!(
                "decoded latent {v} exceeds the magnitude cap"
            )));
        }
        values.push(v);
    }
    dec.finish_trimmed()?;
    Ok(values)
}

/// Codes a quantized latent.
pub fn compress_latent(latent: &LatentCode, mask: SegmentMask) -> Result<Bitstream> {
    compress_integers(&latent.to_integers()?, mask)
}

pub fn decompress_latent(stream: &Bitstream) -> Result<(LatentCode, SegmentMask)> {
    let values = decompress_integers(stream)?;
    Ok((LatentCode::from_integers(&values), stream.mask))
}

/// `SFCS`: magic, `u32` count, then `u32`-length-prefixed `SFC1` records.
pub fn archive_to_bytes(streams: &[Bitstream]) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.bytes(&ARCHIVE_MAGIC);
    w.len_u32(streams.len());
    for s in streams {
        let bytes = s.to_bytes();
        w.len_u32(bytes.len());
        w.bytes(&bytes);
    }
    Ok(w.finish())
}

pub fn archive_from_bytes(bytes: &[u8]) -> Result<Vec<Bitstream>> {
    let mut r = ByteReader::new(bytes, "SFCS archive");
    r.magic(&ARCHIVE_MAGIC)?;
    let count = r.u32()? as usize;
    let mut streams = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()? as usize;
        streams.push(Bitstream::from_bytes(r.take(len)?)?);
    }
    r.expect_end()?;
    Ok(streams)
}

pub fn save_archive(streams: &[Bitstream], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, archive_to_bytes(streams)?)?;
    Ok(())
}

pub fn load_archive(path: impl AsRef<Path>) -> Result<Vec<Bitstream>> {
    archive_from_bytes(&std::fs::read(path)?)
}
