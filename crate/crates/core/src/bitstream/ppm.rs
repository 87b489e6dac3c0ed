//! Binary prediction by partial matching with escape method C.
//!
//! Contexts are the last 0..=max_order bits. Coding starts at the longest
//! available context and escapes downward; symbols seen in a context that
//! escaped are excluded below it. A context that has already seen both
//! bits codes without an escape interval. After the order-0 context the
//! remaining symbols are coded uniformly. Every context along the path is
//! updated, and counts are halved once any reaches the rescale limit.

use crate::bitstream::range::{RangeDecoder, RangeEncoder};
use crate::bitstream::BitBuffer;
use crate::error::{Error, Result};

pub const DEFAULT_PPM_ORDER: usize = 8;
pub const MAX_PPM_ORDER: usize = 20;
const RESCALE_LIMIT: u32 = 1 << 16;

struct Model {
    max_order: usize,
    counts: Vec<[u32; 2]>,
    history: u64,
    seen: usize,
}

/// What the coder does in one context for one bit.
enum Step {
    /// Context has no usable symbols.
    Skip,
    /// Interval `[cum, cum + freq)` out of `total`.
    Code { cum: u32, freq: u32, total: u32 },
}

/// Interval layout in a context: bit 0, bit 1, escape.
struct Layout {
    freq: [u32; 2],
    escape: u32,
}

impl Layout {
    fn total(&self) -> u32 {
        self.freq[0] + self.freq[1] + self.escape
    }
}

impl Model {
    fn new(max_order: usize) -> Model {
        Model {
            max_order,
            counts: vec![[0; 2]; (2usize << max_order) - 1],
            history: 0,
            seen: 0,
        }
    }

    fn top_order(&self) -> usize {
        self.max_order.min(self.seen)
    }

    fn slot(&self, order: usize) -> usize {
        (1usize << order) - 1 + (self.history & ((1u64 << order) - 1)) as usize
    }

    fn layout(&self, order: usize, excluded: [bool; 2]) -> Option<Layout> {
        let c = self.counts[self.slot(order)];
        let freq = [
            if excluded[0] { 0 } else { c[0] },
            if excluded[1] { 0 } else { c[1] },
        ];
        let seen = freq.iter().filter(|&&f| f > 0).count() as u32;
        if seen == 0 {
            return None;
        }
        let unseen = (0..2).filter(|&b| freq[b] == 0 && !excluded[b]).count();
        let escape = if unseen > 0 { seen } else { 0 };
        Some(Layout { freq, escape })
    }

    fn update(&mut self, bit: bool) {
        let b = bit as usize;
        for order in 0..=self.top_order() {
            let slot = self.slot(order);
            let c = &mut self.counts[slot];
            c[b] += 1;
            if c[b] >= RESCALE_LIMIT {
                // round up so a seen symbol stays seen
                c[0] = c[0].div_ceil(2);
                c[1] = c[1].div_ceil(2);
            }
        }
        self.history = (self.history << 1) | b as u64;
        self.seen = self.seen.saturating_add(1);
    }

    /// The sequence of coding steps needed to transmit `bit`.
    fn plan(&self, bit: bool, mut visit: impl FnMut(Step)) {
        let b = bit as usize;
        let mut excluded = [false; 2];
        for order in (0..=self.top_order()).rev() {
            let Some(l) = self.layout(order, excluded) else {
                visit(Step::Skip);
                continue;
            };
            let total = l.total();
            if l.freq[b] > 0 {
                let cum = if b == 0 { 0 } else { l.freq[0] };
                visit(Step::Code {
                    cum,
                    freq: l.freq[b],
                    total,
                });
                return;
            }
            visit(Step::Code {
                cum: l.freq[0] + l.freq[1],
                freq: l.escape,
                total,
            });
            excluded[0] |= l.freq[0] > 0;
            excluded[1] |= l.freq[1] > 0;
        }
        if !excluded[0] && !excluded[1] {
            visit(Step::Code {
                cum: b as u32,
                freq: 1,
                total: 2,
            });
        }
    }

    fn decode_bit(&self, dec: &mut RangeDecoder<'_>) -> Result<bool> {
        let mut excluded = [false; 2];
        for order in (0..=self.top_order()).rev() {
            let Some(l) = self.layout(order, excluded) else {
                continue;
            };
            let v = dec.target(l.total())?;
            if v < l.freq[0] {
                dec.decode(0, l.freq[0]);
                return Ok(false);
            }
            if v < l.freq[0] + l.freq[1] {
                dec.decode(l.freq[0], l.freq[1]);
                return Ok(true);
            }
            dec.decode(l.freq[0] + l.freq[1], l.escape);
            excluded[0] |= l.freq[0] > 0;
            excluded[1] |= l.freq[1] > 0;
        }
        match excluded {
            [false, false] => {
                let v = dec.target(2)?;
                dec.decode(v, 1);
                Ok(v == 1)
            }
            [true, false] => Ok(true),
            [false, true] => Ok(false),
            [true, true] => Err(Error::Format("ppm escaped past every symbol".into())),
        }
    }
}

fn check_order(max_order: usize) -> Result<()> {
    if max_order > MAX_PPM_ORDER {
        return Err(Error::Config(format!(
            "ppm order {max_order} exceeds {MAX_PPM_ORDER}"
        )));
    }
    Ok(())
}

/// Incremental compressor for one stream.
pub struct PpmEncoder {
    model: Model,
    coder: RangeEncoder,
    bits: usize,
}

impl PpmEncoder {
    pub fn new(max_order: usize) -> Result<PpmEncoder> {
        check_order(max_order)?;
        Ok(PpmEncoder {
            model: Model::new(max_order),
            coder: RangeEncoder::new(),
            bits: 0,
        })
    }

    pub fn push(&mut self, bit: bool) {
        let coder = &mut self.coder;
        self.model.plan(bit, |step| {
            if let Step::Code { cum, freq, total } = step {
                coder.encode(cum, freq, total);
            }
        });
        self.model.update(bit);
        self.bits += 1;
    }

    /// Coded bytes. No bits pushed means no bytes.
    pub fn finish(self) -> Vec<u8> {
        if self.bits == 0 {
            return Vec::new();
        }
        self.coder.finish()
    }
}

/// Incremental decompressor; the caller decides how many bits to pull.
pub struct PpmDecoder<'a> {
    model: Model,
    coder: RangeDecoder<'a>,
}

impl<'a> PpmDecoder<'a> {
    pub fn new(payload: &'a [u8], max_order: usize) -> Result<PpmDecoder<'a>> {
        check_order(max_order)?;
        Ok(PpmDecoder {
            model: Model::new(max_order),
            coder: RangeDecoder::new(payload),
        })
    }

    pub fn next_bit(&mut self) -> Result<bool> {
        let bit = self.model.decode_bit(&mut self.coder)?;
        self.model.update(bit);
        Ok(bit)
    }

    /// Requires the payload to be exactly what the encoder produced.
    pub fn finish(self) -> Result<()> {
        self.coder.finish()
    }

    /// Like [`Self::finish`], but tolerates trailing zero bytes having been dropped.
    pub fn finish_trimmed(self) -> Result<()> {
        self.coder.finish_trimmed()
    }
}

/// Compresses a bit sequence. An empty input yields an empty payload.
pub fn ppm_encode(bits: &BitBuffer, max_order: usize) -> Result<Vec<u8>> {
    let mut enc = PpmEncoder::new(max_order)?;
    for &bit in bits.as_slice() {
        enc.push(bit);
    }
    Ok(enc.finish())
}

/// Decodes exactly `bit_count` bits and requires the payload to be consumed exactly.
pub fn ppm_decode(payload: &[u8], bit_count: usize, max_order: usize) -> Result<BitBuffer> {
    check_order(max_order)?;
    if bit_count == 0 {
        if payload.is_empty() {
            return Ok(BitBuffer::new());
        }
        return Err(Error::Format(format!(
            "{} payload bytes for an empty bit sequence",
            payload.len()
        )));
    }
    if payload.is_empty() {
        return Err(Error::Truncated("empty ppm payload".into()));
    }
    let mut dec = PpmDecoder::new(payload, max_order)?;
    let mut out = BitBuffer::with_capacity(bit_count);
    for _ in 0..bit_count {
        out.push(dec.next_bit()?);
    }
    dec.finish()?;
    Ok(out)
}

/// Ideal code length in bits under the adaptive model, without range-coder overhead.
pub fn ppm_model_cost(bits: &BitBuffer, max_order: usize) -> Result<f64> {
    check_order(max_order)?;
    let mut model = Model::new(max_order);
    let mut cost = 0.0;
    for &bit in bits.as_slice() {
        model.plan(bit, |step| {
            if let Step::Code { freq, total, .. } = step {
                cost -= (freq as f64 / total as f64).log2();
            }
        });
        model.update(bit);
    }
    Ok(cost)
}
