//! 32-bit carry-propagating range coder over cumulative frequencies.
//!
//! The encoder's first output byte is always zero and is not written; the
//! final flush emits only as many bytes as are needed to pin a value inside
//! the last interval. The decoder pads reads past the end with zeros and
//! can verify afterwards that it consumed exactly the bytes it was given.

use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    skip_first: bool,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        RangeEncoder::new()
    }
}

impl RangeEncoder {
    pub fn new() -> RangeEncoder {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            skip_first: true,
            out: Vec::new(),
        }
    }

    /// Narrows to `[cum, cum + freq)` out of `total`. Requires `freq > 0`,
    /// `cum + freq <= total` and `total <= 2^17`.
    pub fn encode(&mut self, cum: u32, freq: u32, total: u32) {
        debug_assert!(freq > 0 && cum + freq <= total && total <= (1 << 17));
        let r = self.range / total;
        self.low += r as u64 * cum as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low > 0xFFFF_FFFF {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.emit(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    fn emit(&mut self, byte: u8) {
        if self.skip_first {
            debug_assert_eq!(byte, 0);
            self.skip_first = false;
        } else {
            self.out.push(byte);
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        // range >= 2^24, so a multiple of 2^24 lies in [low, low + range)
        self.low = (self.low + 0x00FF_FFFF) & !0x00FF_FFFF;
        self.shift_low();
        self.shift_low();
        self.out
    }
}

pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
    step: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> RangeDecoder<'a> {
        let mut d = RangeDecoder {
            data,
            pos: 0,
            code: 0,
            range: u32::MAX,
            step: 0,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte() as u32;
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.data.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Scaled target in `[0, total)`; must be followed by [`Self::decode`].
    pub fn target(&mut self, total: u32) -> Result<u32> {
        self.step = self.range / total;
        let v = self.code / self.step;
        if v >= total {
            return Err(Error::Format(
                "range decoder left the coding interval".into(),
            ));
        }
        Ok(v)
    }

    pub fn decode(&mut self, cum: u32, freq: u32) {
        self.code -= self.step * cum;
        self.range = self.step * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next_byte() as u32;
        }
    }

    /// Bytes of encoder output the decoder has logically consumed so far.
    fn consumed(&self) -> usize {
        self.pos - 3
    }

    /// Accepts a stream whose trailing zero bytes were dropped, rejecting
    /// bytes the decoder never reached.
    pub fn finish_trimmed(self) -> Result<()> {
        if self.data.len() > self.consumed() {
            return Err(Error::Format(format!(
                "range-coded payload: {} trailing bytes",
                self.data.len() - self.consumed()
            )));
        }
        Ok(())
    }

    /// Checks that the stream length matches what the encoder would have produced.
    pub fn finish(self) -> Result<()> {
        let expected = self.consumed();
        match expected.cmp(&self.data.len()) {
            std::cmp::Ordering::Equal => Ok(()),
            std::cmp::Ordering::Greater => Err(Error::Truncated(format!(
                "range-coded payload: expected {expected} bytes, found {}",
                self.data.len()
            ))),
            std::cmp::Ordering::Less => Err(Error::Format(format!(
                "range-coded payload: {} trailing bytes",
                self.data.len() - expected
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_random_intervals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..200 {
            let n = rng.gen_range(1..400);
            let symbols: Vec<(u32, u32, u32)> = (0..n)
                .map(|_| {
                    let total = rng.gen_range(2..60_000);
                    let freq = if trial % 3 == 0 {
                        1
                    } else {
                        rng.gen_range(1..=total)
                    };
                    let cum = rng.gen_range(0..=total - freq);
                    (cum, freq, total)
                })
                .collect();
            let mut enc = RangeEncoder::new();
            for &(c, f, t) in &symbols {
                enc.encode(c, f, t);
            }
            let bytes = enc.finish();
            let mut dec = RangeDecoder::new(&bytes);
            for &(c, f, t) in &symbols {
                let v = dec.target(t).unwrap();
                assert!(v >= c && v < c + f);
                dec.decode(c, f);
            }
            dec.finish().unwrap();
        }
    }

    #[test]
    fn carry_heavy_stream() {
        // always taking the top sliver pushes low towards 0xFF.. repeatedly
        let mut enc = RangeEncoder::new();
        for _ in 0..5000 {
            enc.encode(65_534, 1, 65_535);
        }
        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes);
        for _ in 0..5000 {
            assert_eq!(dec.target(65_535).unwrap(), 65_534);
            dec.decode(65_534, 1);
        }
        dec.finish().unwrap();
    }

    #[test]
    fn length_checks() {
        let mut enc = RangeEncoder::new();
        for i in 0..100 {
            enc.encode(i % 7, 1, 11);
        }
        let bytes = enc.finish();
        let run = |data: &[u8]| -> Result<()> {
            let mut dec = RangeDecoder::new(data);
            for _ in 0..100 {
                let v = dec.target(11)?;
                dec.decode(v, 1);
            }
            dec.finish()
        };
        run(&bytes).unwrap();
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(run(&longer), Err(Error::Format(_))));
        assert!(matches!(
            run(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated(_)) | Err(Error::Format(_))
        ));
    }
}
