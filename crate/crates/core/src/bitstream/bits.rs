use std::fmt;

/// Append-only bit sequence with a read cursor.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitBuffer {
    bits: Vec<bool>,
    cursor: usize,
}

impl BitBuffer {
    pub fn new() -> BitBuffer {
        BitBuffer::default()
    }

    pub fn with_capacity(n: usize) -> BitBuffer {
        BitBuffer {
            bits: Vec::with_capacity(n),
            cursor: 0,
        }
    }

    /// Parses a string of `0`/`1` characters; anything else is ignored.
    pub fn from_bit_str(s: &str) -> BitBuffer {
        BitBuffer {
            bits: s
                .chars()
                .filter_map(|c| match c {
                    '0' => Some(false),
                    '1' => Some(true),
                    _ => None,
                })
                .collect(),
            cursor: 0,
        }
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, width: u32) {
        for i in (0..width).rev() {
            self.bits.push((value >> i) & 1 == 1);
        }
    }

    pub fn read(&mut self) -> Option<bool> {
        let bit = self.bits.get(self.cursor).copied()?;
        self.cursor += 1;
        Some(bit)
    }

    pub fn position(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.cursor
    }

    pub fn rewind(&mut self) {
        self.cursor = 0;
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }
}

impl From<Vec<bool>> for BitBuffer {
    fn from(bits: Vec<bool>) -> Self {
        BitBuffer { bits, cursor: 0 }
    }
}

impl fmt::Display for BitBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}
