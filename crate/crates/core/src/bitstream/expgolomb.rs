//! Zero-order exponential-Golomb codes and the signed zigzag map feeding them.

use crate::bitstream::BitBuffer;
use crate::error::{Error, Result};

/// `0 -> 0, 1 -> 1, -1 -> 2, 2 -> 3, -2 -> 4, ...`
pub fn zigzag(z: i64) -> u64 {
    if z > 0 {
        (z as u64) * 2 - 1
    } else {
        z.unsigned_abs() * 2
    }
}

pub fn unzigzag(n: u64) -> i64 {
    if n % 2 == 1 {
        (n / 2 + 1) as i64
    } else {
        -((n / 2) as i64)
    }
}

/// Code length `2 * floor(log2(n + 1)) + 1`.
pub fn exp_golomb_len(n: u64) -> usize {
    let m = n as u128 + 1;
    2 * (127 - m.leading_zeros() as usize) + 1
}

/// `floor(log2(n + 1))` zeros, then `n + 1` in binary.
pub fn write_exp_golomb(out: &mut BitBuffer, n: u64) {
    assert!(n < u64::MAX, "exp-Golomb input must be below u64::MAX");
    let m = n + 1;
    let width = 64 - m.leading_zeros();
    for _ in 1..width {
        out.push(false);
    }
    out.push_bits(m, width);
}

pub fn read_exp_golomb(input: &mut BitBuffer) -> Result<u64> {
    read_exp_golomb_with(63, || {
        let position = input.position();
        input.read().ok_or(Error::ExpGolombTruncated { position })
    })
}

/// Reads one code from an arbitrary bit source, rejecting prefixes longer
/// than `max_zeros`.
pub(crate) fn read_exp_golomb_with(
    max_zeros: u32,
    mut next: impl FnMut() -> Result<bool>,
) -> Result<u64> {
    debug_assert!(max_zeros < 64);
    let mut zeros = 0u32;
    while !next()? {
        zeros += 1;
        if zeros > max_zeros {
            return Err(Error::Format(format!(
                "exp-Golomb prefix longer than {max_zeros} zeros"
            )));
        }
    }
    let mut m = 1u64;
    for _ in 0..zeros {
        m = (m << 1) | next()? as u64;
    }
    Ok(m - 1)
}
