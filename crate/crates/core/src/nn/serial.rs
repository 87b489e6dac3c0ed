//! Network layout inside `SFM1` checkpoints.
//!
//! `u32` input width, `u32` layer count, then per layer a `u8` kind tag:
//! 1 dense (`u32` in, `u32` out, weights, bias), 2 relu,
//! 3 gdn (`u8` inverse, `u32` n, beta surrogate, gamma surrogate),
//! 4 residual (`u32` inner count, inner layers, `u8` has projection,
//! projection as a dense body). Parameters are f64.

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::nn::{Dense, Gdn, Layer, Network, Residual};

const TAG_DENSE: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_GDN: u8 = 3;
const TAG_RESIDUAL: u8 = 4;

// guards against absurd allocations from corrupt headers
const MAX_WIDTH: usize = 1 << 16;
const MAX_DEPTH: usize = 8;

pub(crate) fn write_network(w: &mut ByteWriter, net: &Network) {
    w.len_u32(net.input_width());
    write_layers(w, net.layers());
}

fn write_layers(w: &mut ByteWriter, layers: &[Layer]) {
    w.len_u32(layers.len());
    for layer in layers {
        match layer {
            Layer::Dense(d) => {
                w.u8(TAG_DENSE);
                write_dense(w, d);
            }
            Layer::Relu => w.u8(TAG_RELU),
            Layer::Gdn(g) => {
                w.u8(TAG_GDN);
                w.u8(g.is_inverse() as u8);
                w.len_u32(g.width());
                w.f64s(&g.beta_raw);
                w.f64s(&g.gamma_raw);
            }
            Layer::Residual(r) => {
                w.u8(TAG_RESIDUAL);
                write_layers(w, r.inner());
                match r.projection() {
                    Some(p) => {
                        w.u8(1);
                        write_dense(w, p);
                    }
                    None => w.u8(0),
                }
            }
        }
    }
}

fn write_dense(w: &mut ByteWriter, d: &Dense) {
    w.len_u32(d.inputs());
    w.len_u32(d.outputs());
    w.f64s(d.weights());
    w.f64s(d.bias());
}

pub(crate) fn read_network(r: &mut ByteReader<'_>) -> Result<Network> {
    let input = read_width(r)?;
    let layers = read_layers(r, 0)?;
    Network::new(input, layers)
}

fn read_width(r: &mut ByteReader<'_>) -> Result<usize> {
    let n = r.u32()? as usize;
    if n == 0 || n > MAX_WIDTH {
        return Err(Error::Format(format!("layer width {n} out of range")));
    }
    Ok(n)
}

fn read_layers(r: &mut ByteReader<'_>, depth: usize) -> Result<Vec<Layer>> {
    if depth > MAX_DEPTH {
        return Err(Error::Format("residual nesting too deep".into()));
    }
    let count = r.u32()? as usize;
    if count > 4096 {
        return Err(Error::Format(format!("layer count {count} out of range")));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let layer = match r.u8()? {
            TAG_DENSE => Layer::Dense(read_dense(r)?),
            TAG_RELU => Layer::Relu,
            TAG_GDN => {
                let inverse = match r.u8()? {
                    0 => false,
                    1 => true,
                    v => return Err(Error::Format(format!("gdn inverse flag {v}"))),
                };
                let n = read_width(r)?;
                let beta = r.f64s(n)?;
                let gamma = r.f64s(n * n)?;
                Layer::Gdn(Gdn::from_raw(beta, gamma, inverse)?)
            }
            TAG_RESIDUAL => {
                let inner = read_layers(r, depth + 1)?;
                let projection = match r.u8()? {
                    0 => None,
                    1 => Some(read_dense(r)?),
                    v => return Err(Error::Format(format!("residual projection flag {v}"))),
                };
                Layer::Residual(Residual::new(inner, projection))
            }
            tag => return Err(Error::Format(format!("unknown layer tag {tag}"))),
        };
        layers.push(layer);
    }
    Ok(layers)
}

fn read_dense(r: &mut ByteReader<'_>) -> Result<Dense> {
    let inputs = read_width(r)?;
    let outputs = read_width(r)?;
    let weights = r.f64s(inputs * outputs)?;
    let bias = r.f64s(outputs)?;
    Dense::new(inputs, outputs, weights, bias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::new(
            5,
            vec![
                Layer::Dense(Dense::he_uniform(5, 7, &mut rng)),
                Layer::Gdn(Gdn::new(7, false)),
                Layer::Residual(Residual::new(
                    vec![
                        Layer::Dense(Dense::he_uniform(7, 7, &mut rng)),
                        Layer::Relu,
                        Layer::Dense(Dense::he_uniform(7, 4, &mut rng)),
                    ],
                    Some(Dense::he_uniform(7, 4, &mut rng)),
                )),
                Layer::Gdn(Gdn::new(4, true)),
            ],
        )
        .unwrap();
        let mut w = ByteWriter::new();
        write_network(&mut w, &net);
        let bytes = w.finish();
        let back = read_network(&mut ByteReader::new(&bytes, "test")).unwrap();
        assert_eq!(back, net);
        let mut w2 = ByteWriter::new();
        write_network(&mut w2, &back);
        assert_eq!(w2.finish(), bytes);
        assert!(read_network(&mut ByteReader::new(&bytes[..bytes.len() - 3], "test")).is_err());
    }
}
