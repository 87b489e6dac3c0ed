use rand::Rng;

use crate::error::{Error, Result};

/// Fully connected layer `y = W x + b`, weights stored row-major (out x in).
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Dense> {
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::Shape(format!(
                "dense {inputs}->{outputs} given {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense layer parameters".into()));
        }
        Ok(Dense {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Dense {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn identity(n: usize) -> Dense {
        let mut d = Dense::zeros(n, n);
        for i in 0..n {
            d.weights[i * n + i] = 1.0;
        }
        d
    }

    /// Uniform He initialization: `W ~ U(-sqrt(6/in), sqrt(6/in))`, zero bias.
    pub fn he_uniform(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Dense {
        Dense::scaled_uniform(inputs, outputs, 1.0, rng)
    }

    /// He initialization with the limit multiplied by `gain`.
    pub fn scaled_uniform(inputs: usize, outputs: usize, gain: f64, rng: &mut impl Rng) -> Dense {
        let limit = gain * (6.0 / inputs as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Dense {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs {
            return Err(Error::Shape(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs,
                x.len()
            )));
        }
        Ok(self.apply(x))
    }

    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| dot(row, x) + b)
            .collect()
    }

    /// Accumulates parameter gradients into `grads` and returns dL/dx.
    pub(crate) fn backward(&self, x: &[f64], grad_out: &[f64], grads: &mut Dense) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.inputs];
        for ((row, grow), (&g, gb)) in self
            .weights
            .chunks_exact(self.inputs)
            .zip(grads.weights.chunks_exact_mut(self.inputs))
            .zip(grad_out.iter().zip(grads.bias.iter_mut()))
        {
            if g == 0.0 {
                continue;
            }
            *gb += g;
            axpy(g, x, grow);
            axpy(g, row, &mut grad_in);
        }
        grad_in
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // independent accumulators let the compiler vectorize the loop
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `sum_i (a_i b_i)^2`
#[inline]
pub(crate) fn sum_sq_products(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| (x * y) * (x * y))
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            let p = x[k] * y[k];
            acc[k] += p * p;
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_constant() {
        let x = [1.5, -2.0, 0.25];
        assert_eq!(Dense::identity(3).forward(&x).unwrap(), x);
        let c = Dense::new(3, 2, vec![0.0; 6], vec![4.0, -1.0]).unwrap();
        assert_eq!(c.forward(&x).unwrap(), [4.0, -1.0]);
    }

    #[test]
    fn matches_naive_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (i, o) in [(1, 1), (7, 3), (33, 17), (64, 5)] {
            let mut d = Dense::he_uniform(i, o, &mut rng);
            d.bias
                .iter_mut()
                .for_each(|b| *b = rng.gen_range(-1.0..1.0));
            let x: Vec<f64> = (0..i).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y = d.forward(&x).unwrap();
            for r in 0..o {
                let mut expect = d.bias[r];
                for c in 0..i {
                    expect += d.weights[r * i + c] * x[c];
                }
                assert!((y[r] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            Dense::identity(3).forward(&[1.0]),
            Err(Error::Shape(_))
        ));
        assert!(Dense::new(2, 2, vec![0.0; 3], vec![0.0; 2]).is_err());
    }

    #[test]
    fn linear_squared_loss_gradient_closed_form() {
        // L = |Wx - t|^2, dL/dx = 2 W^T (Wx - t), dL/dW = 2 (Wx - t) x^T
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = Dense::he_uniform(4, 3, &mut rng);
        let x = [0.3, -1.2, 0.8, 2.0];
        let t = [1.0, 0.0, -1.0];
        let y = d.forward(&x).unwrap();
        let r: Vec<f64> = y.iter().zip(&t).map(|(a, b)| a - b).collect();
        let g: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        let mut grads = Dense::zeros(4, 3);
        let gx = d.backward(&x, &g, &mut grads);
        for c in 0..4 {
            let expect: f64 = (0..3).map(|o| 2.0 * d.weights[o * 4 + c] * r[o]).sum();
            assert!((gx[c] - expect).abs() < 1e-12);
        }
        for o in 0..3 {
            for c in 0..4 {
                assert!((grads.weights[o * 4 + c] - 2.0 * r[o] * x[c]).abs() < 1e-12);
            }
        }
    }
}
