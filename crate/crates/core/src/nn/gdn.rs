//! Generalized divisive normalization over a dense vector.
//!
//! ```text
//! GDN:  y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2)
//! IGDN: y_i = x_i * sqrt(beta_i + sum_j gamma_ij x_j^2)
//! ```
//!
//! `beta` and `gamma` are stored as unconstrained surrogates:
//! `beta = beta_raw^2 + BETA_MIN`, `gamma = gamma_raw^2`.

use crate::error::{Error, Result};
use crate::nn::dense::sum_sq_products;

pub const BETA_MIN: f64 = 1e-6;

/// Initial off-diagonal `gamma`. Nonzero so that the surrogate gradient
/// `2 * gamma_raw` does not pin the off-diagonal terms at zero forever.
const GAMMA_OFF_DIAGONAL_INIT: f64 = 1e-4;
const GAMMA_DIAGONAL_INIT: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct Gdn {
    n: usize,
    inverse: bool,
    pub(crate) beta_raw: Vec<f64>,
    /// Row-major n x n.
    pub(crate) gamma_raw: Vec<f64>,
}

impl Gdn {
    /// Standard initialization: `beta = 1`, `gamma = 0.1 I` plus a small
    /// off-diagonal floor.
    pub fn new(n: usize, inverse: bool) -> Gdn {
        let mut gamma = vec![GAMMA_OFF_DIAGONAL_INIT; n * n];
        for i in 0..n {
            gamma[i * n + i] = GAMMA_DIAGONAL_INIT;
        }
        Gdn::from_params(vec![1.0; n], gamma, inverse).expect("valid default parameters")
    }

    /// `beta = 1`, `gamma = 0`: the identity map in both directions.
    pub fn identity(n: usize, inverse: bool) -> Gdn {
        Gdn::from_params(vec![1.0; n], vec![0.0; n * n], inverse).expect("valid parameters")
    }

    /// Builds a layer from effective parameters (`beta > BETA_MIN`, `gamma >= 0`).
    pub fn from_params(beta: Vec<f64>, gamma: Vec<f64>, inverse: bool) -> Result<Gdn> {
        let n = beta.len();
        if gamma.len() != n * n {
            return Err(Error::Shape(format!(
                "gdn with {n} channels given {} gamma entries",
                gamma.len()
            )));
        }
        if beta.iter().any(|&b| !(b.is_finite() && b >= BETA_MIN)) {
            return Err(Error::Config(format!("gdn beta must be >= {BETA_MIN}")));
        }
        if gamma.iter().any(|&g| !(g.is_finite() && g >= 0.0)) {
            return Err(Error::Config("gdn gamma must be non-negative".into()));
        }
        Ok(Gdn {
            n,
            inverse,
            beta_raw: beta.iter().map(|b| (b - BETA_MIN).sqrt()).collect(),
            gamma_raw: gamma.iter().map(|g| g.sqrt()).collect(),
        })
    }

    pub(crate) fn from_raw(beta_raw: Vec<f64>, gamma_raw: Vec<f64>, inverse: bool) -> Result<Gdn> {
        let n = beta_raw.len();
        if gamma_raw.len() != n * n {
            return Err(Error::Shape(format!(
                "gdn with {n} channels given {} gamma entries",
                gamma_raw.len()
            )));
        }
        if beta_raw.iter().chain(&gamma_raw).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gdn parameters".into()));
        }
        Ok(Gdn {
            n,
            inverse,
            beta_raw,
            gamma_raw,
        })
    }

    pub(crate) fn zeros_like(&self) -> Gdn {
        Gdn {
            n: self.n,
            inverse: self.inverse,
            beta_raw: vec![0.0; self.n],
            gamma_raw: vec![0.0; self.n * self.n],
        }
    }

    pub fn width(&self) -> usize {
        self.n
    }

    pub fn is_inverse(&self) -> bool {
        self.inverse
    }

    pub fn beta(&self) -> Vec<f64> {
        self.beta_raw.iter().map(|r| r * r + BETA_MIN).collect()
    }

    pub fn gamma(&self) -> Vec<f64> {
        self.gamma_raw.iter().map(|r| r * r).collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::Shape(format!(
                "gdn layer expects {} inputs, got {}",
                self.n,
                x.len()
            )));
        }
        Ok(self.apply(x)?.0)
    }

    /// Output together with the per-channel norms `sqrt(beta_i + sum_j gamma_ij x_j^2)`.
    pub(crate) fn apply(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let norms: Vec<f64> = self
            .gamma_raw
            .chunks_exact(self.n)
            .zip(&self.beta_raw)
            .map(|(row, b)| {
                // gamma_ij x_j^2 == (gamma_raw_ij x_j)^2
                let acc = sum_sq_products(row, x);
                (b * b + BETA_MIN + acc).sqrt()
            })
            .collect();
        let y: Vec<f64> = if self.inverse {
            x.iter().zip(&norms).map(|(v, s)| v * s).collect()
        } else {
            x.iter().zip(&norms).map(|(v, s)| v / s).collect()
        };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gdn output".into()));
        }
        Ok((y, norms))
    }

    /// Accumulates surrogate-parameter gradients into `grads`, returns dL/dx.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        norms: &[f64],
        grad_out: &[f64],
        grads: &mut Gdn,
    ) -> Vec<f64> {
        let n = self.n;
        // coef_i = dL/d(norm_i^2): GDN -> -g_i x_i / (2 s_i^3), IGDN -> g_i x_i / (2 s_i)
        let coef: Vec<f64> = (0..n)
            .map(|i| {
                let s = norms[i];
                if self.inverse {
                    grad_out[i] * x[i] / (2.0 * s)
                } else {
                    -grad_out[i] * x[i] / (2.0 * s * s * s)
                }
            })
            .collect();
        let mut grad_in: Vec<f64> = (0..n)
            .map(|k| {
                if self.inverse {
                    grad_out[k] * norms[k]
                } else {
                    grad_out[k] / norms[k]
                }
            })
            .collect();
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        // sum_i coef_i gamma_ik, then times 2 x_k
        let mut weighted = vec![0.0; n];
        for i in 0..n {
            let c = coef[i];
            if c == 0.0 {
                continue;
            }
            grads.beta_raw[i] += c * 2.0 * self.beta_raw[i];
            let raw_row = &self.gamma_raw[i * n..(i + 1) * n];
            let grad_row = &mut grads.gamma_raw[i * n..(i + 1) * n];
            // d gamma_ij = c x_j^2, d gamma_raw_ij = 2 gamma_raw_ij c x_j^2
            let c2 = 2.0 * c;
            for ((gr, r), s) in grad_row.iter_mut().zip(raw_row).zip(&sq) {
                *gr += c2 * r * s;
            }
            for (w, r) in weighted.iter_mut().zip(raw_row) {
                *w += c * (r * r);
            }
        }
        for k in 0..n {
            grad_in[k] += 2.0 * x[k] * weighted[k];
        }
        grad_in
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_parameters_pass_through() {
        let x = [0.5, -3.0, 2.0];
        for inverse in [false, true] {
            let y = Gdn::identity(3, inverse).forward(&x).unwrap();
            for (a, b) in y.iter().zip(&x) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_gamma_closed_form() {
        let mut gamma = vec![0.0; 9];
        for i in 0..3 {
            gamma[i * 3 + i] = 1.0;
        }
        let g = Gdn::from_params(vec![1.0; 3], gamma, false).unwrap();
        for y in g.forward(&[1.0; 3]).unwrap() {
            assert!((y - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn igdn_inverts_gdn_with_shared_beta() {
        // with gamma = 0 both directions are a per-channel scaling by sqrt(beta)
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.gen_range(1..12);
            let beta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..4.0)).collect();
            let fwd = Gdn::from_params(beta.clone(), vec![0.0; n * n], false).unwrap();
            let inv = Gdn::from_params(beta, vec![0.0; n * n], true).unwrap();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let back = inv.forward(&fwd.forward(&x).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn igdn_after_gdn_with_diagonal_gamma_closed_form() {
        // y = x / sqrt(1 + g x^2), IGDN(y) = x sqrt(1 + 2 g x^2) / (1 + g x^2)
        let g = 0.3;
        let fwd = Gdn::from_params(vec![1.0], vec![g], false).unwrap();
        let inv = Gdn::from_params(vec![1.0], vec![g], true).unwrap();
        for x in [-2.0, -0.5, 0.0, 0.7, 3.0] {
            let got = inv.forward(&fwd.forward(&[x]).unwrap()).unwrap()[0];
            let expect = x * (1.0 + 2.0 * g * x * x).sqrt() / (1.0 + g * x * x);
            assert!((got - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_bounded_by_beta_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let beta: Vec<f64> = (0..n).map(|_| rng.gen_range(BETA_MIN..1.0)).collect();
        let gamma: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let g = Gdn::from_params(beta, gamma, false).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        for (y, x) in g.forward(&x).unwrap().iter().zip(&x) {
            assert!(y.abs() <= x.abs() / BETA_MIN.sqrt());
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(Gdn::from_params(vec![0.0], vec![0.0], false).is_err());
        assert!(Gdn::from_params(vec![1.0], vec![-1.0], false).is_err());
        assert!(Gdn::from_params(vec![1.0, 1.0], vec![0.0], false).is_err());
    }
}
