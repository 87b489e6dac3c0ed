//! Central finite-difference checks of analytic gradients.
//!
//! The probe loss is `sum_i w_i y_i + y_i^2 / 2` with fixed weights
//! `w_i = cos(i + 1)`, so every output coordinate contributes a distinct
//! upstream gradient.

use rand::Rng;

use crate::entropy::{rate_loss_with_grad, ChannelDensities};
use crate::error::Result;
use crate::nn::{Dense, Gdn, Layer, Network, Residual};

/// Gradients smaller than this are compared in absolute terms. Central
/// differences carry round-off of order `eps * |loss| / h`, about 1e-9 at
/// `h = 1e-5`, which would swamp a purely relative measure near zero.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientReport {
    pub max_relative_error: f64,
    pub checked: usize,
}

impl GradientReport {
    fn record(&mut self, analytic: f64, numeric: f64) {
        let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
        self.max_relative_error = self
            .max_relative_error
            .max((analytic - numeric).abs() / scale);
        self.checked += 1;
    }
}

fn probe_loss(y: &[f64]) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let grad = y
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = ((i + 1) as f64).cos();
            loss += w * v + 0.5 * v * v;
            w + v
        })
        .collect();
    (loss, grad)
}

/// Compares backprop against central differences for every parameter and input.
pub fn check_network(net: &Network, x: &[f64], h: f64) -> Result<GradientReport> {
    let (y, trace) = net.forward_traced(x)?;
    let (_, upstream) = probe_loss(&y);
    let mut grads = net.zeros_like();
    let grad_x = net.backward(&trace, &upstream, &mut grads)?;

    let mut report = GradientReport {
        max_relative_error: 0.0,
        checked: 0,
    };
    let mut probe = net.clone();
    let eval = |n: &Network, x: &[f64]| -> Result<f64> { Ok(probe_loss(&n.forward(x)?).0) };
    let analytic: Vec<Vec<f64>> = grads.params().iter().map(|p| p.to_vec()).collect();
    for (t, tensor) in analytic.iter().enumerate() {
        for (i, &a) in tensor.iter().enumerate() {
            let orig = probe.params()[t][i];
            probe.params_mut()[t][i] = orig + h;
            let up = eval(&probe, x)?;
            probe.params_mut()[t][i] = orig - h;
            let down = eval(&probe, x)?;
            probe.params_mut()[t][i] = orig;
            report.record(a, (up - down) / (2.0 * h));
        }
    }
    let mut xp = x.to_vec();
    for (i, &a) in grad_x.iter().enumerate() {
        xp[i] = x[i] + h;
        let up = eval(net, &xp)?;
        xp[i] = x[i] - h;
        let down = eval(net, &xp)?;
        xp[i] = x[i];
        report.record(a, (up - down) / (2.0 * h));
    }
    Ok(report)
}

/// Same check for the rate term with respect to latent values and density parameters.
pub fn check_rate(values: &[f64], densities: &ChannelDensities, h: f64) -> Result<GradientReport> {
    let n = values.len();
    let mut grad_latent = vec![0.0; n];
    let mut grad_densities = densities.zeros_like();
    rate_loss_with_grad(
        values,
        densities,
        1.0,
        &mut grad_latent,
        &mut grad_densities,
    )?;
    let rate = |v: &[f64], d: &ChannelDensities| -> Result<f64> {
        let mut gl = vec![0.0; n];
        let mut gd = d.zeros_like();
        rate_loss_with_grad(v, d, 1.0, &mut gl, &mut gd)
    };

    let mut report = GradientReport {
        max_relative_error: 0.0,
        checked: 0,
    };
    let mut v = values.to_vec();
    for i in 0..n {
        v[i] = values[i] + h;
        let up = rate(&v, densities)?;
        v[i] = values[i] - h;
        let down = rate(&v, densities)?;
        v[i] = values[i];
        report.record(grad_latent[i], (up - down) / (2.0 * h));
    }
    let mut probe = densities.clone();
    let analytic: Vec<Vec<f64>> = grad_densities.params().iter().map(|p| p.to_vec()).collect();
    for (t, tensor) in analytic.iter().enumerate() {
        for (i, &a) in tensor.iter().enumerate() {
            let orig = probe.params()[t][i];
            probe.params_mut()[t][i] = orig + h;
            let up = rate(values, &probe)?;
            probe.params_mut()[t][i] = orig - h;
            let down = rate(values, &probe)?;
            probe.params_mut()[t][i] = orig;
            report.record(a, (up - down) / (2.0 * h));
        }
    }
    Ok(report)
}

fn random_gdn(n: usize, inverse: bool, rng: &mut impl Rng) -> Gdn {
    let beta = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let gamma = (0..n * n).map(|_| rng.gen_range(0.0..0.5)).collect();
    Gdn::from_params(beta, gamma, inverse).expect("sampled parameters are valid")
}

fn random_dense(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Dense {
    let mut d = Dense::he_uniform(inputs, outputs, rng);
    for b in &mut d.bias {
        *b = rng.gen_range(-0.5..0.5);
    }
    d
}

/// A small random network exercising dense, ReLU, GDN, IGDN and both
/// residual shortcut kinds. Widths are between 2 and 6.
pub fn sample_network(input_width: usize, rng: &mut impl Rng) -> Network {
    let h = rng.gen_range(2..=6);
    let k = rng.gen_range(2..=6);
    let out = rng.gen_range(1..=4);
    let layers = vec![
        Layer::Dense(random_dense(input_width, h, rng)),
        Layer::Gdn(random_gdn(h, false, rng)),
        Layer::Residual(Residual::new(
            vec![
                Layer::Dense(random_dense(h, h, rng)),
                Layer::Relu,
                Layer::Dense(random_dense(h, h, rng)),
            ],
            None,
        )),
        Layer::Residual(Residual::new(
            vec![Layer::Dense(random_dense(h, k, rng)), Layer::Relu],
            Some(random_dense(h, k, rng)),
        )),
        Layer::Gdn(random_gdn(k, true, rng)),
        Layer::Dense(random_dense(k, out, rng)),
    ];
    Network::new(input_width, layers).expect("widths chain")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_networks_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..20 {
            let width = rng.gen_range(2..=5);
            let net = sample_network(width, &mut rng);
            let x: Vec<f64> = (0..width).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let r = check_network(&net, &x, 1e-5).unwrap();
            assert!(r.max_relative_error < 1e-4, "{r:?}");
            assert_eq!(r.checked, net.param_count() + width);
        }
    }

    #[test]
    fn rate_term_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 16;
        let loc = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scale = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
        let d = ChannelDensities::from_params(loc, scale).unwrap();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let r = check_rate(&v, &d, 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
        assert_eq!(r.checked, 3 * n);
    }

    #[test]
    fn two_layer_dense_gdn() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let net = Network::new(
            3,
            vec![
                Layer::Dense(random_dense(3, 4, &mut rng)),
                Layer::Gdn(random_gdn(4, false, &mut rng)),
            ],
        )
        .unwrap();
        let r = check_network(&net, &[0.3, -0.8, 1.1], 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }
}
