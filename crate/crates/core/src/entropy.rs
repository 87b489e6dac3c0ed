//! Differentiable rate model for the latent code.
//!
//! Each latent channel has a logistic density with learned location and
//! scale. The probability of a (quantized or noisy) value `y` is the mass of
//! the unit interval around it, `P(y - 0.5 < Y <= y + 0.5)`, and the rate is
//! `-log2` of that mass summed over channels. During training, rounding is
//! replaced by additive `U(-0.5, 0.5)` noise.

use rand::Rng;

use crate::error::{Error, Result};

/// Width of the latent code produced by the descriptor codec.
pub const LATENT_WIDTH: usize = 256;
/// Lower bound on every channel scale.
pub const SCALE_MIN: f64 = 1e-4;
/// Lower bound on interval masses (2^-64); caps the rate at 64 bits per channel.
pub const PROB_MIN: f64 = 5.421_010_862_427_522e-20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentStage {
    /// Encoder output.
    Continuous,
    /// Training surrogate with additive uniform noise.
    Noisy,
    /// Rounded to integers.
    Quantized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    values: Vec<f64>,
    stage: LatentStage,
}

impl LatentCode {
    pub fn continuous(values: Vec<f64>) -> LatentCode {
        LatentCode {
            values,
            stage: LatentStage::Continuous,
        }
    }

    pub fn from_integers(values: &[i64]) -> LatentCode {
        LatentCode {
            values: values.iter().map(|&v| v as f64).collect(),
            stage: LatentStage::Quantized,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stage(&self) -> LatentStage {
        self.stage
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn require(&self, expected: LatentStage) -> Result<()> {
        if self.stage != expected {
            return Err(Error::Stage {
                expected,
                found: self.stage,
            });
        }
        Ok(())
    }

    /// Integer values of a quantized code.
    pub fn to_integers(&self) -> Result<Vec<i64>> {
        self.require(LatentStage::Quantized)?;
        Ok(self.values.iter().map(|&v| v as i64).collect())
    }
}

/// Adds independent `U(-0.5, 0.5)` noise to every element.
pub fn add_uniform_noise(latent: &LatentCode, rng: &mut impl Rng) -> Result<LatentCode> {
    latent.require(LatentStage::Continuous)?;
    Ok(LatentCode {
        values: latent
            .values
            .iter()
            .map(|v| v + (rng.gen::<f64>() - 0.5))
            .collect(),
        stage: LatentStage::Noisy,
    })
}

/// Element-wise round, ties away from zero.
pub fn quantize_round(latent: &LatentCode) -> Result<LatentCode> {
    latent.require(LatentStage::Continuous)?;
    if let Some(i) = latent.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("latent channel {i}")));
    }
    Ok(LatentCode {
        values: latent.values.iter().map(|v| v.round()).collect(),
        stage: LatentStage::Quantized,
    })
}

#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp()).ln_1p()
}

/// Mass of `(y - 0.5, y + 0.5]` under a logistic(loc, scale), without the floor.
#[inline]
fn raw_interval_mass(y: f64, loc: f64, scale: f64) -> f64 {
    let centered = y - loc;
    let lo = (centered - 0.5) / scale;
    let hi = (centered + 0.5) / scale;
    // subtract in whichever tail keeps both terms small
    if centered > 0.0 {
        sigmoid(-lo) - sigmoid(-hi)
    } else {
        sigmoid(hi) - sigmoid(lo)
    }
}

/// `P(y - 0.5 < Y <= y + 0.5)` for `Y ~ logistic(loc, scale)`, floored at [`PROB_MIN`].
pub fn logistic_interval_mass(y: f64, loc: f64, scale: f64) -> f64 {
    raw_interval_mass(y, loc, scale).max(PROB_MIN)
}

/// Per-channel logistic densities. Scales are stored through a softplus
/// surrogate: `scale = SCALE_MIN + softplus(scale_raw)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelDensities {
    pub(crate) location: Vec<f64>,
    pub(crate) scale_raw: Vec<f64>,
}

impl ChannelDensities {
    /// Location 0, scale 1 on every channel.
    pub fn new(channels: usize) -> ChannelDensities {
        ChannelDensities::from_params(vec![0.0; channels], vec![1.0; channels])
            .expect("valid defaults")
    }

    pub fn from_params(location: Vec<f64>, scale: Vec<f64>) -> Result<ChannelDensities> {
        if location.len() != scale.len() {
            return Err(Error::Shape(format!(
                "{} locations for {} scales",
                location.len(),
                scale.len()
            )));
        }
        if location.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("density location".into()));
        }
        if scale.iter().any(|&s| !(s.is_finite() && s > SCALE_MIN)) {
            return Err(Error::Config(format!(
                "density scales must exceed {SCALE_MIN}"
            )));
        }
        Ok(ChannelDensities {
            location,
            scale_raw: scale
                .iter()
                .map(|s| softplus_inverse(s - SCALE_MIN))
                .collect(),
        })
    }

    pub(crate) fn from_raw(location: Vec<f64>, scale_raw: Vec<f64>) -> Result<ChannelDensities> {
        if location.len() != scale_raw.len() {
            return Err(Error::Shape("density section lengths differ".into()));
        }
        if location.iter().chain(&scale_raw).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("density parameters".into()));
        }
        Ok(ChannelDensities {
            location,
            scale_raw,
        })
    }

    pub fn channels(&self) -> usize {
        self.location.len()
    }

    pub fn location(&self, channel: usize) -> f64 {
        self.location[channel]
    }

    pub fn scale(&self, channel: usize) -> f64 {
        SCALE_MIN + softplus(self.scale_raw[channel])
    }

    pub fn interval_mass(&self, y: f64, channel: usize) -> f64 {
        logistic_interval_mass(y, self.location(channel), self.scale(channel))
    }

    pub(crate) fn zeros_like(&self) -> ChannelDensities {
        ChannelDensities {
            location: vec![0.0; self.channels()],
            scale_raw: vec![0.0; self.channels()],
        }
    }

    pub fn params(&self) -> Vec<&[f64]> {
        vec![&self.location, &self.scale_raw]
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.location, &mut self.scale_raw]
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.channels() {
            return Err(Error::Shape(format!(
                "latent width {width} for {} density channels",
                self.channels()
            )));
        }
        Ok(())
    }
}

/// `sum_c -log2(mass(y_c))` in bits. Accepts noisy or quantized codes.
pub fn rate_loss(latent: &LatentCode, densities: &ChannelDensities) -> Result<f64> {
    if latent.stage == LatentStage::Continuous {
        return Err(Error::Stage {
            expected: LatentStage::Noisy,
            found: LatentStage::Continuous,
        });
    }
    densities.check_width(latent.len())?;
    Ok(latent
        .values
        .iter()
        .enumerate()
        .map(|(c, &y)| -densities.interval_mass(y, c).log2())
        .sum())
}

/// Rate in bits plus its gradient. `weight * d(rate)/dy` is added to
/// `grad_latent`, `weight * d(rate)/d(params)` to `grad_densities`.
pub fn rate_loss_with_grad(
    values: &[f64],
    densities: &ChannelDensities,
    weight: f64,
    grad_latent: &mut [f64],
    grad_densities: &mut ChannelDensities,
) -> Result<f64> {
    densities.check_width(values.len())?;
    densities.check_width(grad_latent.len())?;
    let mut total = 0.0;
    for (c, &y) in values.iter().enumerate() {
        let loc = densities.location[c];
        let raw = densities.scale_raw[c];
        let scale = SCALE_MIN + softplus(raw);
        let mass = raw_interval_mass(y, loc, scale);
        if mass <= PROB_MIN {
            total += -PROB_MIN.log2();
            continue;
        }
        total += -mass.log2();
        let lo = (y - loc - 0.5) / scale;
        let hi = (y - loc + 0.5) / scale;
        let d_lo = sigmoid(lo) * sigmoid(-lo);
        let d_hi = sigmoid(hi) * sigmoid(-hi);
        // d(-log2 m) = -dm / (m ln 2)
        let k = -weight / (mass * std::f64::consts::LN_2);
        let dm_dy = (d_hi - d_lo) / scale;
        let dm_dscale = -(hi * d_hi - lo * d_lo) / scale;
        grad_latent[c] += k * dm_dy;
        grad_densities.location[c] -= k * dm_dy;
        grad_densities.scale_raw[c] += k * dm_dscale * sigmoid(raw);
    }
    Ok(total)
}
