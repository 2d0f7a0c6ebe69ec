//! Laplace gradient poisoning.

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParameterVector;

/// How `b` in [`LaplaceParams`] turns into a Laplace scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseInterpretation {
    /// `b` is the scale itself.
    Scale,
    /// `b` is a privacy budget: scale = sensitivity / b, so a small `b`
    /// means heavy noise.
    Epsilon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceParams {
    pub b: f64,
    pub interpretation: NoiseInterpretation,
    pub sensitivity: f64,
}

impl Default for LaplaceParams {
    /// `b = 0.005` read as a budget with unit sensitivity: scale 200.
    fn default() -> Self {
        Self {
            b: 0.005,
            interpretation: NoiseInterpretation::Epsilon,
            sensitivity: 1.0,
        }
    }
}

impl LaplaceParams {
    pub fn with_scale(scale: f64) -> Self {
        Self {
            b: scale,
            interpretation: NoiseInterpretation::Scale,
            sensitivity: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::param(format!(
                "laplace b must be > 0, got {}",
                self.b
            )));
        }
        if self.interpretation == NoiseInterpretation::Epsilon
            && !(self.sensitivity > 0.0 && self.sensitivity.is_finite())
        {
            return Err(Error::param("sensitivity must be > 0"));
        }
        Ok(())
    }

    pub fn effective_scale(&self) -> f64 {
        match self.interpretation {
            NoiseInterpretation::Scale => self.b,
            NoiseInterpretation::Epsilon => self.sensitivity / self.b,
        }
    }
}

/// One draw from Laplace(mu, scale) by inverting the CDF:
/// `mu - scale * sgn(u) * ln(1 - 2|u|)` with `u` uniform on (-1/2, 1/2).
pub fn sample_laplace<R: Rng + ?Sized>(mu: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::param(format!(
            "laplace scale must be > 0, got {scale}"
        )));
    }
    let u = loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        // gen() is in [0, 1); -0.5 would give ln(0).
        if u > -0.5 {
            break u;
        }
    };
    Ok(mu - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
}

/// Laplace CDF, used by the goodness-of-fit tests.
pub fn laplace_cdf(x: f64, mu: f64, scale: f64) -> f64 {
    let z = (x - mu) / scale;
    if z < 0.0 {
        0.5 * z.exp()
    } else {
        1.0 - 0.5 * (-z).exp()
    }
}

/// Resamples every coordinate as Laplace centered on its current value.
pub fn poison_update<R: Rng + ?Sized>(
    update: &ParameterVector,
    noise: &LaplaceParams,
    rng: &mut R,
) -> Result<ParameterVector> {
    noise.validate()?;
    let scale = noise.effective_scale();
    let values = update
        .iter()
        .map(|&v| sample_laplace(v, scale, rng))
        .collect::<Result<Vec<_>>>()?;
    ParameterVector::new(values)
}

/// Attack settings. The two only differ in the fraction they are usually
/// run with: 40% for compromised clients, 20% for an attacker joining with
/// its own devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ControlledClients,
    SelfParticipating,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversaryPlan {
    pub adversary_ids: BTreeSet<usize>,
    pub fraction: f64,
    pub noise: LaplaceParams,
    pub scenario: Scenario,
}

impl AdversaryPlan {
    pub fn none() -> Self {
        Self {
            adversary_ids: BTreeSet::new(),
            fraction: 0.0,
            noise: LaplaceParams::default(),
            scenario: Scenario::ControlledClients,
        }
    }

    pub fn is_adversary(&self, client: usize) -> bool {
        self.adversary_ids.contains(&client)
    }
}

/// Picks `round(fraction * n_clients)` adversaries uniformly at random.
pub fn build_plan(
    n_clients: usize,
    fraction: f64,
    scenario: Scenario,
    noise: LaplaceParams,
    seed: u64,
) -> Result<AdversaryPlan> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::param(format!(
            "adversary fraction must be in [0, 1), got {fraction}"
        )));
    }
    noise.validate()?;
    let count = (fraction * n_clients as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adversary_ids = rand::seq::index::sample(&mut rng, n_clients, count)
        .into_iter()
        .collect();
    Ok(AdversaryPlan {
        adversary_ids,
        fraction,
        noise,
        scenario,
    })
}
