//! Binary logistic regression trained by mini-batch SGD; the node side of
//! federated averaging.

use std::ops::Deref;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClientShard, Dataset};
use crate::error::{Error, Result};

/// Probabilities are clamped to this distance from 0 and 1 before the log.
pub const PROB_EPS: f64 = 1e-12;

/// Flat model weights, feature weights first and the bias last.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("parameter vector must not be empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("non-finite parameter at index {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    fn weights(&self) -> &[f64] {
        &self.0[..self.0.len() - 1]
    }

    fn bias(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Raw score `w . x + b`.
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.weights()
            .iter()
            .zip(x)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + self.bias()
    }
}

impl Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the batch order. The federation sets this per client and round.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 1,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param(
                "learning_rate must be a finite non-negative number",
            ));
        }
        if self.batch_size < 1 {
            return Err(Error::param("batch_size must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub loss: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Uniform draws in [-0.01, 0.01].
pub fn init_params(dim: usize, seed: u64) -> Result<ParameterVector> {
    if dim < 1 {
        return Err(Error::param("dim must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ParameterVector::new((0..dim).map(|_| rng.gen_range(-0.01..=0.01)).collect())
}

fn check_dim(params: &ParameterVector, data: &Dataset) -> Result<()> {
    if params.dim() != data.n_features() + 1 {
        return Err(Error::Shape {
            expected: data.n_features() + 1,
            found: params.dim(),
        });
    }
    Ok(())
}

/// Mean log-loss over `rows` and its gradient with respect to all
/// parameters (bias last).
pub fn loss_and_gradient(
    params: &ParameterVector,
    data: &Dataset,
    rows: &[usize],
) -> Result<(f64, Vec<f64>)> {
    check_dim(params, data)?;
    if rows.is_empty() {
        return Err(Error::param("gradient over an empty batch"));
    }
    let d = data.n_features();
    let mut grad = vec![0.0; d + 1];
    let mut loss = 0.0;
    for &i in rows {
        let x = data.row(i);
        let y = f64::from(data.label(i));
        let p = sigmoid(params.margin(x));
        loss += log_loss(p, y);
        let residual = p - y;
        for (g, v) in grad.iter_mut().zip(x) {
            *g += residual * v;
        }
        grad[d] += residual;
    }
    let n = rows.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

fn log_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Runs `cfg.epochs` passes of mini-batch SGD over the shard starting from
/// `params`. Each epoch visits the rows in a fresh order drawn from a
/// stream seeded by `cfg.seed`; the last batch of an epoch may be short.
pub fn local_train(
    params: &ParameterVector,
    shard: &ClientShard,
    cfg: &TrainConfig,
) -> Result<ParameterVector> {
    let data = &shard.data;
    check_dim(params, data)?;
    cfg.validate()?;
    if cfg.epochs == 0 || data.is_empty() {
        return Ok(params.clone());
    }
    let batch = cfg.batch_size.min(data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut current = params.clone();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for rows in order.chunks(batch) {
            let (_, grad) = loss_and_gradient(&current, data, rows)?;
            let mut next = current.into_inner();
            for (w, g) in next.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
            current = ParameterVector::new(next)?;
        }
    }
    Ok(current)
}

/// Accuracy of the thresholded sigmoid (p >= 0.5 predicts attack) and mean
/// clamped log-loss.
pub fn evaluate(params: &ParameterVector, data: &Dataset) -> Result<Metrics> {
    check_dim(params, data)?;
    if data.is_empty() {
        return Err(Error::param("cannot evaluate on an empty dataset"));
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for i in 0..data.len() {
        let p = sigmoid(params.margin(data.row(i)));
        let y = data.label(i);
        if u8::from(p >= 0.5) == y {
            correct += 1;
        }
        loss += log_loss(p, f64::from(y));
    }
    let n = data.len() as f64;
    Ok(Metrics {
        accuracy: correct as f64 / n,
        loss: loss / n,
    })
}
