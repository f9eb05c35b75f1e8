//! Shallow classifier over per-step path deviations.
//!
//! Four inputs, one sigmoid hidden layer of 32 units and a sigmoid output,
//! trained with binary cross-entropy by plain mini-batch gradient descent.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INPUTS: usize = 4;
pub const HIDDEN: usize = 32;
/// Total scalar parameters.
pub const NUM_PARAMS: usize = INPUTS * HIDDEN + HIDDEN + HIDDEN + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 128,
            learning_rate: 0.5,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate >= 0.0) {
            return Err(Error::Config(
                "training needs epochs > 0, batch_size > 0 and a non-negative learning rate".into(),
            ));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit against a 0/1 target, computed without
/// forming the probability.
pub fn bce_with_logit(z: f64, target: f64) -> f64 {
    z.max(0.0) - z * target + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpParams {
    /// Hidden weights, one row of input weights per hidden unit.
    pub w1: Vec<[f64; INPUTS]>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpParams {
    pub fn zeros() -> Self {
        Self {
            w1: vec![[0.0; INPUTS]; HIDDEN],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; HIDDEN],
            b2: 0.0,
        }
    }

    /// Uniform in `±1/sqrt(fan_in)` per layer.
    pub fn init(rng: &mut impl Rng) -> Self {
        let r1 = 1.0 / (INPUTS as f64).sqrt();
        let r2 = 1.0 / (HIDDEN as f64).sqrt();
        let mut p = Self::zeros();
        for row in &mut p.w1 {
            for w in row.iter_mut() {
                *w = rng.random_range(-r1..=r1);
            }
        }
        for b in &mut p.b1 {
            *b = rng.random_range(-r1..=r1);
        }
        for w in &mut p.w2 {
            *w = rng.random_range(-r2..=r2);
        }
        p.b2 = rng.random_range(-r2..=r2);
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.w1.len() != HIDDEN || self.b1.len() != HIDDEN || self.w2.len() != HIDDEN {
            return Err(Error::Model(format!(
                "detector layers must have {HIDDEN} hidden units"
            )));
        }
        if self.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("detector weights must be finite".into()));
        }
        Ok(())
    }

    /// Parameters in the order w1 (row-major), b1, w2, b2.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(NUM_PARAMS);
        v.extend(self.w1.iter().flatten());
        v.extend(&self.b1);
        v.extend(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        assert_eq!(flat.len(), NUM_PARAMS);
        let (w1, rest) = flat.split_at(INPUTS * HIDDEN);
        let (b1, rest) = rest.split_at(HIDDEN);
        let (w2, rest) = rest.split_at(HIDDEN);
        Self {
            w1: w1
                .chunks_exact(INPUTS)
                .map(|c| c.try_into().unwrap())
                .collect(),
            b1: b1.to_vec(),
            w2: w2.to_vec(),
            b2: rest[0],
        }
    }

    fn hidden(&self, x: &[f64; INPUTS]) -> Vec<f64> {
        self.w1
            .iter()
            .zip(&self.b1)
            .map(|(row, b)| sigmoid(row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b))
            .collect()
    }

    /// Output pre-activation.
    pub fn logit(&self, x: &[f64; INPUTS]) -> f64 {
        let h = self.hidden(x);
        h.iter().zip(&self.w2).map(|(h, w)| h * w).sum::<f64>() + self.b2
    }

    pub fn forward(&self, x: &[f64; INPUTS]) -> f64 {
        sigmoid(self.logit(x))
    }
}

/// Score of the classifier on one deviation vector.
pub fn mlp_forward(params: &MlpParams, input: &[f64; INPUTS]) -> f64 {
    params.forward(input)
}

/// Per-input standardisation fitted on training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureScaling {
    pub mean: [f64; INPUTS],
    pub std: [f64; INPUTS],
}

impl Default for FeatureScaling {
    fn default() -> Self {
        Self {
            mean: [0.0; INPUTS],
            std: [1.0; INPUTS],
        }
    }
}

impl FeatureScaling {
    /// Mean and population standard deviation of each input. Constant inputs
    /// keep a unit scale.
    pub fn fit(data: &[Example]) -> Self {
        if data.is_empty() {
            return Self::default();
        }
        let n = data.len() as f64;
        let mut mean = [0.0; INPUTS];
        for ex in data {
            for (m, x) in mean.iter_mut().zip(&ex.input) {
                *m += x / n;
            }
        }
        let mut std = [0.0; INPUTS];
        for ex in data {
            for i in 0..INPUTS {
                std[i] += (ex.input[i] - mean[i]).powi(2) / n;
            }
        }
        for s in &mut std {
            *s = if *s > 1e-18 { s.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64; INPUTS]) -> [f64; INPUTS] {
        std::array::from_fn(|i| (x[i] - self.mean[i]) / self.std[i])
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.iter().chain(&self.std).any(|v| !v.is_finite()) || self.std.iter().any(|s| *s <= 0.0) {
            return Err(Error::Model("feature scaling must be finite with positive spread".into()));
        }
        Ok(())
    }
}

/// One labelled training example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example {
    pub input: [f64; INPUTS],
    pub label: bool,
}

/// Mean cross-entropy over `batch` and its gradient as a flat vector.
pub fn loss_and_gradient(params: &MlpParams, batch: &[Example]) -> (f64, Vec<f64>) {
    let mut grad = MlpParams::zeros();
    let mut loss = 0.0;
    let n = batch.len().max(1) as f64;
    for ex in batch {
        let y = if ex.label { 1.0 } else { 0.0 };
        let h = params.hidden(&ex.input);
        let z = h.iter().zip(&params.w2).map(|(h, w)| h * w).sum::<f64>() + params.b2;
        loss += bce_with_logit(z, y);
        let dz = (sigmoid(z) - y) / n;
        grad.b2 += dz;
        for j in 0..HIDDEN {
            grad.w2[j] += dz * h[j];
            let dpre = dz * params.w2[j] * h[j] * (1.0 - h[j]);
            grad.b1[j] += dpre;
            for i in 0..INPUTS {
                grad.w1[j][i] += dpre * ex.input[i];
            }
        }
    }
    (loss / n, grad.to_flat())
}

pub fn mean_loss(params: &MlpParams, data: &[Example]) -> f64 {
    let n = data.len().max(1) as f64;
    data.iter()
        .map(|ex| bce_with_logit(params.logit(&ex.input), if ex.label { 1.0 } else { 0.0 }))
        .sum::<f64>()
        / n
}

/// Result of [`mlp_train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedMlp {
    pub params: MlpParams,
    /// Full-data loss after each epoch.
    pub loss_trace: Vec<f64>,
}

pub fn mlp_train(data: &[Example], config: &TrainConfig) -> Result<TrainedMlp> {
    config.validate()?;
    let positives = data.iter().filter(|e| e.label).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::DegenerateLabels(format!(
            "{positives} positive of {} training windows",
            data.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = MlpParams::init(&mut rng);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut batch = Vec::with_capacity(config.batch_size);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i]));
            let (_, grad) = loss_and_gradient(&params, &batch);
            let mut flat = params.to_flat();
            for (p, g) in flat.iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
            params = MlpParams::from_flat(&flat);
        }
        loss_trace.push(mean_loss(&params, data));
    }
    Ok(TrainedMlp { params, loss_trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable(n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = i % 2 == 0;
                let input = if label {
                    std::array::from_fn(|_| rng.random_range(2.0..6.0))
                } else {
                    std::array::from_fn(|_| rng.random_range(0.0..0.5))
                };
                Example { input, label }
            })
            .collect()
    }

    #[test]
    fn zero_params_score_one_half() {
        assert_eq!(mlp_forward(&MlpParams::zeros(), &[1.0, 2.0, 3.0, 4.0]), 0.5);
    }

    #[test]
    fn output_bias_only() {
        let mut p = MlpParams::zeros();
        p.b2 = 3f64.ln();
        assert!((mlp_forward(&p, &[9.0, -3.0, 0.1, 5.0]) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = MlpParams::init(&mut rng);
        assert_eq!(MlpParams::from_flat(&p.to_flat()), p);
        assert_eq!(p.to_flat().len(), NUM_PARAMS);
    }

    #[test]
    fn single_class_is_rejected() {
        let data = vec![
            Example {
                input: [1.0; 4],
                label: true
            };
            5
        ];
        let err = mlp_train(&data, &TrainConfig::default()).unwrap_err();
        assert_eq!(err.class(), "degenerate-labels");
    }

    #[test]
    fn zero_learning_rate_keeps_initialisation() {
        let data = separable(20, 3);
        let config = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..TrainConfig::default()
        };
        let trained = mlp_train(&data, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        assert_eq!(trained.params, MlpParams::init(&mut rng));
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(64, 4);
        let config = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        assert_eq!(mlp_train(&data, &config).unwrap(), mlp_train(&data, &config).unwrap());
    }

    #[test]
    fn scaling_standardises_inputs() {
        let data = separable(40, 5);
        let scaling = FeatureScaling::fit(&data);
        let scaled: Vec<[f64; INPUTS]> = data.iter().map(|e| scaling.apply(&e.input)).collect();
        for i in 0..INPUTS {
            let mean = scaled.iter().map(|x| x[i]).sum::<f64>() / 40.0;
            let var = scaled.iter().map(|x| (x[i] - mean).powi(2)).sum::<f64>() / 40.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
        let constant = vec![Example { input: [2.0; 4], label: true }; 3];
        assert_eq!(FeatureScaling::fit(&constant).std, [1.0; 4]);
    }

    #[test]
    fn stable_loss_matches_naive_formula() {
        for (z, y) in [(0.3, 1.0), (-2.0, 0.0), (4.0, 0.0), (-1.5, 1.0)] {
            let p = sigmoid(z);
            let naive = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            assert!((bce_with_logit(z, y) - naive).abs() < 1e-12);
        }
    }
}
