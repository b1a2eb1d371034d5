//! Network parameters and the forward pass for both designs.
//!
//! A primary unit computes `p_i = a_i · x + b_i` with no activation. In the
//! baseline design every primary unit is also a hidden unit, `h_i = g(p_i)`.
//! In the efficient design hidden units are secondary units
//! `s_k = g(p_i + p_j)` over the pairs of a [`PairingPlan`], which is the same
//! as a hidden unit with merged weights `a_i + a_j` and bias `b_i + b_j`.

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution as _, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costing::MacCounter;
use crate::data::{FeatureScaler, LabelCodec};
use crate::error::{Error, Result};
use crate::pairing::{Pair, PairingPlan};
use crate::solver::OutputWeights;
use crate::{seeded_rng, WEIGHT_STREAM};

/// Distribution for primary weights and biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Distribution {
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    Normal { mean: f64, std: f64 },
}

impl Default for Distribution {
    fn default() -> Self {
        Distribution::Uniform { half_width: 1.0 }
    }
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Distribution::Uniform { half_width } => {
                if !half_width.is_finite() || half_width <= 0.0 {
                    return Err(Error::invalid(format!(
                        "uniform half width must be finite and positive, got {half_width}"
                    )));
                }
            }
            Distribution::Normal { mean, std } => {
                if !mean.is_finite() || !std.is_finite() || std <= 0.0 {
                    return Err(Error::invalid(format!(
                        "normal parameters must be finite with positive std, got mean {mean}, std {std}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sample_n<R: Rng>(&self, rng: &mut R, count: usize) -> Result<Vec<f64>> {
        match *self {
            Distribution::Uniform { half_width } => {
                let dist = Uniform::new_inclusive(-half_width, half_width)
                    .map_err(|e| Error::invalid(e.to_string()))?;
                Ok(dist.sample_iter(rng).take(count).collect())
            }
            Distribution::Normal { mean, std } => {
                let dist = Normal::new(mean, std).map_err(|e| Error::invalid(e.to_string()))?;
                Ok(dist.sample_iter(rng).take(count).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
        }
    }
}

/// Logistic function, evaluated through `exp(-|z|)` so it never overflows.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let split = a.len() / 4 * 4;
    let mut acc = [0.0_f64; 4];
    for (ca, cb) in a[..split].chunks_exact(4).zip(b[..split].chunks_exact(4)) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let tail: f64 = a[split..].iter().zip(&b[split..]).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Random input-to-primary weights (row `i` is `a_i`) and biases `b_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimaryLayer {
    weights: Vec<f64>,
    biases: Vec<f64>,
    n_features: usize,
    distribution: Distribution,
    seed: u64,
}

impl PrimaryLayer {
    /// Assembles a layer from explicit row-major `P×N` weights.
    pub fn from_parts(
        weights: Vec<f64>,
        biases: Vec<f64>,
        n_features: usize,
        distribution: Distribution,
        seed: u64,
    ) -> Result<Self> {
        if n_features == 0 || biases.is_empty() {
            return Err(Error::invalid("primary layer needs at least one unit and one feature"));
        }
        if weights.len() != biases.len() * n_features {
            return Err(Error::Shape {
                what: "primary weights",
                expected: biases.len() * n_features,
                actual: weights.len(),
            });
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite primary weight".into()));
        }
        Ok(PrimaryLayer {
            weights,
            biases,
            n_features,
            distribution,
            seed,
        })
    }

    /// `P`
    pub fn p_units(&self) -> usize {
        self.biases.len()
    }

    /// `N`
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn weight_row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Row-major `P×N` weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn distribution(&self) -> Distribution {
        self.distribution
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Draws `P×N` weights row by row, then `P` biases, from one seeded stream.
pub fn init_primary_layer(
    n_features: usize,
    p_units: usize,
    distribution: Distribution,
    seed: u64,
) -> Result<PrimaryLayer> {
    if n_features == 0 || p_units == 0 {
        return Err(Error::invalid(format!(
            "primary layer dimensions must be positive, got N={n_features}, P={p_units}"
        )));
    }
    distribution.validate()?;
    let mut rng = seeded_rng(seed, WEIGHT_STREAM);
    let weights = distribution.sample_n(&mut rng, p_units * n_features)?;
    let biases = distribution.sample_n(&mut rng, p_units)?;
    PrimaryLayer::from_parts(weights, biases, n_features, distribution, seed)
}

/// `p_i = a_i · x + b_i` for every primary unit.
pub fn primary_outputs(layer: &PrimaryLayer, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != layer.n_features {
        return Err(Error::Shape {
            what: "feature vector",
            expected: layer.n_features,
            actual: x.len(),
        });
    }
    Ok(primary_unchecked(layer, x))
}

fn primary_unchecked(layer: &PrimaryLayer, x: &[f64]) -> Vec<f64> {
    layer
        .weights
        .chunks_exact(layer.n_features)
        .zip(&layer.biases)
        .map(|(row, b)| dot(row, x) + b)
        .collect()
}

/// `s_k = g(p_i + p_j)` for each pair, in plan order.
pub fn secondary_outputs(p: &[f64], pairs: &[Pair], activation: Activation) -> Result<Vec<f64>> {
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= p.len() || j >= p.len()) {
        return Err(Error::Index {
            index: i.max(j),
            p_units: p.len(),
        });
    }
    Ok(secondary_unchecked(p, pairs, activation))
}

fn secondary_unchecked(p: &[f64], pairs: &[Pair], activation: Activation) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(i, j)| activation.apply(p[i] + p[j]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelDesign {
    Baseline,
    Efficient(PairingPlan),
}

impl ModelDesign {
    pub fn tag(&self) -> DesignTag {
        match self {
            ModelDesign::Baseline => DesignTag::Baseline,
            ModelDesign::Efficient(_) => DesignTag::Efficient,
        }
    }

    pub fn tau(&self) -> Option<usize> {
        match self {
            ModelDesign::Baseline => None,
            ModelDesign::Efficient(plan) => Some(plan.tau()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignTag {
    Baseline,
    Efficient,
}

impl DesignTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DesignTag::Baseline => "baseline",
            DesignTag::Efficient => "efficient",
        }
    }
}

/// Dot product of a hidden vector with each column of `beta` (`M×Q`).
pub fn scores_from_hidden(h: &[f64], beta: &Mat<f64>) -> Vec<f64> {
    (0..beta.ncols())
        .map(|c| h.iter().enumerate().map(|(k, hk)| hk * beta[(k, c)]).sum())
        .collect()
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// A complete network: scaler, primary layer, design, and (once trained)
/// output weights. Immutable after construction and safe to share across
/// threads for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    scaler: FeatureScaler,
    layer: PrimaryLayer,
    design: ModelDesign,
    activation: Activation,
    classes: LabelCodec,
    output: Option<OutputWeights>,
}

impl Network {
    pub fn new(
        scaler: FeatureScaler,
        layer: PrimaryLayer,
        design: ModelDesign,
        activation: Activation,
        class_labels: Vec<i64>,
    ) -> Result<Self> {
        if scaler.n_features() != layer.n_features() {
            return Err(Error::Shape {
                what: "scaler width",
                expected: layer.n_features(),
                actual: scaler.n_features(),
            });
        }
        if let ModelDesign::Efficient(plan) = &design {
            if plan.p_units() != layer.p_units() {
                return Err(Error::Shape {
                    what: "pairing plan primary units",
                    expected: layer.p_units(),
                    actual: plan.p_units(),
                });
            }
        }
        let classes = LabelCodec::from_classes(class_labels.clone());
        if classes.is_empty() || classes.len() != class_labels.len() {
            return Err(Error::invalid("class labels must be non-empty and distinct"));
        }
        Ok(Network {
            scaler,
            layer,
            design,
            activation,
            classes,
            output: None,
        })
    }

    /// Attaches output weights, which must be `M×Q`.
    pub fn with_output(mut self, output: OutputWeights) -> Result<Self> {
        let (rows, cols) = output.values.shape();
        if rows != self.hidden_width() {
            return Err(Error::Shape {
                what: "output weight rows",
                expected: self.hidden_width(),
                actual: rows,
            });
        }
        if cols != self.n_classes() {
            return Err(Error::Shape {
                what: "output weight columns",
                expected: self.n_classes(),
                actual: cols,
            });
        }
        self.output = Some(output);
        Ok(self)
    }

    pub fn scaler(&self) -> &FeatureScaler {
        &self.scaler
    }

    pub fn layer(&self) -> &PrimaryLayer {
        &self.layer
    }

    pub fn design(&self) -> &ModelDesign {
        &self.design
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn class_labels(&self) -> &[i64] {
        self.classes.classes()
    }

    pub fn output(&self) -> Option<&OutputWeights> {
        self.output.as_ref()
    }

    pub fn is_trained(&self) -> bool {
        self.output.is_some()
    }

    pub fn n_features(&self) -> usize {
        self.layer.n_features()
    }

    pub fn p_units(&self) -> usize {
        self.layer.p_units()
    }

    /// `M`: the primary count for the baseline, the plan length otherwise.
    pub fn hidden_width(&self) -> usize {
        match &self.design {
            ModelDesign::Baseline => self.layer.p_units(),
            ModelDesign::Efficient(plan) => plan.len(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::Shape {
                what: "feature vector",
                expected: self.n_features(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn hidden_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let xn = self.scaler.apply(x);
        let p = primary_unchecked(&self.layer, &xn);
        match &self.design {
            ModelDesign::Baseline => p.into_iter().map(|v| self.activation.apply(v)).collect(),
            ModelDesign::Efficient(plan) => secondary_unchecked(&p, plan.pairs(), self.activation),
        }
    }

    /// Hidden-layer output for one raw (unscaled) sample.
    pub fn hidden_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_width(x)?;
        Ok(self.hidden_unchecked(x))
    }

    /// Hidden outputs for every row of a raw `L×N` feature matrix, as a
    /// row-major `L×M` buffer. Rows are computed independently, so the result
    /// does not depend on the number of worker threads.
    pub fn hidden_rows(&self, features: &Mat<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.n_features() {
            return Err(Error::Shape {
                what: "feature matrix columns",
                expected: self.n_features(),
                actual: features.ncols(),
            });
        }
        let m = self.hidden_width();
        let n = self.n_features();
        let mut out = vec![0.0; features.nrows() * m];
        if m == 0 {
            return Ok(out);
        }
        out.par_chunks_mut(m).enumerate().for_each(|(l, row)| {
            let x: Vec<f64> = (0..n).map(|j| features[(l, j)]).collect();
            row.copy_from_slice(&self.hidden_unchecked(&x));
        });
        Ok(out)
    }

    fn beta(&self) -> Result<&Mat<f64>> {
        self.output.as_ref().map(|o| &o.values).ok_or(Error::Untrained)
    }

    /// Class scores `f^n(x) = h(x) · β^n`.
    pub fn predict_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let beta = self.beta()?;
        let h = self.hidden_vector(x)?;
        Ok(scores_from_hidden(&h, beta))
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<i64> {
        let scores = self.predict_scores(x)?;
        let idx = argmax(&scores).ok_or(Error::Untrained)?;
        Ok(self.classes.decode(idx).expect("score width equals class count"))
    }

    /// Scores for every row of a raw feature matrix (`L×Q`).
    pub fn predict_scores_batch(&self, features: &Mat<f64>) -> Result<Mat<f64>> {
        let beta = self.beta()?;
        let m = self.hidden_width();
        let rows = self.hidden_rows(features)?;
        let h = Mat::from_fn(features.nrows(), m, |i, j| rows[i * m + j]);
        Ok(&h * beta)
    }

    pub fn predict_batch(&self, features: &Mat<f64>) -> Result<Vec<i64>> {
        let scores = self.predict_scores_batch(features)?;
        (0..scores.nrows())
            .map(|i| {
                let row: Vec<f64> = (0..scores.ncols()).map(|c| scores[(i, c)]).collect();
                let idx = argmax(&row).ok_or(Error::Untrained)?;
                Ok(self.classes.decode(idx).expect("score width equals class count"))
            })
            .collect()
    }

    /// Percentage of samples whose predicted label matches `labels`.
    pub fn accuracy(&self, features: &Mat<f64>, labels: &[i64]) -> Result<f64> {
        if labels.len() != features.nrows() {
            return Err(Error::Shape {
                what: "labels",
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(Error::invalid("cannot score an empty set"));
        }
        let predicted = self.predict_batch(features)?;
        let correct = predicted.iter().zip(labels).filter(|(p, t)| p == t).count();
        Ok(100.0 * correct as f64 / labels.len() as f64)
    }

    /// Forward pass with plain loops that tallies every multiply-accumulate.
    /// Bias adds, activations, and pair sums are not counted.
    pub fn forward_counted(&self, x: &[f64]) -> Result<(Vec<f64>, MacCounter)> {
        let beta = self.beta()?;
        self.check_width(x)?;
        let mut counter = MacCounter::default();
        let xn = self.scaler.apply(x);
        let mut p = vec![0.0; self.p_units()];
        for (i, pi) in p.iter_mut().enumerate() {
            let mut acc = self.layer.biases[i];
            for (w, v) in self.layer.weight_row(i).iter().zip(&xn) {
                acc += w * v;
                counter.primary += 1;
            }
            *pi = acc;
        }
        let h: Vec<f64> = match &self.design {
            ModelDesign::Baseline => p.iter().map(|&v| self.activation.apply(v)).collect(),
            ModelDesign::Efficient(plan) => plan
                .pairs()
                .iter()
                .map(|&(i, j)| self.activation.apply(p[i] + p[j]))
                .collect(),
        };
        let mut scores = vec![0.0; beta.ncols()];
        for (c, score) in scores.iter_mut().enumerate() {
            for (k, hk) in h.iter().enumerate() {
                *score += hk * beta[(k, c)];
                counter.output += 1;
            }
        }
        Ok((scores, counter))
    }
}
