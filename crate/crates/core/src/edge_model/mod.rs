//! Learned edge predictor trained through the domain transform.
//!
//! Two 3×3 convolutions with ReLU produce a feature stack holding both
//! layers' activations; a per-pixel linear head followed by ReLU turns the
//! stack into a nonnegative edge map.

mod conv;
pub mod dataset;
pub mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use conv::Conv3x3;
pub use dataset::{make_toy_dataset, ToySample};
pub use train::{train, train_with_options, TrainHyper, TrainOutcome};

use crate::error::{DtError, Result};
use crate::types::{EdgeMap, LabelMap, ScoreMap};

/// Std of the Gaussian used for every weight at initialisation.
pub const INIT_STD: f64 = 1e-5;

/// Layer widths of the feature stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeModelConfig {
    pub hidden: usize,
    pub deep: usize,
}

impl Default for EdgeModelConfig {
    fn default() -> Self {
        Self { hidden: 8, deep: 8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeModel {
    pub conv1: Conv3x3,
    pub conv2: Conv3x3,
    pub head_weights: Vec<f64>,
    pub head_bias: f64,
}

impl EdgeModel {
    pub fn zeros(config: EdgeModelConfig) -> Self {
        Self {
            conv1: Conv3x3::zeros(3, config.hidden),
            conv2: Conv3x3::zeros(config.hidden, config.deep),
            head_weights: vec![0.0; config.hidden + config.deep],
            head_bias: 0.0,
        }
    }

    pub fn config(&self) -> EdgeModelConfig {
        EdgeModelConfig {
            hidden: self.conv1.out_channels,
            deep: self.conv2.out_channels,
        }
    }

    /// Total feature count seen by the head.
    pub fn feature_channels(&self) -> usize {
        self.head_weights.len()
    }

    pub fn num_parameters(&self) -> usize {
        self.conv1.num_parameters() + self.conv2.num_parameters() + self.head_weights.len() + 1
    }

    /// All parameters in a fixed order: conv1 weight, conv1 bias, conv2
    /// weight, conv2 bias, head weights, head bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        out.extend_from_slice(&self.conv1.weight);
        out.extend_from_slice(&self.conv1.bias);
        out.extend_from_slice(&self.conv2.weight);
        out.extend_from_slice(&self.conv2.bias);
        out.extend_from_slice(&self.head_weights);
        out.push(self.head_bias);
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(DtError::shape(
                format!("{} parameters", self.num_parameters()),
                format!("{} values", values.len()),
            ));
        }
        let mut rest = values;
        for dst in [
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.head_weights,
        ] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        self.head_bias = rest[0];
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`, parameter-wise.
    pub fn add_scaled(&mut self, other: &EdgeModel, scale: f64) {
        let mut flat = self.to_flat();
        for (p, g) in flat.iter_mut().zip(other.to_flat()) {
            *p += scale * g;
        }
        self.set_flat(&flat).expect("same architecture");
    }
}

/// Seeded initialisation: every weight from N(0, (1e-5)²), biases zero,
/// so the initial edge map is essentially empty.
pub fn init_edge_model(seed: u64) -> EdgeModel {
    init_edge_model_with(EdgeModelConfig::default(), seed)
}

pub fn init_edge_model_with(config: EdgeModelConfig, seed: u64) -> EdgeModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, INIT_STD).expect("positive std");
    let mut model = EdgeModel::zeros(config);
    for values in [&mut model.conv1.weight, &mut model.conv2.weight, &mut model.head_weights] {
        values.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
    }
    model
}

/// Concatenated activations of both convolution layers, H×W×(hidden+deep).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    maps: ScoreMap,
    hidden: usize,
}

impl FeatureStack {
    pub fn maps(&self) -> &ScoreMap {
        &self.maps
    }

    pub fn feature_channels(&self) -> usize {
        self.maps.channels()
    }

    /// Activations of the first convolution layer.
    pub fn first_layer(&self) -> ScoreMap {
        let (h, w, f) = self.maps.shape();
        let data = self
            .maps
            .data()
            .chunks_exact(f)
            .flat_map(|px| px[..self.hidden].iter().copied())
            .collect();
        ScoreMap::from_vec(h, w, self.hidden, data).expect("finite activations")
    }
}

fn relu_in_place(m: &mut ScoreMap) {
    m.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

pub fn extract_features(image: &ScoreMap, model: &EdgeModel) -> Result<FeatureStack> {
    if image.channels() != 3 {
        return Err(DtError::shape("3-channel image", format!("{} channels", image.channels())));
    }
    let mut a1 = model.conv1.forward(image)?;
    relu_in_place(&mut a1);
    let mut a2 = model.conv2.forward(&a1)?;
    relu_in_place(&mut a2);
    let (h, w, f1) = a1.shape();
    let f2 = a2.channels();
    let mut data = Vec::with_capacity(h * w * (f1 + f2));
    for (p1, p2) in a1.data().chunks_exact(f1).zip(a2.data().chunks_exact(f2)) {
        data.extend_from_slice(p1);
        data.extend_from_slice(p2);
    }
    Ok(FeatureStack {
        maps: ScoreMap::from_vec(h, w, f1 + f2, data)?,
        hidden: f1,
    })
}

/// `g = max(0, Σ_f w_f feature_f + bias)` per pixel.
pub fn predict_edges(features: &FeatureStack, model: &EdgeModel) -> Result<EdgeMap> {
    let f = features.feature_channels();
    if f != model.feature_channels() {
        return Err(DtError::shape(
            format!("{} features", model.feature_channels()),
            format!("{f} features"),
        ));
    }
    let (h, w, _) = features.maps.shape();
    let g = features
        .maps
        .data()
        .chunks_exact(f)
        .map(|px| {
            let s: f64 = px.iter().zip(&model.head_weights).map(|(a, b)| a * b).sum::<f64>() + model.head_bias;
            s.max(0.0)
        })
        .collect();
    EdgeMap::from_vec(h, w, g)
}

/// Convenience: image straight to edge map.
pub fn model_edges(image: &ScoreMap, model: &EdgeModel) -> Result<EdgeMap> {
    predict_edges(&extract_features(image, model)?, model)
}

/// Parameter gradients of a loss given its gradient with respect to the
/// predicted edge map. `features` and `edges` must come from the same
/// forward pass. ReLU gates use the post-activation values, so the
/// subgradient at exactly zero is zero.
pub fn edge_model_backward(
    image: &ScoreMap,
    model: &EdgeModel,
    features: &FeatureStack,
    edges: &EdgeMap,
    grad_edges: &[f64],
) -> Result<EdgeModel> {
    let (h, w, f) = features.maps.shape();
    if grad_edges.len() != h * w || edges.height() != h || edges.width() != w {
        return Err(DtError::shape(
            format!("{h}x{w} edge gradient"),
            format!("{} values", grad_edges.len()),
        ));
    }
    let config = model.config();
    let (f1, f2) = (config.hidden, config.deep);
    let mut grad = EdgeModel::zeros(config);

    let mut grad_a1 = vec![0.0; h * w * f1];
    let mut grad_z2 = vec![0.0; h * w * f2];
    for (p, ((px, &gp), &ge)) in features
        .maps
        .data()
        .chunks_exact(f)
        .zip(edges.data())
        .zip(grad_edges)
        .enumerate()
    {
        if gp <= 0.0 || ge == 0.0 {
            continue;
        }
        grad.head_bias += ge;
        for (k, (&a, &hw)) in px.iter().zip(&model.head_weights).enumerate() {
            grad.head_weights[k] += ge * a;
            let upstream = ge * hw;
            if k < f1 {
                if a > 0.0 {
                    grad_a1[p * f1 + k] += upstream;
                }
            } else if a > 0.0 {
                grad_z2[p * f2 + k - f1] = upstream;
            }
        }
    }

    let a1 = features.first_layer();
    let grad_z2 = ScoreMap::from_vec(h, w, f2, grad_z2)?;
    let from_conv2 = model
        .conv2
        .backward(&a1, &grad_z2, &mut grad.conv2, true)?
        .expect("input gradient requested");
    for (p, (g, &extra)) in grad_a1.iter_mut().zip(from_conv2.data()).enumerate() {
        if a1.data()[p] > 0.0 {
            *g += extra;
        } else {
            *g = 0.0;
        }
    }
    let grad_z1 = ScoreMap::from_vec(h, w, f1, grad_a1)?;
    model.conv1.backward(image, &grad_z1, &mut grad.conv1, false)?;
    Ok(grad)
}

/// Mean per-pixel softmax cross-entropy and its gradient.
pub fn softmax_xent_loss(scores: &ScoreMap, labels: &LabelMap) -> Result<(f64, ScoreMap)> {
    let (h, w, c) = scores.shape();
    if labels.height() != h || labels.width() != w {
        return Err(DtError::shape(
            format!("{h}x{w} labels"),
            format!("{}x{} labels", labels.height(), labels.width()),
        ));
    }
    labels.check_range(c)?;
    let n = (h * w) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(h * w * c);
    let mut probs = vec![0.0; c];
    for (px, &label) in scores.data().chunks_exact(c).zip(labels.data()) {
        let mut top = 0;
        for (k, &s) in px.iter().enumerate() {
            if s > px[top] {
                top = k;
            }
        }
        let max = px[top];
        // The top term is exactly 1; summing the rest separately keeps
        // log(1 + rest) accurate for confident pixels.
        let mut rest = 0.0;
        for (k, (p, &s)) in probs.iter_mut().zip(px).enumerate() {
            *p = (s - max).exp();
            if k != top {
                rest += *p;
            }
        }
        let sum = 1.0 + rest;
        loss += rest.ln_1p() - (px[label] - max);
        for (k, p) in probs.iter().enumerate() {
            let onehot = if k == label { 1.0 } else { 0.0 };
            grad.push((p / sum - onehot) / n);
        }
    }
    Ok((loss / n, ScoreMap::from_vec(h, w, c, grad)?))
}
