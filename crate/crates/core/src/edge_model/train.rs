//! Plain gradient descent on the edge model through a fixed filter.
//!
//! Forward: features → edges → filter the frozen coarse scores → softmax
//! cross-entropy. Backward: loss gradient → filter reverse sweep → edge
//! gradient → head and convolution gradients. Parameters are updated after
//! every sample, in dataset order.

use crate::backward::backward_2d;
use crate::error::{DtError, Result};
use crate::forward::filter_2d;
use crate::types::DtParams;

use super::{
    edge_model_backward, extract_features, init_edge_model_with, predict_edges, softmax_xent_loss,
    EdgeModel, EdgeModelConfig, ToySample,
};

pub const DEFAULT_LR: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: DEFAULT_LR,
            epochs: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: EdgeModel,
    /// Mean loss over the samples seen in each epoch.
    pub history: Vec<f64>,
}

/// Loss of one sample under `model`.
pub fn sample_loss(sample: &ToySample, model: &EdgeModel, params: &DtParams) -> Result<f64> {
    let features = extract_features(&sample.image, model)?;
    let edges = predict_edges(&features, model)?;
    let (y, _) = filter_2d(&sample.coarse_scores, &edges, params, false)?;
    Ok(softmax_xent_loss(&y, &sample.labels)?.0)
}

/// Loss of one sample and its gradient with respect to every model parameter.
pub fn sample_loss_and_grad(sample: &ToySample, model: &EdgeModel, params: &DtParams) -> Result<(f64, EdgeModel)> {
    let features = extract_features(&sample.image, model)?;
    let edges = predict_edges(&features, model)?;
    let (y, tape) = filter_2d(&sample.coarse_scores, &edges, params, true)?;
    let (loss, grad_y) = softmax_xent_loss(&y, &sample.labels)?;
    let grads = backward_2d(&tape.expect("tape was requested"), &grad_y)?;
    let grad_model = edge_model_backward(&sample.image, model, &features, &edges, grads.grad_g.data())?;
    Ok((loss, grad_model))
}

/// Trains a freshly initialised default-size model.
pub fn train(samples: &[ToySample], params: &DtParams, hyper: &TrainHyper) -> Result<TrainOutcome> {
    train_with_options(samples, params, hyper, EdgeModelConfig::default())
}

pub fn train_with_options(
    samples: &[ToySample],
    params: &DtParams,
    hyper: &TrainHyper,
    config: EdgeModelConfig,
) -> Result<TrainOutcome> {
    let model = init_edge_model_with(config, hyper.seed);
    train_from(model, samples, params, hyper)
}

/// Continues training from `model`.
pub fn train_from(
    mut model: EdgeModel,
    samples: &[ToySample],
    params: &DtParams,
    hyper: &TrainHyper,
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(DtError::InvalidParameter("training set is empty".into()));
    }
    if !(hyper.lr.is_finite() && hyper.lr >= 0.0) {
        return Err(DtError::InvalidParameter(format!(
            "learning rate must be finite and nonnegative, got {}",
            hyper.lr
        )));
    }
    params.validate()?;
    let mut history = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let mut total = 0.0;
        for sample in samples {
            let (loss, grad) = sample_loss_and_grad(sample, &model, params)?;
            total += loss;
            model.add_scaled(&grad, -hyper.lr);
        }
        if !model.is_finite() {
            return Err(DtError::InvalidParameter(format!(
                "parameters diverged in epoch {epoch}; lower the learning rate"
            )));
        }
        history.push(total / samples.len() as f64);
    }
    Ok(TrainOutcome { model, history })
}
