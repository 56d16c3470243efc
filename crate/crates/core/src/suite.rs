//! Training configuration and pooled evaluation on the synthetic suite.

use std::fmt;
use std::str::FromStr;

use crate::edge_model::{make_toy_dataset, model_edges, EdgeModel, ToySample, TrainHyper};
use crate::error::{DtError, Result};
use crate::forward::{filter_2d, gradient_magnitude_edges};
use crate::metrics::{trimap_curve_many, IouAccumulator, TrimapCurve};
use crate::types::{DtParams, EdgeMap, LabelMap};

/// Keys accepted in a training config file.
pub const CONFIG_KEYS: [&str; 11] = [
    "lr",
    "epochs",
    "seed",
    "sigma_s",
    "sigma_r",
    "iterations",
    "blur",
    "noise",
    "classes",
    "size",
    "count",
];

/// Flat `key=value` training configuration. Missing keys keep their defaults.
///
/// `seed` drives both the dataset and the model initialisation. Held-out
/// samples continue the training set's random stream, so they share its
/// class palette.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub sigma_s: f64,
    pub sigma_r: f64,
    pub iterations: usize,
    pub blur: f64,
    pub noise: f64,
    pub classes: usize,
    pub size: usize,
    pub count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            epochs: 40,
            seed: 0,
            sigma_s: 16.0,
            sigma_r: 1.0,
            iterations: 3,
            blur: 2.0,
            noise: 0.2,
            classes: 4,
            size: 64,
            count: 16,
        }
    }
}

/// Problems with a config file's keys or values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> std::result::Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError(format!("line {line}: bad value '{value}' for {key}")))
}

impl TrainConfig {
    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> std::result::Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let n = n + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {n}: expected key=value, found '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "lr" => cfg.lr = parse_value(key, value, n)?,
                "epochs" => cfg.epochs = parse_value(key, value, n)?,
                "seed" => cfg.seed = parse_value(key, value, n)?,
                "sigma_s" => cfg.sigma_s = parse_value(key, value, n)?,
                "sigma_r" => cfg.sigma_r = parse_value(key, value, n)?,
                "iterations" => cfg.iterations = parse_value(key, value, n)?,
                "blur" => cfg.blur = parse_value(key, value, n)?,
                "noise" => cfg.noise = parse_value(key, value, n)?,
                "classes" => cfg.classes = parse_value(key, value, n)?,
                "size" => cfg.size = parse_value(key, value, n)?,
                "count" => cfg.count = parse_value(key, value, n)?,
                other => {
                    return Err(ConfigError(format!(
                        "line {n}: unknown key '{other}'; valid keys are {}",
                        CONFIG_KEYS.join(", ")
                    )))
                }
            }
        }
        cfg.params().map_err(|e| ConfigError(e.to_string()))?;
        if !(cfg.lr.is_finite() && cfg.lr >= 0.0) {
            return Err(ConfigError(format!("lr must be finite and nonnegative, got {}", cfg.lr)));
        }
        Ok(cfg)
    }

    pub fn params(&self) -> Result<DtParams> {
        DtParams::new(self.sigma_s, self.sigma_r, self.iterations)
    }

    pub fn hyper(&self) -> TrainHyper {
        TrainHyper {
            lr: self.lr,
            epochs: self.epochs,
            seed: self.seed,
        }
    }

    pub fn training_set(&self) -> Result<Vec<ToySample>> {
        make_toy_dataset(self.count, self.size, self.classes, self.seed, self.blur, self.noise)
    }

    /// `held_out` further samples drawn after the training set.
    pub fn held_out_set(&self, held_out: usize) -> Result<Vec<ToySample>> {
        if held_out == 0 {
            return Err(DtError::InvalidParameter("held-out set must be nonempty".into()));
        }
        let mut all = make_toy_dataset(
            self.count + held_out,
            self.size,
            self.classes,
            self.seed,
            self.blur,
            self.noise,
        )?;
        Ok(all.split_off(self.count))
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lr={}", self.lr)?;
        writeln!(f, "epochs={}", self.epochs)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "sigma_s={}", self.sigma_s)?;
        writeln!(f, "sigma_r={}", self.sigma_r)?;
        writeln!(f, "iterations={}", self.iterations)?;
        writeln!(f, "blur={}", self.blur)?;
        writeln!(f, "noise={}", self.noise)?;
        writeln!(f, "classes={}", self.classes)?;
        writeln!(f, "size={}", self.size)?;
        writeln!(f, "count={}", self.count)
    }
}

/// Where the edge map used for filtering comes from.
#[derive(Clone, Copy, Debug)]
pub enum EdgeSource<'a> {
    /// No filtering; the coarse scores are used as they are.
    Raw,
    Gradient,
    Model(&'a EdgeModel),
}

impl EdgeSource<'_> {
    pub fn edges(&self, sample: &ToySample) -> Result<Option<EdgeMap>> {
        match self {
            EdgeSource::Raw => Ok(None),
            EdgeSource::Gradient => gradient_magnitude_edges(&sample.image).map(Some),
            EdgeSource::Model(m) => model_edges(&sample.image, m).map(Some),
        }
    }
}

/// Argmax predictions for every sample.
pub fn predict(samples: &[ToySample], source: EdgeSource<'_>, params: &DtParams) -> Result<Vec<LabelMap>> {
    samples
        .iter()
        .map(|s| match source.edges(s)? {
            None => Ok(s.coarse_scores.argmax()),
            Some(g) => Ok(filter_2d(&s.coarse_scores, &g, params, false)?.0.argmax()),
        })
        .collect()
}

/// Mean IOU with intersections and unions pooled over all samples.
pub fn pooled_miou(samples: &[ToySample], predictions: &[LabelMap], classes: usize) -> Result<f64> {
    let mut acc = IouAccumulator::new(classes);
    for (s, p) in samples.iter().zip(predictions) {
        acc.add(p, &s.labels, None)?;
    }
    acc.report()
        .mean_iou
        .ok_or_else(|| DtError::InvalidParameter("no pixels to evaluate".into()))
}

pub fn pooled_trimap(
    samples: &[ToySample],
    predictions: &[LabelMap],
    classes: usize,
    widths: &[f64],
) -> Result<TrimapCurve> {
    let pairs: Vec<(&LabelMap, &LabelMap)> = predictions.iter().zip(samples.iter().map(|s| &s.labels)).collect();
    trimap_curve_many(&pairs, classes, widths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_defaults_and_overrides() {
        assert_eq!(TrainConfig::parse("").unwrap(), TrainConfig::default());
        let cfg = TrainConfig::parse("# comment\nlr = 0.5\n\nepochs=3\nsize=16\n").unwrap();
        assert_eq!((cfg.lr, cfg.epochs, cfg.size), (0.5, 3, 16));
        let text = cfg.to_string();
        assert_eq!(TrainConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = TrainConfig::parse("learning_rate=1").unwrap_err();
        for key in CONFIG_KEYS {
            assert!(err.0.contains(key), "{err}");
        }
        assert!(TrainConfig::parse("lr").is_err());
        assert!(TrainConfig::parse("epochs=-1").is_err());
        assert!(TrainConfig::parse("sigma_r=0").is_err());
        assert!(TrainConfig::parse("lr=-1").is_err());
    }

    #[test]
    fn held_out_continues_the_training_stream() {
        let cfg = TrainConfig::parse("count=2\nsize=12").unwrap();
        let train = cfg.training_set().unwrap();
        let held = cfg.held_out_set(3).unwrap();
        let all = make_toy_dataset(5, 12, 4, 0, 2.0, 0.2).unwrap();
        assert_eq!(train, all[..2]);
        assert_eq!(held, all[2..]);
    }

    #[test]
    fn raw_predictions_match_argmax() {
        let cfg = TrainConfig::parse("count=2\nsize=12\nblur=0\nnoise=0").unwrap();
        let set = cfg.training_set().unwrap();
        let pred = predict(&set, EdgeSource::Raw, &cfg.params().unwrap()).unwrap();
        assert_eq!(pooled_miou(&set, &pred, 4).unwrap(), 1.0);
    }
}
