//! Dense map types shared by the filter, the edge model and the metrics.
//!
//! Every map is stored row-major. Multi-channel maps keep the channel index
//! innermost, so element `(i, j, c)` lives at `(i * width + j) * channels + c`
//! and one image row is a contiguous slice of `width * channels` values.

use std::fmt;

use crate::error::{DtError, Result};

fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(DtError::InvalidDimension(format!(
            "{height}x{width}x{channels} has a zero dimension"
        )));
    }
    Ok(())
}

/// H×W×C real-valued per-pixel class scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, channels: usize, fill: f64) -> Result<Self> {
        check_dims(height, width, channels)?;
        if !fill.is_finite() {
            return Err(DtError::InvalidParameter(format!("fill value {fill} is not finite")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data: vec![fill; height * width * channels],
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, 0.0)
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, channels)?;
        if data.len() != height * width * channels {
            return Err(DtError::shape(
                format!("{} values for {height}x{width}x{channels}", height * width * channels),
                format!("{} values", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DtError::InvalidParameter(format!(
                "non-finite score {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, c: usize) -> usize {
        debug_assert!(i < self.height && j < self.width && c < self.channels);
        (i * self.width + j) * self.channels + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[self.index(i, j, c)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, value: f64) {
        let idx = self.index(i, j, c);
        self.data[idx] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Raw mutable access. Callers must keep every value finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Copy of a single channel as an H×W×1 map.
    pub fn channel(&self, c: usize) -> ScoreMap {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        ScoreMap {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Per-pixel index of the highest-scoring channel (first wins on ties).
    pub fn argmax(&self) -> LabelMap {
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| {
                let mut best = 0;
                for (c, &v) in px.iter().enumerate() {
                    if v > px[best] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        LabelMap {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl fmt::Display for ScoreMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// H×W nonnegative reference edge strengths.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl EdgeMap {
    pub fn new(height: usize, width: usize, fill: f64) -> Result<Self> {
        check_dims(height, width, 1)?;
        if !fill.is_finite() || fill < 0.0 {
            return Err(DtError::InvalidParameter(format!(
                "edge fill {fill} must be finite and nonnegative"
            )));
        }
        Ok(Self {
            height,
            width,
            data: vec![fill; height * width],
        })
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, 1)?;
        if data.len() != height * width {
            return Err(DtError::shape(
                format!("{} values for {height}x{width}", height * width),
                format!("{} values", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(DtError::InvalidParameter(format!(
                "edge value {} at flat index {pos} must be finite and nonnegative",
                data[pos]
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

impl fmt::Display for EdgeMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// H×W integer class ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<usize>,
}

impl LabelMap {
    pub fn from_vec(height: usize, width: usize, data: Vec<usize>) -> Result<Self> {
        check_dims(height, width, 1)?;
        if data.len() != height * width {
            return Err(DtError::shape(
                format!("{} labels for {height}x{width}", height * width),
                format!("{} labels", data.len()),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> usize {
        self.data[i * self.width + j]
    }

    pub fn data(&self) -> &[usize] {
        &self.data
    }

    /// Fails with a label error on the first id outside `[0, classes)`.
    pub fn check_range(&self, classes: usize) -> Result<()> {
        match self.data.iter().position(|&l| l >= classes) {
            Some(index) => Err(DtError::Label {
                label: self.data[index],
                index,
                classes,
            }),
            None => Ok(()),
        }
    }
}

/// Filter hyper-parameters: spatial std, range std and iteration count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DtParams {
    pub sigma_s: f64,
    pub sigma_r: f64,
    pub iterations: usize,
}

impl DtParams {
    pub fn new(sigma_s: f64, sigma_r: f64, iterations: usize) -> Result<Self> {
        let params = Self {
            sigma_s,
            sigma_r,
            iterations,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_s.is_finite() && self.sigma_s > 0.0) {
            return Err(DtError::InvalidParameter(format!(
                "sigma_s must be positive, got {}",
                self.sigma_s
            )));
        }
        if !(self.sigma_r.is_finite() && self.sigma_r > 0.0) {
            return Err(DtError::InvalidParameter(format!(
                "sigma_r must be positive, got {}",
                self.sigma_r
            )));
        }
        if self.iterations < 1 {
            return Err(DtError::InvalidParameter("iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// The factor σ_s/σ_r mapping edge strength to extra density.
    pub fn edge_gain(&self) -> f64 {
        self.sigma_s / self.sigma_r
    }
}

/// Per-pixel domain transform density, always ≥ 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMap {
    pub(crate) height: usize,
    pub(crate) width: usize,
    pub(crate) data: Vec<f64>,
}

impl DensityMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Per-pixel recursion weights in (0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    pub(crate) height: usize,
    pub(crate) width: usize,
    pub(crate) data: Vec<f64>,
}

impl WeightMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Succeeds iff the score map and edge map have the same height and width.
pub fn assert_shapes_compatible(x: &ScoreMap, g: &EdgeMap) -> Result<()> {
    if x.height() != g.height() || x.width() != g.width() {
        return Err(DtError::shape(
            format!("edge map {}x{} (from score map {x})", x.height(), x.width()),
            format!("edge map {g}"),
        ));
    }
    Ok(())
}
