//! The recursive filter as a degenerate gated recurrent unit.
//!
//! A GRU step is `y_i = z_i ỹ_i + (1 - z_i) y_{i-1}`. With candidate
//! `ỹ_i = x_i` and update gate `z_i = 1 - w_i` it is exactly one step of the
//! domain transform recursion. Writing the gate as `sigmoid(f_i)` fixes the
//! edge value that produces it:
//!
//! ```text
//! g = (σ_r/σ_s) ((σ_k/√2) softplus(f) - 1)
//! ```
//!
//! Nothing here sits on the training path.

use std::f64::consts::SQRT_2;

use crate::error::{DtError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GruCorrespondence {
    sigma_s: f64,
    sigma_r: f64,
    sigma_k: f64,
}

impl GruCorrespondence {
    pub fn new(sigma_s: f64, sigma_r: f64, sigma_k: f64) -> Result<Self> {
        for (name, v) in [("sigma_s", sigma_s), ("sigma_r", sigma_r), ("sigma_k", sigma_k)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(DtError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            sigma_s,
            sigma_r,
            sigma_k,
        })
    }

    pub fn sigma_s(&self) -> f64 {
        self.sigma_s
    }

    pub fn sigma_r(&self) -> f64 {
        self.sigma_r
    }

    pub fn sigma_k(&self) -> f64 {
        self.sigma_k
    }
}

/// `log(1 + e^f)` without overflow.
pub fn softplus(f: f64) -> f64 {
    f.max(0.0) + (-f.abs()).exp().ln_1p()
}

pub fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// Update gate `z = 1 - w` for a recursion weight `w ∈ (0, 1]`.
pub fn weight_to_gate(w: f64) -> Result<f64> {
    if !(w > 0.0 && w <= 1.0) {
        return Err(DtError::InvalidParameter(format!("weight {w} outside (0, 1]")));
    }
    Ok(1.0 - w)
}

/// Edge value whose recursion weight equals `1 - sigmoid(f)`. Can be negative.
pub fn activation_to_edge(f: f64, corr: &GruCorrespondence) -> f64 {
    corr.sigma_r / corr.sigma_s * (corr.sigma_k / SQRT_2 * softplus(f) - 1.0)
}

/// Recursion weight for edge value `g` at iteration std `σ_k`.
pub fn edge_to_weight(g: f64, corr: &GruCorrespondence) -> f64 {
    (-SQRT_2 / corr.sigma_k * (1.0 + g * corr.sigma_s / corr.sigma_r)).exp()
}

/// `|(1 - w) - sigmoid(f)|` after mapping `f` to an edge value and back to a weight.
pub fn verify_gate_equivalence(f: f64, corr: &GruCorrespondence) -> f64 {
    let g = activation_to_edge(f, corr);
    let w = edge_to_weight(g, corr);
    ((1.0 - w) - sigmoid(f)).abs()
}

/// GRU recursion with candidate `x` and per-step gates `z`; `y_0 = x_0`.
pub fn gru_scan(x: &[f64], z: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), z.len());
    let mut y = Vec::with_capacity(x.len());
    for (i, (&xi, &zi)) in x.iter().zip(z).enumerate() {
        let next = if i == 0 { xi } else { zi * xi + (1.0 - zi) * y[i - 1] };
        y.push(next);
    }
    y
}
