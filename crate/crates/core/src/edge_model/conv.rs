use crate::error::{DtError, Result};
use crate::types::ScoreMap;

/// 3×3 convolution, stride 1, replicate padding, with bias.
///
/// Weights are laid out `[out][in][ky][kx]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3x3 {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[inline]
fn clamp_offset(pos: usize, offset: usize, len: usize) -> usize {
    (pos + offset).saturating_sub(1).min(len - 1)
}

impl Conv3x3 {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    pub fn weight_index(&self, out: usize, input: usize, ky: usize, kx: usize) -> usize {
        ((out * self.in_channels + input) * 3 + ky) * 3 + kx
    }

    pub fn num_parameters(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Pre-activation output.
    pub fn forward(&self, input: &ScoreMap) -> Result<ScoreMap> {
        if input.channels() != self.in_channels {
            return Err(DtError::shape(
                format!("{} input channels", self.in_channels),
                format!("{} channels", input.channels()),
            ));
        }
        let (h, w, cin) = input.shape();
        let cout = self.out_channels;
        let src = input.data();
        let mut out = Vec::with_capacity(h * w * cout);
        let mut acc = vec![0.0; cout];
        for i in 0..h {
            for j in 0..w {
                acc.copy_from_slice(&self.bias);
                for ky in 0..3 {
                    let si = clamp_offset(i, ky, h);
                    for kx in 0..3 {
                        let sj = clamp_offset(j, kx, w);
                        let px = &src[(si * w + sj) * cin..(si * w + sj + 1) * cin];
                        for (o, a) in acc.iter_mut().enumerate() {
                            for (ci, &v) in px.iter().enumerate() {
                                *a += self.weight[self.weight_index(o, ci, ky, kx)] * v;
                            }
                        }
                    }
                }
                out.extend_from_slice(&acc);
            }
        }
        ScoreMap::from_vec(h, w, cout, out)
    }

    /// Accumulates parameter gradients into `grad` and, when requested,
    /// returns the gradient with respect to the input.
    pub fn backward(
        &self,
        input: &ScoreMap,
        grad_out: &ScoreMap,
        grad: &mut Conv3x3,
        want_input_grad: bool,
    ) -> Result<Option<ScoreMap>> {
        let (h, w, cin) = input.shape();
        let cout = self.out_channels;
        if grad_out.shape() != (h, w, cout) {
            return Err(DtError::shape(
                format!("output gradient {h}x{w}x{cout}"),
                format!("{grad_out}"),
            ));
        }
        let src = input.data();
        let gout = grad_out.data();
        let mut gin = want_input_grad.then(|| vec![0.0; h * w * cin]);
        for i in 0..h {
            for j in 0..w {
                let go = &gout[(i * w + j) * cout..(i * w + j + 1) * cout];
                for (o, &g) in go.iter().enumerate() {
                    grad.bias[o] += g;
                }
                for ky in 0..3 {
                    let si = clamp_offset(i, ky, h);
                    for kx in 0..3 {
                        let sj = clamp_offset(j, kx, w);
                        let base = (si * w + sj) * cin;
                        for (o, &g) in go.iter().enumerate() {
                            if g == 0.0 {
                                continue;
                            }
                            for ci in 0..cin {
                                let widx = self.weight_index(o, ci, ky, kx);
                                grad.weight[widx] += g * src[base + ci];
                                if let Some(gi) = gin.as_mut() {
                                    gi[base + ci] += g * self.weight[widx];
                                }
                            }
                        }
                    }
                }
            }
        }
        gin.map(|data| ScoreMap::from_vec(h, w, cin, data)).transpose()
    }
}
