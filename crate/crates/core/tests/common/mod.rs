//! Shared test helpers, including a scalar reverse-mode differentiator that
//! rebuilds the filter from elementary operations.
#![allow(dead_code)]

use std::path::PathBuf;

use dtfilter::edge_model::{EdgeModel, EdgeModelConfig};
use dtfilter::ScoreMap;
use proptest::prelude::*;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[derive(Clone, Copy, Debug)]
pub struct Var(usize);

#[derive(Clone, Copy)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Exp(usize),
}

/// Records every elementary operation so gradients can be swept backwards.
#[derive(Default)]
pub struct Graph {
    values: Vec<f64>,
    ops: Vec<Op>,
}

impl Graph {
    fn push(&mut self, value: f64, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn leaf(&mut self, v: f64) -> Var {
        self.push(v, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(self.values[a.0] + self.values[b.0], Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(self.values[a.0] - self.values[b.0], Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.push(self.values[a.0] * self.values[b.0], Op::Mul(a.0, b.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.push(self.values[a.0].exp(), Op::Exp(a.0))
    }

    /// Adjoint of every node with respect to `Σ seeds[i].1 · seeds[i].0`.
    pub fn gradient(&self, seeds: &[(Var, f64)]) -> Vec<f64> {
        let mut adj = vec![0.0; self.values.len()];
        for &(v, s) in seeds {
            adj[v.0] += s;
        }
        for n in (0..self.values.len()).rev() {
            let a = adj[n];
            if a == 0.0 {
                continue;
            }
            match self.ops[n] {
                Op::Leaf => {}
                Op::Add(p, q) => {
                    adj[p] += a;
                    adj[q] += a;
                }
                Op::Sub(p, q) => {
                    adj[p] += a;
                    adj[q] -= a;
                }
                Op::Mul(p, q) => {
                    adj[p] += a * self.values[q];
                    adj[q] += a * self.values[p];
                }
                Op::Exp(p) => adj[p] += a * self.values[n],
            }
        }
        adj
    }

    pub fn adjoint(adj: &[f64], v: Var) -> f64 {
        adj[v.0]
    }
}

/// The 1-D filter written directly from its definition: per iteration a
/// left-to-right pass `y_i = (1−w_i)x_i + w_i y_{i−1}` and a right-to-left
/// pass `y_i = (1−w_{i+1})x_i + w_{i+1} y_{i+1}`, with
/// `w_i = exp(−√2 (1 + g_i σ_s/σ_r) / σ_k)`.
pub fn unrolled_filter(graph: &mut Graph, x: &[Var], g: &[Var], sigma_s: f64, sigma_r: f64, k_total: u32) -> Vec<Var> {
    let n = x.len();
    let one = graph.leaf(1.0);
    let gain = graph.leaf(sigma_s / sigma_r);
    let mut y = x.to_vec();
    for k in 1..=k_total {
        let sigma_k =
            sigma_s * 3f64.sqrt() * 2f64.powi((k_total - k) as i32) / (4f64.powi(k_total as i32) - 1.0).sqrt();
        let coeff = graph.leaf(-std::f64::consts::SQRT_2 / sigma_k);
        let w: Vec<Var> = g
            .iter()
            .map(|&gi| {
                let t = graph.mul(gi, gain);
                let d = graph.add(one, t);
                let e = graph.mul(coeff, d);
                graph.exp(e)
            })
            .collect();
        let blend = |graph: &mut Graph, xi: Var, prev: Var, wi: Var| {
            let keep = graph.sub(one, wi);
            let a = graph.mul(keep, xi);
            let b = graph.mul(wi, prev);
            graph.add(a, b)
        };
        let mut fwd = y.clone();
        for i in 1..n {
            fwd[i] = blend(graph, y[i], fwd[i - 1], w[i]);
        }
        let mut bwd = fwd.clone();
        for i in (0..n.saturating_sub(1)).rev() {
            bwd[i] = blend(graph, fwd[i], bwd[i + 1], w[i + 1]);
        }
        y = bwd;
    }
    y
}

/// Gradients of `Σ u_i y_i` through the unrolled filter, plus its output.
pub struct UnrolledResult {
    pub y: Vec<f64>,
    pub grad_x: Vec<f64>,
    pub grad_g: Vec<f64>,
}

pub fn unrolled_gradients(x: &[f64], g: &[f64], u: &[f64], sigma_s: f64, sigma_r: f64, k: u32) -> UnrolledResult {
    let mut graph = Graph::default();
    let xv: Vec<Var> = x.iter().map(|&v| graph.leaf(v)).collect();
    let gv: Vec<Var> = g.iter().map(|&v| graph.leaf(v)).collect();
    let y = unrolled_filter(&mut graph, &xv, &gv, sigma_s, sigma_r, k);
    let seeds: Vec<(Var, f64)> = y.iter().copied().zip(u.iter().copied()).collect();
    let adj = graph.gradient(&seeds);
    UnrolledResult {
        y: y.iter().map(|&v| graph.value(v)).collect(),
        grad_x: xv.iter().map(|&v| Graph::adjoint(&adj, v)).collect(),
        grad_g: gv.iter().map(|&v| Graph::adjoint(&adj, v)).collect(),
    }
}

/// `|a − b| / max(1, |a|, |b|)`: relative for large values, absolute near zero.
pub fn scaled_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

pub fn max_scaled_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&p, &q)| scaled_error(p, q)).fold(0.0, f64::max)
}

/// Largest scaled error between the library (forward, grad_x, grad_g) and the
/// unrolled graph, checking the signal both as a 1×N and as an N×1 map.
pub fn unrolled_discrepancy(x: &[f64], g: &[f64], u: &[f64], params: &dtfilter::DtParams) -> f64 {
    use dtfilter::{backward_2d, filter_2d, EdgeMap, ScoreMap};
    let n = x.len();
    let reference = unrolled_gradients(x, g, u, params.sigma_s, params.sigma_r, params.iterations as u32);
    let mut worst: f64 = 0.0;
    for (h, w) in [(1, n), (n, 1)] {
        let xm = ScoreMap::from_vec(h, w, 1, x.to_vec()).unwrap();
        let gm = EdgeMap::from_vec(h, w, g.to_vec()).unwrap();
        let um = ScoreMap::from_vec(h, w, 1, u.to_vec()).unwrap();
        let (y, tape) = filter_2d(&xm, &gm, params, true).unwrap();
        let grads = backward_2d(&tape.unwrap(), &um).unwrap();
        worst = worst
            .max(max_scaled_error(y.data(), &reference.y))
            .max(max_scaled_error(grads.grad_x.data(), &reference.grad_x))
            .max(max_scaled_error(grads.grad_g.data(), &reference.grad_g));
    }
    worst
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Any finite double, including subnormals and signed zeros.
pub fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

pub fn score_map(max_side: usize, max_c: usize) -> impl Strategy<Value = ScoreMap> {
    (1..=max_side, 1..=max_side, 1..=max_c).prop_flat_map(|(h, w, c)| {
        prop::collection::vec(finite(), h * w * c).prop_map(move |d| ScoreMap::from_vec(h, w, c, d).unwrap())
    })
}

pub fn unit_map(h: usize, w: usize, c: usize) -> impl Strategy<Value = ScoreMap> {
    prop::collection::vec(0.0f64..=1.0, h * w * c).prop_map(move |d| ScoreMap::from_vec(h, w, c, d).unwrap())
}

pub fn edge_model() -> impl Strategy<Value = EdgeModel> {
    (1usize..5, 1usize..5).prop_flat_map(|(hidden, deep)| {
        let config = EdgeModelConfig { hidden, deep };
        prop::collection::vec(finite(), EdgeModel::zeros(config).num_parameters()).prop_map(move |flat| {
            let mut m = EdgeModel::zeros(config);
            m.set_flat(&flat).unwrap();
            m
        })
    })
}
