//! Forward domain transform.
//!
//! The 2-D filter runs `K` iterations. Each iteration derives a weight map
//! from the density and that iteration's σ_k, then applies four in-place 1-D
//! recursive passes on the previous output: rows left→right, rows
//! right→left, columns top→bottom, columns bottom→top. All channels share
//! the same weight map.
//!
//! The weight that couples pixels `i-1` and `i` along a line is always the
//! weight stored at the higher index `i`, in both directions. The first
//! pixel visited by a pass is copied through unchanged.
//!
//! The update `y_i = (1 - w_i) x_i + w_i y_{i-1}` is evaluated as
//! `x_i + w_i (y_{i-1} - x_i)`, which leaves constant signals untouched
//! bit-for-bit.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;

use crate::error::{DtError, Result};
use crate::types::{assert_shapes_compatible, DensityMap, DtParams, EdgeMap, ScoreMap, WeightMap};

/// Per-iteration standard deviations σ_1 > … > σ_K whose variances sum to σ_s².
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaSchedule {
    values: Vec<f64>,
}

impl SigmaSchedule {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn sigma_schedule(sigma_s: f64, iterations: usize) -> Result<SigmaSchedule> {
    if !(sigma_s.is_finite() && sigma_s > 0.0) {
        return Err(DtError::InvalidParameter(format!(
            "sigma_s must be positive, got {sigma_s}"
        )));
    }
    if iterations < 1 {
        return Err(DtError::InvalidParameter("iterations must be at least 1".into()));
    }
    let k_total = iterations as i32;
    // sqrt(3 / (4^K - 1)) is exactly 1 for K = 1, so σ_1 = σ_s bit-for-bit.
    let norm = (3.0 / (4f64.powi(k_total) - 1.0)).sqrt();
    let values = (1..=k_total)
        .map(|k| sigma_s * 2f64.powi(k_total - k) * norm)
        .collect();
    Ok(SigmaSchedule { values })
}

pub fn density_from_edges(g: &EdgeMap, params: &DtParams) -> DensityMap {
    let gain = params.edge_gain();
    DensityMap {
        height: g.height(),
        width: g.width(),
        data: g.data().iter().map(|&gi| 1.0 + gi * gain).collect(),
    }
}

pub fn weights_from_density(d: &DensityMap, sigma_k: f64) -> Result<WeightMap> {
    if !(sigma_k.is_finite() && sigma_k > 0.0) {
        return Err(DtError::InvalidParameter(format!(
            "sigma_k must be positive, got {sigma_k}"
        )));
    }
    let scale = -SQRT_2 / sigma_k;
    Ok(WeightMap {
        height: d.height,
        width: d.width,
        data: d.data.iter().map(|&di| (scale * di).exp()).collect(),
    })
}

/// Sum over the three colour channels of the forward-difference gradient norm.
///
/// Neighbours outside the image are clamped, so the last row and column
/// contribute a zero difference along that axis.
pub fn gradient_magnitude_edges(image: &ScoreMap) -> Result<EdgeMap> {
    if image.channels() != 3 {
        return Err(DtError::shape(
            "3-channel image",
            format!("{} channels", image.channels()),
        ));
    }
    let (h, w, _) = image.shape();
    let mut g = Vec::with_capacity(h * w);
    for i in 0..h {
        let down = (i + 1).min(h - 1);
        for j in 0..w {
            let right = (j + 1).min(w - 1);
            let mut sum = 0.0;
            for c in 0..3 {
                let v = image.get(i, j, c);
                let dx = image.get(i, right, c) - v;
                let dy = image.get(down, j, c) - v;
                sum += dx.hypot(dy);
            }
            g.push(sum);
        }
    }
    EdgeMap::from_vec(h, w, g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Increasing index: left→right or top→bottom.
    Forward,
    /// Decreasing index: right→left or bottom→top.
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    Rows,
    Columns,
}

/// The four passes of one iteration, in execution order.
pub const PASS_ORDER: [(Axis, Direction); 4] = [
    (Axis::Rows, Direction::Forward),
    (Axis::Rows, Direction::Backward),
    (Axis::Columns, Direction::Forward),
    (Axis::Columns, Direction::Backward),
];

/// One recursive pass over a 1-D signal.
pub fn filter_1d_pass(x: &[f64], w: &[f64], direction: Direction) -> Result<Vec<f64>> {
    if x.len() != w.len() {
        return Err(DtError::shape(
            format!("{} weights", x.len()),
            format!("{} weights", w.len()),
        ));
    }
    if x.is_empty() {
        return Err(DtError::InvalidDimension("empty signal".into()));
    }
    let mut y = x.to_vec();
    line_pass(&mut y, w, 1, direction);
    Ok(y)
}

/// In-place recursion along one contiguous line of `w.len()` pixels with
/// `channels` interleaved values per pixel.
#[inline]
pub(crate) fn line_pass(line: &mut [f64], w: &[f64], channels: usize, direction: Direction) {
    let n = w.len();
    match direction {
        Direction::Forward => {
            for j in 1..n {
                let wt = w[j];
                let (prev, cur) = line[(j - 1) * channels..(j + 1) * channels].split_at_mut(channels);
                for (y, &yp) in cur.iter_mut().zip(prev.iter()) {
                    *y += wt * (yp - *y);
                }
            }
        }
        Direction::Backward => {
            for j in (0..n.saturating_sub(1)).rev() {
                let wt = w[j + 1];
                let (cur, next) = line[j * channels..(j + 2) * channels].split_at_mut(channels);
                for (y, &yn) in cur.iter_mut().zip(next.iter()) {
                    *y += wt * (yn - *y);
                }
            }
        }
    }
}

/// `row += w * (other - row)`, per pixel, with per-pixel weights.
#[inline]
fn blend_rows(row: &mut [f64], other: &[f64], w: &[f64], channels: usize) {
    for ((px, opx), &wt) in row
        .chunks_exact_mut(channels)
        .zip(other.chunks_exact(channels))
        .zip(w.iter())
    {
        for (y, &yo) in px.iter_mut().zip(opx.iter()) {
            *y += wt * (yo - *y);
        }
    }
}

/// Column recursion over a set of row slices sharing the same column band.
/// `rows[i]` is row `i` restricted to the band, `weights[i]` the matching
/// weight slice.
fn column_pass_rows(rows: &mut [&mut [f64]], weights: &[&[f64]], channels: usize, direction: Direction) {
    let h = rows.len();
    match direction {
        Direction::Forward => {
            for i in 1..h {
                let (above, below) = rows.split_at_mut(i);
                blend_rows(below[0], above[i - 1], weights[i], channels);
            }
        }
        Direction::Backward => {
            for i in (0..h.saturating_sub(1)).rev() {
                let (upper, lower) = rows.split_at_mut(i + 1);
                blend_rows(upper[i], lower[0], weights[i + 1], channels);
            }
        }
    }
}

/// How the 2-D passes distribute lines over threads. Output is bitwise
/// identical for every setting.
pub(crate) enum Exec {
    Serial,
    Pool(rayon::ThreadPool),
}

impl Exec {
    pub(crate) fn new(threads: usize) -> Result<Self> {
        if threads <= 1 {
            return Ok(Exec::Serial);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map(Exec::Pool)
            .map_err(|e| DtError::InvalidParameter(format!("cannot build thread pool: {e}")))
    }

    fn threads(&self) -> usize {
        match self {
            Exec::Serial => 1,
            Exec::Pool(pool) => pool.current_num_threads(),
        }
    }
}

/// Applies one 2-D pass in place on an H×W×C buffer.
pub(crate) fn apply_pass(
    buf: &mut [f64],
    weights: &[f64],
    (h, w, c): (usize, usize, usize),
    axis: Axis,
    direction: Direction,
    exec: &Exec,
) {
    let stride = w * c;
    match (axis, exec) {
        (Axis::Rows, Exec::Serial) => {
            for (line, wl) in buf.chunks_exact_mut(stride).zip(weights.chunks_exact(w)) {
                line_pass(line, wl, c, direction);
            }
        }
        (Axis::Rows, Exec::Pool(pool)) => pool.install(|| {
            buf.par_chunks_exact_mut(stride)
                .zip(weights.par_chunks_exact(w))
                .for_each(|(line, wl)| line_pass(line, wl, c, direction));
        }),
        (Axis::Columns, Exec::Serial) => {
            let mut rows: Vec<&mut [f64]> = buf.chunks_exact_mut(stride).collect();
            let wrows: Vec<&[f64]> = weights.chunks_exact(w).collect();
            column_pass_rows(&mut rows, &wrows, c, direction);
        }
        (Axis::Columns, Exec::Pool(pool)) => {
            let band_width = w.div_ceil(exec.threads().min(w).max(1));
            let bands = w.div_ceil(band_width);
            let mut band_rows: Vec<Vec<&mut [f64]>> = (0..bands).map(|_| Vec::with_capacity(h)).collect();
            let mut band_weights: Vec<Vec<&[f64]>> = (0..bands).map(|_| Vec::with_capacity(h)).collect();
            for (row, wrow) in buf.chunks_exact_mut(stride).zip(weights.chunks_exact(w)) {
                for ((piece, wpiece), (rs, ws)) in row
                    .chunks_mut(band_width * c)
                    .zip(wrow.chunks(band_width))
                    .zip(band_rows.iter_mut().zip(band_weights.iter_mut()))
                {
                    rs.push(piece);
                    ws.push(wpiece);
                }
            }
            pool.install(|| {
                band_rows
                    .par_iter_mut()
                    .zip(band_weights.par_iter())
                    .for_each(|(rows, ws)| column_pass_rows(rows, ws, c, direction));
            });
        }
    }
}

/// Input snapshot of one 1-D pass.
#[derive(Clone, Debug)]
pub struct PassRecord {
    pub iteration: usize,
    pub axis: Axis,
    pub direction: Direction,
    pub input: ScoreMap,
}

/// Everything the reverse sweep needs: per-pass inputs and per-iteration weights.
#[derive(Clone, Debug)]
pub struct DtTape {
    pub params: DtParams,
    pub schedule: SigmaSchedule,
    pub edges: EdgeMap,
    pub weights: Vec<WeightMap>,
    pub passes: Vec<PassRecord>,
}

impl DtTape {
    /// Checks that the tape holds exactly `4K` passes in execution order
    /// and `K` weight maps of the right size.
    pub fn validate(&self) -> Result<()> {
        let k = self.params.iterations;
        if self.schedule.len() != k || self.weights.len() != k {
            return Err(DtError::Tape(format!(
                "expected {k} weight maps, found {}",
                self.weights.len()
            )));
        }
        if self.passes.len() != 4 * k {
            return Err(DtError::Tape(format!(
                "expected {} passes, found {}",
                4 * k,
                self.passes.len()
            )));
        }
        let (h, w) = (self.edges.height(), self.edges.width());
        if self.weights.iter().any(|wm| wm.height != h || wm.width != w) {
            return Err(DtError::Tape("weight map shape differs from edge map".into()));
        }
        let shape = self.passes[0].input.shape();
        for (idx, rec) in self.passes.iter().enumerate() {
            let (axis, direction) = PASS_ORDER[idx % 4];
            if rec.iteration != idx / 4 || rec.axis != axis || rec.direction != direction {
                return Err(DtError::Tape(format!("pass {idx} recorded out of order")));
            }
            if rec.input.shape() != shape || rec.input.height() != h || rec.input.width() != w {
                return Err(DtError::Tape(format!("pass {idx} snapshot has shape {}", rec.input)));
            }
        }
        Ok(())
    }
}

/// Full 2-D filter, single-threaded.
pub fn filter_2d(
    x: &ScoreMap,
    g: &EdgeMap,
    params: &DtParams,
    record_tape: bool,
) -> Result<(ScoreMap, Option<DtTape>)> {
    filter_2d_threaded(x, g, params, record_tape, 1)
}

/// Full 2-D filter with lines of each pass spread over `threads` workers.
pub fn filter_2d_threaded(
    x: &ScoreMap,
    g: &EdgeMap,
    params: &DtParams,
    record_tape: bool,
    threads: usize,
) -> Result<(ScoreMap, Option<DtTape>)> {
    assert_shapes_compatible(x, g)?;
    params.validate()?;
    let exec = Exec::new(threads)?;
    let schedule = sigma_schedule(params.sigma_s, params.iterations)?;
    let density = density_from_edges(g, params);
    let shape = x.shape();

    let mut y = x.clone();
    let mut weights = Vec::with_capacity(params.iterations);
    let mut passes = Vec::with_capacity(if record_tape { 4 * params.iterations } else { 0 });
    for (iteration, &sigma_k) in schedule.values().iter().enumerate() {
        let wm = weights_from_density(&density, sigma_k)?;
        for (axis, direction) in PASS_ORDER {
            if record_tape {
                passes.push(PassRecord {
                    iteration,
                    axis,
                    direction,
                    input: y.clone(),
                });
            }
            apply_pass(y.data_mut(), wm.data(), shape, axis, direction, &exec);
        }
        if record_tape {
            weights.push(wm);
        }
    }

    let tape = record_tape.then(|| DtTape {
        params: *params,
        schedule,
        edges: g.clone(),
        weights,
        passes,
    });
    Ok((y, tape))
}
