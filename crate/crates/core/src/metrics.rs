//! Intersection-over-union metrics and boundary-band (trimap) evaluation.
//!
//! Classes absent from both prediction and ground truth over the evaluated
//! pixels have no IOU and are left out of the mean. Bands are built from
//! ground-truth label boundaries: a pixel is on the boundary when one of its
//! 4-neighbours carries a different label, and the band of width `r` holds
//! every pixel within Euclidean distance `r` of a boundary pixel.

use std::fmt::Write as _;

use crate::error::{DtError, Result};
use crate::types::LabelMap;

#[derive(Clone, Debug, PartialEq)]
pub struct IouReport {
    /// `None` for classes absent from both maps.
    pub per_class_iou: Vec<Option<f64>>,
    /// `None` when no class is defined (nothing evaluated).
    pub mean_iou: Option<f64>,
}

impl IouReport {
    /// `class,iou` rows followed by `mean,<value>`; undefined entries print `n/a`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,iou\n");
        for (c, v) in self.per_class_iou.iter().enumerate() {
            let _ = writeln!(out, "{c},{}", fmt_opt(*v));
        }
        let _ = writeln!(out, "mean,{}", fmt_opt(self.mean_iou));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrimapCurve {
    pub widths: Vec<f64>,
    pub miou_at_width: Vec<Option<f64>>,
}

impl TrimapCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("width,miou\n");
        for (w, v) in self.widths.iter().zip(&self.miou_at_width) {
            let _ = writeln!(out, "{w},{}", fmt_opt(*v));
        }
        out
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| x.to_string())
}

/// Running intersection and union counts, so several images can be
/// evaluated as one pool of pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IouAccumulator {
    intersection: Vec<u64>,
    union: Vec<u64>,
}

impl IouAccumulator {
    pub fn new(classes: usize) -> Self {
        Self {
            intersection: vec![0; classes],
            union: vec![0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.intersection.len()
    }

    /// Adds every pixel where `mask` is true (all pixels when `mask` is `None`).
    pub fn add(&mut self, pred: &LabelMap, gt: &LabelMap, mask: Option<&[bool]>) -> Result<()> {
        check_pair(pred, gt, self.classes())?;
        for (idx, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
            if mask.is_some_and(|m| !m[idx]) {
                continue;
            }
            if p == g {
                self.intersection[p] += 1;
                self.union[p] += 1;
            } else {
                self.union[p] += 1;
                self.union[g] += 1;
            }
        }
        Ok(())
    }

    pub fn report(&self) -> IouReport {
        let per_class_iou: Vec<Option<f64>> = self
            .intersection
            .iter()
            .zip(&self.union)
            .map(|(&i, &u)| (u > 0).then(|| i as f64 / u as f64))
            .collect();
        let defined: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
        let mean_iou = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        IouReport {
            per_class_iou,
            mean_iou,
        }
    }
}

fn check_pair(pred: &LabelMap, gt: &LabelMap, classes: usize) -> Result<()> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(DtError::shape(
            format!("prediction {}x{}", gt.height(), gt.width()),
            format!("prediction {}x{}", pred.height(), pred.width()),
        ));
    }
    pred.check_range(classes)?;
    gt.check_range(classes)
}

pub fn mean_iou(pred: &LabelMap, gt: &LabelMap, classes: usize) -> Result<IouReport> {
    let mut acc = IouAccumulator::new(classes);
    acc.add(pred, gt, None)?;
    Ok(acc.report())
}

/// Pixels with a 4-neighbour of a different label.
pub fn boundary_pixels(gt: &LabelMap) -> Vec<bool> {
    let (h, w) = (gt.height(), gt.width());
    let mut out = vec![false; h * w];
    for i in 0..h {
        for j in 0..w {
            let v = gt.get(i, j);
            let differs = (i > 0 && gt.get(i - 1, j) != v)
                || (i + 1 < h && gt.get(i + 1, j) != v)
                || (j > 0 && gt.get(i, j - 1) != v)
                || (j + 1 < w && gt.get(i, j + 1) != v);
            out[i * w + j] = differs;
        }
    }
    out
}

/// Exact squared Euclidean distance to the nearest `true` pixel
/// (`f64::INFINITY` everywhere when there is none), via the separable
/// lower-envelope algorithm of Felzenszwalb and Huttenlocher.
pub fn squared_distance_transform(seeds: &[bool], h: usize, w: usize) -> Vec<f64> {
    assert_eq!(seeds.len(), h * w);
    let mut grid: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let mut line = Vec::new();
    let mut out = Vec::new();
    for j in 0..w {
        line.clear();
        line.extend((0..h).map(|i| grid[i * w + j]));
        edt_1d(&line, &mut out);
        for i in 0..h {
            grid[i * w + j] = out[i];
        }
    }
    for i in 0..h {
        line.clear();
        line.extend_from_slice(&grid[i * w..(i + 1) * w]);
        edt_1d(&line, &mut out);
        grid[i * w..(i + 1) * w].copy_from_slice(&out);
    }
    grid
}

fn edt_1d(f: &[f64], out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, f64::INFINITY);
    let sites: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if sites.is_empty() {
        return;
    }
    // Lower envelope of parabolas rooted at finite sites.
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    let intersect = |q: usize, p: usize| -> f64 {
        let (qf, pf) = (q as f64, p as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf))
    };
    for &q in &sites {
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = intersect(q, p);
                    if s <= z[v.len() - 1] {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < v.len() && z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Band of pixels within Euclidean distance `width` of a ground-truth boundary.
pub fn boundary_band(gt: &LabelMap, width: f64) -> Result<Vec<bool>> {
    if !(width >= 0.0) {
        return Err(DtError::InvalidParameter(format!("band width {width} must be nonnegative")));
    }
    let dist = squared_distance_transform(&boundary_pixels(gt), gt.height(), gt.width());
    let limit = width * width;
    Ok(dist.iter().map(|&d| d <= limit).collect())
}

/// Mean IOU restricted to the band at each width.
pub fn trimap_curve(pred: &LabelMap, gt: &LabelMap, classes: usize, widths: &[f64]) -> Result<TrimapCurve> {
    trimap_curve_many(&[(pred, gt)], classes, widths)
}

/// Pooled trimap curve over several images.
pub fn trimap_curve_many(pairs: &[(&LabelMap, &LabelMap)], classes: usize, widths: &[f64]) -> Result<TrimapCurve> {
    if widths.windows(2).any(|p| p[1] <= p[0]) {
        return Err(DtError::InvalidParameter("trimap widths must be strictly increasing".into()));
    }
    if let Some(w) = widths.iter().find(|w| !(**w >= 0.0)) {
        return Err(DtError::InvalidParameter(format!("band width {w} must be nonnegative")));
    }
    let mut accs = vec![IouAccumulator::new(classes); widths.len()];
    for (pred, gt) in pairs {
        check_pair(pred, gt, classes)?;
        let dist = squared_distance_transform(&boundary_pixels(gt), gt.height(), gt.width());
        for (acc, &w) in accs.iter_mut().zip(widths) {
            let band: Vec<bool> = dist.iter().map(|&d| d <= w * w).collect();
            acc.add(pred, gt, Some(&band))?;
        }
    }
    Ok(TrimapCurve {
        widths: widths.to_vec(),
        miou_at_width: accs.iter().map(|a| a.report().mean_iou).collect(),
    })
}

/// Parses a comma-separated width list such as `0,2,6,10`.
pub fn parse_widths(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| DtError::InvalidParameter(format!("bad width '{t}'")))
        })
        .collect()
}
