//! Position + sinusoidal geometric-prior loss, the reconstruction loss and
//! the weighted objective used for training, with analytic gradients with
//! respect to the predicted keypoints.
//!
//! For a frame with predictions `p` and targets `k` over the edge set `E`:
//!
//! ```text
//! position  = sum_i |p_i - k_i|^2
//! geometric = sum_(i,j) in E |sin(w0 (p_i - p_j)) - sin(w0 (k_i - k_j))|^2
//! total     = recon + lambda_sp * (position + lambda_geo * geometric)
//! ```
//!
//! `sin` acts elementwise on the coordinate difference. Frame losses are
//! plain sums (no normalization); sequence losses sum over frames.

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::KeypointSet;
use crate::siren::DEFAULT_OMEGA0;

/// Edge set over keypoint indices plus the reference length of each edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGraph {
    edges: Vec<(usize, usize)>,
    reference_lengths: Vec<f64>,
}

impl SkeletonGraph {
    /// Edges are stored with `i < j`; duplicates, self loops and indices
    /// outside `0..m` are rejected.
    pub fn new(edges: Vec<(usize, usize)>, reference_lengths: Vec<f64>, m: usize) -> Result<Self> {
        if edges.len() != reference_lengths.len() {
            return Err(Error::Shape(format!(
                "{} edges but {} reference lengths",
                edges.len(),
                reference_lengths.len()
            )));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a == b {
                return Err(Error::Config(format!("self loop on keypoint {a}")));
            }
            for idx in [a, b] {
                if idx >= m {
                    return Err(Error::Bounds { index: idx, len: m });
                }
            }
            let e = (a.min(b), a.max(b));
            if normalized.contains(&e) {
                return Err(Error::Config(format!("duplicate edge {e:?}")));
            }
            normalized.push(e);
        }
        if let Some(bad) = reference_lengths.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::Config(format!("invalid reference length {bad}")));
        }
        Ok(Self {
            edges: normalized,
            reference_lengths,
        })
    }

    /// Reference lengths measured on `reference`.
    pub fn from_reference(edges: Vec<(usize, usize)>, reference: &KeypointSet) -> Result<Self> {
        let lengths = edges
            .iter()
            .map(|&(i, j)| keypoint_distance(reference, i, j))
            .collect::<Result<Vec<_>>>()?;
        Self::new(edges, lengths, reference.m())
    }

    /// Chain `(0,1), (1,2), ...` measured on `reference`.
    pub fn chain(reference: &KeypointSet) -> Result<Self> {
        let edges = (1..reference.m()).map(|i| (i - 1, i)).collect();
        Self::from_reference(edges, reference)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn reference_lengths(&self) -> &[f64] {
        &self.reference_lengths
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    fn check_for(&self, m: usize) -> Result<()> {
        match self.edges.iter().flat_map(|&(i, j)| [i, j]).find(|&k| k >= m) {
            Some(index) => Err(Error::Bounds { index, len: m }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub omega0: f64,
    pub lambda_geo: f64,
    pub lambda_sp: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            omega0: DEFAULT_OMEGA0,
            lambda_geo: 0.5,
            lambda_sp: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::Config(format!("omega0 must be positive, got {}", self.omega0)));
        }
        for (name, v) in [("lambda_geo", self.lambda_geo), ("lambda_sp", self.lambda_sp)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub position_term: f64,
    pub geometric_term: f64,
    pub recon_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(recon_term: f64, position_term: f64, geometric_term: f64, cfg: &LossConfig) -> Self {
        Self {
            position_term,
            geometric_term,
            recon_term,
            total: recon_term + cfg.lambda_sp * (position_term + cfg.lambda_geo * geometric_term),
        }
    }
}

pub fn keypoint_distance(a: &KeypointSet, i: usize, j: usize) -> Result<f64> {
    for idx in [i, j] {
        if idx >= a.m() {
            return Err(Error::Bounds { index: idx, len: a.m() });
        }
    }
    let (pi, pj) = (a.point(i), a.point(j));
    Ok(pi
        .iter()
        .zip(pj.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

fn check_pair(pred: ArrayView2<'_, f64>, gt: ArrayView2<'_, f64>) -> Result<()> {
    if pred.dim() != gt.dim() {
        return Err(Error::Shape(format!(
            "prediction is {:?} but target is {:?}",
            pred.dim(),
            gt.dim()
        )));
    }
    if pred.nrows() == 0 {
        return Err(Error::EmptyInput("no keypoints".into()));
    }
    Ok(())
}

fn check_edges(edges: &[(usize, usize)], m: usize) -> Result<()> {
    match edges.iter().flat_map(|&(i, j)| [i, j]).find(|&k| k >= m) {
        Some(index) => Err(Error::Bounds { index, len: m }),
        None => Ok(()),
    }
}

fn visible(mask: Option<&[bool]>, i: usize) -> bool {
    mask.is_none_or(|m| m[i])
}

/// Position and geometric sums for one frame, skipping hidden keypoints
/// and any edge touching one.
fn frame_terms(
    pred: ArrayView2<'_, f64>,
    gt: ArrayView2<'_, f64>,
    edges: &[(usize, usize)],
    omega0: f64,
    mask: Option<&[bool]>,
) -> (f64, f64) {
    let mut position = 0.0;
    for i in 0..pred.nrows() {
        if !visible(mask, i) {
            continue;
        }
        for (p, k) in pred.row(i).iter().zip(gt.row(i).iter()) {
            position += (p - k) * (p - k);
        }
    }
    let mut geometric = 0.0;
    for &(i, j) in edges {
        if !(visible(mask, i) && visible(mask, j)) {
            continue;
        }
        for c in 0..pred.ncols() {
            let r = (omega0 * (pred[[i, c]] - pred[[j, c]])).sin()
                - (omega0 * (gt[[i, c]] - gt[[j, c]])).sin();
            geometric += r * r;
        }
    }
    (position, geometric)
}

/// Adds `position_weight * d(position)/d pred + geometric_weight *
/// d(geometric)/d pred` into `out`.
#[allow(clippy::too_many_arguments)]
fn frame_grad(
    pred: ArrayView2<'_, f64>,
    gt: ArrayView2<'_, f64>,
    edges: &[(usize, usize)],
    omega0: f64,
    position_weight: f64,
    geometric_weight: f64,
    mask: Option<&[bool]>,
    mut out: ArrayViewMut2<'_, f64>,
) {
    for i in 0..pred.nrows() {
        if !visible(mask, i) {
            continue;
        }
        for c in 0..pred.ncols() {
            out[[i, c]] += position_weight * 2.0 * (pred[[i, c]] - gt[[i, c]]);
        }
    }
    if geometric_weight == 0.0 {
        return;
    }
    for &(i, j) in edges {
        if !(visible(mask, i) && visible(mask, j)) {
            continue;
        }
        for c in 0..pred.ncols() {
            let arg = omega0 * (pred[[i, c]] - pred[[j, c]]);
            let r = arg.sin() - (omega0 * (gt[[i, c]] - gt[[j, c]])).sin();
            let g = geometric_weight * 2.0 * omega0 * arg.cos() * r;
            out[[i, c]] += g;
            out[[j, c]] -= g;
        }
    }
}

/// `(position_term, geometric_term)` for one frame.
pub fn sirenpose_loss(
    pred: &KeypointSet,
    gt: &KeypointSet,
    graph: &SkeletonGraph,
    cfg: &LossConfig,
) -> Result<(f64, f64)> {
    sirenpose_loss_edges(pred, gt, graph.edges(), cfg)
}

/// As [`sirenpose_loss`] over an arbitrary edge list; endpoint order does
/// not matter.
pub fn sirenpose_loss_edges(
    pred: &KeypointSet,
    gt: &KeypointSet,
    edges: &[(usize, usize)],
    cfg: &LossConfig,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    check_pair(pred.coords().view(), gt.coords().view())?;
    check_edges(edges, pred.m())?;
    Ok(frame_terms(pred.coords().view(), gt.coords().view(), edges, cfg.omega0, None))
}

/// Gradient of `position + lambda_geo * geometric` with respect to `pred`.
pub fn sirenpose_grad(
    pred: &KeypointSet,
    gt: &KeypointSet,
    graph: &SkeletonGraph,
    cfg: &LossConfig,
) -> Result<Array2<f64>> {
    sirenpose_grad_edges(pred, gt, graph.edges(), cfg)
}

pub fn sirenpose_grad_edges(
    pred: &KeypointSet,
    gt: &KeypointSet,
    edges: &[(usize, usize)],
    cfg: &LossConfig,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    check_pair(pred.coords().view(), gt.coords().view())?;
    check_edges(edges, pred.m())?;
    let mut out = Array2::zeros(pred.coords().dim());
    frame_grad(
        pred.coords().view(),
        gt.coords().view(),
        edges,
        cfg.omega0,
        1.0,
        cfg.lambda_geo,
        None,
        out.view_mut(),
    );
    Ok(out)
}

fn check_sequences(pred: &[KeypointSet], target: &[KeypointSet]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predicted frames but {} target frames",
            pred.len(),
            target.len()
        )));
    }
    for (p, t) in pred.iter().zip(target) {
        check_pair(p.coords().view(), t.coords().view())?;
    }
    Ok(())
}

/// Sum of squared coordinate differences over all frames and keypoints.
pub fn recon_loss(pred: &[KeypointSet], target: &[KeypointSet]) -> Result<f64> {
    check_sequences(pred, target)?;
    Ok(pred
        .iter()
        .zip(target)
        .flat_map(|(p, t)| p.coords().iter().zip(t.coords().iter()).map(|(a, b)| (a - b) * (a - b)))
        .sum())
}

pub fn recon_grad(pred: &[KeypointSet], target: &[KeypointSet]) -> Result<Vec<Array2<f64>>> {
    check_sequences(pred, target)?;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p.coords() - t.coords()) * 2.0)
        .collect())
}

fn check_masks(masks: Option<&[Vec<bool>]>, t: usize, m: usize) -> Result<()> {
    if let Some(masks) = masks {
        if masks.len() != t || masks.iter().any(|row| row.len() != m) {
            return Err(Error::Shape(format!("occlusion masks must be {t} x {m}")));
        }
    }
    Ok(())
}

/// Loss of one frame given as a `m x d` view; `mask[i] == false` hides
/// keypoint `i`. Returns the breakdown and adds the total's gradient into
/// `grad`.
pub(crate) fn frame_loss_and_grad(
    pred: ArrayView2<'_, f64>,
    gt: ArrayView2<'_, f64>,
    graph: &SkeletonGraph,
    cfg: &LossConfig,
    mask: Option<&[bool]>,
    grad: ArrayViewMut2<'_, f64>,
) -> LossBreakdown {
    let (position, geometric) = frame_terms(pred, gt, graph.edges(), cfg.omega0, mask);
    // Reconstruction is the squared error over the same visible keypoints,
    // so it shares the position gradient.
    let recon = position;
    frame_grad(
        pred,
        gt,
        graph.edges(),
        cfg.omega0,
        1.0 + cfg.lambda_sp,
        cfg.lambda_sp * cfg.lambda_geo,
        mask,
        grad,
    );
    LossBreakdown::combine(recon, position, geometric, cfg)
}

/// Objective over a whole sequence. Hidden keypoints contribute nothing to
/// any term.
pub fn total_loss(
    pred: &[KeypointSet],
    gt: &[KeypointSet],
    graph: &SkeletonGraph,
    cfg: &LossConfig,
    masks: Option<&[Vec<bool>]>,
) -> Result<LossBreakdown> {
    total_loss_and_grad(pred, gt, graph, cfg, masks).map(|(b, _)| b)
}

/// [`total_loss`] together with its gradient for every predicted frame.
pub fn total_loss_and_grad(
    pred: &[KeypointSet],
    gt: &[KeypointSet],
    graph: &SkeletonGraph,
    cfg: &LossConfig,
    masks: Option<&[Vec<bool>]>,
) -> Result<(LossBreakdown, Vec<Array2<f64>>)> {
    cfg.validate()?;
    check_sequences(pred, gt)?;
    let m = pred.first().map_or(0, KeypointSet::m);
    graph.check_for(m)?;
    check_masks(masks, pred.len(), m)?;

    let mut sum = LossBreakdown::default();
    let mut grads = Vec::with_capacity(pred.len());
    for (t, (p, k)) in pred.iter().zip(gt).enumerate() {
        let mut g = Array2::zeros(p.coords().dim());
        let mask = masks.map(|ms| ms[t].as_slice());
        let b = frame_loss_and_grad(p.coords().view(), k.coords().view(), graph, cfg, mask, g.view_mut());
        sum.position_term += b.position_term;
        sum.geometric_term += b.geometric_term;
        sum.recon_term += b.recon_term;
        grads.push(g);
    }
    let breakdown = LossBreakdown::combine(sum.recon_term, sum.position_term, sum.geometric_term, cfg);
    Ok((breakdown, grads))
}
