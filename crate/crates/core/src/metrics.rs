//! Keypoint-space evaluation metrics.
//!
//! * EPE: mean Euclidean error per keypoint.
//! * MSE: mean squared error per coordinate.
//! * Temporal consistency: `exp(-mean |k(t+1) - 2 k(t) + k(t-1)|)`, 1 for
//!   trajectories without acceleration.
//! * Geometric accuracy: `clamp(1 - mean |len - ref| / ref, 0, 1)` over
//!   skeleton edges.
//! * Scores map an error to `100 * exp(-value)`.
//!
//! The `_masked` variants skip hidden keypoints (and edges or second
//! differences that involve one). A mean over nothing is 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{keypoint_distance, SkeletonGraph};
use crate::predictor::KeypointSet;
use crate::scene::LabeledSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub epe: f64,
    pub temporal_consistency: f64,
    pub geometric_accuracy: f64,
    pub mse_score: f64,
    pub epe_score: f64,
}

type Masks<'a> = Option<&'a [Vec<bool>]>;

fn shown(masks: Masks<'_>, t: usize, i: usize) -> bool {
    masks.is_none_or(|m| m[t][i])
}

fn mean(sum: f64, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn check_frames(pred: &[KeypointSet], gt: &[KeypointSet], masks: Masks<'_>) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "{} predicted frames but {} reference frames",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("no frames to evaluate".into()));
    }
    for (p, g) in pred.iter().zip(gt) {
        if p.coords().dim() != g.coords().dim() {
            return Err(Error::Shape(format!(
                "frame shapes differ: {:?} vs {:?}",
                p.coords().dim(),
                g.coords().dim()
            )));
        }
    }
    check_masks(masks, pred)
}

fn check_masks(masks: Masks<'_>, frames: &[KeypointSet]) -> Result<()> {
    if let Some(masks) = masks {
        let m = frames.first().map_or(0, KeypointSet::m);
        if masks.len() != frames.len() || masks.iter().any(|r| r.len() != m) {
            return Err(Error::Shape(format!("masks must be {} x {m}", frames.len())));
        }
    }
    Ok(())
}

pub fn epe(pred: &[KeypointSet], gt: &[KeypointSet]) -> Result<f64> {
    epe_masked(pred, gt, None)
}

pub fn epe_masked(pred: &[KeypointSet], gt: &[KeypointSet], masks: Masks<'_>) -> Result<f64> {
    check_frames(pred, gt, masks)?;
    let (mut sum, mut count) = (0.0, 0);
    for (t, (p, g)) in pred.iter().zip(gt).enumerate() {
        for i in 0..p.m() {
            if !shown(masks, t, i) {
                continue;
            }
            let sq: f64 = p
                .point(i)
                .iter()
                .zip(g.point(i).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            sum += sq.sqrt();
            count += 1;
        }
    }
    Ok(mean(sum, count))
}

pub fn mse(pred: &[KeypointSet], gt: &[KeypointSet]) -> Result<f64> {
    mse_masked(pred, gt, None)
}

pub fn mse_masked(pred: &[KeypointSet], gt: &[KeypointSet], masks: Masks<'_>) -> Result<f64> {
    check_frames(pred, gt, masks)?;
    let (mut sum, mut count) = (0.0, 0);
    for (t, (p, g)) in pred.iter().zip(gt).enumerate() {
        for i in 0..p.m() {
            if !shown(masks, t, i) {
                continue;
            }
            for (a, b) in p.point(i).iter().zip(g.point(i).iter()) {
                sum += (a - b) * (a - b);
                count += 1;
            }
        }
    }
    Ok(mean(sum, count))
}

pub fn temporal_consistency(frames: &[KeypointSet]) -> Result<f64> {
    temporal_consistency_masked(frames, None)
}

pub fn temporal_consistency_masked(frames: &[KeypointSet], masks: Masks<'_>) -> Result<f64> {
    if frames.len() < 3 {
        return Err(Error::InsufficientFrames {
            needed: 3,
            got: frames.len(),
        });
    }
    check_frames(frames, frames, masks)?;
    let (mut sum, mut count) = (0.0, 0);
    for t in 1..frames.len() - 1 {
        let (prev, cur, next) = (&frames[t - 1], &frames[t], &frames[t + 1]);
        for i in 0..cur.m() {
            if !(shown(masks, t - 1, i) && shown(masks, t, i) && shown(masks, t + 1, i)) {
                continue;
            }
            let sq: f64 = (0..cur.d())
                .map(|c| {
                    let a = next.point(i)[c] - 2.0 * cur.point(i)[c] + prev.point(i)[c];
                    a * a
                })
                .sum();
            sum += sq.sqrt();
            count += 1;
        }
    }
    Ok((-mean(sum, count)).exp())
}

pub fn geometric_accuracy(frames: &[KeypointSet], graph: &SkeletonGraph) -> Result<f64> {
    geometric_accuracy_masked(frames, graph, None)
}

pub fn geometric_accuracy_masked(frames: &[KeypointSet], graph: &SkeletonGraph, masks: Masks<'_>) -> Result<f64> {
    if graph.is_empty() {
        return Err(Error::Config("geometric accuracy needs at least one edge".into()));
    }
    if let Some(bad) = graph.reference_lengths().iter().find(|l| **l <= 0.0) {
        return Err(Error::Config(format!("reference length must be positive, got {bad}")));
    }
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frames to evaluate".into()));
    }
    check_masks(masks, frames)?;
    let (mut sum, mut count) = (0.0, 0);
    for (t, frame) in frames.iter().enumerate() {
        for (&(i, j), &reference) in graph.edges().iter().zip(graph.reference_lengths()) {
            if !(shown(masks, t, i) && shown(masks, t, j)) {
                continue;
            }
            let length = keypoint_distance(frame, i, j)?;
            sum += (length - reference).abs() / reference;
            count += 1;
        }
    }
    Ok((1.0 - mean(sum, count)).clamp(0.0, 1.0))
}

/// `100 * exp(-value)`.
pub fn score(value: f64) -> Result<f64> {
    if value.is_nan() || value < 0.0 {
        return Err(Error::Domain(format!("score needs a non-negative value, got {value}")));
    }
    Ok(100.0 * (-value).exp())
}

/// All metrics of `pred` against the sequence ground truth, skipping hidden
/// keypoints. Clips shorter than three frames have no second differences and
/// report a temporal consistency of 1.
pub fn evaluate(pred: &[KeypointSet], seq: &LabeledSequence) -> Result<MetricReport> {
    let masks = Some(seq.masks.as_slice());
    let mse = mse_masked(pred, &seq.frames, masks)?;
    let epe = epe_masked(pred, &seq.frames, masks)?;
    let temporal_consistency = if pred.len() < 3 {
        1.0
    } else {
        temporal_consistency_masked(pred, masks)?
    };
    let geometric_accuracy = if seq.graph.is_empty() {
        1.0
    } else {
        geometric_accuracy_masked(pred, &seq.graph, masks)?
    };
    Ok(MetricReport {
        mse,
        epe,
        temporal_consistency,
        geometric_accuracy,
        mse_score: score(mse)?,
        epe_score: score(epe)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(rows: &[&[&[f64]]]) -> Vec<KeypointSet> {
        rows.iter()
            .map(|f| KeypointSet::from_rows(&f.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap())
            .collect()
    }

    #[test]
    fn epe_three_four_five() {
        let gt = frames(&[&[&[0.0, 0.0]]]);
        let pred = frames(&[&[&[3.0, 4.0]]]);
        assert_eq!(epe(&gt, &gt).unwrap(), 0.0);
        assert_eq!(epe(&pred, &gt).unwrap(), 5.0);
    }

    #[test]
    fn mse_single_coordinate() {
        let gt = frames(&[&[&[0.0, 0.0], &[1.0, 1.0]], &[&[0.0, 0.0], &[1.0, 1.0]]]);
        let mut pred = gt.clone();
        pred[1] = frames(&[&[&[0.0, 2.0], &[1.0, 1.0]]]).remove(0);
        assert_eq!(mse(&gt, &gt).unwrap(), 0.0);
        assert_eq!(mse(&pred, &gt).unwrap(), 4.0 / 8.0);
    }

    #[test]
    fn temporal_consistency_examples() {
        let constant = frames(&[&[&[1.0, 2.0]], &[&[1.0, 2.0]], &[&[1.0, 2.0]], &[&[1.0, 2.0]]]);
        assert_eq!(temporal_consistency(&constant).unwrap(), 1.0);
        let linear = frames(&[&[&[0.0, 0.0]], &[&[1.0, 0.5]], &[&[2.0, 1.0]], &[&[3.0, 1.5]]]);
        assert_eq!(temporal_consistency(&linear).unwrap(), 1.0);
        let jump = frames(&[&[&[0.0]], &[&[0.0]], &[&[1.0]]]);
        assert_eq!(temporal_consistency(&jump).unwrap(), (-1.0f64).exp());
        assert!(matches!(
            temporal_consistency(&jump[..2]),
            Err(Error::InsufficientFrames { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn geometric_accuracy_examples() {
        let reference = frames(&[&[&[0.0, 0.0], &[1.0, 0.0]]]);
        let g = SkeletonGraph::chain(&reference[0]).unwrap();
        assert_eq!(geometric_accuracy(&reference, &g).unwrap(), 1.0);
        let doubled = frames(&[&[&[0.0, 0.0], &[2.0, 0.0]]]);
        assert_eq!(geometric_accuracy(&doubled, &g).unwrap(), 0.0);
        let zero = SkeletonGraph::new(vec![(0, 1)], vec![0.0], 2).unwrap();
        assert!(matches!(geometric_accuracy(&reference, &zero), Err(Error::Config(_))));
    }

    #[test]
    fn score_examples() {
        assert_eq!(score(0.0).unwrap(), 100.0);
        assert!((score(std::f64::consts::LN_2).unwrap() - 50.0).abs() < 1e-12);
        assert_eq!(score(f64::INFINITY).unwrap(), 0.0);
        assert!(matches!(score(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn masked_keypoints_are_skipped() {
        let gt = frames(&[&[&[0.0, 0.0], &[1.0, 0.0]]]);
        let pred = frames(&[&[&[0.0, 0.0], &[4.0, 4.0]]]);
        let masks = vec![vec![true, false]];
        assert_eq!(epe_masked(&pred, &gt, Some(&masks)).unwrap(), 0.0);
        assert_eq!(mse_masked(&pred, &gt, Some(&masks)).unwrap(), 0.0);
        let g = SkeletonGraph::chain(&gt[0]).unwrap();
        assert_eq!(geometric_accuracy_masked(&pred, &g, Some(&masks)).unwrap(), 1.0);
    }

    #[test]
    fn shape_mismatch() {
        let a = frames(&[&[&[0.0, 0.0]]]);
        let b = frames(&[&[&[0.0, 0.0, 0.0]]]);
        assert!(matches!(epe(&a, &b), Err(Error::Shape(_))));
        assert!(matches!(mse(&a, &[]), Err(Error::Shape(_))));
    }
}
