//! Reference computations shared by the integration tests. Everything here
//! works on plain nested vectors with scalar loops so it never goes through
//! the library's own loss or metric code paths.

#![allow(dead_code)]

use sirenpose::{KeypointSet, Rng};

pub type Rows = Vec<Vec<f64>>;

pub fn random_rows(rng: &mut Rng, m: usize, d: usize, spread: f64) -> Rows {
    (0..m).map(|_| (0..d).map(|_| rng.uniform(-spread, spread)).collect()).collect()
}

pub fn keypoints(rows: &Rows) -> KeypointSet {
    KeypointSet::from_rows(rows).unwrap()
}

/// `(sum_i |p_i - k_i|^2, sum_edges |sin(w (p_i - p_j)) - sin(w (k_i - k_j))|^2)`
/// over visible keypoints.
pub fn straight_line_terms(
    pred: &Rows,
    gt: &Rows,
    edges: &[(usize, usize)],
    omega0: f64,
    visible: Option<&[bool]>,
) -> (f64, f64) {
    let shown = |i: usize| visible.map_or(true, |v| v[i]);
    let mut position = 0.0;
    for i in 0..pred.len() {
        if shown(i) {
            for c in 0..pred[i].len() {
                let e = pred[i][c] - gt[i][c];
                position += e * e;
            }
        }
    }
    let mut geometric = 0.0;
    for &(i, j) in edges {
        if shown(i) && shown(j) {
            for c in 0..pred[i].len() {
                let a = (omega0 * (pred[i][c] - pred[j][c])).sin();
                let b = (omega0 * (gt[i][c] - gt[j][c])).sin();
                geometric += (a - b) * (a - b);
            }
        }
    }
    (position, geometric)
}

/// Relative error with an absolute floor of 1e-3 on the denominator.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Random edge set over `m` keypoints without duplicates or self loops.
pub fn random_edges(rng: &mut Rng, m: usize, count: usize) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let picks = rng.sample_indices(all.len(), count.min(all.len()));
    let mut edges: Vec<(usize, usize)> = picks.iter().map(|&k| all[k]).collect();
    edges.sort();
    edges
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
