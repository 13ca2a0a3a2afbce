//! Composite keypoint-trajectory model.
//!
//! The predictor maps normalized time `t` to a full keypoint frame as
//! `low(t) + lambda_mix * high(t)`, where `low` is a small tanh network
//! carrying the smooth global motion and `high` is a SIREN carrying the
//! high-frequency detail. Network outputs of length `m * d` are reshaped
//! keypoint-major: coordinate `c` of keypoint `i` is output `i * d + c`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::siren::{init_siren, init_tanh, ForwardCache, Mlp, DEFAULT_OMEGA0};

/// One frame of `m` keypoints in `d` spatial dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    coords: Array2<f64>,
}

impl KeypointSet {
    pub fn new(coords: Array2<f64>) -> Result<Self> {
        let (m, d) = coords.dim();
        if m == 0 {
            return Err(Error::EmptyInput("keypoint set has no keypoints".into()));
        }
        if !(1..=3).contains(&d) {
            return Err(Error::Shape(format!("spatial dimension must be 1..=3, got {d}")));
        }
        if !coords.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("keypoint coordinates must be finite".into()));
        }
        Ok(Self { coords })
    }

    /// Build from a keypoint-major flat vector of length `m * d`.
    pub fn from_flat(m: usize, d: usize, flat: Vec<f64>) -> Result<Self> {
        let coords = Array2::from_shape_vec((m, d), flat).map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(coords)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("ragged keypoint rows".into()));
        }
        Self::from_flat(m, d, rows.concat())
    }

    pub fn zeros(m: usize, d: usize) -> Result<Self> {
        Self::new(Array2::zeros((m, d)))
    }

    pub fn coords(&self) -> &Array2<f64> {
        &self.coords
    }

    pub fn m(&self) -> usize {
        self.coords.nrows()
    }

    pub fn d(&self) -> usize {
        self.coords.ncols()
    }

    pub fn point(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.coords.row(i)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.coords.iter().copied().collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.coords.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    pub(crate) fn coords_mut(&mut self) -> &mut Array2<f64> {
        &mut self.coords
    }
}

/// Frame index together with its position on the `[-1, 1]` time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeCoordinate {
    pub frame_index: usize,
    pub t_norm: f64,
}

impl TimeCoordinate {
    /// Frame `i` of a `n_frames` clip: `-1 + 2 i / (n_frames - 1)`, or 0 for
    /// a single-frame clip.
    pub fn for_frame(frame_index: usize, n_frames: usize) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::EmptyInput("sequence has no frames".into()));
        }
        if frame_index >= n_frames {
            return Err(Error::Bounds {
                index: frame_index,
                len: n_frames,
            });
        }
        let t_norm = if n_frames == 1 {
            0.0
        } else {
            -1.0 + 2.0 * frame_index as f64 / (n_frames - 1) as f64
        };
        Ok(Self {
            frame_index,
            t_norm,
        })
    }

    pub fn normalized(t_norm: f64) -> Self {
        Self {
            frame_index: 0,
            t_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub low_hidden: Vec<usize>,
    pub high_hidden: Vec<usize>,
    pub omega0: f64,
    pub lambda_mix: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            low_hidden: vec![64, 64],
            high_hidden: vec![128, 128, 128],
            omega0: DEFAULT_OMEGA0,
            lambda_mix: 0.1,
        }
    }
}

impl PredictorConfig {
    fn arch(hidden: &[usize], out: usize) -> Vec<usize> {
        let mut arch = Vec::with_capacity(hidden.len() + 2);
        arch.push(1);
        arch.extend_from_slice(hidden);
        arch.push(out);
        arch
    }
}

#[derive(Debug, Clone)]
pub struct PredictorCache {
    pub low: ForwardCache,
    pub high: ForwardCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositePredictor {
    low: Mlp,
    high: Mlp,
    lambda_mix: f64,
    omega0: f64,
    m: usize,
    d: usize,
}

impl CompositePredictor {
    /// Initialize both branches from one generator, low branch first.
    pub fn new(cfg: &PredictorConfig, m: usize, d: usize, rng: &mut Rng) -> Result<Self> {
        if m == 0 || !(1..=3).contains(&d) {
            return Err(Error::Config(format!("invalid keypoint layout m={m}, d={d}")));
        }
        let out = m * d;
        let low = init_tanh(&PredictorConfig::arch(&cfg.low_hidden, out), rng)?;
        let high = init_siren(&PredictorConfig::arch(&cfg.high_hidden, out), cfg.omega0, rng)?;
        Self::from_branches(low, high, cfg.lambda_mix, cfg.omega0, m, d)
    }

    pub fn from_branches(
        low: Mlp,
        high: Mlp,
        lambda_mix: f64,
        omega0: f64,
        m: usize,
        d: usize,
    ) -> Result<Self> {
        if !(lambda_mix >= 0.0 && lambda_mix.is_finite()) {
            return Err(Error::Config(format!("lambda_mix must be non-negative, got {lambda_mix}")));
        }
        for (name, branch) in [("low", &low), ("high", &high)] {
            if branch.in_dim() != 1 || branch.out_dim() != m * d {
                return Err(Error::Config(format!(
                    "{name} branch maps {} -> {}, expected 1 -> {}",
                    branch.in_dim(),
                    branch.out_dim(),
                    m * d
                )));
            }
        }
        Ok(Self {
            low,
            high,
            lambda_mix,
            omega0,
            m,
            d,
        })
    }

    pub fn low(&self) -> &Mlp {
        &self.low
    }

    pub fn high(&self) -> &Mlp {
        &self.high
    }

    pub fn lambda_mix(&self) -> f64 {
        self.lambda_mix
    }

    pub fn set_lambda_mix(&mut self, lambda_mix: f64) -> Result<()> {
        if !(lambda_mix >= 0.0 && lambda_mix.is_finite()) {
            return Err(Error::Config(format!("lambda_mix must be non-negative, got {lambda_mix}")));
        }
        self.lambda_mix = lambda_mix;
        Ok(())
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn config(&self) -> PredictorConfig {
        let hidden = |net: &Mlp| {
            let arch = net.arch();
            arch[1..arch.len() - 1].to_vec()
        };
        PredictorConfig {
            low_hidden: hidden(&self.low),
            high_hidden: hidden(&self.high),
            omega0: self.omega0,
            lambda_mix: self.lambda_mix,
        }
    }

    pub fn predict(&self, t: TimeCoordinate) -> Result<(KeypointSet, PredictorCache)> {
        let (out, cache) = self.predict_batch(&[t.t_norm])?;
        let frame = KeypointSet::from_flat(self.m, self.d, out.into_raw_vec_and_offset().0)?;
        Ok((frame, cache))
    }

    /// Evaluate several times at once; row `b` of the result is the flat
    /// keypoint frame for `t_norms[b]`.
    pub fn predict_batch(&self, t_norms: &[f64]) -> Result<(Array2<f64>, PredictorCache)> {
        let input = ArrayView2::from_shape((t_norms.len(), 1), t_norms)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let (low_out, low) = self.low.forward_batch(input)?;
        let (high_out, high) = self.high.forward_batch(input)?;
        let lambda = self.lambda_mix;
        let mut out = low_out;
        out.zip_mut_with(&high_out, |a, &b| *a += lambda * b);
        if !out.is_standard_layout() {
            out = out.as_standard_layout().into_owned();
        }
        Ok((out, PredictorCache { low, high }))
    }

    /// Chain an output gradient (`batch x m*d`) back to a flat parameter
    /// gradient ordered like [`CompositePredictor::flatten`].
    pub fn backward_batch(&self, cache: &PredictorCache, grad_out: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let (low_grads, _) = self.low.backward_batch(&cache.low, grad_out)?;
        let scaled = grad_out.mapv(|g| g * self.lambda_mix);
        let (high_grads, _) = self.high.backward_batch(&cache.high, scaled.view())?;
        let mut flat = Vec::with_capacity(self.param_count());
        low_grads.flatten_into(&mut flat);
        high_grads.flatten_into(&mut flat);
        Ok(flat)
    }

    pub fn predict_sequence(&self, n_frames: usize) -> Result<Vec<KeypointSet>> {
        if n_frames == 0 {
            return Err(Error::EmptyInput("cannot predict an empty sequence".into()));
        }
        let times = (0..n_frames)
            .map(|i| TimeCoordinate::for_frame(i, n_frames).map(|t| t.t_norm))
            .collect::<Result<Vec<_>>>()?;
        self.predict_times(&times)
    }

    pub fn predict_times(&self, t_norms: &[f64]) -> Result<Vec<KeypointSet>> {
        let (out, _) = self.predict_batch(t_norms)?;
        out.rows()
            .into_iter()
            .map(|row| KeypointSet::from_flat(self.m, self.d, row.to_vec()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.low.param_count() + self.high.param_count()
    }

    /// Low branch then high branch; within a branch, layer by layer with
    /// row-major weights followed by biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.low.flatten_into(&mut out);
        self.high.flatten_into(&mut out);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let (low, high) = params.split_at(self.low.param_count());
        self.low.set_params(low)?;
        self.high.set_params(high)
    }

    pub fn unflatten(&self, params: &[f64]) -> Result<Self> {
        let mut next = self.clone();
        next.set_params(params)?;
        Ok(next)
    }
}
