//! Synthetic articulated scenes: kinematic chains with fixed bone lengths
//! whose joints swing periodically, plus optional observation noise and
//! random occlusion.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::SkeletonGraph;
use crate::predictor::KeypointSet;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub n_keypoints: usize,
    pub dim: usize,
    pub n_frames: usize,
    pub bone_length: f64,
    /// Radians per frame, one per joint (`n_keypoints - 1`).
    pub motion_frequencies: Vec<f64>,
    /// Radians, one per joint.
    pub motion_amplitudes: Vec<f64>,
    pub noise_sigma: f64,
    pub occlusion_rate: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self::chain(5, 2, 64)
    }
}

impl SceneConfig {
    /// Default motion for a chain of `n_keypoints`: joint `j` swings with
    /// amplitude 0.5 rad at `0.05 + 0.02 j` rad/frame.
    pub fn chain(n_keypoints: usize, dim: usize, n_frames: usize) -> Self {
        let joints = n_keypoints.saturating_sub(1);
        Self {
            n_keypoints,
            dim,
            n_frames,
            bone_length: 1.0,
            motion_frequencies: (0..joints).map(|j| 0.05 + 0.02 * j as f64).collect(),
            motion_amplitudes: vec![0.5; joints],
            noise_sigma: 0.0,
            occlusion_rate: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_keypoints < 2 {
            return fail(format!("a chain needs at least 2 keypoints, got {}", self.n_keypoints));
        }
        if !(2..=3).contains(&self.dim) {
            return fail(format!("chains are generated in 2 or 3 dimensions, got {}", self.dim));
        }
        if self.n_frames < 2 {
            return fail(format!("need at least 2 frames, got {}", self.n_frames));
        }
        if !(self.bone_length.is_finite() && self.bone_length > 0.0) {
            return fail(format!("bone_length must be positive, got {}", self.bone_length));
        }
        let joints = self.n_keypoints - 1;
        if self.motion_frequencies.len() != joints || self.motion_amplitudes.len() != joints {
            return fail(format!(
                "expected {joints} motion frequencies and amplitudes, got {} and {}",
                self.motion_frequencies.len(),
                self.motion_amplitudes.len()
            ));
        }
        if !self
            .motion_frequencies
            .iter()
            .chain(&self.motion_amplitudes)
            .all(|v| v.is_finite())
        {
            return fail("motion parameters must be finite".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return fail(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.occlusion_rate) {
            return fail(format!("occlusion_rate must be in [0, 1), got {}", self.occlusion_rate));
        }
        Ok(())
    }
}

/// Ground truth, noisy observations and visibility for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub frames: Vec<KeypointSet>,
    pub graph: SkeletonGraph,
    /// `masks[t][i]` is true when keypoint `i` is visible in frame `t`.
    pub masks: Vec<Vec<bool>>,
    pub noisy_frames: Vec<KeypointSet>,
    pub config: Option<SceneConfig>,
}

impl LabeledSequence {
    pub fn new(
        frames: Vec<KeypointSet>,
        graph: SkeletonGraph,
        masks: Option<Vec<Vec<bool>>>,
        noisy_frames: Option<Vec<KeypointSet>>,
        config: Option<SceneConfig>,
    ) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::EmptyInput("sequence has no frames".into()))?;
        let (m, d) = (first.m(), first.d());
        if frames.iter().any(|f| f.m() != m || f.d() != d) {
            return Err(Error::Shape("frames disagree on keypoint layout".into()));
        }
        let masks = masks.unwrap_or_else(|| vec![vec![true; m]; frames.len()]);
        if masks.len() != frames.len() || masks.iter().any(|r| r.len() != m) {
            return Err(Error::Shape(format!("masks must be {} x {m}", frames.len())));
        }
        let noisy_frames = noisy_frames.unwrap_or_else(|| frames.clone());
        if noisy_frames.len() != frames.len() || noisy_frames.iter().any(|f| f.m() != m || f.d() != d) {
            return Err(Error::Shape("noisy frames disagree with ground truth layout".into()));
        }
        if let Some(index) = graph.edges().iter().flat_map(|&(i, j)| [i, j]).find(|&k| k >= m) {
            return Err(Error::Bounds { index, len: m });
        }
        Ok(Self {
            frames,
            graph,
            masks,
            noisy_frames,
            config,
        })
    }

    pub fn t(&self) -> usize {
        self.frames.len()
    }

    pub fn m(&self) -> usize {
        self.frames[0].m()
    }

    pub fn d(&self) -> usize {
        self.frames[0].d()
    }

    pub fn visible_fraction(&self) -> f64 {
        let visible = self.masks.iter().flatten().filter(|v| **v).count();
        visible as f64 / (self.t() * self.m()) as f64
    }
}

/// Forward kinematics of the chain at every frame.
///
/// Keypoint 0 sits at the origin. Joint `j` has angle
/// `amplitude_j * sin(frequency_j * t + phase_j)` with phases drawn from the
/// seed; each bone points along the accumulated joint angle (azimuth in 2-D,
/// azimuth plus half-amplitude elevation in 3-D). Noise and masks are drawn
/// from the same generator after the geometry.
pub fn generate_chain_scene(cfg: &SceneConfig) -> Result<LabeledSequence> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let joints = cfg.n_keypoints - 1;
    let tau = std::f64::consts::TAU;
    let azimuth_phase: Vec<f64> = (0..joints).map(|_| rng.uniform(0.0, tau)).collect();
    let elevation_phase: Vec<f64> = if cfg.dim == 3 {
        (0..joints).map(|_| rng.uniform(0.0, tau)).collect()
    } else {
        Vec::new()
    };

    let mut frames = Vec::with_capacity(cfg.n_frames);
    for t in 0..cfg.n_frames {
        let time = t as f64;
        let mut coords = Array2::zeros((cfg.n_keypoints, cfg.dim));
        let (mut azimuth, mut elevation) = (0.0, 0.0);
        for j in 0..joints {
            let (a, f) = (cfg.motion_amplitudes[j], cfg.motion_frequencies[j]);
            azimuth += a * (f * time + azimuth_phase[j]).sin();
            let dir = if cfg.dim == 2 {
                vec![azimuth.cos(), azimuth.sin()]
            } else {
                elevation += 0.5 * a * (f * time + elevation_phase[j]).sin();
                vec![
                    elevation.cos() * azimuth.cos(),
                    elevation.cos() * azimuth.sin(),
                    elevation.sin(),
                ]
            };
            for (c, u) in dir.into_iter().enumerate() {
                coords[[j + 1, c]] = coords[[j, c]] + cfg.bone_length * u;
            }
        }
        frames.push(KeypointSet::new(coords)?);
    }

    let edges: Vec<(usize, usize)> = (0..joints).map(|j| (j, j + 1)).collect();
    let graph = SkeletonGraph::new(edges, vec![cfg.bone_length; joints], cfg.n_keypoints)?;

    let noisy_frames = add_noise(&frames, cfg.noise_sigma, &mut rng)?;
    let masks = (0..cfg.n_frames)
        .map(|_| {
            (0..cfg.n_keypoints)
                .map(|_| !rng.bernoulli(cfg.occlusion_rate))
                .collect()
        })
        .collect();

    LabeledSequence::new(frames, graph, Some(masks), Some(noisy_frames), Some(cfg.clone()))
}

fn add_noise(frames: &[KeypointSet], sigma: f64, rng: &mut Rng) -> Result<Vec<KeypointSet>> {
    frames
        .iter()
        .map(|f| {
            let mut noisy = f.clone();
            if sigma > 0.0 {
                noisy.coords_mut().mapv_inplace(|v| v + sigma * rng.standard_normal());
            }
            Ok(noisy)
        })
        .collect()
}

/// Replace the observations with `truth + N(0, sigma^2)` noise; the ground
/// truth and masks are left untouched.
pub fn perturb_sequence(seq: &LabeledSequence, sigma: f64, seed: u64) -> Result<LabeledSequence> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Domain(format!("noise sigma must be non-negative, got {sigma}")));
    }
    let mut rng = Rng::new(seed);
    let mut out = seq.clone();
    out.noisy_frames = add_noise(&seq.frames, sigma, &mut rng)?;
    if let Some(cfg) = out.config.as_mut() {
        cfg.noise_sigma = sigma;
    }
    Ok(out)
}
