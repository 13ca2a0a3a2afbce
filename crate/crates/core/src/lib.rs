//! Sinusoidal implicit networks for keypoint trajectories.
//!
//! A [`CompositePredictor`] maps normalized time to a frame of keypoints as
//! the sum of a smooth tanh branch and a weighted SIREN branch. It is fitted
//! with Adam to an objective that adds, to the squared keypoint error, a
//! sinusoidal consistency term over skeleton edges.
//!
//! Modules, bottom up:
//!
//! * [`rng`]: seeded random source.
//! * [`siren`]: dense sine/tanh networks with explicit backward passes.
//! * [`predictor`]: the two-branch trajectory model.
//! * [`loss`]: position, geometric and reconstruction losses and gradients.
//! * [`scene`]: synthetic articulated chains for supervision.
//! * [`metrics`]: EPE, MSE, temporal consistency, geometric accuracy.
//! * [`trainer`]: Adam, the training loop and the gradient check.
//! * [`io`]: canonical JSON datasets and checkpoints, CSV logs.
//! * [`cli`]: the `sirenpose` command line.

pub mod cli;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod predictor;
pub mod rng;
pub mod scene;
pub mod siren;
pub mod trainer;

pub use error::{Error, Result};
pub use loss::{LossBreakdown, LossConfig, SkeletonGraph};
pub use metrics::MetricReport;
pub use predictor::{CompositePredictor, KeypointSet, PredictorConfig, TimeCoordinate};
pub use rng::Rng;
pub use scene::{generate_chain_scene, perturb_sequence, LabeledSequence, SceneConfig};
pub use siren::{init_siren, init_tanh, Activation, DenseLayer, ForwardCache, Mlp};
pub use trainer::{gradcheck, train, AdamState, TrainConfig, TrainReport};
