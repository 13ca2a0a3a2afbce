//! Adam, the training loop and an end-to-end finite-difference gradient
//! check.

use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{frame_loss_and_grad, LossBreakdown, LossConfig};
use crate::metrics::{evaluate, MetricReport};
use crate::predictor::{CompositePredictor, TimeCoordinate};
use crate::rng::Rng;
use crate::scene::LabeledSequence;

/// Total losses above this are treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One bias-corrected Adam update of `params`. A non-finite gradient is
    /// rejected before any state changes.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} moments but got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient at parameter {i}")));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Frames per step, sampled without replacement from the sequence.
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub loss: LossConfig,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 64,
            max_steps: 10_000,
            seed: 0,
            loss: LossConfig::default(),
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.max_steps == 0 || self.log_every == 0 {
            return Err(Error::Config(
                "batch_size, max_steps and log_every must be at least 1".into(),
            ));
        }
        self.loss.validate()
    }
}

/// Snapshot taken before the update of `step`: the batch loss and metrics of
/// the full sequence against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: LossBreakdown,
    pub epe: f64,
    pub mse: f64,
    pub tc: f64,
    pub ga: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<TrainRecord>,
    pub steps_completed: usize,
    pub final_metrics: Option<MetricReport>,
}

fn check_layout(pred: &CompositePredictor, data: &LabeledSequence) -> Result<()> {
    if pred.m() != data.m() || pred.d() != data.d() {
        return Err(Error::Config(format!(
            "predictor emits {}x{} keypoints but the data has {}x{}",
            pred.m(),
            pred.d(),
            data.m(),
            data.d()
        )));
    }
    Ok(())
}

fn frame_times(n: usize) -> Result<Vec<f64>> {
    (0..n)
        .map(|i| TimeCoordinate::for_frame(i, n).map(|t| t.t_norm))
        .collect()
}

/// Loss over the frames `indices` (targets are the noisy observations) and
/// its gradient with respect to every predictor parameter.
pub fn batch_objective(
    pred: &CompositePredictor,
    data: &LabeledSequence,
    loss: &LossConfig,
    indices: &[usize],
) -> Result<(LossBreakdown, Vec<f64>)> {
    check_layout(pred, data)?;
    loss.validate()?;
    let times = frame_times(data.t())?;
    let t_batch: Vec<f64> = indices.iter().map(|&i| times[i]).collect();
    let (m, d) = (pred.m(), pred.d());
    let (out, cache) = pred.predict_batch(&t_batch)?;
    let mut grad = Array2::zeros(out.dim());
    let (mut recon, mut position, mut geometric) = (0.0, 0.0, 0.0);
    for (b, &frame) in indices.iter().enumerate() {
        let p = out.row(b).into_shape_with_order((m, d)).map_err(|e| Error::Shape(e.to_string()))?;
        let g = grad
            .row_mut(b)
            .into_shape_with_order((m, d))
            .map_err(|e| Error::Shape(e.to_string()))?;
        let terms = frame_loss_and_grad(
            p,
            data.noisy_frames[frame].coords().view(),
            &data.graph,
            loss,
            Some(&data.masks[frame]),
            g,
        );
        recon += terms.recon_term;
        position += terms.position_term;
        geometric += terms.geometric_term;
    }
    let breakdown = LossBreakdown::combine(recon, position, geometric, loss);
    let theta_grad = pred.backward_batch(&cache, grad.view())?;
    Ok((breakdown, theta_grad))
}

/// [`batch_objective`] over every frame in order.
pub fn full_objective(
    pred: &CompositePredictor,
    data: &LabeledSequence,
    loss: &LossConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let all: Vec<usize> = (0..data.t()).collect();
    batch_objective(pred, data, loss, &all)
}

/// Minimize `recon + lambda_sp * (position + lambda_geo * geometric)` with
/// Adam. Each step draws `min(batch_size, T)` distinct frames from a
/// generator seeded with `cfg.seed`.
///
/// Records are written at every multiple of `log_every` and at the final
/// step. If the loss stops being finite or exceeds [`DIVERGENCE_LIMIT`],
/// training stops with [`Error::Diverged`] carrying the report so far.
pub fn train(
    mut pred: CompositePredictor,
    data: &LabeledSequence,
    cfg: &TrainConfig,
) -> Result<(CompositePredictor, TrainReport)> {
    cfg.validate()?;
    check_layout(&pred, data)?;
    if data.t() < 2 {
        return Err(Error::InsufficientFrames {
            needed: 2,
            got: data.t(),
        });
    }

    let mut rng = Rng::new(cfg.seed);
    let mut adam = AdamState::new(pred.param_count(), cfg.lr);
    let mut params = pred.flatten();
    let mut report = TrainReport::default();
    let started = Instant::now();
    let batch = cfg.batch_size.min(data.t());

    for step in 1..=cfg.max_steps {
        let indices = rng.sample_indices(data.t(), batch);
        let (breakdown, grads) = batch_objective(&pred, data, &cfg.loss, &indices)?;

        if !breakdown.total.is_finite() || breakdown.total > DIVERGENCE_LIMIT {
            report.steps_completed = step - 1;
            return Err(Error::Diverged {
                step,
                total: breakdown.total,
                report: Box::new(report),
            });
        }

        if step % cfg.log_every == 0 || step == cfg.max_steps {
            let metrics = evaluate(&pred.predict_sequence(data.t())?, data)?;
            report.records.push(TrainRecord {
                step,
                loss: breakdown,
                epe: metrics.epe,
                mse: metrics.mse,
                tc: metrics.temporal_consistency,
                ga: metrics.geometric_accuracy,
                wall_time_s: started.elapsed().as_secs_f64(),
            });
        }

        adam.step(&mut params, &grads)?;
        pred.set_params(&params)?;
        report.steps_completed = step;
    }

    report.final_metrics = Some(evaluate(&pred.predict_sequence(data.t())?, data)?);
    Ok((pred, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradProbe {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub probes: Vec<GradProbe>,
}

/// Coarse central-difference step used by [`gradcheck`]; the estimate is
/// extrapolated from this step and half of it.
pub const GRADCHECK_STEP: f64 = 1e-6;

/// Denominator floor for the relative error: gradients smaller than this are
/// compared in absolute terms.
pub const GRADCHECK_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

/// `L(plus) - L(minus)` for two full-sequence predictions (rows are frames),
/// accumulated term by term so that the difference does not cancel against
/// the size of the loss itself:
/// `(p - k)^2 - (q - k)^2 = (p - q)(p + q - 2k)` for the squared errors, and
/// the sine differences go through `sin a - sin b = 2 cos((a+b)/2) sin((a-b)/2)`.
fn objective_difference(
    plus: &Array2<f64>,
    minus: &Array2<f64>,
    data: &LabeledSequence,
    loss: &LossConfig,
) -> f64 {
    let d = data.d();
    let w = loss.omega0;
    let (mut squared, mut sines) = (0.0, 0.0);
    for t in 0..data.t() {
        let target = data.noisy_frames[t].coords();
        let shown = &data.masks[t];
        let (p, q) = (plus.row(t), minus.row(t));
        for i in (0..data.m()).filter(|&i| shown[i]) {
            for c in 0..d {
                let (a, b) = (p[i * d + c], q[i * d + c]);
                squared += (a - b) * (a + b - 2.0 * target[[i, c]]);
            }
        }
        for &(i, j) in data.graph.edges() {
            if !(shown[i] && shown[j]) {
                continue;
            }
            for c in 0..d {
                let (pi, pj, qi, qj) = (p[i * d + c], p[j * d + c], q[i * d + c], q[j * d + c]);
                let half_sum = 0.5 * w * ((pi - pj) + (qi - qj));
                let half_gap = 0.5 * w * ((pi - qi) - (pj - qj));
                let sin_gap = 2.0 * half_sum.cos() * half_gap.sin();
                let sin_sum = (w * (pi - pj)).sin() + (w * (qi - qj)).sin();
                let reference = (w * (target[[i, c]] - target[[j, c]])).sin();
                sines += sin_gap * (sin_sum - 2.0 * reference);
            }
        }
    }
    // recon and position share targets and masks
    squared + loss.lambda_sp * (squared + loss.lambda_geo * sines)
}

/// Compare the analytic parameter gradient of the full-sequence objective
/// against extrapolated central differences on `n_probes` parameters drawn with
/// `cfg.seed`.
pub fn gradcheck(
    pred: &CompositePredictor,
    data: &LabeledSequence,
    cfg: &TrainConfig,
    n_probes: usize,
) -> Result<GradcheckReport> {
    if n_probes == 0 {
        return Err(Error::Config("gradcheck needs at least one probe".into()));
    }
    let (_, analytic) = full_objective(pred, data, &cfg.loss)?;
    let mut rng = Rng::new(cfg.seed);
    let indices = rng.sample_indices(analytic.len(), n_probes);
    let times = frame_times(data.t())?;
    let base = pred.flatten();
    let mut probe_net = pred.clone();
    let mut outputs_at = |params: &[f64]| -> Result<Array2<f64>> {
        probe_net.set_params(params)?;
        Ok(probe_net.predict_batch(&times)?.0)
    };

    // central difference with step `h`
    let mut central = |index: usize, h: f64| -> Result<f64> {
        let mut params = base.clone();
        params[index] = base[index] + h;
        let plus = outputs_at(&params)?;
        params[index] = base[index] - h;
        let minus = outputs_at(&params)?;
        Ok(objective_difference(&plus, &minus, data, &cfg.loss) / (2.0 * h))
    };

    let mut probes = Vec::with_capacity(indices.len());
    for index in indices {
        let coarse = central(index, GRADCHECK_STEP)?;
        let fine = central(index, 0.5 * GRADCHECK_STEP)?;
        // Richardson extrapolation cancels the h^2 error term
        let numeric = (4.0 * fine - coarse) / 3.0;
        probes.push(GradProbe {
            index,
            analytic: analytic[index],
            numeric,
            rel_error: relative_error(analytic[index], numeric),
        });
    }
    let max_rel_error = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        max_rel_error,
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = AdamState::new(3, 1e-4);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = AdamState::new(1, 1e-4);
        let mut p = vec![0.0];
        adam.step(&mut p, &[0.5]).unwrap();
        let expected = -1e-4 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-18);
        assert!((p[0] + 1e-4).abs() < 1e-11);
    }

    #[test]
    fn non_finite_gradient_leaves_state() {
        let mut adam = AdamState::new(2, 1e-3);
        let mut p = vec![1.0, 1.0];
        adam.step(&mut p, &[0.1, 0.2]).unwrap();
        let before = (adam.clone(), p.clone());
        assert!(matches!(adam.step(&mut p, &[f64::NAN, 0.0]), Err(Error::Numeric(_))));
        assert_eq!((adam, p), before);
    }

    #[test]
    fn length_mismatch() {
        let mut adam = AdamState::new(2, 1e-3);
        assert!(matches!(adam.step(&mut [0.0], &[0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn config_validation() {
        for cfg in [
            TrainConfig {
                lr: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                max_steps: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert!((relative_error(1e-6, 0.0) - 1e-3).abs() < 1e-15);
    }
}
