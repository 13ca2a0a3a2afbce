//! Train with and without the geometric term on a noisy, partly occluded
//! scene and compare bone-length accuracy.
//!
//! ```text
//! cargo run --release --example geometric_ablation -- 10000
//! ```

use sirenpose::metrics::geometric_accuracy;
use sirenpose::{generate_chain_scene, train, CompositePredictor, PredictorConfig, Rng, SceneConfig, TrainConfig};

fn main() -> sirenpose::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let seq = generate_chain_scene(&SceneConfig {
        noise_sigma: 0.05,
        occlusion_rate: 0.2,
        ..SceneConfig::default()
    })?;
    println!(
        "observations: ga {:.4}",
        geometric_accuracy(&seq.noisy_frames, &seq.graph)?
    );

    for lambda_geo in [0.0, 0.01, 0.5] {
        let mut cfg = TrainConfig {
            max_steps: steps,
            log_every: steps,
            ..TrainConfig::default()
        };
        cfg.loss.lambda_geo = lambda_geo;
        let pred = CompositePredictor::new(&PredictorConfig::default(), seq.m(), seq.d(), &mut Rng::new(0))?;
        let (_, report) = train(pred, &seq, &cfg)?;
        let m = report.final_metrics.expect("at least one step");
        println!(
            "lambda_geo {lambda_geo:<5} ga {:.4}  epe {:.4}  tc {:.4}",
            m.geometric_accuracy, m.epe, m.temporal_consistency
        );
    }
    Ok(())
}
