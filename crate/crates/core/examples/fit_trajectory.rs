//! Fit the composite predictor to the default scene and print the training log.
//!
//! ```text
//! cargo run --release --example fit_trajectory -- 10000 0.5
//! ```
//! Arguments: step count and geometric weight.

use sirenpose::{generate_chain_scene, train, CompositePredictor, PredictorConfig, Rng, SceneConfig, TrainConfig};

fn main() -> sirenpose::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps = args.first().and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let lambda_geo = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);

    let seq = generate_chain_scene(&SceneConfig::default())?;
    let mut cfg = TrainConfig {
        max_steps: steps,
        log_every: (steps / 20).max(1),
        ..TrainConfig::default()
    };
    cfg.loss.lambda_geo = lambda_geo;

    let pred = CompositePredictor::new(&PredictorConfig::default(), seq.m(), seq.d(), &mut Rng::new(cfg.seed))?;
    println!("{} parameters", pred.param_count());
    let (pred, report) = train(pred, &seq, &cfg)?;

    println!("{:>6} {:>12} {:>12} {:>12} {:>8} {:>8}", "step", "total", "geometric", "epe", "tc", "ga");
    for r in &report.records {
        println!(
            "{:>6} {:>12.6} {:>12.6} {:>12.6} {:>8.4} {:>8.4}",
            r.step, r.loss.total, r.loss.geometric_term, r.epe, r.tc, r.ga
        );
    }
    let last = report.final_metrics.expect("training ran at least one step");
    println!("final epe {:.5} (score {:.2}), tc {:.4}", last.epe, last.epe_score, last.temporal_consistency);

    // the fitted trajectory is continuous, so it can be sampled between frames
    let mid = pred.predict_times(&[0.0])?;
    println!("keypoints at the clip midpoint {:?}", mid[0].to_rows());
    Ok(())
}
