//! Train briefly, save a checkpoint, reload it and confirm the predictions
//! did not change.

use sirenpose::io::{load_checkpoint, read_metrics_csv, save_checkpoint, write_metrics_csv, Checkpoint, MetricsRow};
use sirenpose::{generate_chain_scene, train, CompositePredictor, PredictorConfig, Rng, SceneConfig, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seq = generate_chain_scene(&SceneConfig::default())?;
    let cfg = TrainConfig {
        max_steps: 300,
        log_every: 50,
        ..TrainConfig::default()
    };
    let pred = CompositePredictor::new(&PredictorConfig::default(), seq.m(), seq.d(), &mut Rng::new(cfg.seed))?;
    let (pred, report) = train(pred, &seq, &cfg)?;

    let dir = tempfile::tempdir()?;
    let ckpt_path = dir.path().join("model.json");
    let log_path = dir.path().join("model.json.metrics.csv");

    let ckpt = Checkpoint {
        predictor: pred,
        train: cfg,
        steps_completed: report.steps_completed,
        final_metrics: report.final_metrics,
    };
    save_checkpoint(&ckpt, &ckpt_path)?;
    let rows: Vec<MetricsRow> = report.records.iter().map(MetricsRow::from).collect();
    write_metrics_csv(&rows, &log_path)?;

    let back = load_checkpoint(&ckpt_path)?;
    let before = ckpt.predictor.predict_sequence(seq.t())?;
    let after = back.predictor.predict_sequence(seq.t())?;
    let identical = before.iter().zip(&after).all(|(a, b)| a == b);
    println!("{} parameters reloaded, predictions identical: {identical}", back.predictor.param_count());
    println!("{} log rows read back", read_metrics_csv(&log_path)?.len());
    Ok(())
}
