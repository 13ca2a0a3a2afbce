//! Score noisy observations against the clean trajectory.

use sirenpose::metrics::{epe, evaluate, geometric_accuracy, mse, score, temporal_consistency};
use sirenpose::{generate_chain_scene, perturb_sequence, KeypointSet, SceneConfig};

fn main() -> sirenpose::Result<()> {
    let clean = generate_chain_scene(&SceneConfig::default())?;
    println!("{:>6} {:>9} {:>9} {:>9} {:>9} {:>9}", "sigma", "epe", "mse", "tc", "ga", "score");
    for sigma in [0.0, 0.01, 0.05, 0.1, 0.2] {
        let seq = perturb_sequence(&clean, sigma, 3)?;
        let pred = &seq.noisy_frames;
        let e = epe(pred, &seq.frames)?;
        println!(
            "{sigma:>6} {e:>9.4} {:>9.5} {:>9.4} {:>9.4} {:>9.2}",
            mse(pred, &seq.frames)?,
            temporal_consistency(pred)?,
            geometric_accuracy(pred, &seq.graph)?,
            score(e)?
        );
    }

    // a single keypoint off by (3, 4) has an endpoint error of exactly 5
    let a = KeypointSet::from_rows(&[vec![3.0, 4.0]])?;
    let b = KeypointSet::from_rows(&[vec![0.0, 0.0]])?;
    println!("3-4-5 check: epe {}", epe(&[a], &[b])?);

    let report = evaluate(&clean.frames, &clean)?;
    println!("ground truth against itself: {report:?}");
    Ok(())
}
