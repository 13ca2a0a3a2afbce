//! Compare analytic parameter gradients with finite differences.

use sirenpose::{generate_chain_scene, gradcheck, CompositePredictor, PredictorConfig, Rng, SceneConfig, TrainConfig};

fn main() -> sirenpose::Result<()> {
    for (noise_sigma, occlusion_rate) in [(0.0, 0.0), (0.05, 0.2)] {
        let seq = generate_chain_scene(&SceneConfig {
            noise_sigma,
            occlusion_rate,
            ..SceneConfig::default()
        })?;
        let pred = CompositePredictor::new(&PredictorConfig::default(), seq.m(), seq.d(), &mut Rng::new(7))?;
        let report = gradcheck(&pred, &seq, &TrainConfig::default(), 10)?;
        println!("noise {noise_sigma}, occlusion {occlusion_rate}");
        for p in &report.probes {
            println!(
                "  param {:>6}  analytic {:>13.6e}  numeric {:>13.6e}  rel {:.1e}",
                p.index, p.analytic, p.numeric, p.rel_error
            );
        }
        println!("  worst relative error {:.2e}", report.max_rel_error);
    }
    Ok(())
}
