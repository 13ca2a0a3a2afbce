//! Fit a sharp 1D signal with a sine network and with a tanh network of the
//! same shape, using the library's layers and Adam directly.

use ndarray::Array2;
use sirenpose::{init_siren, init_tanh, AdamState, Mlp, Rng};

fn target(x: f64) -> f64 {
    (8.0 * x).sin() * 0.5 + (x * 3.0).signum() * 0.3
}

fn fit(mut net: Mlp, xs: &Array2<f64>, ys: &Array2<f64>, steps: usize) -> sirenpose::Result<f64> {
    let mut adam = AdamState::new(net.param_count(), 1e-4);
    let n = xs.nrows() as f64;
    let mut mse = f64::NAN;
    for _ in 0..steps {
        let (out, cache) = net.forward_batch(xs.view())?;
        let diff = &out - ys;
        mse = diff.iter().map(|d| d * d).sum::<f64>() / n;
        let grad_out = diff.mapv(|d| 2.0 * d / n);
        let (grads, _) = net.backward_batch(&cache, grad_out.view())?;
        let mut params = net.flatten();
        adam.step(&mut params, &grads.flatten())?;
        net.set_params(&params)?;
    }
    Ok(mse)
}

fn main() -> sirenpose::Result<()> {
    let n = 200;
    let xs = Array2::from_shape_fn((n, 1), |(i, _)| -1.0 + 2.0 * i as f64 / (n - 1) as f64);
    let ys = xs.mapv(target);
    let arch = [1, 64, 64, 1];
    let mut rng = Rng::new(0);

    let sine = fit(init_siren(&arch, 30.0, &mut rng)?, &xs, &ys, 2000)?;
    let tanh = fit(init_tanh(&arch, &mut rng)?, &xs, &ys, 2000)?;
    println!("after 2000 steps: sine mse {sine:.2e}, tanh mse {tanh:.2e}");
    Ok(())
}
