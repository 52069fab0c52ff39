//! Compares analytic backpropagation with central differences for an
//! autoencoder loss.

use deeprep::encoders::objectives::{autoencoder_loss, ReconLoss};
use deeprep::neural::{Activation, MlpNetwork};
use deeprep::numkit::Distribution;
use deeprep::RngStream;

fn main() -> deeprep::Result<()> {
    let mut rng = RngStream::new(1);
    let x = rng.sample(Distribution::Gaussian { mean: 0.0, sd: 1.0 }, 10, 6)?;
    let enc = MlpNetwork::new(&[6, 5, 3], &[Activation::Tanh, Activation::Linear], &mut rng)?;
    let dec = MlpNetwork::new(&[3, 5, 6], &[Activation::Tanh, Activation::Linear], &mut rng)?;

    let loss = |e: &MlpNetwork| autoencoder_loss(e, &dec, &x, ReconLoss::Mse, None).map(|r| r.0.total());
    let (_, grads) = autoencoder_loss(&enc, &dec, &x, ReconLoss::Mse, None)?;
    let analytic: Vec<f64> = grads.encoder.slices().into_iter().flatten().copied().collect();

    let h = 1e-5;
    let blocks: Vec<usize> = enc.clone().params_mut().iter().map(|s| s.len()).collect();
    let mut numeric = Vec::new();
    for (b, &len) in blocks.iter().enumerate() {
        for k in 0..len {
            let (mut plus, mut minus) = (enc.clone(), enc.clone());
            plus.params_mut()[b][k] += h;
            minus.params_mut()[b][k] -= h;
            numeric.push((loss(&plus)? - loss(&minus)?) / (2.0 * h));
        }
    }

    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    let rel = norm(&diff) / (norm(&analytic) + norm(&numeric));
    println!("{} encoder parameters, relative error {rel:.2e}", analytic.len());
    Ok(())
}
