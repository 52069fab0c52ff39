//! Mean code activation of a stacked sparse autoencoder with and without
//! the KL sparsity penalty.

use deeprep::encoders::{train_ssae, EncoderConfig};
use deeprep::synthetic::planted_linear;

fn main() -> deeprep::Result<()> {
    let x = planted_linear(500, 64, 8, 0.3, 31)?.x;
    let base = EncoderConfig {
        hidden: Some(vec![32]),
        latent_dim: 16,
        epochs: 60,
        patience: None,
        lr: 3e-3,
        sparsity_target: 0.05,
        seed: 3,
        ..Default::default()
    };
    for weight in [0.0, 1.0, 10.0] {
        let model = train_ssae(&x, None, &EncoderConfig { sparsity_weight: weight, ..base.clone() })?;
        let codes = model.encode(&x)?;
        println!(
            "λ = {weight:>4}: mean activation {:.4}, reconstruction MSE {:.4}",
            codes.mean(),
            model.reconstruction_error(&x)?
        );
    }
    Ok(())
}
