//! Adversarial autoencoder: checks how well the codes match the N(0, I)
//! prior with a freshly trained discriminator probe.

use deeprep::encoders::{train_aae, DiscriminatorProbe, EncoderConfig};
use deeprep::synthetic::planted_linear;

fn main() -> deeprep::Result<()> {
    let x = planted_linear(500, 16, 4, 0.1, 41)?.x;
    let cfg = EncoderConfig {
        hidden: Some(vec![32]),
        latent_dim: 4,
        epochs: 150,
        patience: None,
        lr: 1e-3,
        seed: 4,
        ..Default::default()
    };
    let model = train_aae(&x, None, &cfg)?;
    for (i, e) in model.history.epochs.iter().enumerate().filter(|(i, _)| i % 30 == 0) {
        println!("epoch {:>3}: {}", i + 1, named(&model.history.components, &e.components));
    }
    let codes = model.encode(&x)?;
    println!("latent means {:?}", codes.col_means());
    let acc = DiscriminatorProbe::default().prior_match_accuracy(&codes)?;
    println!("probe accuracy {acc:.3} (0.5 means indistinguishable from the prior)");
    Ok(())
}

fn named(names: &[String], values: &[f64]) -> String {
    names.iter().zip(values).map(|(n, v)| format!("{n} {v:.4}")).collect::<Vec<_>>().join(", ")
}
