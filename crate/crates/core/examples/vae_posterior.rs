//! Trains a VAE and reports the aggregate posterior moments per latent
//! dimension, plus the reconstruction / KL split of the final epoch.

use deeprep::encoders::{train_vae, EncoderConfig};
use deeprep::synthetic::planted_linear;

fn main() -> deeprep::Result<()> {
    let x = planted_linear(500, 16, 4, 0.1, 41)?.x;
    let cfg = EncoderConfig {
        hidden: Some(vec![32]),
        latent_dim: 4,
        epochs: 100,
        patience: None,
        lr: 1e-3,
        seed: 4,
        ..Default::default()
    };
    let model = train_vae(&x, None, &cfg)?;
    let last = model.history.epochs.last().unwrap();
    println!("final epoch: {}", named(&model.history.components, &last.components));

    let (mu, logvar) = model.posterior(&x)?.expect("variational model");
    let n = mu.rows() as f64;
    for d in 0..mu.cols() {
        let m = mu.col_values(d);
        let mean = m.iter().sum::<f64>() / n;
        let var_mu = m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sigma2 = logvar.col_values(d).iter().map(|v| v.exp()).sum::<f64>() / n;
        println!("z{d}: mean {mean:+.3}, Var(μ) {var_mu:.3}, E[σ²] {sigma2:.3}, total {:.3}", var_mu + sigma2);
    }
    Ok(())
}

fn named(names: &[String], values: &[f64]) -> String {
    names.iter().zip(values).map(|(n, v)| format!("{n} {v:.4}")).collect::<Vec<_>>().join(", ")
}
