use crate::error::Result;
use crate::neural::{Activation, MlpNetwork, Optimizer};
use crate::numkit::{Distribution, Matrix, RngStream};

use super::objectives::vae_loss;
use super::{
    batches, check_training_input, ensure_finite, EarlyStopping, EncoderBody, EncoderConfig, EncoderKind,
    EncoderModel, EpochRecord, TrainingHistory,
};

const STANDARD_NORMAL: Distribution = Distribution::Gaussian { mean: 0.0, sd: 1.0 };

/// Mirrored encoder/decoder pair. The encoder's last layer is linear; its
/// width is `latent_dim · posterior_factor` (2 for `[μ ‖ log σ²]`).
pub(crate) fn build_pair(
    widths: &[usize],
    activation: Activation,
    posterior_factor: usize,
    rng: &mut RngStream,
) -> Result<(MlpNetwork, MlpNetwork)> {
    let depth = widths.len() - 1;
    let mut enc_widths = widths.to_vec();
    *enc_widths.last_mut().expect("non-empty") *= posterior_factor;
    let mut enc_acts = vec![activation; depth];
    enc_acts[depth - 1] = Activation::Linear;
    let encoder = MlpNetwork::new(&enc_widths, &enc_acts, rng)?;
    let dec_widths: Vec<usize> = widths.iter().rev().copied().collect();
    let mut dec_acts = vec![activation; depth];
    dec_acts[depth - 1] = Activation::Linear;
    let decoder = MlpNetwork::new(&dec_widths, &dec_acts, rng)?;
    Ok((encoder, decoder))
}

/// Variational autoencoder with a standard normal prior. Minimizes batch
/// reconstruction MSE plus `kl_weight` times the mean Gaussian KL; the
/// validation loss uses its own fixed noise stream so it is reproducible.
/// The `kl_loss` history component is the weighted term.
pub fn train_vae(train: &Matrix, validation: Option<&Matrix>, cfg: &EncoderConfig) -> Result<EncoderModel> {
    check_training_input(train, validation, cfg)?;
    let root = RngStream::new(cfg.seed);
    let mut init_rng = root.derive(0);
    let mut batch_rng = root.derive(1);
    let mut noise_rng = root.derive(2);
    let widths = cfg.encoder_widths(train.cols());
    let (mut encoder, mut decoder) = build_pair(&widths, cfg.activation, 2, &mut init_rng)?;
    let d = cfg.latent_dim;

    let mut enc_opt = Optimizer::new(cfg.optimizer, cfg.lr)?;
    let mut dec_opt = Optimizer::new(cfg.optimizer, cfg.lr)?;
    let mut history = TrainingHistory::new(&["recon_loss", "kl_loss"]);
    let mut stopper = EarlyStopping::new(cfg.patience);
    for epoch in 0..cfg.epochs {
        let (mut total, mut recon, mut kl, mut rows) = (0.0, 0.0, 0.0, 0.0);
        for batch in batches(train.rows(), cfg.batch_size, &mut batch_rng) {
            let xb = train.select_rows(&batch);
            let noise = noise_rng.sample(STANDARD_NORMAL, xb.rows(), d)?;
            let (loss, grads) = vae_loss(&encoder, &decoder, &xb, &noise, cfg.kl_weight)?;
            ensure_finite(loss.total, epoch, "vae")?;
            enc_opt.step_network(&mut encoder, &grads.encoder)?;
            dec_opt.step_network(&mut decoder, &grads.decoder)?;
            let w = batch.len() as f64;
            total += w * loss.total;
            recon += w * loss.recon;
            kl += w * cfg.kl_weight * loss.kl;
            rows += w;
        }
        let val_loss = match validation {
            Some(v) if v.rows() > 0 => {
                let mut val_rng = root.derive(3 + epoch as u64);
                let noise = val_rng.sample(STANDARD_NORMAL, v.rows(), d)?;
                let (loss, _) = vae_loss(&encoder, &decoder, v, &noise, cfg.kl_weight)?;
                Some(ensure_finite(loss.total, epoch, "vae validation")?)
            }
            _ => None,
        };
        history.push(EpochRecord {
            train_loss: total / rows,
            val_loss,
            components: vec![recon / rows, kl / rows],
        });
        if stopper.observe(val_loss, &(encoder.clone(), decoder.clone())) {
            break;
        }
    }
    if let Some((e, dd)) = stopper.into_best() {
        encoder = e;
        decoder = dd;
    }

    Ok(EncoderModel {
        kind: EncoderKind::Vae,
        input_dim: train.cols(),
        latent_dim: d,
        body: EncoderBody::Variational { encoder, decoder },
        history,
        config: cfg.clone(),
        seed: cfg.seed,
    })
}

impl EncoderModel {
    /// Posterior parameters `(μ, log σ²)` of a variational model.
    pub fn posterior(&self, x: &Matrix) -> Result<Option<(Matrix, Matrix)>> {
        match &self.body {
            EncoderBody::Variational { encoder, .. } => {
                if x.cols() != self.input_dim {
                    return Err(crate::Error::shape("posterior", x.shape(), (x.rows(), self.input_dim)));
                }
                Ok(Some(super::objectives::split_posterior(&encoder.predict(x)?)?))
            }
            _ => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(seed: u64) -> Matrix {
        RngStream::new(seed).sample(STANDARD_NORMAL, 64, 6).unwrap()
    }

    fn cfg() -> EncoderConfig {
        EncoderConfig {
            hidden: Some(vec![5, 4]),
            latent_dim: 2,
            epochs: 5,
            batch_size: 16,
            patience: None,
            ..EncoderConfig::default()
        }
    }

    #[test]
    fn zero_beta_has_zero_kl_component() {
        let cfg = EncoderConfig { kl_weight: 0.0, ..cfg() };
        let m = train_vae(&data(1), None, &cfg).unwrap();
        assert!(m.history.component("kl_loss").unwrap().iter().all(|&v| v == 0.0));
        let recon = m.history.component("recon_loss").unwrap();
        assert_eq!(recon, m.history.train_losses());
    }

    #[test]
    fn encode_is_posterior_mean_and_shapes_round_trip() {
        let x = data(2);
        let m = train_vae(&x, Some(&data(3)), &cfg()).unwrap();
        let z = m.encode(&x).unwrap();
        assert_eq!(z.shape(), (64, 2));
        assert_eq!(m.reconstruct(&x).unwrap().shape(), (64, 6));
        let (mu, logvar) = m.posterior(&x).unwrap().unwrap();
        assert_eq!(z, mu);
        assert_eq!(logvar.shape(), (64, 2));
        assert_eq!(m.encode(&x).unwrap(), z);
        assert!(m.history.epochs.iter().all(|e| e.val_loss.is_some()));
    }

    #[test]
    fn same_seed_same_model() {
        let x = data(4);
        assert_eq!(train_vae(&x, None, &cfg()).unwrap(), train_vae(&x, None, &cfg()).unwrap());
    }
}
