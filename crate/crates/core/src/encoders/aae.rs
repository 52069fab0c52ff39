use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Activation, MlpNetwork, Optimizer, OptimizerKind};
use crate::numkit::{Distribution, Matrix, RngStream};

use super::objectives::{autoencoder_loss, discriminator_loss, generator_loss, ReconLoss};
use super::vae::build_pair;
use super::{
    batches, check_training_input, ensure_finite, EarlyStopping, EncoderBody, EncoderConfig, EncoderKind,
    EncoderModel, EpochRecord, TrainingHistory,
};

const PRIOR: Distribution = Distribution::Gaussian { mean: 0.0, sd: 1.0 };

/// Discriminator over `dim`-wide codes: ReLU hidden layers, sigmoid output.
pub(crate) fn build_discriminator(dim: usize, hidden: &[usize], rng: &mut RngStream) -> Result<MlpNetwork> {
    let mut widths = vec![dim];
    widths.extend_from_slice(hidden);
    widths.push(1);
    let mut acts = vec![Activation::Relu; widths.len() - 1];
    *acts.last_mut().expect("output layer") = Activation::Sigmoid;
    MlpNetwork::new(&widths, &acts, rng)
}

/// Adversarial autoencoder with a standard normal prior on the latent code.
///
/// Each batch runs three updates in order: encoder and decoder on
/// reconstruction MSE; the discriminator on prior samples (label 1) versus
/// codes (label 0); the encoder on the non-saturating generator loss.
pub fn train_aae(train: &Matrix, validation: Option<&Matrix>, cfg: &EncoderConfig) -> Result<EncoderModel> {
    check_training_input(train, validation, cfg)?;
    let root = RngStream::new(cfg.seed);
    let mut init_rng = root.derive(0);
    let mut batch_rng = root.derive(1);
    let mut prior_rng = root.derive(2);
    let widths = cfg.encoder_widths(train.cols());
    let d = cfg.latent_dim;
    let (mut encoder, mut decoder) = build_pair(&widths, cfg.activation, 1, &mut init_rng)?;
    let mut discriminator = build_discriminator(d, &cfg.discriminator_hidden, &mut init_rng)?;

    let disc_lr = cfg.discriminator_lr.unwrap_or(cfg.lr);
    let mut enc_opt = Optimizer::new(cfg.optimizer, cfg.lr)?;
    let mut dec_opt = Optimizer::new(cfg.optimizer, cfg.lr)?;
    let mut disc_opt = Optimizer::new(cfg.optimizer, disc_lr)?;
    let mut gen_opt = Optimizer::new(cfg.optimizer, cfg.lr)?;
    let mut history = TrainingHistory::new(&["recon_loss", "disc_loss", "gen_loss"]);
    let mut stopper = EarlyStopping::new(cfg.patience);
    for epoch in 0..cfg.epochs {
        let (mut recon, mut disc, mut gen, mut rows) = (0.0, 0.0, 0.0, 0.0);
        for batch in batches(train.rows(), cfg.batch_size, &mut batch_rng) {
            let xb = train.select_rows(&batch);
            let w = batch.len() as f64;

            let (loss, grads) = autoencoder_loss(&encoder, &decoder, &xb, ReconLoss::Mse, None)?;
            ensure_finite(loss.recon, epoch, "aae reconstruction")?;
            enc_opt.step_network(&mut encoder, &grads.encoder)?;
            dec_opt.step_network(&mut decoder, &grads.decoder)?;

            let codes = encoder.predict(&xb)?;
            let prior = prior_rng.sample(PRIOR, xb.rows(), d)?;
            let (d_loss, d_grads) = discriminator_loss(&discriminator, &prior, &codes)?;
            ensure_finite(d_loss, epoch, "aae discriminator")?;
            disc_opt.step_network(&mut discriminator, &d_grads)?;

            let (g_loss, g_grads) = generator_loss(&encoder, &discriminator, &xb)?;
            ensure_finite(g_loss, epoch, "aae generator")?;
            gen_opt.step_network(&mut encoder, &g_grads)?;

            recon += w * loss.recon;
            disc += w * d_loss;
            gen += w * g_loss;
            rows += w;
        }
        let val_loss = match validation {
            Some(v) if v.rows() > 0 => {
                let (loss, _) = autoencoder_loss(&encoder, &decoder, v, ReconLoss::Mse, None)?;
                Some(ensure_finite(loss.recon, epoch, "aae validation")?)
            }
            _ => None,
        };
        history.push(EpochRecord {
            train_loss: recon / rows,
            val_loss,
            components: vec![recon / rows, disc / rows, gen / rows],
        });
        let state = (encoder.clone(), decoder.clone(), discriminator.clone());
        if stopper.observe(val_loss, &state) {
            break;
        }
    }
    if let Some((e, dd, disc)) = stopper.into_best() {
        encoder = e;
        decoder = dd;
        discriminator = disc;
    }

    Ok(EncoderModel {
        kind: EncoderKind::Aae,
        input_dim: train.cols(),
        latent_dim: d,
        body: EncoderBody::Adversarial {
            encoder,
            decoder,
            discriminator,
        },
        history,
        config: cfg.clone(),
        seed: cfg.seed,
    })
}

/// Fraction of rows a discriminator classifies correctly at threshold 0.5,
/// with `real` labelled 1 and `fake` labelled 0.
pub fn discriminator_accuracy(discriminator: &MlpNetwork, real: &Matrix, fake: &Matrix) -> Result<f64> {
    let pr = discriminator.predict(real)?;
    let pf = discriminator.predict(fake)?;
    let hits = pr.as_slice().iter().filter(|&&p| p > 0.5).count() + pf.as_slice().iter().filter(|&&p| p <= 0.5).count();
    let total = real.rows() + fake.rows();
    if total == 0 {
        return Err(Error::param("discriminator accuracy needs at least one row"));
    }
    Ok(hits as f64 / total as f64)
}

/// Settings for a standalone discriminator trained to tell `real` from `fake`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorProbe {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DiscriminatorProbe {
    fn default() -> Self {
        DiscriminatorProbe {
            hidden: vec![32, 32],
            lr: 1e-3,
            epochs: 50,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Trains a fresh discriminator from scratch with Adam.
pub fn train_discriminator(real: &Matrix, fake: &Matrix, probe: &DiscriminatorProbe) -> Result<MlpNetwork> {
    if real.cols() != fake.cols() {
        return Err(Error::shape("train_discriminator", real.shape(), fake.shape()));
    }
    if real.rows() == 0 || fake.rows() == 0 || probe.batch_size == 0 {
        return Err(Error::param("discriminator training needs non-empty real, fake and batches"));
    }
    let root = RngStream::new(probe.seed);
    let mut init_rng = root.derive(0);
    let mut batch_rng = root.derive(1);
    let mut net = build_discriminator(real.cols(), &probe.hidden, &mut init_rng)?;
    let mut opt = Optimizer::new(OptimizerKind::Adam, probe.lr)?;
    let n = real.rows().min(fake.rows());
    for epoch in 0..probe.epochs {
        let real_order = batch_rng.permutation(real.rows());
        let fake_order = batch_rng.permutation(fake.rows());
        for start in (0..n).step_by(probe.batch_size) {
            let end = (start + probe.batch_size).min(n);
            let rb = real.select_rows(&real_order[start..end]);
            let fb = fake.select_rows(&fake_order[start..end]);
            let (loss, grads) = discriminator_loss(&net, &rb, &fb)?;
            ensure_finite(loss, epoch, "probe discriminator")?;
            opt.step_network(&mut net, &grads)?;
        }
    }
    Ok(net)
}

impl DiscriminatorProbe {
    /// Held-out accuracy of a fresh discriminator separating standard normal
    /// prior samples from `codes`. Half the codes (and an equal number of
    /// prior draws) train it; the other half score it.
    pub fn prior_match_accuracy(&self, codes: &Matrix) -> Result<f64> {
        if codes.rows() < 4 {
            return Err(Error::param("prior matching needs at least 4 codes"));
        }
        let mut rng = RngStream::new(self.seed).derive(7);
        let order = rng.permutation(codes.rows());
        let half = codes.rows() / 2;
        let fit_codes = codes.select_rows(&order[..half]);
        let test_codes = codes.select_rows(&order[half..]);
        let fit_prior = rng.sample(PRIOR, fit_codes.rows(), codes.cols())?;
        let test_prior = rng.sample(PRIOR, test_codes.rows(), codes.cols())?;
        let net = train_discriminator(&fit_prior, &fit_codes, self)?;
        discriminator_accuracy(&net, &test_prior, &test_codes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discriminator_cannot_separate_prior_from_itself() {
        let codes = RngStream::new(11).sample(PRIOR, 1000, 4).unwrap();
        let acc = DiscriminatorProbe::default().prior_match_accuracy(&codes).unwrap();
        assert!((0.40..=0.65).contains(&acc), "accuracy {acc}");
    }

    #[test]
    fn discriminator_separates_shifted_codes() {
        let codes = RngStream::new(12).sample(Distribution::Gaussian { mean: 3.0, sd: 1.0 }, 400, 2).unwrap();
        let acc = DiscriminatorProbe::default().prior_match_accuracy(&codes).unwrap();
        assert!(acc > 0.9, "accuracy {acc}");
    }

    #[test]
    fn aae_trains_and_discriminator_output_is_a_probability() {
        let x = RngStream::new(13).sample(PRIOR, 96, 6).unwrap();
        let cfg = EncoderConfig {
            hidden: Some(vec![5, 4]),
            latent_dim: 2,
            epochs: 4,
            batch_size: 16,
            discriminator_hidden: vec![8],
            ..EncoderConfig::default()
        };
        let m = train_aae(&x, Some(&x), &cfg).unwrap();
        assert_eq!(m.history.components, ["recon_loss", "disc_loss", "gen_loss"]);
        assert_eq!(m.encode(&x).unwrap().shape(), (96, 2));
        let EncoderBody::Adversarial { discriminator, .. } = &m.body else { panic!("wrong body") };
        let probe = RngStream::new(14).sample(Distribution::Gaussian { mean: 0.0, sd: 3.0 }, 50, 2).unwrap();
        assert!(discriminator.predict(&probe).unwrap().as_slice().iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn accuracy_of_mismatched_widths_is_shape_error() {
        let a = Matrix::zeros(4, 2);
        let b = Matrix::zeros(4, 3);
        assert!(matches!(train_discriminator(&a, &b, &DiscriminatorProbe::default()), Err(Error::Shape { .. })));
    }
}
