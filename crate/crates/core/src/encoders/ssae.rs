use crate::error::Result;
use crate::neural::{Activation, DenseLayer, MlpNetwork, Optimizer};
use crate::numkit::{Matrix, RngStream};

use super::objectives::{autoencoder_loss, ReconLoss, Sparsity};
use super::{
    batches, check_training_input, ensure_finite, EarlyStopping, EncoderBody, EncoderConfig, EncoderKind,
    EncoderModel, EpochRecord, TrainingHistory,
};

/// Middle units use a sigmoid so their mean activation is a Bernoulli rate.
const MIDDLE_ACTIVATION: Activation = Activation::Sigmoid;

fn sparsity(cfg: &EncoderConfig) -> Sparsity {
    Sparsity {
        target: cfg.sparsity_target,
        weight: cfg.sparsity_weight,
        penalty: cfg.sparsity_penalty,
    }
}

/// Stacked sparse autoencoder.
///
/// Each encoder layer is first pretrained greedily as a shallow autoencoder
/// on the previous layer's output; the stack is then fine-tuned end to end
/// on mean absolute reconstruction error plus the sparsity penalty on the
/// middle layer.
pub fn train_ssae(train: &Matrix, validation: Option<&Matrix>, cfg: &EncoderConfig) -> Result<EncoderModel> {
    check_training_input(train, validation, cfg)?;
    let root = RngStream::new(cfg.seed);
    let mut init_rng = root.derive(0);
    let mut batch_rng = root.derive(1);
    let widths = cfg.encoder_widths(train.cols());
    let depth = widths.len() - 1;
    let sparse = sparsity(cfg);

    let encoder_act = |l: usize| if l + 1 == depth { MIDDLE_ACTIVATION } else { cfg.activation };
    let decoder_act = |l: usize| if l == 0 { Activation::Linear } else { cfg.activation };

    // Greedy layer-wise pretraining.
    let mut enc_layers = Vec::with_capacity(depth);
    let mut dec_layers = Vec::with_capacity(depth);
    let mut layer_input = train.clone();
    for l in 0..depth {
        let mut enc = MlpNetwork::from_layers(vec![DenseLayer::init(widths[l], widths[l + 1], encoder_act(l), &mut init_rng)])?;
        let mut dec = MlpNetwork::from_layers(vec![DenseLayer::init(widths[l + 1], widths[l], decoder_act(l), &mut init_rng)])?;
        let penalty = (l + 1 == depth).then_some(&sparse);
        let mut enc_opt = Optimizer::new(cfg.optimizer, cfg.lr)?;
        let mut dec_opt = Optimizer::new(cfg.optimizer, cfg.lr)?;
        for epoch in 0..cfg.pretrain_epochs {
            for batch in batches(layer_input.rows(), cfg.batch_size, &mut batch_rng) {
                let xb = layer_input.select_rows(&batch);
                let (loss, grads) = autoencoder_loss(&enc, &dec, &xb, ReconLoss::Mae, penalty)?;
                ensure_finite(loss.total(), epoch, "ssae pretraining")?;
                enc_opt.step_network(&mut enc, &grads.encoder)?;
                dec_opt.step_network(&mut dec, &grads.decoder)?;
            }
        }
        layer_input = enc.predict(&layer_input)?;
        enc_layers.extend(enc.layers().iter().cloned());
        dec_layers.extend(dec.layers().iter().cloned());
    }
    dec_layers.reverse();
    let mut encoder = MlpNetwork::from_layers(enc_layers)?;
    let mut decoder = MlpNetwork::from_layers(dec_layers)?;

    // End-to-end fine-tuning.
    let mut enc_opt = Optimizer::new(cfg.optimizer, cfg.lr)?;
    let mut dec_opt = Optimizer::new(cfg.optimizer, cfg.lr)?;
    let mut history = TrainingHistory::new(&["recon_loss", "sparsity_loss"]);
    let mut stopper = EarlyStopping::new(cfg.patience);
    for epoch in 0..cfg.epochs {
        let (mut recon, mut penalty, mut rows) = (0.0, 0.0, 0.0);
        for batch in batches(train.rows(), cfg.batch_size, &mut batch_rng) {
            let xb = train.select_rows(&batch);
            let (loss, grads) = autoencoder_loss(&encoder, &decoder, &xb, ReconLoss::Mae, Some(&sparse))?;
            ensure_finite(loss.total(), epoch, "ssae fine-tuning")?;
            enc_opt.step_network(&mut encoder, &grads.encoder)?;
            dec_opt.step_network(&mut decoder, &grads.decoder)?;
            let w = batch.len() as f64;
            recon += w * loss.recon;
            penalty += w * loss.sparsity;
            rows += w;
        }
        let (recon, penalty) = (recon / rows, penalty / rows);
        let val_loss = match validation {
            Some(v) if v.rows() > 0 => {
                let (loss, _) = autoencoder_loss(&encoder, &decoder, v, ReconLoss::Mae, Some(&sparse))?;
                Some(ensure_finite(loss.total(), epoch, "ssae validation")?)
            }
            _ => None,
        };
        history.push(EpochRecord {
            train_loss: recon + penalty,
            val_loss,
            components: vec![recon, penalty],
        });
        if stopper.observe(val_loss, &(encoder.clone(), decoder.clone())) {
            break;
        }
    }
    if let Some((e, d)) = stopper.into_best() {
        encoder = e;
        decoder = d;
    }

    Ok(EncoderModel {
        kind: EncoderKind::Ssae,
        input_dim: train.cols(),
        latent_dim: cfg.latent_dim,
        body: EncoderBody::Autoencoder { encoder, decoder },
        history,
        config: cfg.clone(),
        seed: cfg.seed,
    })
}
