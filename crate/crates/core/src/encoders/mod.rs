//! The four representation learners: stacked sparse autoencoder, deep belief
//! network, variational autoencoder and adversarial autoencoder.
//!
//! Every trainer takes standardized training rows plus optional validation
//! rows. Validation rows only feed the history and early stopping; they never
//! reach a gradient.

mod aae;
pub mod objectives;
mod rbm;
mod ssae;
mod vae;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Activation, MlpNetwork, OptimizerKind};
use crate::numkit::{Matrix, RngStream};

pub use aae::{discriminator_accuracy, train_aae, train_discriminator, DiscriminatorProbe};
pub use objectives::{kl_bernoulli, kl_gaussian, reparameterize, KL_BERNOULLI_EPS};
pub use rbm::{bars_and_stripes, train_dbn, Rbm, VisibleKind};
pub use ssae::train_ssae;
pub use vae::train_vae;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Ssae,
    Dbn,
    Vae,
    Aae,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 4] = [EncoderKind::Ssae, EncoderKind::Dbn, EncoderKind::Aae, EncoderKind::Vae];

    pub fn key(self) -> &'static str {
        match self {
            EncoderKind::Ssae => "ssae",
            EncoderKind::Dbn => "dbn",
            EncoderKind::Vae => "vae",
            EncoderKind::Aae => "aae",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        EncoderKind::ALL.into_iter().find(|k| k.key() == key.to_ascii_lowercase())
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key().to_ascii_uppercase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparsityPenalty {
    /// `λ·Σ_j KL(ρ ‖ ρ̄_j)` over middle units.
    Kl,
    /// `λ·Σ_j |a_j|`, averaged over the batch.
    L1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Encoder-side hidden widths between input and latent. `None` means two
    /// widths interpolated geometrically from the input down to `latent_dim`.
    pub hidden: Option<Vec<usize>>,
    pub latent_dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; `None` disables.
    pub patience: Option<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub sparsity_target: f64,
    pub sparsity_weight: f64,
    pub sparsity_penalty: SparsityPenalty,
    /// Greedy per-layer epochs before SSAE fine-tuning.
    pub pretrain_epochs: usize,
    pub cd_steps: usize,
    pub kl_weight: f64,
    pub discriminator_hidden: Vec<usize>,
    /// Discriminator learning rate; defaults to `lr`.
    pub discriminator_lr: Option<f64>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden: None,
            latent_dim: 8,
            lr: 1e-3,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            patience: Some(10),
            activation: Activation::Relu,
            optimizer: OptimizerKind::Adam,
            sparsity_target: 0.05,
            sparsity_weight: 0.1,
            sparsity_penalty: SparsityPenalty::Kl,
            pretrain_epochs: 10,
            cd_steps: 1,
            kl_weight: 1.0,
            discriminator_hidden: vec![32, 32],
            discriminator_lr: None,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::param(m));
        if !(self.sparsity_target > 0.0 && self.sparsity_target < 1.0) {
            return bad(format!("sparsity target ρ must be in (0,1), got {}", self.sparsity_target));
        }
        if !(self.sparsity_weight >= 0.0) {
            return bad(format!("sparsity weight λ must be ≥ 0, got {}", self.sparsity_weight));
        }
        if self.cd_steps < 1 {
            return bad("CD steps k must be ≥ 1".into());
        }
        if !(self.kl_weight >= 0.0) {
            return bad(format!("KL weight β must be ≥ 0, got {}", self.kl_weight));
        }
        if !(self.lr > 0.0) {
            return bad(format!("learning rate must be > 0, got {}", self.lr));
        }
        if let Some(lr) = self.discriminator_lr {
            if !(lr > 0.0) {
                return bad(format!("discriminator learning rate must be > 0, got {lr}"));
            }
        }
        if self.latent_dim == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("latent_dim, batch_size and epochs must be ≥ 1".into());
        }
        if self.hidden.as_ref().is_some_and(|h| h.contains(&0)) || self.discriminator_hidden.contains(&0) {
            return bad("hidden widths must be ≥ 1".into());
        }
        Ok(())
    }

    /// Encoder widths from input to latent inclusive.
    pub fn encoder_widths(&self, input_dim: usize) -> Vec<usize> {
        let mut widths = vec![input_dim];
        match &self.hidden {
            Some(h) => widths.extend(h),
            None => widths.extend(geometric_widths(input_dim, self.latent_dim, 2)),
        }
        widths.push(self.latent_dim);
        widths
    }
}

/// `count` widths spaced geometrically strictly between `from` and `to`.
pub fn geometric_widths(from: usize, to: usize, count: usize) -> Vec<usize> {
    let ratio = to as f64 / from as f64;
    (1..=count)
        .map(|i| {
            let w = from as f64 * ratio.powf(i as f64 / (count + 1) as f64);
            (w.round() as usize).max(1)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub components: Vec<f64>,
}

/// Per-epoch losses. `components` names the extra columns of each record.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub components: Vec<String>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn new(components: &[&str]) -> Self {
        TrainingHistory {
            components: components.iter().map(|c| c.to_string()).collect(),
            epochs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn push(&mut self, record: EpochRecord) {
        debug_assert_eq!(record.components.len(), self.components.len());
        self.epochs.push(record);
    }

    pub fn component(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.components.iter().position(|c| c == name)?;
        Some(self.epochs.iter().map(|e| e.components[idx]).collect())
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    /// Lowest validation loss, or the last training loss without validation.
    pub fn best_val_loss(&self) -> Option<f64> {
        let best = self
            .epochs
            .iter()
            .filter_map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        if best.is_finite() {
            Some(best)
        } else {
            self.epochs.last().map(|e| e.train_loss)
        }
    }

    /// `epoch,train_loss,val_loss,<components>`; epochs count from 1 and a
    /// missing validation loss is written empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss");
        for c in &self.components {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (i, e) in self.epochs.iter().enumerate() {
            out.push_str(&format!("{},{}", i + 1, e.train_loss));
            out.push(',');
            if let Some(v) = e.val_loss {
                out.push_str(&v.to_string());
            }
            for c in &e.components {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EncoderBody {
    /// Encoder ends in the latent layer; decoder mirrors it.
    Autoencoder { encoder: MlpNetwork, decoder: MlpNetwork },
    /// Encoder emits `[μ ‖ log σ²]`, twice the latent width.
    Variational { encoder: MlpNetwork, decoder: MlpNetwork },
    Adversarial {
        encoder: MlpNetwork,
        decoder: MlpNetwork,
        discriminator: MlpNetwork,
    },
    BeliefNet { rbms: Vec<Rbm> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub kind: EncoderKind,
    pub body: EncoderBody,
    pub input_dim: usize,
    pub latent_dim: usize,
    pub history: TrainingHistory,
    pub config: EncoderConfig,
    pub seed: u64,
}

impl EncoderModel {
    /// Wraps an untrained encoder/decoder pair, e.g. for hand-built models.
    pub fn autoencoder(encoder: MlpNetwork, decoder: MlpNetwork, config: EncoderConfig) -> Result<Self> {
        if decoder.input_dim() != encoder.output_dim() || decoder.output_dim() != encoder.input_dim() {
            return Err(Error::shape(
                "autoencoder",
                (encoder.input_dim(), encoder.output_dim()),
                (decoder.input_dim(), decoder.output_dim()),
            ));
        }
        Ok(EncoderModel {
            kind: EncoderKind::Ssae,
            input_dim: encoder.input_dim(),
            latent_dim: encoder.output_dim(),
            history: TrainingHistory::default(),
            seed: config.seed,
            config,
            body: EncoderBody::Autoencoder { encoder, decoder },
        })
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::shape("encode", x.shape(), (x.rows(), self.input_dim)));
        }
        Ok(())
    }

    /// Middle-layer representation: latent activations, the VAE mean, or
    /// top-layer DBN probabilities.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        match &self.body {
            EncoderBody::Autoencoder { encoder, .. } | EncoderBody::Adversarial { encoder, .. } => {
                encoder.predict(x)
            }
            EncoderBody::Variational { encoder, .. } => {
                Ok(encoder.predict(x)?.select_cols(0..self.latent_dim))
            }
            EncoderBody::BeliefNet { rbms } => rbm::up_pass(rbms, x),
        }
    }

    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.encode(x)?;
        match &self.body {
            EncoderBody::Autoencoder { decoder, .. }
            | EncoderBody::Variational { decoder, .. }
            | EncoderBody::Adversarial { decoder, .. } => decoder.predict(&z),
            EncoderBody::BeliefNet { rbms } => rbm::down_pass(rbms, &z),
        }
    }

    /// Reconstruction MSE on `x`, the unsupervised model-selection score.
    pub fn reconstruction_error(&self, x: &Matrix) -> Result<f64> {
        Ok(crate::neural::loss::mse(&self.reconstruct(x)?, x)?.0)
    }

    pub fn is_finite(&self) -> bool {
        match &self.body {
            EncoderBody::Autoencoder { encoder, decoder } | EncoderBody::Variational { encoder, decoder } => {
                encoder.is_finite() && decoder.is_finite()
            }
            EncoderBody::Adversarial {
                encoder,
                decoder,
                discriminator,
            } => encoder.is_finite() && decoder.is_finite() && discriminator.is_finite(),
            EncoderBody::BeliefNet { rbms } => rbms.iter().all(Rbm::is_finite),
        }
    }
}

/// Trains the encoder family named by `kind`.
pub fn train(kind: EncoderKind, train: &Matrix, validation: Option<&Matrix>, cfg: &EncoderConfig) -> Result<EncoderModel> {
    match kind {
        EncoderKind::Ssae => train_ssae(train, validation, cfg),
        EncoderKind::Dbn => train_dbn(train, validation, cfg),
        EncoderKind::Vae => train_vae(train, validation, cfg),
        EncoderKind::Aae => train_aae(train, validation, cfg),
    }
}

pub(crate) fn check_training_input(train: &Matrix, validation: Option<&Matrix>, cfg: &EncoderConfig) -> Result<()> {
    cfg.validate()?;
    if train.rows() == 0 || train.cols() == 0 {
        return Err(Error::param("training matrix is empty"));
    }
    if !train.is_finite() {
        return Err(Error::param("training matrix has non-finite entries"));
    }
    if let Some(v) = validation {
        if v.cols() != train.cols() {
            return Err(Error::shape("validation", v.shape(), train.shape()));
        }
    }
    Ok(())
}

/// Shuffled mini-batches of row indices.
pub(crate) fn batches(n: usize, batch_size: usize, rng: &mut RngStream) -> Vec<Vec<usize>> {
    let perm = rng.permutation(n);
    perm.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

pub(crate) fn ensure_finite(value: f64, epoch: usize, phase: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Divergence { epoch, phase })
    }
}

/// Tracks the best validation loss and the state that produced it.
pub(crate) struct EarlyStopping<S> {
    patience: Option<usize>,
    best: f64,
    best_state: Option<S>,
    stale: usize,
}

impl<S: Clone> EarlyStopping<S> {
    pub fn new(patience: Option<usize>) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_state: None,
            stale: 0,
        }
    }

    /// Records an epoch; returns true when training should stop.
    pub fn observe(&mut self, val_loss: Option<f64>, state: &S) -> bool {
        let (Some(patience), Some(loss)) = (self.patience, val_loss) else {
            return false;
        };
        if loss < self.best {
            self.best = loss;
            self.best_state = Some(state.clone());
            self.stale = 0;
            false
        } else {
            self.stale += 1;
            self.stale >= patience
        }
    }

    /// Best state seen, if early stopping was active.
    pub fn into_best(self) -> Option<S> {
        self.best_state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::DenseLayer;

    #[test]
    fn config_validation() {
        let ok = EncoderConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            EncoderConfig { sparsity_target: 0.0, ..ok.clone() },
            EncoderConfig { sparsity_target: 1.0, ..ok.clone() },
            EncoderConfig { sparsity_weight: -1.0, ..ok.clone() },
            EncoderConfig { cd_steps: 0, ..ok.clone() },
            EncoderConfig { kl_weight: -0.5, ..ok.clone() },
            EncoderConfig { lr: 0.0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Param(_))));
        }
    }

    #[test]
    fn geometric_default_widths() {
        let cfg = EncoderConfig { latent_dim: 4, ..EncoderConfig::default() };
        // 100·0.04^(1/3) ≈ 34.2, 100·0.04^(2/3) ≈ 11.7
        assert_eq!(cfg.encoder_widths(100), vec![100, 34, 12, 4]);
    }

    #[test]
    fn identity_linear_autoencoder_reconstructs_input() {
        let id = |p| MlpNetwork::from_layers(vec![DenseLayer::new(Matrix::identity(p), vec![0.0; p], Activation::Linear).unwrap()]).unwrap();
        let model = EncoderModel::autoencoder(id(3), id(3), EncoderConfig::default()).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5], [0.0, 3.0, -1.0]]).unwrap();
        assert_eq!(model.reconstruct(&x).unwrap(), x);
        assert_eq!(model.encode(&x).unwrap().shape(), (2, 3));
        assert!(matches!(model.encode(&Matrix::zeros(1, 2)), Err(Error::Shape { .. })));
    }

    #[test]
    fn history_csv_layout() {
        let mut h = TrainingHistory::new(&["recon_loss", "kl_loss"]);
        h.push(EpochRecord { train_loss: 1.5, val_loss: Some(1.25), components: vec![1.0, 0.5] });
        h.push(EpochRecord { train_loss: 1.0, val_loss: None, components: vec![0.75, 0.25] });
        assert_eq!(
            h.to_csv(),
            "epoch,train_loss,val_loss,recon_loss,kl_loss\n1,1.5,1.25,1,0.5\n2,1,,0.75,0.25\n"
        );
    }

    #[test]
    fn early_stopping_keeps_best_state() {
        let mut es = EarlyStopping::new(Some(2));
        assert!(!es.observe(Some(3.0), &"a"));
        assert!(!es.observe(Some(2.0), &"b"));
        assert!(!es.observe(Some(2.5), &"c"));
        assert!(es.observe(Some(2.1), &"d"));
        assert_eq!(es.into_best(), Some("b"));
        let mut off = EarlyStopping::new(None);
        assert!(!off.observe(Some(1.0), &0));
        assert_eq!(off.into_best(), None);
    }
}
