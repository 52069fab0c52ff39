use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{loss, sigmoid};
use crate::numkit::{Matrix, RngStream};

use super::{
    batches, check_training_input, ensure_finite, EarlyStopping, EncoderBody, EncoderConfig, EncoderKind,
    EncoderModel, EpochRecord, TrainingHistory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisibleKind {
    /// Unit-variance Gaussian visibles; the conditional mean is linear.
    Gaussian,
    Bernoulli,
}

/// Restricted Boltzmann machine with binary hidden units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rbm {
    /// hidden × visible
    pub weights: Matrix,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub visible: VisibleKind,
}

impl Rbm {
    /// Small Gaussian weights (sd 0.01), zero biases.
    pub fn new(visible: usize, hidden: usize, kind: VisibleKind, rng: &mut RngStream) -> Self {
        let mut weights = Matrix::zeros(hidden, visible);
        for w in weights.as_mut_slice() {
            *w = 0.01 * rng.gaussian();
        }
        Rbm {
            weights,
            visible_bias: vec![0.0; visible],
            hidden_bias: vec![0.0; hidden],
            visible: kind,
        }
    }

    pub fn visible_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.weights.rows()
    }

    /// `P(h = 1 | v) = σ(v Wᵀ + a)`.
    pub fn hidden_probs(&self, v: &Matrix) -> Result<Matrix> {
        if v.cols() != self.visible_dim() {
            return Err(Error::shape("rbm hidden", v.shape(), self.weights.shape()));
        }
        let mut z = v.matmul_nt(&self.weights)?;
        z.add_row_vector(&self.hidden_bias)?;
        Ok(z.map(sigmoid))
    }

    /// `E[v | h]`: `h W + c` for Gaussian visibles, `σ(h W + c)` for Bernoulli.
    pub fn visible_mean(&self, h: &Matrix) -> Result<Matrix> {
        if h.cols() != self.hidden_dim() {
            return Err(Error::shape("rbm visible", h.shape(), self.weights.shape()));
        }
        let mut z = h.matmul(&self.weights)?;
        z.add_row_vector(&self.visible_bias)?;
        Ok(match self.visible {
            VisibleKind::Gaussian => z,
            VisibleKind::Bernoulli => z.map(sigmoid),
        })
    }

    fn sample_hidden(probs: &Matrix, rng: &mut RngStream) -> Matrix {
        let data = probs.as_slice().iter().map(|&p| f64::from(rng.bernoulli(p))).collect();
        Matrix::from_vec(probs.rows(), probs.cols(), data).expect("same shape")
    }

    /// One CD-k update on `batch`. Hidden states are sampled during the
    /// chain; visible reconstructions use conditional means, and the
    /// statistics use hidden probabilities. Returns the MSE between the batch
    /// and its first reconstruction, measured before the update.
    pub fn cd_step(&mut self, batch: &Matrix, k: usize, lr: f64, rng: &mut RngStream) -> Result<f64> {
        if k < 1 {
            return Err(Error::param("CD steps k must be ≥ 1"));
        }
        if !(lr >= 0.0) {
            return Err(Error::param(format!("learning rate must be ≥ 0, got {lr}")));
        }
        if batch.cols() != self.visible_dim() {
            return Err(Error::shape("cd_step", batch.shape(), self.weights.shape()));
        }
        let h0 = self.hidden_probs(batch)?;
        let mut h_state = Self::sample_hidden(&h0, rng);
        let mut v_k = self.visible_mean(&h_state)?;
        let recon_error = loss::mse(&v_k, batch)?.0;
        let mut h_k = self.hidden_probs(&v_k)?;
        for _ in 1..k {
            h_state = Self::sample_hidden(&h_k, rng);
            v_k = self.visible_mean(&h_state)?;
            h_k = self.hidden_probs(&v_k)?;
        }
        if lr == 0.0 {
            return Ok(recon_error);
        }
        let n = batch.rows().max(1) as f64;
        let positive = h0.matmul_tn(batch)?;
        let negative = h_k.matmul_tn(&v_k)?;
        let step = lr / n;
        for ((w, p), q) in self
            .weights
            .as_mut_slice()
            .iter_mut()
            .zip(positive.as_slice())
            .zip(negative.as_slice())
        {
            *w += step * (p - q);
        }
        let v_pos = batch.col_sums();
        let v_neg = v_k.col_sums();
        for (c, (p, q)) in self.visible_bias.iter_mut().zip(v_pos.iter().zip(&v_neg)) {
            *c += step * (p - q);
        }
        let h_pos = h0.col_sums();
        let h_neg = h_k.col_sums();
        for (a, (p, q)) in self.hidden_bias.iter_mut().zip(h_pos.iter().zip(&h_neg)) {
            *a += step * (p - q);
        }
        Ok(recon_error)
    }

    /// Deterministic up-down reconstruction MSE.
    pub fn reconstruction_error(&self, v: &Matrix) -> Result<f64> {
        let recon = self.visible_mean(&self.hidden_probs(v)?)?;
        Ok(loss::mse(&recon, v)?.0)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite()
            && self.visible_bias.iter().all(|v| v.is_finite())
            && self.hidden_bias.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn up_pass(rbms: &[Rbm], x: &Matrix) -> Result<Matrix> {
    let mut current = x.clone();
    for rbm in rbms {
        current = rbm.hidden_probs(&current)?;
    }
    Ok(current)
}

pub(crate) fn down_pass(rbms: &[Rbm], top: &Matrix) -> Result<Matrix> {
    let mut current = top.clone();
    for rbm in rbms.iter().rev() {
        current = rbm.visible_mean(&current)?;
    }
    Ok(current)
}

/// Deep belief network: RBMs stacked greedily, the first with Gaussian
/// visibles and the rest Bernoulli, each trained by CD-k on the hidden
/// probabilities of the one below.
///
/// The history concatenates every layer's epochs; the `layer` component says
/// which RBM an epoch belongs to.
pub fn train_dbn(train: &Matrix, validation: Option<&Matrix>, cfg: &EncoderConfig) -> Result<EncoderModel> {
    check_training_input(train, validation, cfg)?;
    let root = RngStream::new(cfg.seed);
    let mut init_rng = root.derive(0);
    let mut batch_rng = root.derive(1);
    let mut gibbs_rng = root.derive(2);
    let widths = cfg.encoder_widths(train.cols());
    let mut history = TrainingHistory::new(&["layer"]);
    let mut rbms = Vec::with_capacity(widths.len() - 1);
    let mut layer_train = train.clone();
    let mut layer_val = validation.filter(|v| v.rows() > 0).cloned();

    for (l, pair) in widths.windows(2).enumerate() {
        let kind = if l == 0 { VisibleKind::Gaussian } else { VisibleKind::Bernoulli };
        let mut rbm = Rbm::new(pair[0], pair[1], kind, &mut init_rng);
        let mut stopper = EarlyStopping::new(cfg.patience);
        for epoch in 0..cfg.epochs {
            let (mut err, mut rows) = (0.0, 0.0);
            for batch in batches(layer_train.rows(), cfg.batch_size, &mut batch_rng) {
                let xb = layer_train.select_rows(&batch);
                let e = rbm.cd_step(&xb, cfg.cd_steps, cfg.lr, &mut gibbs_rng)?;
                err += e * batch.len() as f64;
                rows += batch.len() as f64;
            }
            let train_loss = ensure_finite(err / rows, epoch, "rbm contrastive divergence")?;
            if !rbm.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    phase: "rbm contrastive divergence",
                });
            }
            let val_loss = match &layer_val {
                Some(v) => Some(ensure_finite(rbm.reconstruction_error(v)?, epoch, "rbm validation")?),
                None => None,
            };
            history.push(EpochRecord {
                train_loss,
                val_loss,
                components: vec![l as f64],
            });
            if stopper.observe(val_loss, &rbm) {
                break;
            }
        }
        if let Some(best) = stopper.into_best() {
            rbm = best;
        }
        layer_train = rbm.hidden_probs(&layer_train)?;
        if let Some(v) = &layer_val {
            layer_val = Some(rbm.hidden_probs(v)?);
        }
        rbms.push(rbm);
    }

    Ok(EncoderModel {
        kind: EncoderKind::Dbn,
        input_dim: train.cols(),
        latent_dim: cfg.latent_dim,
        body: EncoderBody::BeliefNet { rbms },
        history,
        config: cfg.clone(),
        seed: cfg.seed,
    })
}

/// All 4×4 (or `size`×`size`) binary images made of full rows or full
/// columns, excluding the duplicated all-off and all-on images: `2^(size+1) − 2`.
pub fn bars_and_stripes(size: usize) -> Matrix {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for horizontal in [true, false] {
        for mask in 0u32..(1 << size) {
            let mut img = vec![0.0; size * size];
            for r in 0..size {
                for c in 0..size {
                    let line = if horizontal { r } else { c };
                    if mask >> line & 1 == 1 {
                        img[r * size + c] = 1.0;
                    }
                }
            }
            let key: Vec<u8> = img.iter().map(|&v| v as u8).collect();
            if seen.insert(key) {
                rows.push(img);
            }
        }
    }
    Matrix::from_rows(&rows).expect("equal-length rows")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bars_and_stripes_count() {
        let bs = bars_and_stripes(4);
        assert_eq!(bs.shape(), (30, 16));
    }

    #[test]
    fn zero_rbm_hidden_probabilities_are_half() {
        let rbm = Rbm {
            weights: Matrix::zeros(3, 4),
            visible_bias: vec![0.0; 4],
            hidden_bias: vec![0.0; 3],
            visible: VisibleKind::Bernoulli,
        };
        let v = Matrix::from_rows(&[[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]]).unwrap();
        assert!(rbm.hidden_probs(&v).unwrap().as_slice().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut rng = RngStream::new(1);
        let mut rbm = Rbm::new(16, 8, VisibleKind::Bernoulli, &mut rng);
        let before = rbm.clone();
        rbm.cd_step(&bars_and_stripes(4), 1, 0.0, &mut rng).unwrap();
        assert_eq!(rbm, before);
    }

    #[test]
    fn cd_rejects_zero_steps() {
        let mut rng = RngStream::new(1);
        let mut rbm = Rbm::new(16, 8, VisibleKind::Bernoulli, &mut rng);
        assert!(matches!(rbm.cd_step(&bars_and_stripes(4), 0, 0.1, &mut rng), Err(Error::Param(_))));
    }

    #[test]
    fn single_layer_dbn_is_single_rbm() {
        let mut rng = RngStream::new(5);
        let x = rng
            .sample(crate::numkit::Distribution::Gaussian { mean: 0.0, sd: 1.0 }, 40, 6)
            .unwrap();
        let cfg = EncoderConfig {
            hidden: Some(vec![]),
            latent_dim: 3,
            epochs: 5,
            lr: 0.01,
            patience: None,
            ..EncoderConfig::default()
        };
        let model = train_dbn(&x, None, &cfg).unwrap();
        let EncoderBody::BeliefNet { rbms } = &model.body else { panic!("not a DBN") };
        assert_eq!(rbms.len(), 1);

        // the same RBM trained directly from the same streams
        let root = RngStream::new(cfg.seed);
        let (mut init_rng, mut batch_rng, mut gibbs_rng) = (root.derive(0), root.derive(1), root.derive(2));
        let mut rbm = Rbm::new(6, 3, VisibleKind::Gaussian, &mut init_rng);
        for _ in 0..cfg.epochs {
            for batch in batches(x.rows(), cfg.batch_size, &mut batch_rng) {
                rbm.cd_step(&x.select_rows(&batch), 1, cfg.lr, &mut gibbs_rng).unwrap();
            }
        }
        assert_eq!(rbms[0], rbm);
        assert_eq!(model.encode(&x).unwrap(), rbm.hidden_probs(&x).unwrap());
    }
}
