//! Encoder losses with their exact gradients.
//!
//! The trainers call these per batch; they are public so gradient checks can
//! perturb parameters and re-evaluate the same composite objective.

use crate::error::{Error, Result};
use crate::neural::{loss, Gradients, MlpNetwork};
use crate::numkit::Matrix;

use super::SparsityPenalty;

/// Clamp applied to the mean activation inside [`kl_bernoulli`].
pub const KL_BERNOULLI_EPS: f64 = 1e-7;

/// `KL(ρ ‖ ρ̄)` between Bernoulli distributions, with ρ̄ clamped to `[ε, 1−ε]`.
pub fn kl_bernoulli(rho: f64, rho_hat: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::param(format!("ρ must be in (0,1), got {rho}")));
    }
    let q = rho_hat.clamp(KL_BERNOULLI_EPS, 1.0 - KL_BERNOULLI_EPS);
    Ok(rho * (rho / q).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - q)).ln())
}

fn kl_bernoulli_slope(rho: f64, rho_hat: f64) -> f64 {
    let q = rho_hat.clamp(KL_BERNOULLI_EPS, 1.0 - KL_BERNOULLI_EPS);
    -rho / q + (1.0 - rho) / (1.0 - q)
}

/// `KL(N(μ, diag e^logvar) ‖ N(0, I))`.
pub fn kl_gaussian(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if mu.len() != logvar.len() {
        return Err(Error::shape("kl_gaussian", (1, mu.len()), (1, logvar.len())));
    }
    if logvar.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("log-variance must be finite"));
    }
    Ok(0.5
        * mu
            .iter()
            .zip(logvar)
            .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
            .sum::<f64>())
}

/// `z = μ + exp(logvar/2) ⊙ ε`.
pub fn reparameterize(mu: &Matrix, logvar: &Matrix, noise: &Matrix) -> Result<Matrix> {
    if mu.shape() != logvar.shape() || mu.shape() != noise.shape() {
        return Err(Error::shape("reparameterize", mu.shape(), noise.shape()));
    }
    let scale = logvar.map(|lv| (0.5 * lv).exp());
    mu.add(&scale.hadamard(noise)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconLoss {
    Mae,
    Mse,
}

impl ReconLoss {
    fn eval(self, pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
        match self {
            ReconLoss::Mae => loss::mae(pred, target),
            ReconLoss::Mse => loss::mse(pred, target),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sparsity {
    pub target: f64,
    pub weight: f64,
    pub penalty: SparsityPenalty,
}

/// Weighted sparsity term over middle-layer activations and its gradient.
pub fn sparsity_penalty(latent: &Matrix, s: &Sparsity) -> Result<(f64, Matrix)> {
    let n = latent.rows().max(1) as f64;
    if s.weight == 0.0 {
        return Ok((0.0, Matrix::zeros(latent.rows(), latent.cols())));
    }
    match s.penalty {
        SparsityPenalty::Kl => {
            let means = latent.col_means();
            let mut value = 0.0;
            for &m in &means {
                value += kl_bernoulli(s.target, m)?;
            }
            let slopes: Vec<f64> = means
                .iter()
                .map(|&m| s.weight * kl_bernoulli_slope(s.target, m) / n)
                .collect();
            let mut grad = Matrix::zeros(latent.rows(), latent.cols());
            for r in 0..grad.rows() {
                grad.row_mut(r).copy_from_slice(&slopes);
            }
            Ok((s.weight * value, grad))
        }
        SparsityPenalty::L1 => {
            let value = latent.as_slice().iter().map(|a| a.abs()).sum::<f64>() / n;
            let grad = latent.map(|a| s.weight * a.signum() * f64::from(a != 0.0) / n);
            Ok((s.weight * value, grad))
        }
    }
}

#[derive(Debug, Clone)]
pub struct AeGradients {
    pub encoder: Gradients,
    pub decoder: Gradients,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeLoss {
    pub recon: f64,
    /// Already multiplied by λ.
    pub sparsity: f64,
}

impl AeLoss {
    pub fn total(&self) -> f64 {
        self.recon + self.sparsity
    }
}

/// Reconstruction loss plus an optional sparsity term on the encoder output.
pub fn autoencoder_loss(
    encoder: &MlpNetwork,
    decoder: &MlpNetwork,
    x: &Matrix,
    recon: ReconLoss,
    sparsity: Option<&Sparsity>,
) -> Result<(AeLoss, AeGradients)> {
    let enc_acts = encoder.forward(x)?;
    let dec_acts = decoder.forward(enc_acts.output())?;
    let (recon_value, g_out) = recon.eval(dec_acts.output(), x)?;
    let dec_grads = decoder.backward(&dec_acts, &g_out)?;
    let mut g_latent = dec_grads.input.clone();
    let mut sparsity_value = 0.0;
    if let Some(s) = sparsity {
        let (v, g) = sparsity_penalty(enc_acts.output(), s)?;
        sparsity_value = v;
        g_latent = g_latent.add(&g)?;
    }
    let enc_grads = encoder.backward(&enc_acts, &g_latent)?;
    Ok((
        AeLoss {
            recon: recon_value,
            sparsity: sparsity_value,
        },
        AeGradients {
            encoder: enc_grads,
            decoder: dec_grads,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLoss {
    pub recon: f64,
    /// Batch mean of the per-row Gaussian KL, before β.
    pub kl: f64,
    pub total: f64,
}

/// Split `[μ ‖ logvar]` encoder output.
pub fn split_posterior(out: &Matrix) -> Result<(Matrix, Matrix)> {
    if out.cols() % 2 != 0 {
        return Err(Error::param("variational encoder output width must be even"));
    }
    let d = out.cols() / 2;
    Ok((out.select_cols(0..d), out.select_cols(d..2 * d)))
}

/// `MSE(x, decode(μ + σ⊙ε)) + β·mean_rows KL(q(z|x) ‖ N(0, I))` for fixed noise ε.
pub fn vae_loss(
    encoder: &MlpNetwork,
    decoder: &MlpNetwork,
    x: &Matrix,
    noise: &Matrix,
    beta: f64,
) -> Result<(VaeLoss, AeGradients)> {
    let enc_acts = encoder.forward(x)?;
    let (mu, logvar) = split_posterior(enc_acts.output())?;
    let z = reparameterize(&mu, &logvar, noise)?;
    let dec_acts = decoder.forward(&z)?;
    let (recon, g_out) = loss::mse(dec_acts.output(), x)?;
    let dec_grads = decoder.backward(&dec_acts, &g_out)?;

    let n = x.rows().max(1) as f64;
    let d = mu.cols();
    let mut kl = 0.0;
    for r in 0..mu.rows() {
        kl += kl_gaussian(mu.row(r), logvar.row(r))?;
    }
    kl /= n;

    let g_z = &dec_grads.input;
    let mut g_enc = Matrix::zeros(x.rows(), 2 * d);
    for r in 0..x.rows() {
        for j in 0..d {
            let m = mu[(r, j)];
            let lv = logvar[(r, j)];
            let sigma = (0.5 * lv).exp();
            g_enc[(r, j)] = g_z[(r, j)] + beta * m / n;
            g_enc[(r, d + j)] = g_z[(r, j)] * noise[(r, j)] * 0.5 * sigma + beta * 0.5 * (lv.exp() - 1.0) / n;
        }
    }
    let enc_grads = encoder.backward(&enc_acts, &g_enc)?;
    Ok((
        VaeLoss {
            recon,
            kl,
            total: recon + beta * kl,
        },
        AeGradients {
            encoder: enc_grads,
            decoder: dec_grads,
        },
    ))
}

/// Cross-entropy of a sigmoid-output discriminator labelling `real` rows 1
/// and `fake` rows 0, averaged over all rows.
pub fn discriminator_loss(discriminator: &MlpNetwork, real: &Matrix, fake: &Matrix) -> Result<(f64, Gradients)> {
    if real.cols() != fake.cols() {
        return Err(Error::shape("discriminator", real.shape(), fake.shape()));
    }
    let mut stacked = Vec::with_capacity(real.as_slice().len() + fake.as_slice().len());
    stacked.extend_from_slice(real.as_slice());
    stacked.extend_from_slice(fake.as_slice());
    let input = Matrix::from_vec(real.rows() + fake.rows(), real.cols(), stacked)?;
    let labels: Vec<f64> = (0..input.rows()).map(|i| f64::from(i < real.rows())).collect();
    let acts = discriminator.forward(&input)?;
    let (value, g) = loss::bce(acts.output(), &labels)?;
    Ok((value, discriminator.backward(&acts, &g)?))
}

/// Non-saturating generator loss `−mean log D(E(x))`, differentiated w.r.t.
/// the encoder only.
pub fn generator_loss(encoder: &MlpNetwork, discriminator: &MlpNetwork, x: &Matrix) -> Result<(f64, Gradients)> {
    let enc_acts = encoder.forward(x)?;
    let disc_acts = discriminator.forward(enc_acts.output())?;
    let labels = vec![1.0; x.rows()];
    let (value, g) = loss::bce(disc_acts.output(), &labels)?;
    let disc_grads = discriminator.backward(&disc_acts, &g)?;
    Ok((value, encoder.backward(&enc_acts, &disc_grads.input)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Distribution, RngStream};
    use proptest::prelude::*;

    #[test]
    fn kl_bernoulli_values() {
        assert_eq!(kl_bernoulli(0.2, 0.2).unwrap(), 0.0);
        // 0.05·ln(0.25) + 0.95·ln(0.95/0.8)
        let closed = 0.05 * (0.05f64 / 0.2).ln() + 0.95 * (0.95f64 / 0.8).ln();
        assert!((closed - 0.0939431).abs() < 1e-6);
        assert!((kl_bernoulli(0.05, 0.2).unwrap() - closed).abs() < 1e-15);
        assert!(kl_bernoulli(0.0, 0.2).is_err());
        assert!(kl_bernoulli(1.0, 0.2).is_err());
    }

    #[test]
    fn kl_bernoulli_grows_toward_zero_and_saturates_at_clamp() {
        let mut prev = kl_bernoulli(0.05, 0.05).unwrap();
        for q in [0.04, 1e-2, 1e-3, 1e-5, 1e-7] {
            let v = kl_bernoulli(0.05, q).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert_eq!(kl_bernoulli(0.05, 1e-9).unwrap(), kl_bernoulli(0.05, 1e-7).unwrap());
        assert_eq!(kl_bernoulli(0.05, 0.0).unwrap(), prev);
    }

    #[test]
    fn kl_gaussian_values() {
        assert_eq!(kl_gaussian(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!((kl_gaussian(&[1.0], &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(kl_gaussian(&[0.0], &[f64::NAN]).is_err());
    }

    #[test]
    fn reparameterize_values() {
        let mu = Matrix::from_rows(&[[0.3, -1.0]]).unwrap();
        let lv = Matrix::from_rows(&[[0.2, 1.0]]).unwrap();
        assert_eq!(reparameterize(&mu, &lv, &Matrix::zeros(1, 2)).unwrap(), mu);
        let z = reparameterize(&Matrix::zeros(1, 1), &Matrix::zeros(1, 1), &Matrix::filled(1, 1, 1.5)).unwrap();
        assert_eq!(z[(0, 0)], 1.5);
    }

    #[test]
    fn reparameterize_is_identity_in_mu() {
        let mut rng = RngStream::new(2);
        let g = Distribution::Gaussian { mean: 0.0, sd: 1.0 };
        let mu = rng.sample(g, 1, 3).unwrap();
        let lv = rng.sample(g, 1, 3).unwrap();
        let eps = rng.sample(g, 1, 3).unwrap();
        let h = 1e-5;
        for j in 0..3 {
            let mut plus = mu.clone();
            plus[(0, j)] += h;
            let mut minus = mu.clone();
            minus[(0, j)] -= h;
            let zp = reparameterize(&plus, &lv, &eps).unwrap();
            let zm = reparameterize(&minus, &lv, &eps).unwrap();
            for k in 0..3 {
                let d = (zp[(0, k)] - zm[(0, k)]) / (2.0 * h);
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((d - expected).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_weight_sparsity_is_exactly_zero() {
        let s = Sparsity { target: 0.05, weight: 0.0, penalty: SparsityPenalty::Kl };
        let (v, g) = sparsity_penalty(&Matrix::filled(3, 2, 0.7), &s).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    proptest! {
        #[test]
        fn kl_bernoulli_nonnegative(rho in 0.001f64..0.999, q in 0.0f64..=1.0) {
            let v = kl_bernoulli(rho, q).unwrap();
            prop_assert!(v >= 0.0);
            if (q - rho).abs() > 1e-3 {
                prop_assert!(v > 0.0);
            }
        }

        #[test]
        fn kl_gaussian_nonnegative(mu in proptest::collection::vec(-5f64..5.0, 1..6), seed in any::<u64>()) {
            let mut rng = RngStream::new(seed);
            let lv: Vec<f64> = mu.iter().map(|_| 6.0 * rng.uniform() - 3.0).collect();
            let v = kl_gaussian(&mu, &lv).unwrap();
            prop_assert!(v >= 0.0);
            let nonzero = mu.iter().chain(&lv).any(|x| x.abs() > 1e-3);
            if nonzero {
                prop_assert!(v > 0.0);
            }
        }
    }
}
