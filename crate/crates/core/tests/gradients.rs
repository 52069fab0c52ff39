mod common;

use common::{flatten, gaussian_matrix, numeric_gradient, relative_error};
use deeprep::encoders::objectives::{
    autoencoder_loss, discriminator_loss, generator_loss, vae_loss, ReconLoss, Sparsity,
};
use deeprep::encoders::SparsityPenalty;
use deeprep::neural::{Activation, MlpNetwork};
use deeprep::RngStream;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn net(widths: &[usize], acts: &[Activation], seed: u64) -> MlpNetwork {
    MlpNetwork::new(widths, acts, &mut RngStream::new(seed)).unwrap()
}

fn pair(latent_act: Activation, latent_width: usize, seed: u64) -> (MlpNetwork, MlpNetwork) {
    let enc = net(&[16, 8, latent_width], &[Activation::Tanh, latent_act], seed);
    let dec = net(&[4, 8, 16], &[Activation::Tanh, Activation::Linear], seed + 1);
    (enc, dec)
}

#[test]
fn plain_autoencoder_mse() {
    let x = gaussian_matrix(12, 16, 1);
    let (enc, dec) = pair(Activation::Linear, 4, 10);
    let (_, g) = autoencoder_loss(&enc, &dec, &x, ReconLoss::Mse, None).unwrap();
    let ne = numeric_gradient(&enc, H, |e| autoencoder_loss(e, &dec, &x, ReconLoss::Mse, None).unwrap().0.total());
    let nd = numeric_gradient(&dec, H, |d| autoencoder_loss(&enc, d, &x, ReconLoss::Mse, None).unwrap().0.total());
    assert!(relative_error(&flatten(g.encoder.slices()), &ne) < TOL);
    assert!(relative_error(&flatten(g.decoder.slices()), &nd) < TOL);
}

#[test]
fn sparse_autoencoder_mae_with_kl_sparsity() {
    let x = gaussian_matrix(12, 16, 2);
    let (enc, dec) = pair(Activation::Sigmoid, 4, 20);
    for penalty in [SparsityPenalty::Kl, SparsityPenalty::L1] {
        let s = Sparsity { target: 0.05, weight: 3.0, penalty };
        let f = |e: &MlpNetwork, d: &MlpNetwork| autoencoder_loss(e, d, &x, ReconLoss::Mae, Some(&s)).unwrap();
        let (loss, g) = f(&enc, &dec);
        assert!(loss.sparsity > 0.0);
        let ne = numeric_gradient(&enc, H, |e| f(e, &dec).0.total());
        let nd = numeric_gradient(&dec, H, |d| f(&enc, d).0.total());
        let err = relative_error(&flatten(g.encoder.slices()), &ne);
        assert!(err < TOL, "{penalty:?} encoder {err}");
        assert!(relative_error(&flatten(g.decoder.slices()), &nd) < TOL);
    }
}

#[test]
fn vae_reconstruction_plus_gaussian_kl() {
    let x = gaussian_matrix(10, 16, 3);
    let noise = gaussian_matrix(10, 4, 4);
    let (enc, dec) = pair(Activation::Linear, 8, 30);
    for beta in [0.0, 1.0, 2.5] {
        let (_, g) = vae_loss(&enc, &dec, &x, &noise, beta).unwrap();
        let ne = numeric_gradient(&enc, H, |e| vae_loss(e, &dec, &x, &noise, beta).unwrap().0.total);
        let nd = numeric_gradient(&dec, H, |d| vae_loss(&enc, d, &x, &noise, beta).unwrap().0.total);
        let err = relative_error(&flatten(g.encoder.slices()), &ne);
        assert!(err < TOL, "β={beta}: {err}");
        assert!(relative_error(&flatten(g.decoder.slices()), &nd) < TOL);
    }
}

#[test]
fn adversarial_phases() {
    let x = gaussian_matrix(10, 16, 5);
    let prior = gaussian_matrix(10, 4, 6);
    let (enc, dec) = pair(Activation::Linear, 4, 40);
    let disc = net(&[4, 8, 1], &[Activation::Relu, Activation::Sigmoid], 50);

    // Reconstruction phase.
    let (_, g) = autoencoder_loss(&enc, &dec, &x, ReconLoss::Mse, None).unwrap();
    let ne = numeric_gradient(&enc, H, |e| autoencoder_loss(e, &dec, &x, ReconLoss::Mse, None).unwrap().0.total());
    assert!(relative_error(&flatten(g.encoder.slices()), &ne) < TOL);

    // Discriminator phase: prior samples are real, codes are fake.
    let codes = enc.predict(&x).unwrap();
    let (_, gd) = discriminator_loss(&disc, &prior, &codes).unwrap();
    let nd = numeric_gradient(&disc, H, |d| discriminator_loss(d, &prior, &codes).unwrap().0);
    assert!(relative_error(&flatten(gd.slices()), &nd) < TOL);

    // Generator phase: encoder only, discriminator fixed.
    let (_, gg) = generator_loss(&enc, &disc, &x).unwrap();
    let ng = numeric_gradient(&enc, H, |e| generator_loss(e, &disc, &x).unwrap().0);
    assert!(relative_error(&flatten(gg.slices()), &ng) < TOL);
}
