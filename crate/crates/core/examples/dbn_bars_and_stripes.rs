//! CD-1 training of a Bernoulli RBM on the 4x4 bars-and-stripes patterns,
//! then a two-layer deep belief network on the same data.

use deeprep::encoders::{bars_and_stripes, train_dbn, EncoderConfig, Rbm, VisibleKind};
use deeprep::RngStream;

fn main() -> deeprep::Result<()> {
    let data = bars_and_stripes(4);
    let mut rng = RngStream::new(21);
    let mut rbm = Rbm::new(16, 16, VisibleKind::Bernoulli, &mut rng.derive(0));
    for epoch in 1..=200 {
        let order = rng.permutation(data.rows());
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(10) {
            sum += rbm.cd_step(&data.select_rows(chunk), 1, 0.1, &mut rng)?;
            batches += 1;
        }
        if epoch == 1 || epoch % 50 == 0 {
            println!("epoch {epoch:>3}: reconstruction error {:.4}", sum / batches as f64);
        }
    }

    let cfg = EncoderConfig { hidden: Some(vec![16]), latent_dim: 8, lr: 0.05, epochs: 100, patience: None, ..Default::default() };
    let dbn = train_dbn(&data, None, &cfg)?;
    println!("DBN codes: {} x {}", dbn.encode(&data)?.rows(), dbn.encode(&data)?.cols());
    println!("DBN reconstruction MSE {:.4}", dbn.reconstruction_error(&data)?);
    Ok(())
}
