//! Round trip of a trained encoder through the binary model container.

use deeprep::dataio::{read_model, write_model};
use deeprep::encoders::{train, EncoderConfig, EncoderKind};
use deeprep::synthetic::planted_linear;

fn main() -> deeprep::Result<()> {
    let x = planted_linear(200, 12, 3, 0.1, 5)?.x;
    let cfg = EncoderConfig { hidden: Some(vec![8]), latent_dim: 3, epochs: 20, ..Default::default() };
    for kind in [EncoderKind::Ssae, EncoderKind::Dbn, EncoderKind::Vae, EncoderKind::Aae] {
        let model = train(kind, &x, None, &cfg)?;
        let mut bytes = Vec::new();
        write_model(&model, &mut bytes)?;
        let back = read_model(bytes.as_slice())?;
        let same = back.encode(&x)?.max_abs_diff(&model.encode(&x)?) == 0.0;
        println!("{kind:?}: {} bytes, magic {:?}, identical codes {same}", bytes.len(), String::from_utf8_lossy(&bytes[..8]));
    }
    Ok(())
}
