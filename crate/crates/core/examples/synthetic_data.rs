//! Writes the synthetic benchmark tables to `data/`.
//!
//!     cargo run --release --example synthetic_data [seed]

use deeprep::dataio::save_csv;
use deeprep::synthetic::{latent_factor, mixed_records, LatentFactorSpec};

fn main() -> deeprep::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    std::fs::create_dir_all(&dir)?;

    let spec = LatentFactorSpec { seed, ..Default::default() };
    let data = latent_factor(&spec)?;
    save_csv(&data.to_dataset(), dir.join("latent_factor.csv"))?;
    println!("latent_factor.csv: {} rows, {} features, {} latent factors", spec.n, spec.p, spec.latent);

    let records = mixed_records(400, 0.05, seed)?;
    save_csv(&records, dir.join("mixed_records.csv"))?;
    println!("mixed_records.csv: {} rows, {} missing numeric cells", records.n(), records.missing_count());
    Ok(())
}
