//! Full cross-validated benchmark on the synthetic latent-factor data:
//! every encoder against the original features, for every learner.
//!
//!     cargo run --release --example latent_factor_benchmark [seed] [out-dir]

use deeprep::harness::{emit_loss_curves, format_report, parse_config, run_on_dataset, write_report_files};
use deeprep::synthetic::{latent_factor, LatentFactorSpec};

const CONFIG: &str = include_str!("../configs/latent_factor.toml");

fn main() -> deeprep::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let out = args.next().unwrap_or_else(|| "results/latent_factor".into());

    let mut cfg = parse_config(CONFIG)?;
    cfg.seed = seed;
    let data = latent_factor(&LatentFactorSpec { seed, ..Default::default() })?;
    let (report, timing) = run_on_dataset(&cfg, &data.to_dataset())?;

    print!("{}", format_report(&report));
    if let (Some(enc), Some(orig)) = (report.best_encoded(), report.best_original()) {
        println!(
            "best encoded {}+{} {:.3}, best original {} {:.3}",
            enc.representation.label(),
            enc.learner,
            enc.mean,
            orig.learner,
            orig.mean
        );
    }
    println!("leakage audit passed: {}, {:.1}s", report.audit.passed(), timing.total_secs);
    write_report_files(&report, &out)?;
    emit_loss_curves(&report.histories, format!("{out}/loss_curves"))?;
    println!("wrote {out}/");
    Ok(())
}
