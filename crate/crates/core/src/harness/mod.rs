//! Experiment driver: config grids, the cross-validated benchmark run and
//! its report files.

pub mod config;
pub mod report;
mod run;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{
    expand_grid, load_config, parse_config, DatasetConfig, EmbeddingConfig, EncoderGrids, EncoderSelection,
    ExperimentConfig, ImputePolicy, LearnerGrids, PreprocessConfig,
};
pub use report::{
    format_report, table_ii_fixture, CellResult, ExperimentReport, FoldHistory, LeakageAudit, Representation,
};
pub use run::{
    fold_plan, load_dataset, prepare_fold, run_experiment, run_on_dataset, train_encoder_on_fold, PreparedFold, Timing,
};

use crate::error::{Error, Result};

/// Writes one `<kind>_fold<k>.csv` per history (folds numbered from 1).
pub fn emit_loss_curves(histories: &[FoldHistory], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if histories.is_empty() {
        return Err(Error::param("no loss histories to write"));
    }
    if let Some(h) = histories.iter().find(|h| h.history.is_empty()) {
        return Err(Error::param(format!("{} fold {} has an empty history", h.kind, h.fold + 1)));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    histories
        .iter()
        .map(|h| {
            let path = dir.join(format!("{}_fold{}.csv", h.kind.key(), h.fold + 1));
            fs::write(&path, h.history.to_csv())?;
            Ok(path)
        })
        .collect()
}

/// Writes `report.json`, `report.csv` and `report.md` into `dir`.
pub fn write_report_files(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report.to_json()?)?;
    fs::write(dir.join("report.csv"), report.to_csv())?;
    fs::write(dir.join("report.md"), format_report(report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{EncoderKind, EpochRecord, TrainingHistory};

    fn history(epochs: usize, components: &[&str]) -> TrainingHistory {
        let mut h = TrainingHistory::new(components);
        for e in 0..epochs {
            h.push(EpochRecord {
                train_loss: 1.0 / (e + 1) as f64,
                val_loss: Some(1.1 / (e + 1) as f64),
                components: vec![0.5; components.len()],
            });
        }
        h
    }

    #[test]
    fn loss_curves_have_header_plus_one_line_per_epoch() {
        let dir = tempfile::tempdir().unwrap();
        let hs = vec![
            FoldHistory { kind: EncoderKind::Ssae, fold: 0, history: history(100, &["recon_loss", "sparsity_loss"]) },
            FoldHistory { kind: EncoderKind::Vae, fold: 2, history: history(7, &["recon_loss", "kl_loss"]) },
        ];
        let paths = emit_loss_curves(&hs, dir.path()).unwrap();
        let ssae = fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(ssae.lines().count(), 101);
        assert!(paths[1].ends_with("vae_fold3.csv"));
        let vae = fs::read_to_string(&paths[1]).unwrap();
        assert!(vae.starts_with("epoch,train_loss,val_loss,recon_loss,kl_loss\n"));
    }

    #[test]
    fn empty_histories_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_loss_curves(&[], dir.path()).is_err());
        let empty = vec![FoldHistory { kind: EncoderKind::Dbn, fold: 0, history: TrainingHistory::new(&["layer"]) }];
        assert!(emit_loss_curves(&empty, dir.path()).is_err());
    }
}
