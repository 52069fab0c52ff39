use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deeprep::dataio::{save_embedding, save_model, write_matrix_csv};
use deeprep::encoders::EncoderKind;
use deeprep::harness::{
    emit_loss_curves, fold_plan, format_report, load_config, load_dataset, prepare_fold, run_on_dataset,
    train_encoder_on_fold, write_report_files, ExperimentConfig, ExperimentReport, FoldHistory,
};
use deeprep::{Error, Matrix, Result};

#[derive(Parser)]
#[command(name = "dip", version, about = "Deep feature representation benchmark for tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess one fold and write the prepared matrix, fold plan and embedding.
    Prep {
        #[command(flatten)]
        common: Common,
        /// Fold to prepare, counting from 1.
        #[arg(long, default_value_t = 1)]
        fold: usize,
    },
    /// Train one encoder family on one fold and save the selected model.
    TrainEncoder {
        #[command(flatten)]
        common: Common,
        /// ssae, dbn, vae or aae.
        #[arg(long, value_parser = parse_kind)]
        kind: EncoderKind,
        #[arg(long, default_value_t = 1)]
        fold: usize,
    },
    /// Run the full cross-validated grid and write the report.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Print the table of a finished run.
    Report {
        /// Config whose output directory holds the report.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory of a finished run (overrides the config's).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fit the categorical embedding on all rows, as in the original pipeline.
    #[arg(long)]
    paper_faithful: bool,
    /// Fail if any fitted statistic saw a test row.
    #[arg(long)]
    audit_leakage: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = load_config(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        cfg.paper_faithful |= self.paper_faithful;
        cfg.audit_leakage |= self.audit_leakage;
        let cfg = cfg.materialized()?;
        fs::create_dir_all(&cfg.out)?;
        fs::write(cfg.out.join("config.toml"), cfg.to_toml()?)?;
        Ok(cfg)
    }
}

fn parse_kind(s: &str) -> std::result::Result<EncoderKind, String> {
    EncoderKind::from_key(s).ok_or_else(|| format!("unknown encoder kind `{s}` (ssae, dbn, vae, aae)"))
}

fn fold_index(fold: usize, k: usize) -> Result<usize> {
    if fold == 0 || fold > k {
        return Err(Error::Config(format!("--fold must be in 1..={k}, got {fold}")));
    }
    Ok(fold - 1)
}

fn prep(cfg: &ExperimentConfig, fold: usize) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let f = fold_index(fold, cfg.folds)?;
    let plan = fold_plan(cfg, ds.n())?;
    fs::write(cfg.out.join("folds.json"), to_json(&plan)?)?;
    let prepared = prepare_fold(cfg, &ds, f)?;

    let mut split = vec![0.0; ds.n()];
    for &r in &prepared.fold.validation {
        split[r] = 1.0;
    }
    for &r in &prepared.fold.test {
        split[r] = 2.0;
    }
    let mut header = prepared.names.clone();
    header.push(cfg.dataset.target.clone());
    header.push("split".into());
    let mut table = Matrix::zeros(ds.n(), header.len());
    let p = prepared.features.cols();
    for i in 0..ds.n() {
        let row = table.row_mut(i);
        row[..p].copy_from_slice(prepared.features.row(i));
        row[p] = prepared.target[i];
        row[p + 1] = split[i];
    }
    let path = cfg.out.join(format!("prepared_fold{fold}.csv"));
    write_matrix_csv(&header, &table, fs::File::create(&path)?)?;
    println!("wrote {} ({} rows, {} features; split 0=train 1=validation 2=test)", path.display(), ds.n(), p);
    if let Some(table) = &prepared.embedding {
        let path = cfg.out.join(format!("embedding_fold{fold}.dipe"));
        save_embedding(table, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn train_encoder(cfg: &ExperimentConfig, kind: EncoderKind, fold: usize) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let f = fold_index(fold, cfg.folds)?;
    let prepared = prepare_fold(cfg, &ds, f)?;
    let (candidate, model) = train_encoder_on_fold(cfg, &prepared, f, kind)?;
    let path = cfg.out.join(format!("{}_fold{fold}.dipm", kind.key()));
    save_model(&model, &path)?;
    let curves = emit_loss_curves(
        &[FoldHistory { kind, fold: f, history: model.history.clone() }],
        cfg.out.join("loss_curves"),
    )?;
    let val = model.history.best_val_loss().unwrap_or(f64::NAN);
    println!("{kind} fold {fold}: candidate {candidate} selected, best validation loss {val:.6}");
    println!("wrote {}", path.display());
    for c in curves {
        println!("wrote {}", c.display());
    }
    Ok(())
}

fn run(cfg: &ExperimentConfig) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let (report, timing) = run_on_dataset(cfg, &ds)?;
    write_report_files(&report, &cfg.out)?;
    fs::write(cfg.out.join("timing.json"), to_json(&timing)?)?;
    if !report.histories.is_empty() {
        emit_loss_curves(&report.histories, cfg.out.join("loss_curves"))?;
    }
    print!("{}", format_report(&report));
    eprintln!(
        "leakage audit: {} fits checked, {} violations; {:.1}s; results in {}",
        report.audit.checked,
        report.audit.violations.len(),
        timing.total_secs,
        cfg.out.display()
    );
    Ok(())
}

fn report(config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let dir = match (out, config) {
        (Some(out), _) => out.to_path_buf(),
        (None, Some(config)) => load_config(config)?.out,
        (None, None) => return Err(Error::Config("report needs --out or --config".into())),
    };
    let text = fs::read_to_string(dir.join("report.json"))?;
    print!("{}", format_report(&ExperimentReport::from_json(&text)?));
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Prep { common, fold } => common.load().and_then(|cfg| prep(&cfg, *fold)),
        Command::TrainEncoder { common, kind, fold } => common.load().and_then(|cfg| train_encoder(&cfg, *kind, *fold)),
        Command::Run { common } => common.load().and_then(|cfg| run(&cfg)),
        Command::Report { config, out } => report(config.as_deref(), out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
