use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EncoderSelection, ExperimentConfig};
use super::report::{CellResult, ExperimentReport, FoldHistory, LeakageAudit, Representation};
use crate::dataio::{load_csv, TabularDataset};
use crate::embed::{build_cooccurrence_rows, embed_dataset, embedded_names, train_glove, EmbeddingTable};
use crate::encoders::{self, EncoderConfig, EncoderKind, EncoderModel};
use crate::error::{Error, Result};
use crate::numkit::{mean_sd, Matrix, RngStream};
use crate::preprocess::{make_folds, Fold, FoldPlan, ImputeStats, OutlierBounds, StandardizeStats};
use crate::supervised::{rmse, LearnerConfig, LearnerKind};

/// Wall-clock timings, kept apart from the report so reports stay
/// reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_secs: f64,
    pub fold_secs: Vec<f64>,
}

/// A fitted statistic and the dataset rows it was computed from.
#[derive(Debug, Clone)]
struct FitRecord {
    stage: String,
    rows: Vec<usize>,
}

/// Rows of the working matrix together with their dataset row indices.
/// Every fit in a fold goes through one of these, so the rows behind each
/// statistic are known.
struct RowView {
    matrix: Matrix,
    rows: Vec<usize>,
}

impl RowView {
    fn of(full: &Matrix, rows: &[usize]) -> Self {
        RowView {
            matrix: full.select_rows(rows),
            rows: rows.to_vec(),
        }
    }
}

#[derive(Default)]
struct Ledger {
    fits: Vec<FitRecord>,
    notes: Vec<String>,
}

impl Ledger {
    fn fit(&mut self, stage: impl Into<String>, rows: &[usize]) {
        self.fits.push(FitRecord {
            stage: stage.into(),
            rows: rows.to_vec(),
        });
    }
}

/// Outcome of one (representation, learner) cell in one fold.
type FoldCell = std::result::Result<(f64, String), String>;

struct FoldOutcome {
    cells: BTreeMap<(Representation, LearnerKind), FoldCell>,
    histories: Vec<FoldHistory>,
    ledger: Ledger,
}

/// Learner targets are standardized with training statistics; predictions
/// are mapped back before scoring.
struct TargetScale {
    mean: f64,
    sd: f64,
}

impl TargetScale {
    fn fit(y: &[f64]) -> Self {
        let (mean, sd) = mean_sd(y);
        TargetScale {
            mean,
            sd: if sd > 0.0 && sd.is_finite() { sd } else { 1.0 },
        }
    }

    fn forward(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.mean) / self.sd).collect()
    }

    fn inverse(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.sd + self.mean).collect()
    }
}

/// Train, validation and test blocks of one representation.
struct Blocks {
    train: RowView,
    validation: RowView,
    test: RowView,
}

struct Targets<'a> {
    scale: TargetScale,
    train_scaled: Vec<f64>,
    validation: &'a [f64],
    test: &'a [f64],
}

/// Seeds: every task's stream derives from the master seed and the task key.
struct Seeds(RngStream);

impl Seeds {
    fn folds(&self) -> u64 {
        self.0.derive_seed(1)
    }
    fn glove(&self, fold: usize) -> u64 {
        self.0.derive(2).derive_seed(fold as u64)
    }
    fn encoder(&self, fold: usize, kind: EncoderKind, candidate: usize) -> u64 {
        self.0.derive(3).derive(fold as u64).derive(kind as u64).derive_seed(candidate as u64)
    }
    fn learner(&self, fold: usize, rep: Representation, kind: LearnerKind, candidate: usize) -> u64 {
        self.0
            .derive(4)
            .derive(fold as u64)
            .derive(rep.rank() as u64)
            .derive(kind as u64)
            .derive_seed(candidate as u64)
    }
}

/// Fits every learner candidate on the training block, selects by
/// validation RMSE and scores the winner on the test block. Returns
/// `(validation RMSE, test RMSE, selected config JSON)`.
fn fit_learner(
    blocks: &Blocks,
    targets: &Targets<'_>,
    candidates: &[LearnerConfig],
    seed_of: impl Fn(usize) -> u64 + Sync,
) -> (std::result::Result<(f64, f64, String), String>, Vec<String>) {
    let results: Vec<Result<(f64, f64, String)>> = candidates
        .par_iter()
        .enumerate()
        .map(|(j, cand)| {
            let cand = cand.with_seed(seed_of(j));
            let model = cand.fit(&blocks.train.matrix, &targets.train_scaled)?;
            let val = targets.scale.inverse(&model.predict(&blocks.validation.matrix)?);
            let test = targets.scale.inverse(&model.predict(&blocks.test.matrix)?);
            let v = rmse(targets.validation, &val)?;
            let t = rmse(targets.test, &test)?;
            if !v.is_finite() || !t.is_finite() {
                return Err(Error::Degenerate("non-finite predictions".into()));
            }
            let json = serde_json::to_string(&cand).unwrap_or_default();
            Ok((v, t, json))
        })
        .collect();
    let mut notes = Vec::new();
    let mut best: Option<(f64, f64, String)> = None;
    let mut last_err = None;
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.0 < b.0) {
                    best = Some(r);
                }
            }
            Err(e) => {
                notes.push(format!("candidate {j}: {e}"));
                last_err = Some(e.to_string());
            }
        }
    }
    (best.ok_or_else(|| last_err.unwrap_or_else(|| "no candidates".into())), notes)
}

struct EncodedCandidate {
    model: EncoderModel,
    score: f64,
    blocks: Blocks,
}

fn train_encoder_candidate(kind: EncoderKind, cfg: &EncoderConfig, input: &Blocks) -> Result<EncodedCandidate> {
    let model = encoders::train(kind, &input.train.matrix, Some(&input.validation.matrix), cfg)?;
    let score = model.reconstruction_error(&input.validation.matrix)?;
    let encode = |v: &RowView| -> Result<RowView> {
        let m = model.encode(&v.matrix)?;
        if !m.is_finite() {
            return Err(Error::Degenerate(format!("{kind} produced non-finite codes")));
        }
        Ok(RowView {
            matrix: m,
            rows: v.rows.clone(),
        })
    };
    if !score.is_finite() {
        return Err(Error::Degenerate(format!("{kind} reconstruction error is not finite")));
    }
    let mut blocks = Blocks {
        train: encode(&input.train)?,
        validation: encode(&input.validation)?,
        test: encode(&input.test)?,
    };
    // Codes are rescaled with training-row statistics, like the raw features.
    let all: Vec<usize> = (0..blocks.train.matrix.rows()).collect();
    let scaler = StandardizeStats::fit(&blocks.train.matrix, &all)?;
    for b in [&mut blocks.train, &mut blocks.validation, &mut blocks.test] {
        b.matrix = scaler.apply(&b.matrix)?;
    }
    Ok(EncodedCandidate { model, score, blocks })
}

/// One fold's preprocessed feature matrix (all rows, with every statistic
/// fit on the fold's training rows) and the fitted embedding, if any.
pub struct PreparedFold {
    pub fold: Fold,
    pub names: Vec<String>,
    pub features: Matrix,
    pub target: Vec<f64>,
    pub embedding: Option<EmbeddingTable>,
    ledger: Ledger,
}

impl PreparedFold {
    fn blocks(&self) -> Blocks {
        Blocks {
            train: RowView::of(&self.features, &self.fold.train),
            validation: RowView::of(&self.features, &self.fold.validation),
            test: RowView::of(&self.features, &self.fold.test),
        }
    }
}

/// The cross-validation plan for a dataset of `n` rows under `cfg`.
pub fn fold_plan(cfg: &ExperimentConfig, n: usize) -> Result<FoldPlan> {
    make_folds(n, cfg.folds, Seeds(RngStream::new(cfg.seed)).folds())
}

/// Imputation, outlier clipping, the categorical embedding and
/// standardization for fold `f` (zero-based). With `paper_faithful` the
/// embedding co-occurrences come from every row.
pub fn prepare_fold(cfg: &ExperimentConfig, ds: &TabularDataset, f: usize) -> Result<PreparedFold> {
    let plan = fold_plan(cfg, ds.n())?;
    let fold = plan
        .folds
        .get(f)
        .cloned()
        .ok_or_else(|| Error::param(format!("fold {} out of range 1..={}", f + 1, plan.k)))?;
    prepare(cfg, ds, f, fold, &Seeds(RngStream::new(cfg.seed)))
}

fn prepare(cfg: &ExperimentConfig, ds: &TabularDataset, f: usize, fold: Fold, seeds: &Seeds) -> Result<PreparedFold> {
    let mut ledger = Ledger::default();
    let train = &fold.train;

    let impute = ImputeStats::fit(ds, train)?;
    ledger.fit("imputation", train);
    let ds = impute.apply(ds);
    let bounds = OutlierBounds::fit(&ds, train, cfg.preprocess.zmax)?;
    ledger.fit("outlier bounds", train);
    let ds = bounds.apply(&ds);

    let (features, embedding) = if ds.categorical.is_empty() {
        (ds.numeric.clone(), None)
    } else {
        let all: Vec<usize> = (0..ds.n()).collect();
        let emb_rows = if cfg.paper_faithful { &all } else { train };
        let cooc = build_cooccurrence_rows(&ds, emb_rows)?;
        ledger.fit("embedding co-occurrence", emb_rows);
        let table = train_glove(&cooc, cfg.embedding.dim, &cfg.embedding.glove(seeds.glove(f)))?;
        (embed_dataset(&ds, &table), Some(table))
    };
    let scaler = StandardizeStats::fit(&features, train)?;
    ledger.fit("standardization", train);
    let features = scaler.apply(&features)?;
    Ok(PreparedFold {
        names: embedded_names(&ds, cfg.embedding.dim),
        features,
        target: ds.target.clone(),
        embedding,
        fold,
        ledger,
    })
}

/// Trains every candidate of one encoder kind on a prepared fold and
/// returns the one with the lowest validation reconstruction error,
/// with its candidate index.
pub fn train_encoder_on_fold(
    cfg: &ExperimentConfig,
    prepared: &PreparedFold,
    f: usize,
    kind: EncoderKind,
) -> Result<(usize, EncoderModel)> {
    let seeds = Seeds(RngStream::new(cfg.seed));
    let input = prepared.blocks();
    let cands = cfg.encoders.candidates(kind)?;
    let trained: Vec<Result<EncodedCandidate>> = cands
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let c = EncoderConfig {
                seed: seeds.encoder(f, kind, i),
                ..c.clone()
            };
            train_encoder_candidate(kind, &c, &input)
        })
        .collect();
    let mut best: Option<(usize, EncodedCandidate)> = None;
    let mut last_err = None;
    for (i, t) in trained.into_iter().enumerate() {
        match t {
            Ok(t) => {
                if best.as_ref().is_none_or(|b| t.score < b.1.score) {
                    best = Some((i, t));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((i, t)), _) => Ok((i, t.model)),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::param(format!("{kind}: no candidates"))),
    }
}

fn run_fold(
    cfg: &ExperimentConfig,
    ds: &TabularDataset,
    f: usize,
    fold: &Fold,
    seeds: &Seeds,
    learner_grid: &[(LearnerKind, Vec<LearnerConfig>)],
    encoder_grid: &[(EncoderKind, Vec<EncoderConfig>)],
) -> Result<FoldOutcome> {
    let prepared = prepare(cfg, ds, f, fold.clone(), seeds)?;
    let mut ledger = prepared.ledger;
    let input = Blocks {
        train: RowView::of(&prepared.features, &fold.train),
        validation: RowView::of(&prepared.features, &fold.validation),
        test: RowView::of(&prepared.features, &fold.test),
    };
    let train = &fold.train;

    let y_train: Vec<f64> = train.iter().map(|&i| ds.target[i]).collect();
    let y_val: Vec<f64> = fold.validation.iter().map(|&i| ds.target[i]).collect();
    let y_test: Vec<f64> = fold.test.iter().map(|&i| ds.target[i]).collect();
    let scale = TargetScale::fit(&y_train);
    ledger.fit("target scaling", train);
    let targets = Targets {
        train_scaled: scale.forward(&y_train),
        scale,
        validation: &y_val,
        test: &y_test,
    };

    let mut cells = BTreeMap::new();
    let mut histories = Vec::new();
    let run_learners = |rep: Representation, blocks: &Blocks, ledger: &mut Ledger| {
        let mut out = Vec::new();
        for (kind, cands) in learner_grid {
            ledger.fit(format!("{} {kind} fit", rep.label()), &blocks.train.rows);
            let (res, notes) = fit_learner(blocks, &targets, cands, |j| seeds.learner(f, rep, *kind, j));
            ledger
                .notes
                .extend(notes.into_iter().map(|n| format!("fold {}: {} {kind} {n}", f + 1, rep.label())));
            out.push((*kind, res));
        }
        out
    };

    for (kind, res) in run_learners(Representation::Original, &input, &mut ledger) {
        cells.insert((Representation::Original, kind), res.map(|(_, t, s)| (t, s)));
    }

    for (kind, cands) in encoder_grid {
        let rep = Representation::Encoded(*kind);
        let trained: Vec<Result<EncodedCandidate>> = cands
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let c = EncoderConfig {
                    seed: seeds.encoder(f, *kind, i),
                    ..c.clone()
                };
                train_encoder_candidate(*kind, &c, &input)
            })
            .collect();
        ledger.fit(format!("{kind} encoder fit"), &input.train.rows);
        let mut ok = Vec::new();
        let mut last_err = String::new();
        for (i, t) in trained.into_iter().enumerate() {
            match t {
                Ok(t) => ok.push((i, t)),
                Err(e) => {
                    ledger.notes.push(format!("fold {}: {kind} candidate {i}: {e}", f + 1));
                    last_err = e.to_string();
                }
            }
        }
        if ok.is_empty() {
            for (lk, _) in learner_grid {
                cells.insert((rep, *lk), Err(format!("{kind}: {last_err}")));
            }
            continue;
        }
        let best_recon = ok
            .iter()
            .min_by(|a, b| a.1.score.total_cmp(&b.1.score).then(a.0.cmp(&b.0)))
            .map(|(i, _)| *i)
            .expect("non-empty");
        let chosen = &ok.iter().find(|(i, _)| *i == best_recon).expect("present").1;
        histories.push(FoldHistory {
            kind: *kind,
            fold: f,
            history: chosen.model.history.clone(),
        });
        let encoder_json = |i: usize| serde_json::to_string(&cands[i]).unwrap_or_default();
        match cfg.selection {
            EncoderSelection::Reconstruction => {
                for (lk, res) in run_learners(rep, &chosen.blocks, &mut ledger) {
                    let res = res.map(|(_, t, s)| (t, format!("{{\"encoder\":{},\"learner\":{s}}}", encoder_json(best_recon))));
                    cells.insert((rep, lk), res);
                }
            }
            EncoderSelection::Downstream => {
                let mut per_learner: BTreeMap<LearnerKind, (f64, f64, String)> = BTreeMap::new();
                let mut errors: BTreeMap<LearnerKind, String> = BTreeMap::new();
                for (i, cand) in &ok {
                    for (lk, res) in run_learners(rep, &cand.blocks, &mut ledger) {
                        match res {
                            Ok((v, t, s)) => {
                                if per_learner.get(&lk).is_none_or(|b| v < b.0) {
                                    let sel = format!("{{\"encoder\":{},\"learner\":{s}}}", encoder_json(*i));
                                    per_learner.insert(lk, (v, t, sel));
                                }
                            }
                            Err(e) => {
                                errors.insert(lk, e);
                            }
                        }
                    }
                }
                for (lk, _) in learner_grid {
                    let res = match per_learner.remove(lk) {
                        Some((_, t, s)) => Ok((t, s)),
                        None => Err(errors.remove(lk).unwrap_or_else(|| "no candidates".into())),
                    };
                    cells.insert((rep, *lk), res);
                }
            }
        }
    }
    Ok(FoldOutcome {
        cells,
        histories,
        ledger,
    })
}

fn audit(plan_folds: &[Fold], outcomes: &[FoldOutcome]) -> LeakageAudit {
    let mut audit = LeakageAudit::default();
    for (f, (fold, outcome)) in plan_folds.iter().zip(outcomes).enumerate() {
        let mut is_test = vec![false; fold.train.len() + fold.validation.len() + fold.test.len()];
        for &t in &fold.test {
            is_test[t] = true;
        }
        for rec in &outcome.ledger.fits {
            audit.checked += 1;
            let leaked = rec.rows.iter().filter(|&&r| is_test[r]).count();
            if leaked > 0 {
                audit
                    .violations
                    .push(format!("fold {}: {} used {leaked} test rows", f + 1, rec.stage));
            }
        }
    }
    audit
}

/// Runs the full grid on a loaded dataset.
///
/// For each fold: imputation, outlier bounds, the categorical embedding
/// (unless `paper_faithful`) and standardization are fit on the training
/// rows; every encoder candidate trains on the training rows and the one
/// with the lowest validation reconstruction error encodes all three
/// blocks; every learner candidate trains on the training block and the
/// one with the lowest validation RMSE is scored on the test block. The
/// raw features form the `Original` row. The loss history recorded per
/// fold is that of the reconstruction-best encoder.
pub fn run_on_dataset(cfg: &ExperimentConfig, ds: &TabularDataset) -> Result<(ExperimentReport, Timing)> {
    let start = Instant::now();
    cfg.validate()?;
    ds.validate()?;
    let seeds = Seeds(RngStream::new(cfg.seed));
    let plan = fold_plan(cfg, ds.n())?;
    let learner_grid: Vec<(LearnerKind, Vec<LearnerConfig>)> = LearnerKind::ALL
        .into_iter()
        .filter(|k| cfg.learners.kinds.contains(k))
        .map(|k| Ok((k, cfg.learners.candidates(k)?)))
        .collect::<Result<_>>()?;
    let encoder_grid: Vec<(EncoderKind, Vec<EncoderConfig>)> = EncoderKind::ALL
        .into_iter()
        .filter(|k| cfg.encoders.kinds.contains(k))
        .map(|k| Ok((k, cfg.encoders.candidates(k)?)))
        .collect::<Result<_>>()?;

    let timed: Vec<(Result<FoldOutcome>, f64)> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(f, fold)| {
            let t = Instant::now();
            let r = run_fold(cfg, ds, f, fold, &seeds, &learner_grid, &encoder_grid);
            (r, t.elapsed().as_secs_f64())
        })
        .collect();
    let mut outcomes = Vec::with_capacity(timed.len());
    let mut fold_secs = Vec::with_capacity(timed.len());
    for (r, secs) in timed {
        outcomes.push(r?);
        fold_secs.push(secs);
    }

    let audit = audit(&plan.folds, &outcomes);
    if cfg.audit_leakage && !audit.passed() {
        return Err(Error::Leakage(audit.violations.join("; ")));
    }

    let mut reps: Vec<Representation> = encoder_grid.iter().map(|(k, _)| Representation::Encoded(*k)).collect();
    reps.push(Representation::Original);
    let mut cells = Vec::new();
    for &rep in &reps {
        for (lk, _) in &learner_grid {
            let mut rmses = Vec::new();
            let mut selected = Vec::new();
            let mut failure = None;
            for (f, o) in outcomes.iter().enumerate() {
                match &o.cells[&(rep, *lk)] {
                    Ok((t, s)) => {
                        rmses.push(*t);
                        selected.push(s.clone());
                    }
                    Err(e) => {
                        failure.get_or_insert_with(|| format!("fold {}: {e}", f + 1));
                    }
                }
            }
            cells.push(match failure {
                Some(reason) => CellResult::failed(rep, *lk, reason),
                None => CellResult::from_folds(rep, *lk, rmses, selected),
            });
        }
    }
    if cells.iter().all(|c| !c.is_ok()) {
        let first = cells.first().and_then(|c| c.failure.clone()).unwrap_or_default();
        return Err(Error::AllCellsFailed(first));
    }
    let mut histories = Vec::new();
    let mut notes = Vec::new();
    for o in outcomes {
        histories.extend(o.histories);
        notes.extend(o.ledger.notes);
    }
    histories.sort_by_key(|h| (h.kind, h.fold));
    let report = ExperimentReport {
        cells,
        folds: cfg.folds,
        seed: cfg.seed,
        config_hash: cfg.hash()?,
        paper_faithful: cfg.paper_faithful,
        audit,
        histories,
        notes,
    };
    Ok((
        report,
        Timing {
            total_secs: start.elapsed().as_secs_f64(),
            fold_secs,
        },
    ))
}

/// Loads the configured CSV and runs the grid.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Timing)> {
    let ds = load_dataset(cfg)?;
    run_on_dataset(cfg, &ds)
}

/// Reads the configured CSV with a schema built from its header.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<TabularDataset> {
    let mut reader = csv::Reader::from_path(&cfg.dataset.path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let schema = cfg.schema(&header)?;
    load_csv(&cfg.dataset.path, &schema)
}
