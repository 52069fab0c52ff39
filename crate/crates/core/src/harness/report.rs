use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::encoders::{EncoderKind, TrainingHistory};
use crate::error::{Error, Result};
use crate::numkit::mean_sd;
use crate::supervised::LearnerKind;

pub const ORIGINAL: &str = "Original";

/// A row of the results table: an encoder family or the raw features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Encoded(EncoderKind),
    Original,
}

impl Representation {
    /// Table row order.
    pub fn rank(self) -> usize {
        match self {
            Representation::Encoded(k) => EncoderKind::ALL.iter().position(|&e| e == k).expect("listed kind"),
            Representation::Original => EncoderKind::ALL.len(),
        }
    }

    pub fn label(self) -> String {
        match self {
            Representation::Encoded(k) => k.to_string(),
            Representation::Original => ORIGINAL.to_string(),
        }
    }
}

/// One (representation, learner) cell across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub representation: Representation,
    pub learner: LearnerKind,
    /// Test RMSE per fold, in fold order.
    pub fold_rmse: Vec<f64>,
    /// NaN (JSON `null`) for failed cells.
    #[serde(with = "nan_as_null")]
    pub mean: f64,
    /// Population standard deviation over folds; `None` for single values.
    pub sd: Option<f64>,
    /// Selected hyperparameters per fold (JSON).
    pub selected: Vec<String>,
    pub failure: Option<String>,
}

impl CellResult {
    pub fn from_folds(
        representation: Representation,
        learner: LearnerKind,
        fold_rmse: Vec<f64>,
        selected: Vec<String>,
    ) -> Self {
        let (mean, sd) = mean_sd(&fold_rmse);
        CellResult {
            representation,
            learner,
            sd: (fold_rmse.len() > 1).then_some(sd),
            mean,
            fold_rmse,
            selected,
            failure: None,
        }
    }

    pub fn failed(representation: Representation, learner: LearnerKind, reason: impl Into<String>) -> Self {
        CellResult {
            representation,
            learner,
            fold_rmse: Vec::new(),
            mean: f64::NAN,
            sd: None,
            selected: Vec::new(),
            failure: Some(reason.into()),
        }
    }

    /// A cell with a mean only, as published tables report.
    pub fn published(representation: Representation, learner: LearnerKind, mean: f64) -> Self {
        CellResult {
            representation,
            learner,
            fold_rmse: Vec::new(),
            mean,
            sd: None,
            selected: Vec::new(),
            failure: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LeakageAudit {
    /// Fitted statistics whose input rows were checked.
    pub checked: usize,
    pub violations: Vec<String>,
}

impl LeakageAudit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Loss history of the encoder selected in one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldHistory {
    pub kind: EncoderKind,
    pub fold: usize,
    pub history: TrainingHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub cells: Vec<CellResult>,
    pub folds: usize,
    pub seed: u64,
    pub config_hash: String,
    pub paper_faithful: bool,
    pub audit: LeakageAudit,
    pub histories: Vec<FoldHistory>,
    /// Non-fatal diagnostics such as skipped grid candidates.
    pub notes: Vec<String>,
}

impl ExperimentReport {
    /// Report holding only the given cells, e.g. a published table.
    pub fn from_cells(cells: Vec<CellResult>) -> Self {
        ExperimentReport {
            cells,
            folds: 0,
            seed: 0,
            config_hash: String::new(),
            paper_faithful: false,
            audit: LeakageAudit::default(),
            histories: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn cell(&self, rep: Representation, learner: LearnerKind) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.representation == rep && c.learner == learner)
    }

    fn rows(&self) -> Vec<Representation> {
        let mut rows: Vec<Representation> = self.cells.iter().map(|c| c.representation).collect();
        rows.sort_by_key(|r| r.rank());
        rows.dedup();
        rows
    }

    fn columns(&self) -> Vec<LearnerKind> {
        let mut cols: Vec<LearnerKind> = self.cells.iter().map(|c| c.learner).collect();
        cols.sort();
        cols.dedup();
        cols
    }

    /// Lowest mean among successful representation cells.
    pub fn best_encoded(&self) -> Option<&CellResult> {
        self.cells
            .iter()
            .filter(|c| c.is_ok() && c.representation != Representation::Original)
            .min_by(|a, b| a.mean.total_cmp(&b.mean))
    }

    pub fn best_original(&self) -> Option<&CellResult> {
        self.cells
            .iter()
            .filter(|c| c.is_ok() && c.representation == Representation::Original)
            .min_by(|a, b| a.mean.total_cmp(&b.mean))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("bad report: {e}")))
    }

    /// One line per cell: `representation,learner,mean,sd,fold_1..fold_k,failure`.
    pub fn to_csv(&self) -> String {
        let k = self.cells.iter().map(|c| c.fold_rmse.len()).max().unwrap_or(0);
        let mut out = String::from("representation,learner,mean,sd");
        for f in 1..=k {
            let _ = write!(out, ",fold_{f}");
        }
        out.push_str(",failure\n");
        let mut cells: Vec<&CellResult> = self.cells.iter().collect();
        cells.sort_by_key(|c| (c.representation.rank(), c.learner));
        for c in cells {
            let _ = write!(out, "{},{}", c.representation.label(), c.learner);
            if c.is_ok() {
                let _ = write!(out, ",{},{}", c.mean, c.sd.map(|s| s.to_string()).unwrap_or_default());
            } else {
                out.push_str(",,");
            }
            for f in 0..k {
                out.push(',');
                if let Some(v) = c.fold_rmse.get(f) {
                    let _ = write!(out, "{v}");
                }
            }
            out.push(',');
            if let Some(reason) = &c.failure {
                out.push_str(&csv_quote(reason));
            }
            out.push('\n');
        }
        out
    }
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Markdown table in the `Approach | RF | Lasso | SVM` layout with rows in
/// SSAE, DBN, AAE, VAE, Original order. Cells read `mean (sd)` to two
/// decimals; the lowest mean in the table is bold; failures read
/// `—(reason)`; absent cells are blank.
pub fn format_report(report: &ExperimentReport) -> String {
    let rows = report.rows();
    let cols = report.columns();
    let best = report
        .cells
        .iter()
        .filter(|c| c.is_ok())
        .map(|c| format!("{:.2}", c.mean))
        .min_by(|a, b| a.parse::<f64>().unwrap_or(f64::INFINITY).total_cmp(&b.parse().unwrap_or(f64::INFINITY)));
    let mut out = String::from("| Approach |");
    for c in &cols {
        let _ = write!(out, " {c} |");
    }
    out.push_str("\n|---|");
    for _ in &cols {
        out.push_str("---|");
    }
    out.push('\n');
    let index: BTreeMap<(Representation, LearnerKind), &CellResult> =
        report.cells.iter().map(|c| ((c.representation, c.learner), c)).collect();
    for r in rows {
        let _ = write!(out, "| {} |", r.label());
        for &l in &cols {
            let text = match index.get(&(r, l)) {
                None => String::new(),
                Some(c) => match &c.failure {
                    Some(reason) => format!("—({reason})"),
                    None => {
                        let mean = format!("{:.2}", c.mean);
                        let body = match c.sd {
                            Some(sd) => format!("{mean} ({sd:.2})"),
                            None => mean.clone(),
                        };
                        if best.as_deref() == Some(mean.as_str()) {
                            format!("**{body}**")
                        } else {
                            body
                        }
                    }
                },
            };
            let _ = write!(out, " {text} |");
        }
        out.push('\n');
    }
    out
}

/// The paper's published DMC results, for rendering checks.
pub fn table_ii_fixture() -> ExperimentReport {
    use EncoderKind::*;
    use LearnerKind::*;
    let values = [
        (Representation::Encoded(Ssae), [6.89, 9.53, 9.31]),
        (Representation::Encoded(Dbn), [7.91, 9.81, 10.02]),
        (Representation::Encoded(Aae), [8.49, 9.89, 10.06]),
        (Representation::Encoded(Vae), [9.65, 10.17, 9.95]),
        (Representation::Original, [11.08, 13.86, 12.16]),
    ];
    let mut cells = Vec::new();
    // Insert in scrambled order so layout comes from the formatter.
    for learner in [Svm, Rf, Lasso] {
        for (rep, row) in values.iter().rev() {
            let col = LearnerKind::ALL.iter().position(|&l| l == learner).expect("listed learner");
            cells.push(CellResult::published(*rep, learner, row[col]));
        }
    }
    ExperimentReport::from_cells(cells)
}
