//! GloVe-style embedding of categorical levels.
//!
//! Each record is one context: every unordered pair of categorical tokens in
//! a record co-occurs once. A token is a (column, level) pair, so the same
//! level string in two columns gives two distinct tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataio::TabularDataset;
use crate::error::{Error, Result};
use crate::numkit::{Matrix, RngStream};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Token {
    pub column: String,
    pub level: String,
}

/// Dense symmetric co-occurrence counts over a token vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    vocabulary: Vec<Token>,
    counts: Vec<u64>,
}

impl CooccurrenceMatrix {
    /// Wraps explicit counts; they must be symmetric with a zero diagonal.
    pub fn from_counts(vocabulary: Vec<Token>, counts: Vec<u64>) -> Result<Self> {
        let v = vocabulary.len();
        if counts.len() != v * v {
            return Err(Error::param(format!(
                "{} counts for a vocabulary of {v}",
                counts.len()
            )));
        }
        for i in 0..v {
            if counts[i * v + i] != 0 {
                return Err(Error::param("co-occurrence diagonal must be zero"));
            }
            for j in 0..i {
                if counts[i * v + j] != counts[j * v + i] {
                    return Err(Error::param("co-occurrence counts must be symmetric"));
                }
            }
        }
        Ok(CooccurrenceMatrix { vocabulary, counts })
    }

    pub fn vocabulary(&self) -> &[Token] {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.len() + j]
    }

    /// Ordered pairs `(i, j, X_ij)` with a nonzero count; both orders appear.
    pub fn nonzero(&self) -> Vec<(usize, usize, f64)> {
        let v = self.len();
        let mut out = Vec::new();
        for i in 0..v {
            for j in 0..v {
                let c = self.counts[i * v + j];
                if c > 0 {
                    out.push((i, j, c as f64));
                }
            }
        }
        out
    }
}

/// Co-occurrence counts over every record.
pub fn build_cooccurrence(ds: &TabularDataset) -> Result<CooccurrenceMatrix> {
    let rows: Vec<usize> = (0..ds.n()).collect();
    build_cooccurrence_rows(ds, &rows)
}

/// Co-occurrence counts over the given records only. The vocabulary holds
/// the tokens observed in those records, ordered by column then level code.
pub fn build_cooccurrence_rows(ds: &TabularDataset, rows: &[usize]) -> Result<CooccurrenceMatrix> {
    if ds.categorical.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let mut ids: Vec<Vec<Option<usize>>> = Vec::with_capacity(ds.categorical.len());
    let mut vocabulary = Vec::new();
    for col in &ds.categorical {
        let mut seen = vec![false; col.levels.len()];
        for &r in rows {
            if col.level(r).is_some() {
                seen[col.codes[r] as usize] = true;
            }
        }
        let mut col_ids = vec![None; col.levels.len()];
        for (code, _) in seen.iter().enumerate().filter(|(_, &s)| s) {
            col_ids[code] = Some(vocabulary.len());
            vocabulary.push(Token {
                column: col.name.clone(),
                level: col.levels[code].clone(),
            });
        }
        ids.push(col_ids);
    }
    if vocabulary.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let v = vocabulary.len();
    let mut counts = vec![0u64; v * v];
    let mut tokens = Vec::with_capacity(ds.categorical.len());
    for &r in rows {
        tokens.clear();
        for (col, col_ids) in ds.categorical.iter().zip(&ids) {
            if col.level(r).is_some() {
                if let Some(id) = col_ids[col.codes[r] as usize] {
                    tokens.push(id);
                }
            }
        }
        for a in 0..tokens.len() {
            for b in a + 1..tokens.len() {
                let (i, j) = (tokens[a], tokens[b]);
                counts[i * v + j] += 1;
                counts[j * v + i] += 1;
            }
        }
    }
    Ok(CooccurrenceMatrix { vocabulary, counts })
}

/// Default embedding width.
pub const DEFAULT_DIM: usize = 8;

/// GloVe weighting `(x/xmax)^α` below `xmax`, 1 at and above it.
pub fn glove_weight(x: f64, xmax: f64, alpha: f64) -> Result<f64> {
    if !(xmax > 0.0) {
        return Err(Error::param(format!("xmax must be > 0, got {xmax}")));
    }
    if x < 0.0 {
        return Err(Error::param(format!("co-occurrence count must be ≥ 0, got {x}")));
    }
    Ok(if x >= xmax { 1.0 } else { (x / xmax).powf(alpha) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GloveConfig {
    pub lr: f64,
    pub epochs: usize,
    pub xmax: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for GloveConfig {
    fn default() -> Self {
        GloveConfig {
            lr: 0.05,
            epochs: 100,
            xmax: 100.0,
            alpha: 0.75,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vocabulary: Vec<Token>,
    /// Main vectors, one row per token.
    pub main: Matrix,
    /// Context vectors, one row per token.
    pub context: Matrix,
    pub main_bias: Vec<f64>,
    pub context_bias: Vec<f64>,
    /// Weighted loss before training and after each epoch.
    pub history: Vec<f64>,
}

impl EmbeddingTable {
    /// Final vector for token `i`: main + context.
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.main
            .row(i)
            .iter()
            .zip(self.context.row(i))
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn index(&self) -> HashMap<&Token, usize> {
        self.vocabulary.iter().enumerate().map(|(i, t)| (t, i)).collect()
    }

    /// `Σ f(X_ij)·(w_i·w̃_j + b_i + b̃_j − log X_ij)²` over nonzero counts.
    pub fn weighted_loss(&self, cooc: &CooccurrenceMatrix, xmax: f64, alpha: f64) -> Result<f64> {
        let mut loss = 0.0;
        for (i, j, x) in cooc.nonzero() {
            let f = glove_weight(x, xmax, alpha)?;
            let diff = self.score(i, j) - x.ln();
            loss += f * diff * diff;
        }
        Ok(loss)
    }

    /// `w_i·w̃_j + b_i + b̃_j`.
    pub fn score(&self, i: usize, j: usize) -> f64 {
        crate::numkit::dot(self.main.row(i), self.context.row(j)) + self.main_bias[i] + self.context_bias[j]
    }
}

/// Fits main/context vectors and biases with per-coordinate AdaGrad steps
/// over the nonzero counts, visited in a freshly shuffled order each epoch.
pub fn train_glove(cooc: &CooccurrenceMatrix, dim: usize, cfg: &GloveConfig) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::param("embedding dimension must be ≥ 1"));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::param(format!("learning rate must be > 0, got {}", cfg.lr)));
    }
    let pairs = cooc.nonzero();
    if pairs.is_empty() {
        return Err(Error::Degenerate("co-occurrence counts are all zero".into()));
    }
    let weights: Vec<f64> = pairs
        .iter()
        .map(|&(_, _, x)| glove_weight(x, cfg.xmax, cfg.alpha))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    let v = cooc.len();
    let mut rng = RngStream::new(cfg.seed);
    let init = |rng: &mut RngStream| (rng.uniform() - 0.5) / dim as f64;
    let mut main = Matrix::zeros(v, dim);
    let mut context = Matrix::zeros(v, dim);
    main.as_mut_slice().iter_mut().for_each(|w| *w = init(&mut rng));
    context.as_mut_slice().iter_mut().for_each(|w| *w = init(&mut rng));
    let mut table = EmbeddingTable {
        dim,
        vocabulary: cooc.vocabulary().to_vec(),
        main,
        context,
        main_bias: (0..v).map(|_| init(&mut rng)).collect(),
        context_bias: (0..v).map(|_| init(&mut rng)).collect(),
        history: Vec::with_capacity(cfg.epochs + 1),
    };
    let mut sq_main = Matrix::filled(v, dim, 1.0);
    let mut sq_context = Matrix::filled(v, dim, 1.0);
    let mut sq_main_bias = vec![1.0f64; v];
    let mut sq_context_bias = vec![1.0f64; v];

    table.history.push(table.weighted_loss(cooc, cfg.xmax, cfg.alpha)?);
    let mut grad_w = vec![0.0; dim];
    let mut grad_c = vec![0.0; dim];
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for &p in &order {
            let (i, j, x) = pairs[p];
            let fdiff = weights[p] * (table.score(i, j) - x.ln());
            for d in 0..dim {
                grad_w[d] = fdiff * table.context[(j, d)];
                grad_c[d] = fdiff * table.main[(i, d)];
            }
            for d in 0..dim {
                table.main[(i, d)] -= cfg.lr * grad_w[d] / sq_main[(i, d)].sqrt();
                table.context[(j, d)] -= cfg.lr * grad_c[d] / sq_context[(j, d)].sqrt();
                sq_main[(i, d)] += grad_w[d] * grad_w[d];
                sq_context[(j, d)] += grad_c[d] * grad_c[d];
            }
            table.main_bias[i] -= cfg.lr * fdiff / sq_main_bias[i].sqrt();
            table.context_bias[j] -= cfg.lr * fdiff / sq_context_bias[j].sqrt();
            sq_main_bias[i] += fdiff * fdiff;
            sq_context_bias[j] += fdiff * fdiff;
        }
        let loss = table.weighted_loss(cooc, cfg.xmax, cfg.alpha)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                phase: "glove",
            });
        }
        table.history.push(loss);
    }
    Ok(table)
}

/// `[numeric block ‖ one d-wide vector per categorical column]`. Levels the
/// table has never seen, and missing cells, embed as zeros.
pub fn embed_dataset(ds: &TabularDataset, table: &EmbeddingTable) -> Matrix {
    let n = ds.n();
    let p = ds.numeric.cols();
    let width = p + table.dim * ds.categorical.len();
    let index = table.index();
    let col_vectors: Vec<Vec<Option<Vec<f64>>>> = ds
        .categorical
        .iter()
        .map(|col| {
            col.levels
                .iter()
                .map(|level| {
                    let key = Token {
                        column: col.name.clone(),
                        level: level.clone(),
                    };
                    index.get(&key).map(|&i| table.vector(i))
                })
                .collect()
        })
        .collect();
    let mut out = Matrix::zeros(n, width);
    for r in 0..n {
        let row = out.row_mut(r);
        row[..p].copy_from_slice(ds.numeric.row(r));
        for (c, col) in ds.categorical.iter().enumerate() {
            if col.level(r).is_none() {
                continue;
            }
            if let Some(vec) = &col_vectors[c][col.codes[r] as usize] {
                let start = p + c * table.dim;
                row[start..start + table.dim].copy_from_slice(vec);
            }
        }
    }
    out
}

/// Column names for [`embed_dataset`] output.
pub fn embedded_names(ds: &TabularDataset, dim: usize) -> Vec<String> {
    let mut names = ds.numeric_names.clone();
    for col in &ds.categorical {
        names.extend((0..dim).map(|d| format!("{}_e{d}", col.name)));
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{read_csv, FeatureSchema};
    use proptest::prelude::*;

    fn dataset(csv: &str, categorical: &[&str]) -> TabularDataset {
        let header: Vec<String> = csv.lines().next().unwrap().split(',').map(String::from).collect();
        let cats: Vec<String> = categorical.iter().map(|s| s.to_string()).collect();
        let schema = FeatureSchema::from_header(&header, "y", &cats, &[]).unwrap();
        read_csv(csv.as_bytes(), &schema).unwrap()
    }

    fn token_id(c: &CooccurrenceMatrix, column: &str, level: &str) -> usize {
        c.vocabulary()
            .iter()
            .position(|t| t.column == column && t.level == level)
            .unwrap()
    }

    #[test]
    fn single_pair() {
        let ds = dataset("c1,c2,y\na,b,0\n", &["c1", "c2"]);
        let c = build_cooccurrence(&ds).unwrap();
        let (a, b) = (token_id(&c, "c1", "a"), token_id(&c, "c2", "b"));
        assert_eq!(c.get(a, b), 1);
        assert_eq!(c.get(b, a), 1);
        assert_eq!(c.get(a, a), 0);
    }

    #[test]
    fn identical_records_match_pair_enumeration() {
        let ds = dataset("c1,c2,c3,y\na,b,c,0\na,b,c,0\n", &["c1", "c2", "c3"]);
        let c = build_cooccurrence(&ds).unwrap();
        // enumerate unordered pairs of each record independently
        let mut expected = std::collections::HashMap::new();
        for _record in 0..2 {
            let toks = [("c1", "a"), ("c2", "b"), ("c3", "c")];
            for x in 0..toks.len() {
                for y in x + 1..toks.len() {
                    *expected.entry((toks[x], toks[y])).or_insert(0u64) += 1;
                }
            }
        }
        for ((t1, t2), count) in expected {
            assert_eq!(count, 2);
            assert_eq!(c.get(token_id(&c, t1.0, t1.1), token_id(&c, t2.0, t2.1)), count);
        }
    }

    #[test]
    fn numeric_only_dataset_has_no_vocabulary() {
        let ds = dataset("a,y\n1,0\n", &[]);
        assert!(matches!(build_cooccurrence(&ds), Err(Error::EmptyVocabulary)));
    }

    #[test]
    fn weighting_function() {
        assert_eq!(glove_weight(100.0, 100.0, 0.75).unwrap(), 1.0);
        assert_eq!(glove_weight(0.0, 100.0, 0.75).unwrap(), 0.0);
        // 0.1^0.75 = 10^-0.75
        let expected = 10f64.powf(-0.75);
        assert!((glove_weight(10.0, 100.0, 0.75).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.17783).abs() < 1e-5);
        assert!(glove_weight(1.0, 0.0, 0.75).is_err());
    }

    #[test]
    fn single_token_cannot_train() {
        let vocab = vec![Token { column: "c".into(), level: "a".into() }];
        let c = CooccurrenceMatrix::from_counts(vocab, vec![0]).unwrap();
        assert!(matches!(train_glove(&c, 4, &GloveConfig::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn unseen_levels_embed_as_zero() {
        let train = dataset("x,c1,c2,y\n1,a,b,0\n2,a,c,0\n", &["c1", "c2"]);
        let table = train_glove(&build_cooccurrence(&train).unwrap(), 3, &GloveConfig::default()).unwrap();
        let test = dataset("x,c1,c2,y\n5,z,b,0\n", &["c1", "c2"]);
        let e = embed_dataset(&test, &table);
        assert_eq!(e.cols(), 1 + 2 * 3);
        assert_eq!(&e.row(0)[1..4], &[0.0, 0.0, 0.0]);
        assert!(e.row(0)[4..].iter().any(|&v| v != 0.0));
        assert_eq!(e[(0, 0)], 5.0);
    }

    #[test]
    fn no_categorical_columns_passes_numeric_through() {
        let ds = dataset("a,b,y\n1,2,0\n3,4,0\n", &[]);
        let table = EmbeddingTable {
            dim: 8,
            vocabulary: vec![],
            main: Matrix::zeros(0, 8),
            context: Matrix::zeros(0, 8),
            main_bias: vec![],
            context_bias: vec![],
            history: vec![],
        };
        assert_eq!(embed_dataset(&ds, &table), ds.numeric);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = dataset("c1,c2,c3,y\na,b,c,0\na,d,c,0\ne,b,f,0\n", &["c1", "c2", "c3"]);
        let c = build_cooccurrence(&ds).unwrap();
        let cfg = GloveConfig { epochs: 20, ..GloveConfig::default() };
        assert_eq!(train_glove(&c, 4, &cfg).unwrap(), train_glove(&c, 4, &cfg).unwrap());
    }

    proptest! {
        #[test]
        fn cooccurrence_is_symmetric(rows in proptest::collection::vec((0u8..3, 0u8..3, 0u8..4), 1..30)) {
            let mut csv = String::from("c1,c2,c3,y\n");
            for (a, b, c) in &rows {
                csv.push_str(&format!("a{a},b{b},c{c},0\n"));
            }
            let ds = dataset(&csv, &["c1", "c2", "c3"]);
            let c = build_cooccurrence(&ds).unwrap();
            for i in 0..c.len() {
                prop_assert_eq!(c.get(i, i), 0);
                for j in 0..c.len() {
                    prop_assert_eq!(c.get(i, j), c.get(j, i));
                }
            }
            // three tokens per record give three pairs
            let total: u64 = (0..c.len()).flat_map(|i| (0..c.len()).map(move |j| (i, j))).map(|(i, j)| c.get(i, j)).sum();
            prop_assert_eq!(total, 2 * 3 * rows.len() as u64);
        }

        #[test]
        fn glove_loss_decreases(rows in proptest::collection::vec((0u8..3, 0u8..3), 2..25), seed in any::<u64>()) {
            let mut csv = String::from("c1,c2,y\n");
            for (a, b) in &rows {
                csv.push_str(&format!("a{a},b{b},0\n"));
            }
            let ds = dataset(&csv, &["c1", "c2"]);
            let c = build_cooccurrence(&ds).unwrap();
            let cfg = GloveConfig { epochs: 30, seed, ..GloveConfig::default() };
            let table = train_glove(&c, 4, &cfg).unwrap();
            prop_assert!(table.history.last().unwrap() < &table.history[0]);
        }
    }
}
