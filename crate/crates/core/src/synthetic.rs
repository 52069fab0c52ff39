//! Synthetic tabular data with known latent structure.

use serde::{Deserialize, Serialize};

use crate::dataio::{CategoricalColumn, ColumnKind, ColumnSpec, FeatureSchema, TabularDataset};
use crate::error::{Error, Result};
use crate::numkit::{dot, Distribution, Matrix, RngStream};

const STANDARD_NORMAL: Distribution = Distribution::Gaussian { mean: 0.0, sd: 1.0 };

/// Features, target, and the latent factors that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub z: Matrix,
}

impl SyntheticData {
    /// Numeric columns `x1..xp` plus target `y`.
    pub fn to_dataset(&self) -> TabularDataset {
        let names: Vec<String> = (1..=self.x.cols()).map(|j| format!("x{j}")).collect();
        let mut columns: Vec<ColumnSpec> = names
            .iter()
            .map(|name| ColumnSpec {
                name: name.clone(),
                kind: ColumnKind::Numeric,
                missing: Vec::new(),
            })
            .collect();
        columns.push(ColumnSpec {
            name: "y".into(),
            kind: ColumnKind::Target,
            missing: Vec::new(),
        });
        TabularDataset {
            schema: FeatureSchema::new(columns).expect("one target, unique names"),
            numeric_names: names,
            numeric_missing: vec![false; self.x.as_slice().len()],
            numeric: self.x.clone(),
            categorical: Vec::new(),
            target: self.y.clone(),
        }
    }
}

/// Latent-factor generator: `z ~ N(0, I)`, each feature a smooth nonlinear
/// function of a random projection of `z` plus Gaussian noise, and `y`
/// linear in `z` plus noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentFactorSpec {
    pub n: usize,
    pub p: usize,
    pub latent: usize,
    pub noise_sd: f64,
    pub target_noise_sd: f64,
    pub seed: u64,
}

impl Default for LatentFactorSpec {
    fn default() -> Self {
        LatentFactorSpec {
            n: 1000,
            p: 100,
            latent: 4,
            noise_sd: 1.0,
            target_noise_sd: 0.1,
            seed: 0,
        }
    }
}

/// Elementwise feature maps cycled across columns.
fn expand(kind: usize, u: f64) -> f64 {
    match kind % 4 {
        0 => (1.5 * u).tanh(),
        1 => u * u - 1.0,
        2 => (u).sin() * 1.5,
        _ => u.abs() - 0.8,
    }
}

pub fn latent_factor(spec: &LatentFactorSpec) -> Result<SyntheticData> {
    if spec.n == 0 || spec.p == 0 || spec.latent == 0 {
        return Err(Error::param("latent-factor data needs n, p, latent ≥ 1"));
    }
    if !(spec.noise_sd >= 0.0 && spec.target_noise_sd >= 0.0) {
        return Err(Error::param("noise levels must be ≥ 0"));
    }
    let root = RngStream::new(spec.seed);
    let z = root.derive(0).sample(STANDARD_NORMAL, spec.n, spec.latent)?;
    // Unit-norm projections so every u has unit variance.
    let mut proj = root.derive(1).sample(STANDARD_NORMAL, spec.p, spec.latent)?;
    for j in 0..spec.p {
        let row = proj.row_mut(j);
        let norm = dot(row, row).sqrt().max(1e-12);
        row.iter_mut().for_each(|v| *v /= norm);
    }
    let noise = root.derive(2).sample(STANDARD_NORMAL, spec.n, spec.p)?;
    let mut x = Matrix::zeros(spec.n, spec.p);
    for i in 0..spec.n {
        for j in 0..spec.p {
            let u = dot(z.row(i), proj.row(j));
            x[(i, j)] = expand(j, u) + spec.noise_sd * noise[(i, j)];
        }
    }
    let beta: Vec<f64> = (0..spec.latent).map(|k| 1.0 + k as f64 * 0.5).collect();
    let target_noise = root.derive(3).sample(STANDARD_NORMAL, spec.n, 1)?;
    let y = (0..spec.n)
        .map(|i| dot(z.row(i), &beta) + spec.target_noise_sd * target_noise[(i, 0)])
        .collect();
    Ok(SyntheticData { x, y, z })
}

/// Linear planted model `x = z Wᵀ + noise`, `y = Σ z_k + noise`, with
/// `W` entries drawn from `N(0, 1)`.
pub fn planted_linear(n: usize, p: usize, latent: usize, noise_sd: f64, seed: u64) -> Result<SyntheticData> {
    if n == 0 || p == 0 || latent == 0 || !(noise_sd >= 0.0) {
        return Err(Error::param("planted data needs n, p, latent ≥ 1 and noise ≥ 0"));
    }
    let root = RngStream::new(seed);
    let z = root.derive(0).sample(STANDARD_NORMAL, n, latent)?;
    let w = root.derive(1).sample(STANDARD_NORMAL, p, latent)?;
    let noise = root.derive(2).sample(STANDARD_NORMAL, n, p)?.scale(noise_sd);
    let x = z.matmul_nt(&w)?.add(&noise)?;
    let y = z.iter_rows().map(|r| r.iter().sum()).collect();
    Ok(SyntheticData { x, y, z })
}

/// Small EHR-like table with two numeric columns, two categorical columns
/// and a sprinkling of missing cells; the target depends on all four.
pub fn mixed_records(n: usize, missing_rate: f64, seed: u64) -> Result<TabularDataset> {
    if n == 0 || !(0.0..1.0).contains(&missing_rate) {
        return Err(Error::param("mixed records need n ≥ 1 and missing rate in [0, 1)"));
    }
    let mut rng = RngStream::new(seed);
    let wards = ["icu", "cardio", "general", "surgery"];
    let sexes = ["f", "m"];
    let mut numeric = Matrix::zeros(n, 2);
    let mut numeric_missing = vec![false; 2 * n];
    let mut ward_codes = Vec::with_capacity(n);
    let mut sex_codes = Vec::with_capacity(n);
    let mut ward_missing = vec![false; n];
    let mut target = Vec::with_capacity(n);
    for i in 0..n {
        let age = 60.0 + 15.0 * rng.gaussian();
        let bmi = 27.0 + 4.0 * rng.gaussian();
        let ward = rng.index(wards.len());
        let sex = rng.index(sexes.len());
        let stay = 2.0 + 0.05 * (age - 60.0) + 0.1 * (bmi - 27.0) + [3.0, 1.5, 0.0, 2.0][ward] + 0.5 * sex as f64
            + 0.5 * rng.gaussian();
        numeric[(i, 0)] = age;
        numeric[(i, 1)] = bmi;
        for c in 0..2 {
            if rng.uniform() < missing_rate {
                numeric_missing[2 * i + c] = true;
                numeric[(i, c)] = 0.0;
            }
        }
        ward_missing[i] = rng.uniform() < missing_rate;
        ward_codes.push(ward as u32);
        sex_codes.push(sex as u32);
        target.push(stay);
    }
    let spec = |name: &str, kind| ColumnSpec {
        name: name.into(),
        kind,
        missing: vec!["NA".into()],
    };
    let schema = FeatureSchema::new(vec![
        spec("age", ColumnKind::Numeric),
        spec("ward", ColumnKind::Categorical),
        spec("bmi", ColumnKind::Numeric),
        spec("sex", ColumnKind::Categorical),
        spec("length_of_stay", ColumnKind::Target),
    ])?;
    let ds = TabularDataset {
        schema,
        numeric_names: vec!["age".into(), "bmi".into()],
        numeric,
        numeric_missing,
        categorical: vec![
            CategoricalColumn {
                name: "ward".into(),
                levels: wards.iter().map(|s| s.to_string()).collect(),
                codes: ward_codes,
                missing: ward_missing,
            },
            CategoricalColumn {
                name: "sex".into(),
                levels: sexes.iter().map(|s| s.to_string()).collect(),
                codes: sex_codes,
                missing: vec![false; n],
            },
        ],
        target,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{read_csv, write_csv};

    #[test]
    fn latent_factor_shapes_and_determinism() {
        let spec = LatentFactorSpec { n: 50, p: 12, ..Default::default() };
        let a = latent_factor(&spec).unwrap();
        assert_eq!(a.x.shape(), (50, 12));
        assert_eq!(a.z.shape(), (50, 4));
        assert_eq!(a, latent_factor(&spec).unwrap());
        assert_ne!(a, latent_factor(&LatentFactorSpec { seed: 1, ..spec }).unwrap());
    }

    #[test]
    fn noiseless_target_is_linear_in_latents() {
        let spec = LatentFactorSpec { n: 20, p: 3, target_noise_sd: 0.0, ..Default::default() };
        let d = latent_factor(&spec).unwrap();
        for (i, y) in d.y.iter().enumerate() {
            let r = d.z.row(i);
            assert!((y - (r[0] + 1.5 * r[1] + 2.0 * r[2] + 2.5 * r[3])).abs() < 1e-12);
        }
    }

    #[test]
    fn planted_noiseless_is_exact_projection() {
        let d = planted_linear(10, 5, 2, 0.0, 3).unwrap();
        let w = RngStream::new(3).derive(1).sample(STANDARD_NORMAL, 5, 2).unwrap();
        assert!(d.x.max_abs_diff(&d.z.matmul_nt(&w).unwrap()) < 1e-12);
    }

    #[test]
    fn mixed_records_round_trip_through_csv() {
        let ds = mixed_records(40, 0.1, 5).unwrap();
        assert!(ds.missing_count() > 0);
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &ds.schema).unwrap();
        assert_eq!(back.numeric_missing, ds.numeric_missing);
        assert_eq!(back.target, ds.target);
    }
}
