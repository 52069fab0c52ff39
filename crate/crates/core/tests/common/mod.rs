//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use deeprep::neural::MlpNetwork;
use deeprep::{Matrix, RngStream};

/// Central finite-difference gradient of `loss` with respect to every
/// parameter of `net`, in `params_mut` order.
pub fn numeric_gradient(net: &MlpNetwork, h: f64, loss: impl Fn(&MlpNetwork) -> f64) -> Vec<f64> {
    let sizes: Vec<usize> = net.clone().params_mut().iter().map(|s| s.len()).collect();
    let mut out = Vec::new();
    for (block, &len) in sizes.iter().enumerate() {
        for k in 0..len {
            let mut plus = net.clone();
            plus.params_mut()[block][k] += h;
            let mut minus = net.clone();
            minus.params_mut()[block][k] -= h;
            out.push((loss(&plus) - loss(&minus)) / (2.0 * h));
        }
    }
    out
}

/// `‖a − b‖ / (‖a‖ + ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let denom = norm(a) + norm(b);
    if denom == 0.0 {
        0.0
    } else {
        norm(&diff) / denom
    }
}

pub fn flatten(slices: Vec<&[f64]>) -> Vec<f64> {
    slices.into_iter().flatten().copied().collect()
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = RngStream::new(seed);
    let data = (0..rows * cols).map(|_| rng.gaussian()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Columns centred, orthogonalised by Gram-Schmidt and scaled so that
/// `XᵀX = n·I`.
pub fn orthonormal_design(n: usize, p: usize, seed: u64) -> Matrix {
    let raw = gaussian_matrix(n, p, seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    for j in 0..p {
        let mut v = raw.col_values(j);
        let mean = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        for q in &cols {
            let proj: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= proj * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
    }
    let scale = (n as f64).sqrt();
    let mut m = Matrix::zeros(n, p);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            m[(i, j)] = c[i] * scale;
        }
    }
    m
}

pub fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub fn column_means(m: &Matrix) -> Vec<f64> {
    (0..m.cols())
        .map(|j| m.col_values(j).iter().sum::<f64>() / m.rows() as f64)
        .collect()
}

pub fn column_variances(m: &Matrix) -> Vec<f64> {
    let means = column_means(m);
    (0..m.cols())
        .map(|j| m.col_values(j).iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / m.rows() as f64)
        .collect()
}

/// Accuracy of a logistic-regression probe fit by full-batch gradient
/// descent on `(x, labels)` and scored on the same rows.
pub fn logistic_probe_accuracy(x: &Matrix, labels: &[f64], epochs: usize, lr: f64) -> f64 {
    let (n, p) = (x.rows(), x.cols());
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    for _ in 0..epochs {
        let mut gw = vec![0.0; p];
        let mut gb = 0.0;
        for i in 0..n {
            let z: f64 = x.row(i).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let e = sig(z) - labels[i];
            gw.iter_mut().zip(x.row(i)).for_each(|(g, a)| *g += e * a);
            gb += e;
        }
        w.iter_mut().zip(&gw).for_each(|(wj, g)| *wj -= lr * g / n as f64);
        b -= lr * gb / n as f64;
    }
    let correct = (0..n)
        .filter(|&i| {
            let z: f64 = x.row(i).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            (sig(z) >= 0.5) == (labels[i] == 1.0)
        })
        .count();
    correct as f64 / n as f64
}
