//! Brute-force oracles and small statistics helpers shared by the
//! integration tests. Nothing here touches the library's factorizations.

#![allow(dead_code)]

use geomc_core::DenseMatrix;

/// Row-major copy for the elimination routines.
fn to_rows(a: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..a.rows()).map(|i| a.row(i)).collect()
}

/// `A⁻¹B` by Gauss–Jordan elimination with partial pivoting.
pub fn gj_solve(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    let m = b.cols();
    let mut aug: Vec<Vec<f64>> = to_rows(a)
        .into_iter()
        .enumerate()
        .map(|(i, mut row)| {
            row.extend(b.row(i));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        aug.swap(col, piv);
        let d = aug[col][col];
        assert!(d != 0.0, "singular matrix in oracle");
        for v in aug[col].iter_mut() {
            *v /= d;
        }
        let pivot_row = aug[col].clone();
        for (i, row) in aug.iter_mut().enumerate() {
            if i != col {
                let f = row[col];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
    }
    DenseMatrix::from_fn(n, m, |i, j| aug[i][n + j])
}

pub fn gj_inverse(a: &DenseMatrix) -> DenseMatrix {
    gj_solve(a, &DenseMatrix::identity(a.rows()))
}

pub fn gj_solve_vec(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    gj_solve(a, &DenseMatrix::column_vector(b.to_vec())).into_vec()
}

/// `log|det A|` by LU with partial pivoting.
pub fn lu_log_abs_det(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut m = to_rows(a);
    let mut acc = 0.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let d = m[col][col];
        acc += d.abs().ln();
        for i in col + 1..n {
            let f = m[i][col] / d;
            for j in col..n {
                m[i][j] -= f * m[col][j];
            }
        }
    }
    acc
}

/// Determinant by cofactor expansion (n ≤ 6).
pub fn cofactor_det(a: &DenseMatrix) -> f64 {
    fn rec(m: &[Vec<f64>]) -> f64 {
        let n = m.len();
        if n == 1 {
            return m[0][0];
        }
        (0..n)
            .map(|j| {
                let minor: Vec<Vec<f64>> = m[1..]
                    .iter()
                    .map(|r| r.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, v)| *v).collect())
                    .collect();
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][j] * rec(&minor)
            })
            .sum()
    }
    rec(&to_rows(a))
}

pub fn quad(a_inv: &DenseMatrix, v: &[f64]) -> f64 {
    let av = a_inv.matvec(v).unwrap();
    v.iter().zip(av).map(|(x, y)| x * y).sum()
}

/// `|a − b| / max(|b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Max elementwise difference relative to the largest oracle entry.
pub fn rel_err_mat(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let scale = b.max_abs().max(f64::MIN_POSITIVE);
    a.sub(b).unwrap().max_abs() / scale
}

pub fn rel_err_vec(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Type-7 sample quantile.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Kolmogorov–Smirnov distance between the sample and a continuous CDF.
pub fn ks_distance(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Rows `idx` of column `j`.
pub fn column_at(m: &DenseMatrix, j: usize, idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| m[(i, j)]).collect()
}
