//! Small dense helpers shared by the geometry, CLF and QP modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Largest |m_ij - m_ji|.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// (m + mᵀ) / 2. Exactly symmetric entries are returned bit-unchanged.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let a = m[(i, j)];
            let b = m[(j, i)];
            let s = if a == b { a } else { 0.5 * (a + b) };
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}

/// Lower Cholesky factor of a symmetric matrix, or the index and value of the
/// first non-positive pivot.
pub fn cholesky(m: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, (usize, f64)> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err((j, d));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Checks that `m` is square, symmetric to `1e-12 * max|m|`, and positive
/// definite by factorization.
pub fn require_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::param(what, format!("not square ({}x{})", m.nrows(), m.ncols())));
    }
    let asym = asymmetry(m);
    if asym > 1e-12 * max_abs(m) {
        return Err(Error::NotSymmetric {
            what: what.to_string(),
            asymmetry: asym,
        });
    }
    cholesky(m).map_err(|(pivot, value)| Error::NotPositiveDefinite {
        what: what.to_string(),
        pivot,
        value,
    })
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let s = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// xᵀ M y
pub fn bilinear(x: &DVector<f64>, m: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        if x[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..y.len() {
            row += m[(i, j)] * y[j];
        }
        acc += x[i] * row;
    }
    acc
}

pub fn check_dim(what: &'static str, expected: usize, v: &DVector<f64>) -> Result<()> {
    if v.len() != expected {
        return Err(Error::dim(what, expected, v.len()));
    }
    Ok(())
}

/// Builds a matrix from row-major nested rows, rejecting ragged input.
pub fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Schema(format!("{what}: ragged matrix rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reports_failing_pivot() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (pivot, value) = cholesky(&m).unwrap_err();
        assert_eq!(pivot, 1);
        assert!((value + 3.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let l = cholesky(&m).unwrap();
        assert!((&l * l.transpose() - &m).abs().max() < 1e-14);
    }

    #[test]
    fn symmetrize_keeps_exact_entries() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 2.0]);
        assert_eq!(symmetrize(&m), m);
    }

    #[test]
    fn require_spd_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(require_spd(&m, "m"), Err(Error::NotSymmetric { .. })));
    }
}
