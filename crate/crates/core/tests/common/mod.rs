#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use safe_nav::Ellipsoid;

pub fn dvec(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

/// Orthogonal matrix from the QR factor of a random square matrix.
pub fn orthogonal(n: usize, entries: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_column_slice(n, n, &entries[..n * n]) + DMatrix::identity(n, n) * 0.1;
    m.qr().q()
}

/// `R diag(1/r²) Rᵀ` with semi-axes `radii`.
pub fn spd_from(rot: &DMatrix<f64>, radii: &[f64]) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        radii.len(),
        radii.iter().map(|r| 1.0 / (r * r)),
    ));
    let a = rot * d * rot.transpose();
    (&a + a.transpose()) * 0.5
}

/// Random ellipsoid in dimension `n` (1..=3) with a random center and orientation.
pub fn ellipsoid(n: usize) -> impl Strategy<Value = Ellipsoid> {
    (
        prop::collection::vec(-5.0..5.0f64, n),
        prop::collection::vec(0.3..4.0f64, n),
        prop::collection::vec(-1.0..1.0f64, n * n),
    )
        .prop_map(move |(c, r, m)| Ellipsoid::new(dvec(&c), spd_from(&orthogonal(n, &m), &r)).unwrap())
}

pub fn vector(n: usize, lim: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-lim..lim, n).prop_map(DVector::from_vec)
}

pub fn rel_close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(scale)
}
