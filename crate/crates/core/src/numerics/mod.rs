//! Dense linear algebra, distance kernels, normalization and a
//! finite-difference gradient oracle.
//!
//! Everything here is a pure function over `f64` data. Distance-matrix
//! entries are computed independently (no shared accumulators), so results
//! do not depend on evaluation order.

mod rng;

pub use rng::{derive_seed, SeededRng};

use thiserror::Error;

/// Norm guard for normalization paths. Fixed; file formats and fused
/// features depend on it staying put.
pub const NORM_EPSILON: f64 = 1e-12;

/// Default step for [`finite_diff_grad`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("vector norm {norm:e} is at or below the {NORM_EPSILON:e} guard")]
    NormTooSmall { norm: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("function evaluated to a non-finite value at coordinate {coord}")]
    NonFiniteEvaluation { coord: usize },
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data. Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `v` to unit L2 norm. Direction is preserved.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let norm = l2_norm(v);
    // Also traps NaN norms from non-finite input.
    if !norm.is_finite() || norm <= NORM_EPSILON {
        return Err(NumericsError::NormTooSmall { norm });
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// All-pairs Euclidean distances: entry (i, j) is the distance between row i
/// of `a` and row j of `b`. Each entry is computed independently.
pub fn pairwise_euclidean(a: &Matrix, b: &Matrix) -> Result<Matrix, NumericsError> {
    if a.cols() != b.cols() {
        return Err(NumericsError::DimMismatch {
            left: a.cols(),
            right: b.cols(),
        });
    }
    let mut out = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            out.set(i, j, euclidean(a.row(i), b.row(j)));
        }
    }
    Ok(out)
}

/// All-pairs dot products. A similarity: ranking sorts it descending.
pub fn dot_product_similarity(a: &Matrix, b: &Matrix) -> Result<Matrix, NumericsError> {
    if a.cols() != b.cols() {
        return Err(NumericsError::DimMismatch {
            left: a.cols(),
            right: b.cols(),
        });
    }
    let mut out = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            out.set(i, j, dot(a.row(i), b.row(j)));
        }
    }
    Ok(out)
}

/// Central-difference gradient of a scalar function: coordinate i gets
/// (f(x + h e_i) - f(x - h e_i)) / 2h. The verification oracle for every
/// hand-written backward pass in this crate.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>, NumericsError>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NumericsError::NonFiniteEvaluation { coord: i });
        }
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_scales_to_unit() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-12);
        assert!((v[1] - 0.8).abs() < 1e-12);
        assert!((l2_norm(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_keeps_unit_vectors() {
        let v = l2_normalize(&[1.0, 0.0]).unwrap();
        assert_eq!(v, vec![1.0, 0.0]);
    }

    #[test]
    fn normalize_rejects_degenerate_input() {
        assert!(matches!(
            l2_normalize(&[0.0, 0.0]),
            Err(NumericsError::NormTooSmall { .. })
        ));
    }

    #[test]
    fn normalize_is_idempotent() {
        let mut rng = SeededRng::new(11);
        for _ in 0..100 {
            let v: Vec<f64> = (0..6).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let once = l2_normalize(&v).unwrap();
            let twice = l2_normalize(&once).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn pairwise_euclidean_matches_hand_case() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]);
        let d = pairwise_euclidean(&m, &m).unwrap();
        assert_eq!(d.row(0), &[0.0, 5.0]);
        assert_eq!(d.row(1), &[5.0, 0.0]);
    }

    #[test]
    fn pairwise_euclidean_single_row_self_distance() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]);
        let d = pairwise_euclidean(&m, &m).unwrap();
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn pairwise_euclidean_swap_is_transpose() {
        let mut rng = SeededRng::new(3);
        let a = random_matrix(&mut rng, 4, 3);
        let b = random_matrix(&mut rng, 5, 3);
        let ab = pairwise_euclidean(&a, &b).unwrap();
        let ba = pairwise_euclidean(&b, &a).unwrap();
        assert_eq!(ab, ba.transpose());
    }

    #[test]
    fn pairwise_euclidean_rejects_dim_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 4);
        assert!(matches!(
            pairwise_euclidean(&a, &b),
            Err(NumericsError::DimMismatch { left: 3, right: 4 })
        ));
    }

    #[test]
    fn pairwise_entries_nonnegative_symmetric_triangle() {
        let mut rng = SeededRng::new(5);
        for _ in 0..50 {
            let m = random_matrix(&mut rng, 6, 4);
            let d = pairwise_euclidean(&m, &m).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    assert!(d.get(i, j) >= 0.0);
                    assert_eq!(d.get(i, j), d.get(j, i));
                }
            }
            for _ in 0..20 {
                let (i, j, k) = (rng.index(6), rng.index(6), rng.index(6));
                assert!(d.get(i, k) <= d.get(i, j) + d.get(j, k) + 1e-12);
            }
        }
    }

    #[test]
    fn dot_product_scalar_case() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]);
        let b = Matrix::from_rows(&[vec![3.0, 4.0]]);
        assert_eq!(dot_product_similarity(&a, &b).unwrap().get(0, 0), 11.0);
    }

    #[test]
    fn dot_product_orthogonal_is_zero() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0]]);
        let b = Matrix::from_rows(&[vec![0.0, 1.0]]);
        assert_eq!(dot_product_similarity(&a, &b).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn unit_sphere_distance_dot_identity() {
        let mut rng = SeededRng::new(7);
        for _ in 0..200 {
            let u: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
            let v: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
            let u = l2_normalize(&u).unwrap();
            let v = l2_normalize(&v).unwrap();
            let d2 = euclidean(&u, &v).powi(2);
            assert!((d2 - (2.0 - 2.0 * dot(&u, &v))).abs() < 1e-10);
        }
    }

    #[test]
    fn finite_diff_matches_analytic_quadratic() {
        let g = finite_diff_grad(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], DEFAULT_FD_STEP)
            .unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6);
        assert!((g[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn finite_diff_constant_function_is_zero() {
        let g = finite_diff_grad(|_| 42.0, &[1.0, -1.0, 0.5], DEFAULT_FD_STEP).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn finite_diff_linear_function_recovers_coefficients() {
        let c = [2.5, -1.25, 0.5];
        let g = finite_diff_grad(
            |x| x.iter().zip(&c).map(|(v, ci)| v * ci).sum(),
            &[0.3, 0.7, -0.2],
            DEFAULT_FD_STEP,
        )
        .unwrap();
        for (gi, ci) in g.iter().zip(&c) {
            assert!((gi - ci).abs() < 1e-8);
        }
    }

    #[test]
    fn finite_diff_reports_non_finite_evaluation() {
        let r = finite_diff_grad(|x| x[0].ln(), &[0.0], 1e-5);
        assert!(matches!(r, Err(NumericsError::NonFiniteEvaluation { .. })));
    }

    pub(super) fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.uniform(-2.0, 2.0)).collect();
        Matrix::from_vec(rows, cols, data)
    }
}
