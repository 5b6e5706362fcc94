//! Dense linear-algebra contract shared by every solver.
//!
//! All matrices are column-major `f64` (`nalgebra::DMatrix`), so atom access
//! `frame.atom(i)` is a contiguous column view. The SVD kernel is nalgebra's
//! Golub–Kahan implementation; this module fixes the contract around it
//! (descending singular values, thin factors, explicit non-convergence).

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on column norms for a frame to count as unit-norm.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Relative singular-value threshold for rank decisions.
pub const RANK_RTOL: f64 = 1e-10;

/// Iteration cap handed to the SVD kernel.
pub const SVD_MAX_ITERATIONS: usize = 10_000;

pub type Signal = DVector<f64>;

/// An `n × m` real matrix whose columns are atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    matrix: DMatrix<f64>,
}

impl Frame {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::invalid("frame must have at least one row and one column"));
        }
        if let Some(pos) = matrix.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % matrix.nrows(), pos / matrix.nrows());
            return Err(Error::invalid(format!("non-finite entry at ({r}, {c})")));
        }
        Ok(Frame { matrix })
    }

    /// Builds a frame from row-major data, the natural order for literals.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries", rows * cols),
                found: format!("{} entries", data.len()),
            });
        }
        Frame::new(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn from_columns(columns: &[DVector<f64>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::invalid("frame needs at least one column"));
        }
        Frame::new(DMatrix::from_columns(columns))
    }

    pub fn identity(n: usize) -> Self {
        Frame { matrix: DMatrix::identity(n, n) }
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn atom(&self, i: usize) -> DVectorView<'_, f64> {
        self.matrix.column(i)
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.norm()).collect()
    }

    /// Columns scaled to unit ℓ2 norm. Fails on a zero column.
    pub fn normalized(&self) -> Result<Frame> {
        let mut matrix = self.matrix.clone();
        for (j, mut col) in matrix.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm == 0.0 {
                return Err(Error::ZeroColumn(j));
            }
            col /= norm;
        }
        Ok(Frame { matrix })
    }

    pub fn is_unit_norm(&self) -> bool {
        self.column_norms()
            .iter()
            .all(|n| (n - 1.0).abs() <= UNIT_NORM_TOL)
    }

    pub fn require_unit_norm(&self) -> Result<()> {
        for (column, norm) in self.column_norms().into_iter().enumerate() {
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::NotUnitNorm { column, norm });
            }
        }
        Ok(())
    }

    /// Dense submatrix of the given columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> DMatrix<f64> {
        self.matrix.select_columns(columns)
    }

    pub fn apply(&self, code: &SparseCode) -> Signal {
        let mut out = DVector::zeros(self.rows());
        for &i in code.support() {
            out.axpy(code.values()[i], &self.matrix.column(i), 1.0);
        }
        out
    }

    pub fn check_signal(&self, s: &Signal) -> Result<()> {
        if s.len() != self.rows() {
            return Err(Error::DimensionMismatch {
                expected: format!("signal of length {}", self.rows()),
                found: format!("length {}", s.len()),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("signal has non-finite entries"));
        }
        Ok(())
    }
}

/// A length-`m` coefficient vector with its exact support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCode {
    values: Vec<f64>,
    support: Vec<usize>,
}

impl SparseCode {
    pub fn zeros(len: usize) -> Self {
        SparseCode { values: vec![0.0; len], support: Vec::new() }
    }

    /// Support is every index with a non-zero entry.
    pub fn from_dense(values: Vec<f64>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        SparseCode { values, support }
    }

    /// Entries with `|v| <= threshold` are set to exactly zero.
    pub fn thresholded(values: &[f64], threshold: f64) -> Self {
        SparseCode::from_dense(
            values
                .iter()
                .map(|&v| if v.abs() > threshold { v } else { 0.0 })
                .collect(),
        )
    }

    pub fn from_support(len: usize, support: &[usize], coeffs: &[f64]) -> Self {
        let mut values = vec![0.0; len];
        for (&i, &c) in support.iter().zip(coeffs) {
            values[i] = c;
        }
        SparseCode::from_dense(values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// The ℓ0 pseudo-norm.
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

/// Thin SVD `A = U · diag(σ) · Vᵀ` with `σ` non-increasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn rank(&self, rtol: f64) -> usize {
        let smax = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .filter(|&&s| s > rtol * smax && s > 0.0)
            .count()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

/// Convergence tolerance handed to nalgebra; its own default.
const SVD_EPS: f64 = 5.0 * f64::EPSILON;

/// Relative reconstruction error above which a decomposition is rejected.
const SVD_CHECK_RTOL: f64 = 1e-11;

/// Thin SVD with non-increasing singular values.
///
/// The Golub–Kahan result is checked by reconstruction; if the check fails
/// (nalgebra can mis-converge on nearly rank-deficient input) the matrix is
/// decomposed again by one-sided Jacobi.
pub fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::invalid("SVD of an empty matrix"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("SVD input has non-finite entries"));
    }
    let scale = a.norm();
    if let Some(dec) = golub_kahan(a) {
        if (dec.reconstruct() - a).norm() <= SVD_CHECK_RTOL * scale.max(f64::MIN_POSITIVE) {
            return Ok(dec);
        }
    }
    jacobi_svd(a)
}

fn golub_kahan(a: &DMatrix<f64>) -> Option<Svd> {
    let decomposition = a.clone().try_svd(true, true, SVD_EPS, SVD_MAX_ITERATIONS)?;
    let sv = &decomposition.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let u = decomposition.u.as_ref()?.select_columns(&order);
    let v = decomposition.v_t.as_ref()?.select_rows(&order).transpose();
    let singular_values = order.iter().map(|&i| sv[i]).collect();
    Some(Svd { u, singular_values, v })
}

/// One-sided (Hestenes) Jacobi SVD.
fn jacobi_svd(a: &DMatrix<f64>) -> Result<Svd> {
    let wide = a.nrows() < a.ncols();
    let mut w = if wide { a.transpose() } else { a.clone() };
    let (rows, cols) = w.shape();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    let mut converged = false;
    for _ in 0..SVD_MAX_ITERATIONS.min(200) {
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut w, &mut v] {
                    for r in 0..mat.nrows() {
                        let (x, y) = (mat[(r, i)], mat[(r, j)]);
                        mat[(r, i)] = c * x - s * y;
                        mat[(r, j)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence { max_iterations: 200 });
    }
    let norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let smax = norms[order[0]];
    let mut u = DMatrix::zeros(rows, cols);
    let mut filled = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        if norms[i] > f64::EPSILON * smax.max(f64::MIN_POSITIVE) * rows as f64 {
            u.set_column(k, &(w.column(i) / norms[i]));
            filled.push(k);
        }
    }
    // Complete U with an orthonormal basis for the missing directions.
    let mut e = 0;
    for k in 0..cols {
        if filled.contains(&k) {
            continue;
        }
        while e < rows {
            let mut cand = DVector::zeros(rows);
            cand[e] = 1.0;
            e += 1;
            for _ in 0..2 {
                for &f in &filled {
                    let proj = u.column(f).dot(&cand);
                    cand.axpy(-proj, &u.column(f), 1.0);
                }
            }
            let norm = cand.norm();
            if norm > 1e-8 {
                u.set_column(k, &(cand / norm));
                filled.push(k);
                break;
            }
        }
    }
    let singular_values: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let v = v.select_columns(&order);
    Ok(if wide {
        Svd { u: v, singular_values, v: u }
    } else {
        Svd { u, singular_values, v }
    })
}

pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(svd(a)?.singular_values)
}

fn pinv_cutoff(a: &DMatrix<f64>, smax: f64) -> f64 {
    a.nrows().max(a.ncols()) as f64 * f64::EPSILON * smax
}

/// Moore–Penrose pseudoinverse via the SVD.
pub fn pseudoinverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dec = svd(a)?;
    let smax = dec.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = pinv_cutoff(a, smax);
    let mut v_scaled = dec.v.clone();
    for (j, &s) in dec.singular_values.iter().enumerate() {
        let inv = if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 };
        v_scaled.column_mut(j).scale_mut(inv);
    }
    Ok(v_scaled * dec.u.transpose())
}

/// Minimum-norm least-squares solution `A† b`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: format!("right-hand side of length {}", a.nrows()),
            found: format!("length {}", b.len()),
        });
    }
    let dec = svd(a)?;
    let smax = dec.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = pinv_cutoff(a, smax);
    let utb = dec.u.tr_mul(b);
    let mut coeffs = DVector::zeros(utb.len());
    for (j, &s) in dec.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            coeffs[j] = utb[j] / s;
        }
    }
    Ok(&dec.v * coeffs)
}

/// Least squares restricted to a column subset.
///
/// Uses Householder QR; falls back to the pseudoinverse when the restricted
/// system is numerically rank deficient, in which case the flag is `true`.
pub fn restricted_least_squares(
    phi: &DMatrix<f64>,
    columns: &[usize],
    s: &DVector<f64>,
) -> Result<(DVector<f64>, bool)> {
    if columns.is_empty() {
        return Ok((DVector::zeros(0), false));
    }
    let sub = phi.select_columns(columns);
    if columns.len() <= sub.nrows() {
        let qr = sub.clone().qr();
        let r = qr.r();
        let diag_max = r.diagonal().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let well_posed = diag_max > 0.0
            && r.diagonal().iter().all(|d| d.abs() > RANK_RTOL * diag_max);
        if well_posed {
            let qtb = qr.q().tr_mul(s);
            if let Some(x) = r.solve_upper_triangular(&qtb) {
                if x.iter().all(|v| v.is_finite()) {
                    return Ok((x, false));
                }
            }
        }
    }
    Ok((least_squares(&sub, s)?, true))
}

pub fn column_rank(a: &DMatrix<f64>) -> Result<usize> {
    let sv = singular_values(a)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    Ok(sv.iter().filter(|&&s| s > RANK_RTOL * smax && s > 0.0).count())
}
