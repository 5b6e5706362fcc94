//! Greedy atom selection: matching pursuit, orthogonal matching pursuit and
//! least-squares OMP.
//!
//! Ties in every argmax/argmin are broken toward the lowest atom index.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{restricted_least_squares, Frame, Signal, SparseCode};
use crate::recovery::{Diagnostic, RecoveryResult};

/// When greedy selection should stop.
///
/// `residual_tol` is relative: iteration stops once `‖r‖ ≤ residual_tol·‖s‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_sparsity: Option<usize>,
    pub residual_tol: Option<f64>,
    pub max_iterations: usize,
}

pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-10;

impl StopRule {
    /// Residual tolerance `1e-10` and at most `n` atoms.
    pub fn default_for(n: usize) -> Self {
        StopRule {
            max_sparsity: Some(n),
            residual_tol: Some(DEFAULT_RESIDUAL_TOL),
            max_iterations: (10 * n).max(1000),
        }
    }

    pub fn sparsity(k: usize) -> Self {
        StopRule {
            max_sparsity: Some(k),
            residual_tol: Some(DEFAULT_RESIDUAL_TOL),
            max_iterations: (10 * k).max(1000),
        }
    }

    pub fn iterations(t: usize) -> Self {
        StopRule { max_sparsity: None, residual_tol: None, max_iterations: t }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(tol) = self.residual_tol {
            if !(tol >= 0.0 && tol.is_finite()) {
                return Err(Error::invalid(format!("residual_tol must be finite and >= 0, got {tol}")));
            }
        }
        Ok(())
    }

    fn satisfied(&self, residual: f64, s_norm: f64, support: usize) -> bool {
        if let Some(tol) = self.residual_tol {
            if residual <= tol * s_norm {
                return true;
            }
        }
        matches!(self.max_sparsity, Some(k) if support >= k)
    }

    fn only_iteration_cap(&self) -> bool {
        self.max_sparsity.is_none() && self.residual_tol.is_none()
    }
}

fn argmax_abs(values: &DVector<f64>, skip: &[bool]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in values.iter().enumerate() {
        if skip.get(j).copied().unwrap_or(false) {
            continue;
        }
        let a = v.abs();
        if best.map_or(true, |(_, b)| a > b) {
            best = Some((j, a));
        }
    }
    best
}

/// Relative correlation below which no atom is worth adding.
const NO_PROGRESS_RTOL: f64 = 1e-14;

pub fn mp(phi: &Frame, s: &Signal, stop: &StopRule) -> Result<RecoveryResult> {
    phi.require_unit_norm()?;
    phi.check_signal(s)?;
    stop.validate()?;
    let m = phi.cols();
    let s_norm = s.norm();
    let mut coeffs = vec![0.0; m];
    let mut support_size = 0;
    let mut residual = s.clone();
    let mut trace = Vec::new();
    let mut selected = Vec::new();
    let mut converged = false;
    let mut stalled = false;
    let mut iterations = 0;
    loop {
        let rnorm = residual.norm();
        if stop.satisfied(rnorm, s_norm, support_size) {
            converged = true;
            break;
        }
        if iterations >= stop.max_iterations {
            converged = stop.only_iteration_cap();
            break;
        }
        let corr = phi.matrix().tr_mul(&residual);
        let (j, best) = argmax_abs(&corr, &[]).expect("frame has at least one atom");
        if best <= NO_PROGRESS_RTOL * s_norm {
            stalled = true;
            break;
        }
        let c = corr[j];
        if coeffs[j] == 0.0 {
            support_size += 1;
        }
        coeffs[j] += c;
        residual.axpy(-c, &phi.atom(j), 1.0);
        iterations += 1;
        trace.push(residual.norm());
        selected.push(j);
    }
    let mut result =
        RecoveryResult::new(phi, s, SparseCode::from_dense(coeffs), iterations, converged, trace);
    result.selected = selected;
    if stalled {
        result.note(Diagnostic::NoProgress);
    }
    if !converged && !stalled {
        result.note(Diagnostic::IterationCapReached);
    }
    Ok(result)
}

/// How the next atom is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Selection {
    /// Largest `|⟨r, φ_j⟩|`.
    Correlation,
    /// Smallest residual after a full least-squares fit on `Λ ∪ {j}`.
    LeastSquares,
}

pub fn omp(phi: &Frame, s: &Signal, stop: &StopRule) -> Result<RecoveryResult> {
    orthogonal_pursuit(phi, s, stop, Selection::Correlation)
}

pub fn ls_omp(phi: &Frame, s: &Signal, stop: &StopRule) -> Result<RecoveryResult> {
    orthogonal_pursuit(phi, s, stop, Selection::LeastSquares)
}

/// Orthonormal basis of the selected atoms, grown by twice-applied Gram–Schmidt.
struct Basis {
    q: Vec<DVector<f64>>,
}

impl Basis {
    fn project_out(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut p = v.clone();
        for _ in 0..2 {
            for q in &self.q {
                let c = q.dot(&p);
                p.axpy(-c, q, 1.0);
            }
        }
        p
    }

    fn push(&mut self, v: &DVector<f64>) {
        let p = self.project_out(v);
        let norm = p.norm();
        if norm > 1e-10 * v.norm() {
            self.q.push(p / norm);
        }
    }
}

fn orthogonal_pursuit(
    phi: &Frame,
    s: &Signal,
    stop: &StopRule,
    selection: Selection,
) -> Result<RecoveryResult> {
    phi.require_unit_norm()?;
    phi.check_signal(s)?;
    stop.validate()?;
    let m = phi.cols();
    let mat: &DMatrix<f64> = phi.matrix();
    let s_norm = s.norm();
    let mut in_support = vec![false; m];
    let mut support: Vec<usize> = Vec::new();
    let mut coeffs = DVector::zeros(0);
    let mut residual = s.clone();
    let mut basis = Basis { q: Vec::new() };
    let mut trace = Vec::new();
    let mut rank_deficient = false;
    let mut stalled = false;
    let mut converged = false;

    loop {
        let rnorm = residual.norm();
        if stop.satisfied(rnorm, s_norm, support.len()) {
            converged = true;
            break;
        }
        if support.len() >= stop.max_iterations.min(m) {
            converged = stop.only_iteration_cap();
            break;
        }
        let corr = mat.tr_mul(&residual);
        let progress = argmax_abs(&corr, &in_support)
            .filter(|&(_, c)| c > NO_PROGRESS_RTOL * s_norm);
        let pick = match selection {
            Selection::Correlation => progress.map(|(j, _)| j),
            Selection::LeastSquares if progress.is_none() => None,
            Selection::LeastSquares => {
                let r2 = rnorm * rnorm;
                let mut best: Option<(usize, f64)> = None;
                for j in (0..m).filter(|&j| !in_support[j]) {
                    let atom = DVector::from_column_slice(mat.column(j).as_slice());
                    let p = basis.project_out(&atom);
                    let pn2 = p.norm_squared();
                    let new_r2 = if pn2 > 1e-20 {
                        (r2 - p.dot(&residual).powi(2) / pn2).max(0.0)
                    } else {
                        r2
                    };
                    if best.map_or(true, |(_, b)| new_r2 < b) {
                        best = Some((j, new_r2));
                    }
                }
                best.map(|(j, _)| j)
            }
        };
        let Some(j) = pick else {
            stalled = true;
            break;
        };
        in_support[j] = true;
        support.push(j);
        if selection == Selection::LeastSquares {
            basis.push(&DVector::from_column_slice(mat.column(j).as_slice()));
        }
        let (x, flagged) = restricted_least_squares(mat, &support, s)?;
        rank_deficient |= flagged;
        coeffs = x;
        residual = s - phi.select(&support) * &coeffs;
        trace.push(residual.norm());
    }

    let code = SparseCode::from_support(m, &support, coeffs.as_slice());
    let iterations = support.len();
    let mut result = RecoveryResult::new(phi, s, code, iterations, converged, trace);
    result.selected = support;
    if rank_deficient {
        result.note(Diagnostic::RankDeficientSubproblem);
    }
    if stalled {
        result.note(Diagnostic::NoProgress);
    }
    if !converged && !stalled {
        result.note(Diagnostic::IterationCapReached);
    }
    Ok(result)
}
