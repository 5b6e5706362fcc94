//! Basis pursuit, `min ‖α‖₁ s.t. Φα = s`, as a standard-form linear program.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lp::{lp_solve, StandardFormLp};
use crate::error::{Error, Result};
use crate::linalg::{Frame, Signal, SparseCode};
use crate::recovery::{Diagnostic, RecoveryResult};

/// Where the coefficients live inside the LP variable vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableLayout {
    /// `(α⁺, t⁺, α⁻, t⁻, α′, t′)`, six blocks of length `m`.
    ///
    /// Rows `0..m`: `α_i − t_i + α′_i = 0`; rows `m..2m`: `−α_i − t_i + t′_i = 0`;
    /// rows `2m..2m+n`: `Φα = s`; with `α = α⁺ − α⁻`, `t = t⁺ − t⁻` and cost
    /// `Σ (t⁺_i − t⁻_i)`.
    AuxiliaryBound { m: usize },
    /// `(α⁺, α⁻)` with cost `Σ (α⁺_i + α⁻_i)` and rows `Φα⁺ − Φα⁻ = s`.
    Split { m: usize },
}

impl VariableLayout {
    pub fn coefficients(&self, x: &DVector<f64>) -> Vec<f64> {
        match *self {
            VariableLayout::AuxiliaryBound { m } => (0..m).map(|i| x[i] - x[2 * m + i]).collect(),
            VariableLayout::Split { m } => (0..m).map(|i| x[i] - x[m + i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisPursuitLp {
    pub lp: StandardFormLp,
    pub layout: VariableLayout,
}

/// The ℓ1 program with an explicit bound variable `t ≥ |α|` per coefficient,
/// slack variables for the `2m` inequalities, and every free variable split
/// into non-negative parts.
pub fn bp_formulate(phi: &Frame, s: &Signal) -> Result<BasisPursuitLp> {
    phi.check_signal(s)?;
    let (n, m) = (phi.rows(), phi.cols());
    let nv = 6 * m;
    let rows = 2 * m + n;
    let mut mat = DMatrix::zeros(rows, nv);
    let (ap, tp, am, tm, sa, st) = (0, m, 2 * m, 3 * m, 4 * m, 5 * m);
    for i in 0..m {
        // α_i − t_i + α′_i = 0
        mat[(i, ap + i)] = 1.0;
        mat[(i, tp + i)] = -1.0;
        mat[(i, am + i)] = -1.0;
        mat[(i, tm + i)] = 1.0;
        mat[(i, sa + i)] = 1.0;
        // −α_i − t_i + t′_i = 0
        let r = m + i;
        mat[(r, ap + i)] = -1.0;
        mat[(r, tp + i)] = -1.0;
        mat[(r, am + i)] = 1.0;
        mat[(r, tm + i)] = 1.0;
        mat[(r, st + i)] = 1.0;
    }
    for row in 0..n {
        for j in 0..m {
            let v = phi.matrix()[(row, j)];
            mat[(2 * m + row, ap + j)] = v;
            mat[(2 * m + row, am + j)] = -v;
        }
    }
    let mut cost = DVector::zeros(nv);
    for i in 0..m {
        cost[tp + i] = 1.0;
        cost[tm + i] = -1.0;
    }
    let mut rhs = DVector::zeros(rows);
    rhs.rows_mut(2 * m, n).copy_from(s);
    Ok(BasisPursuitLp {
        lp: StandardFormLp::new(cost, mat, rhs)?,
        layout: VariableLayout::AuxiliaryBound { m },
    })
}

/// The same program with the bound variables eliminated (`t = α⁺ + α⁻` at
/// any optimum), leaving `2m` variables and `n` rows.
pub fn bp_formulate_split(phi: &Frame, s: &Signal) -> Result<BasisPursuitLp> {
    phi.check_signal(s)?;
    let (n, m) = (phi.rows(), phi.cols());
    let mut mat = DMatrix::zeros(n, 2 * m);
    mat.columns_mut(0, m).copy_from(phi.matrix());
    mat.columns_mut(m, m).copy_from(&(-phi.matrix()));
    Ok(BasisPursuitLp {
        lp: StandardFormLp::new(DVector::from_element(2 * m, 1.0), mat, s.clone())?,
        layout: VariableLayout::Split { m },
    })
}

/// ℓ1-minimal solution of `Φα = s`, solved on the split program.
pub fn basis_pursuit(phi: &Frame, s: &Signal) -> Result<RecoveryResult> {
    let program = bp_formulate_split(phi, s)?;
    solve_program(phi, s, &program)
}

pub fn solve_program(phi: &Frame, s: &Signal, program: &BasisPursuitLp) -> Result<RecoveryResult> {
    let sol = lp_solve(&program.lp).map_err(|e| match e {
        Error::Infeasible => Error::invalid("signal is not in the range of the frame"),
        other => other,
    })?;
    let code = SparseCode::from_dense(program.layout.coefficients(&sol.x));
    let mut result = RecoveryResult::new(phi, s, code, sol.pivots, true, vec![sol.objective]);
    if sol.alternate_optima {
        result.note(Diagnostic::AlternateOptima);
    }
    Ok(result)
}
