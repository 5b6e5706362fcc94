//! Dense two-phase primal simplex for `min cᵀx s.t. Mx = b, x ≥ 0`.
//!
//! The entering column is the most negative reduced cost (Dantzig). After a
//! run of degenerate pivots the solver switches to Bland's rule (lowest-index
//! entering column) until the objective moves again, which rules out cycling
//! on the heavily degenerate programs the ℓ1 reductions produce. Ratio ties
//! always leave the lowest-index basic variable.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StandardFormLp {
    pub cost: DVector<f64>,
    pub constraints: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl StandardFormLp {
    pub fn new(cost: DVector<f64>, constraints: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        if constraints.ncols() != cost.len() || constraints.nrows() != rhs.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} constraints", rhs.len(), cost.len()),
                found: format!("{}x{}", constraints.nrows(), constraints.ncols()),
            });
        }
        let finite = cost.iter().chain(constraints.iter()).chain(rhs.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("linear program has non-finite data"));
        }
        Ok(StandardFormLp { cost, constraints, rhs })
    }

    pub fn num_variables(&self) -> usize {
        self.cost.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rhs.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Some non-basic column has zero reduced cost at the optimum.
    pub alternate_optima: bool,
    pub pivots: usize,
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
/// Degenerate pivots in a row before Bland's rule takes over.
const DEGENERATE_STREAK: usize = 32;

struct Tableau {
    /// Row-major; `rows` constraint rows followed by one objective row.
    data: Vec<f64>,
    rows: usize,
    width: usize,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let p = self.at(pr, pc);
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[pr * w..(pr + 1) * w].to_vec();
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f != 0.0 {
                let row = &mut self.data[r * w..(r + 1) * w];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[pc] = 0.0;
                // Round-off can push a degenerate basic value just below zero.
                if r < self.rows && row[w - 1] < 0.0 && row[w - 1] > -1e-12 {
                    row[w - 1] = 0.0;
                }
            }
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    /// Runs Bland pivots over columns `0..allowed`. Returns `false` if unbounded.
    fn optimize(&mut self, allowed: usize, max_pivots: usize) -> Result<bool> {
        let obj = self.rows;
        let rhs = self.rhs_col();
        let mut streak = 0;
        loop {
            let entering = if streak < DEGENERATE_STREAK {
                (0..allowed)
                    .filter(|&j| self.at(obj, j) < -COST_TOL)
                    .min_by(|&a, &b| self.at(obj, a).total_cmp(&self.at(obj, b)))
            } else {
                (0..allowed).find(|&j| self.at(obj, j) < -COST_TOL)
            };
            let Some(pc) = entering else { return Ok(true) };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.at(r, rhs) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                            if ratio < lratio && !tie || tie && self.basis[r] < self.basis[lr] {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((pr, step)) = leave else { return Ok(false) };
            if self.pivots >= max_pivots {
                return Err(Error::invalid(format!("simplex exceeded {max_pivots} pivots")));
            }
            streak = if step > 1e-14 { 0 } else { streak + 1 };
            self.pivot(pr, pc);
        }
    }

    fn remove_row(&mut self, r: usize) {
        let w = self.width;
        self.data.drain(r * w..(r + 1) * w);
        self.basis.remove(r);
        self.rows -= 1;
    }
}

pub fn lp_solve(lp: &StandardFormLp) -> Result<LpSolution> {
    let p = lp.num_constraints();
    let nv = lp.num_variables();
    if nv == 0 {
        return Err(Error::invalid("linear program has no variables"));
    }
    let width = nv + p + 1;
    let mut data = vec![0.0; (p + 1) * width];
    for r in 0..p {
        let sign = if lp.rhs[r] < 0.0 { -1.0 } else { 1.0 };
        for c in 0..nv {
            data[r * width + c] = sign * lp.constraints[(r, c)];
        }
        data[r * width + nv + r] = 1.0;
        data[r * width + width - 1] = sign * lp.rhs[r];
    }
    // Phase 1 objective: sum of artificials, expressed in non-basic columns.
    for c in 0..width {
        if c >= nv && c < nv + p {
            continue;
        }
        let s: f64 = (0..p).map(|r| data[r * width + c]).sum();
        data[p * width + c] = -s;
    }
    let mut t = Tableau { data, rows: p, width, basis: (nv..nv + p).collect(), pivots: 0 };
    let max_pivots = 50_000 + 200 * (p + nv);
    t.optimize(nv, max_pivots)?;

    let scale = 1.0 + lp.rhs.amax();
    if -t.at(t.rows, t.rhs_col()) > 1e-9 * scale {
        return Err(Error::Infeasible);
    }

    // Drive remaining artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < t.rows {
        if t.basis[r] >= nv {
            let col = (0..nv).find(|&c| t.at(r, c).abs() > 1e-9);
            match col {
                Some(c) => {
                    t.pivot(r, c);
                    r += 1;
                }
                None => t.remove_row(r),
            }
        } else {
            r += 1;
        }
    }

    // Phase 2 objective row: reduced costs d_j = c_j − c_Bᵀ B⁻¹ A_j.
    let rows = t.rows;
    let rhs_c = t.rhs_col();
    for c in 0..width {
        let cj = if c < nv { lp.cost[c] } else { 0.0 };
        let mut d = if c == rhs_c { 0.0 } else { cj };
        for r in 0..rows {
            let cb = lp.cost[t.basis[r]];
            d -= cb * t.at(r, c);
        }
        t.data[rows * width + c] = d;
    }
    if !t.optimize(nv, max_pivots)? {
        return Err(Error::Unbounded);
    }

    // Degenerate basic variables carry round-off; snap them to zero.
    let zero_tol = 1e-12 * scale;
    let mut x = DVector::zeros(nv);
    for r in 0..t.rows {
        let v = t.at(r, rhs_c);
        x[t.basis[r]] = if v > zero_tol { v } else { 0.0 };
    }
    let objective = lp.cost.dot(&x);
    let alternate_optima = (0..nv)
        .filter(|j| !t.basis.contains(j))
        .any(|j| t.at(t.rows, j).abs() <= COST_TOL);
    Ok(LpSolution { x, objective, alternate_optima, pivots: t.pivots })
}
