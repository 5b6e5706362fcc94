//! Cyclic coordinate descent for
//! `‖Φα − s‖₂² + λ[½(1 − a)‖α‖₂² + a‖α‖₁]` (no ½ on the data term).
//!
//! `a = 1` is the Lasso / BPDN objective. Convergence is judged after each
//! full sweep by the largest KKT residual. λ is lowered geometrically from
//! the zero-solution threshold with warm starts. After each sweep a
//! feature-sign active-set search tries to finish the stage exactly; its
//! answer is kept only if it passes the same KKT test and does not raise the
//! objective, so small λ does not cost thousands of sweeps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Frame, Signal, SparseCode};
use crate::recovery::{Diagnostic, RecoveryResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: f64,
    /// ℓ1 share of the penalty; 1 is the pure Lasso.
    pub mix: f64,
    pub max_sweeps: usize,
    pub kkt_tol: f64,
}

impl LassoConfig {
    pub fn new(lambda: f64) -> Self {
        LassoConfig { lambda, mix: 1.0, max_sweeps: 10_000, kkt_tol: 1e-8 }
    }

    pub fn with_mix(mut self, mix: f64) -> Self {
        self.mix = mix;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.mix) {
            return Err(Error::invalid(format!("mix must lie in [0, 1], got {}", self.mix)));
        }
        if !(self.kkt_tol > 0.0) {
            return Err(Error::invalid("kkt_tol must be positive"));
        }
        Ok(())
    }
}

/// Smallest λ for which the Lasso solution is zero: `2‖Φᵀs‖∞`.
pub fn lambda_max(phi: &Frame, s: &Signal) -> f64 {
    2.0 * phi.matrix().tr_mul(s).amax()
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn objective(phi: &Frame, s: &Signal, alpha: &DVector<f64>, lambda: f64, mix: f64) -> f64 {
    let r = phi.matrix() * alpha - s;
    r.norm_squared() + lambda * (0.5 * (1.0 - mix) * alpha.norm_squared() + mix * alpha.lp_norm(1))
}

/// Largest violation of the optimality conditions at `alpha`.
pub fn kkt_residual(phi: &Frame, s: &Signal, alpha: &DVector<f64>, lambda: f64, mix: f64) -> f64 {
    let grad = 2.0 * phi.matrix().tr_mul(&(phi.matrix() * alpha - s));
    let l1 = lambda * mix;
    let l2 = lambda * (1.0 - mix);
    grad.iter()
        .zip(alpha.iter())
        .map(|(&g, &a)| {
            if a != 0.0 {
                (g + l2 * a + l1 * a.signum()).abs()
            } else {
                (g.abs() - l1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub fn bpdn_lasso(phi: &Frame, s: &Signal, cfg: &LassoConfig) -> Result<RecoveryResult> {
    coordinate_descent(phi, s, &LassoConfig { mix: 1.0, ..*cfg })
}

pub fn elastic_net(phi: &Frame, s: &Signal, cfg: &LassoConfig) -> Result<RecoveryResult> {
    if !(cfg.lambda > 0.0) {
        return Err(Error::invalid("elastic net needs lambda > 0"));
    }
    coordinate_descent(phi, s, cfg)
}

/// Each continuation stage divides λ by this factor.
const PATH_FACTOR: f64 = 0.5;

fn coordinate_descent(phi: &Frame, s: &Signal, cfg: &LassoConfig) -> Result<RecoveryResult> {
    cfg.validate()?;
    phi.check_signal(s)?;
    let m = phi.cols();

    // Warm-started continuation from the smallest λ with a zero solution.
    let mut stages = Vec::new();
    if cfg.mix > 0.0 {
        let top = lambda_max(phi, s) / cfg.mix;
        let mut lam = top * PATH_FACTOR;
        while lam > cfg.lambda && lam > top * 1e-12 {
            stages.push(lam);
            lam *= PATH_FACTOR;
        }
    }
    stages.push(cfg.lambda);

    let mut state = Descent {
        phi,
        s,
        sq_norms: phi.matrix().column_iter().map(|c| c.norm_squared()).collect(),
        alpha: DVector::zeros(m),
        residual: s.clone(),
        sweeps: 0,
    };
    let last = stages.len() - 1;
    let mut trace = Vec::new();
    let mut converged = false;
    for (idx, &lambda) in stages.iter().enumerate() {
        let stage_cfg = LassoConfig { lambda, ..*cfg };
        let record = if idx == last { Some(&mut trace) } else { None };
        converged = state.run(&stage_cfg, record);
    }

    let code = SparseCode::from_dense(state.alpha.iter().copied().collect());
    let result = RecoveryResult::new(phi, s, code, state.sweeps, converged, trace);
    Ok(if converged { result } else { result.with_diagnostic(Diagnostic::IterationCapReached) })
}

struct Descent<'a> {
    phi: &'a Frame,
    s: &'a Signal,
    sq_norms: Vec<f64>,
    alpha: DVector<f64>,
    residual: DVector<f64>,
    /// Coordinate sweeps plus active-set steps.
    sweeps: usize,
}

impl Descent<'_> {
    /// Sweeps at one λ until the KKT test passes or the sweep budget runs
    /// out. Objective values are appended to `trace` when given.
    fn run(&mut self, cfg: &LassoConfig, mut trace: Option<&mut Vec<f64>>) -> bool {
        let (phi, s) = (self.phi, self.s);
        let mat = phi.matrix();
        let l1 = cfg.lambda * cfg.mix;
        let l2 = cfg.lambda * (1.0 - cfg.mix);
        if kkt_residual(phi, s, &self.alpha, cfg.lambda, cfg.mix) <= cfg.kkt_tol {
            return true;
        }
        let steps = 4 * self.alpha.len() + 100;
        // From the previous stage's optimum the active set grows one atom at
        // a time, which keeps the restricted systems well posed.
        if let Some((x, used)) = feature_sign(phi, s, &self.alpha, l1, l2, cfg.kkt_tol, steps) {
            self.sweeps += used;
            if kkt_residual(phi, s, &x, cfg.lambda, cfg.mix) <= cfg.kkt_tol {
                self.residual = s - mat * &x;
                self.alpha = x;
                if let Some(t) = trace {
                    t.push(objective(phi, s, &self.alpha, cfg.lambda, cfg.mix));
                }
                return true;
            }
        }
        let mut stage_sweeps = 0;
        while stage_sweeps < cfg.max_sweeps {
            for j in 0..self.alpha.len() {
                let denom = 2.0 * self.sq_norms[j] + l2;
                if denom == 0.0 {
                    continue;
                }
                let col = mat.column(j);
                let old = self.alpha[j];
                let rho = col.dot(&self.residual) + self.sq_norms[j] * old;
                let new = soft_threshold(2.0 * rho, l1) / denom;
                if new != old {
                    self.residual.axpy(old - new, &col, 1.0);
                    self.alpha[j] = new;
                }
            }
            stage_sweeps += 1;
            self.sweeps += 1;
            let mut done = kkt_residual(phi, s, &self.alpha, cfg.lambda, cfg.mix) <= cfg.kkt_tol;
            if !done {
                if let Some((polished, used)) = feature_sign(phi, s, &self.alpha, l1, l2, cfg.kkt_tol, steps) {
                    self.sweeps += used;
                    let better = objective(phi, s, &polished, cfg.lambda, cfg.mix)
                        <= objective(phi, s, &self.alpha, cfg.lambda, cfg.mix);
                    if better && kkt_residual(phi, s, &polished, cfg.lambda, cfg.mix) <= cfg.kkt_tol {
                        self.residual = s - mat * &polished;
                        self.alpha = polished;
                        done = true;
                    }
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(objective(phi, s, &self.alpha, cfg.lambda, cfg.mix));
            }
            if done {
                return true;
            }
        }
        false
    }
}

/// Feature-sign active-set search started from `start`.
///
/// Each step solves the stationarity equations on the active set with the
/// current signs, `(2Φ_AᵀΦ_A + l2·I)α_A = 2Φ_Aᵀs − l1·θ_A`, then line-searches
/// the segment towards that point, stopping at sign changes. The objective
/// never increases, so the search ends in at most finitely many sign
/// patterns. `None` when a restricted system is singular or the step budget
/// runs out.
fn feature_sign(
    phi: &Frame,
    s: &Signal,
    start: &DVector<f64>,
    l1: f64,
    l2: f64,
    tol: f64,
    max_steps: usize,
) -> Option<(DVector<f64>, usize)> {
    let mat = phi.matrix();
    let m = start.len();
    let obj = |a: &DVector<f64>| (mat * a - s).norm_squared() + 0.5 * l2 * a.norm_squared() + l1 * a.lp_norm(1);
    let mut x = start.clone();
    let mut theta: Vec<f64> = x.iter().map(|&v| if v == 0.0 { 0.0 } else { v.signum() }).collect();

    for step in 0..max_steps {
        let grad = 2.0 * mat.tr_mul(&(mat * &x - s)) + l2 * &x;
        // Optimality on the active set, then on the zero set.
        let active_ok = (0..m).filter(|&i| theta[i] != 0.0).all(|i| (grad[i] + l1 * theta[i]).abs() <= tol);
        if active_ok {
            let worst = (0..m)
                .filter(|&i| theta[i] == 0.0)
                .map(|i| (i, grad[i].abs() - l1))
                .filter(|&(_, v)| v > tol)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match worst {
                None => return Some((x, step)),
                Some((i, _)) => theta[i] = -grad[i].signum(),
            }
        }

        let active: Vec<usize> = (0..m).filter(|&i| theta[i] != 0.0).collect();
        let sub = phi.select(&active);
        let mut gram: DMatrix<f64> = 2.0 * sub.tr_mul(&sub);
        for d in 0..active.len() {
            gram[(d, d)] += l2;
        }
        let mut rhs = 2.0 * sub.tr_mul(s);
        for (d, &i) in active.iter().enumerate() {
            rhs[d] -= l1 * theta[i];
        }
        let Some(chol) = gram.cholesky() else {
            // Only the ℓ1 term is left to decrease along ker Φ_A.
            if l2 != 0.0 {
                return None;
            }
            x = kernel_step(phi, &x, &theta, &active)?;
            for i in 0..m {
                theta[i] = if x[i] == 0.0 { 0.0 } else { x[i].signum() };
            }
            continue;
        };
        let target = chol.solve(&rhs);
        if target.iter().any(|v| !v.is_finite()) {
            return None;
        }

        // Candidates: the full step and every zero crossing along the way.
        let mut steps = vec![1.0];
        for (d, &i) in active.iter().enumerate() {
            let (a, b) = (x[i], target[d]);
            if a != 0.0 && a * b < 0.0 {
                steps.push(a / (a - b));
            }
        }
        let point = |t: f64| {
            let mut y = x.clone();
            for (d, &i) in active.iter().enumerate() {
                y[i] = x[i] + t * (target[d] - x[i]);
            }
            y
        };
        let mut best = point(1.0);
        let mut best_val = obj(&best);
        for &t in &steps[1..] {
            let mut y = point(t);
            // Snap the coordinate that crosses at this step.
            for &i in &active {
                if x[i] != 0.0 && (y[i] / x[i]).abs() < 1e-12 {
                    y[i] = 0.0;
                }
            }
            let v = obj(&y);
            if v < best_val {
                best = y;
                best_val = v;
            }
        }
        if best_val > obj(&x) * (1.0 + 1e-12) {
            return None;
        }
        x = best;
        for i in 0..m {
            theta[i] = if x[i] == 0.0 { 0.0 } else { x[i].signum() };
        }
    }
    None
}

/// Step for a rank-deficient active set whose only zero entry `j` has just
/// been activated. With the other active entries stationary, moving along
/// `z ∈ ker Φ_A` with `sign(z_j) = θ_j` lowers the objective at rate
/// `l1 − |g_j| < 0`, linearly until the first active entry reaches zero.
fn kernel_step(phi: &Frame, x: &DVector<f64>, theta: &[f64], active: &[usize]) -> Option<DVector<f64>> {
    let mut entering = active.iter().copied().filter(|&i| x[i] == 0.0);
    let j = entering.next()?;
    if entering.next().is_some() {
        return None;
    }
    let rest: Vec<usize> = active.iter().copied().filter(|&i| i != j).collect();
    let sub = phi.select(&rest);
    let target = phi.atom(j).into_owned();
    let w = crate::linalg::least_squares(&sub, &target).ok()?;
    if (&sub * &w - &target).norm() > 1e-9 * target.norm() {
        return None;
    }
    // z_j = θ_j, z_rest = −θ_j·w
    let mut step = f64::INFINITY;
    let mut hit = None;
    for (d, &i) in rest.iter().enumerate() {
        let zi = -theta[j] * w[d];
        if x[i] * zi < 0.0 {
            let t = -x[i] / zi;
            if t < step {
                step = t;
                hit = Some(i);
            }
        }
    }
    let hit = hit?;
    let mut out = x.clone();
    out[j] = theta[j] * step;
    for (d, &i) in rest.iter().enumerate() {
        out[i] = x[i] - theta[j] * w[d] * step;
    }
    out[hit] = 0.0;
    Some(out)
}
