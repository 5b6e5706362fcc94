//! Relaxation solvers: smoothed ℓ0 (SL0), LiMapS and FOCUSS.
//!
//! SL0 and LiMapS alternate a sparsity-promoting map with the orthogonal
//! projection `α ← α − Φ†(Φα − s)` onto the solution set, so every iterate
//! is feasible. FOCUSS solves a weighted minimum-norm problem per step.
//!
//! Relaxation iterates are never exactly sparse. Each solver knows the
//! magnitude below which its own penalty treats an entry as zero (the last
//! `σ` for SL0, `1/λ` for LiMapS); entries under that scale, and always under
//! [`SUPPORT_THRESHOLD`], are dropped. When the surviving support has at most
//! `n` independent atoms the coefficients are refit by least squares on it,
//! which keeps the returned code feasible.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_rank, least_squares, pseudoinverse, restricted_least_squares, Frame, Signal, SparseCode};
use crate::recovery::{Diagnostic, RecoveryResult};

pub const SUPPORT_THRESHOLD: f64 = 1e-8;

/// Relative feasibility a returned code must meet.
const FEASIBILITY_RTOL: f64 = 1e-9;

/// Orthogonal projector onto `{α : Φα = s}`; holds `Φ` and `Φ†`.
///
/// Building one checks that `Φ` has full row rank. It can be shared
/// read-only between solvers working on the same frame.
#[derive(Debug, Clone)]
pub struct Projector {
    phi: DMatrix<f64>,
    pinv: DMatrix<f64>,
}

impl Projector {
    pub fn new(phi: &Frame) -> Result<Self> {
        let rank = column_rank(phi.matrix())?;
        if rank < phi.rows() {
            return Err(Error::RankDeficient(format!(
                "frame has rank {rank} but {} rows",
                phi.rows()
            )));
        }
        Ok(Projector { phi: phi.matrix().clone(), pinv: pseudoinverse(phi.matrix())? })
    }

    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn min_norm(&self, s: &Signal) -> DVector<f64> {
        &self.pinv * s
    }

    pub fn project(&self, alpha: &mut DVector<f64>, s: &Signal) {
        let defect = &self.phi * &*alpha - s;
        *alpha -= &self.pinv * defect;
    }

    fn check(&self, phi: &Frame) -> Result<()> {
        if self.phi.shape() != phi.matrix().shape() {
            return Err(Error::DimensionMismatch {
                expected: format!("{:?}", self.phi.shape()),
                found: format!("{:?}", phi.matrix().shape()),
            });
        }
        Ok(())
    }
}

/// Thresholds `dense` at `max(scale, SUPPORT_THRESHOLD)`, refits on the
/// surviving support when possible, and otherwise falls back to the plain
/// threshold or, if even that is infeasible, the dense iterate.
fn finalize(phi: &Frame, s: &Signal, dense: &DVector<f64>, scale: f64) -> Result<(SparseCode, Option<Diagnostic>)> {
    let s_norm = s.norm();
    let tol = FEASIBILITY_RTOL * s_norm.max(f64::MIN_POSITIVE);
    let coarse = SparseCode::thresholded(dense.as_slice(), scale.max(SUPPORT_THRESHOLD));
    let support = coarse.support().to_vec();
    if !support.is_empty() && support.len() <= phi.rows() {
        let (x, rank_deficient) = restricted_least_squares(phi.matrix(), &support, s)?;
        if !rank_deficient {
            let refit = SparseCode::from_support(phi.cols(), &support, x.as_slice());
            if (phi.apply(&refit) - s).norm() <= tol {
                return Ok((refit, None));
            }
        }
    }
    let thresholded = SparseCode::thresholded(dense.as_slice(), SUPPORT_THRESHOLD);
    if (phi.apply(&thresholded) - s).norm() <= tol {
        return Ok((thresholded, None));
    }
    Ok((SparseCode::from_dense(dense.iter().copied().collect()), Some(Diagnostic::DenseFallback)))
}

// ---------------------------------------------------------------- SL0

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSchedule {
    /// `σ₁ = start_factor · max|α₀|`, multiplied by `decay` while `σ ≥ sigma_min`.
    Geometric { start_factor: f64, decay: f64, sigma_min: f64 },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sl0Config {
    pub sigma_schedule: SigmaSchedule,
    pub inner_steps: usize,
    pub step_mu: f64,
    /// Optional cap on the number of σ levels visited.
    pub max_levels: Option<usize>,
}

impl Default for Sl0Config {
    fn default() -> Self {
        Sl0Config {
            sigma_schedule: SigmaSchedule::Geometric { start_factor: 2.0, decay: 0.5, sigma_min: 1e-4 },
            inner_steps: 3,
            step_mu: 2.0,
            max_levels: None,
        }
    }
}

impl Sl0Config {
    pub fn sigmas(&self, alpha0: &DVector<f64>) -> Result<Vec<f64>> {
        let sigmas = match &self.sigma_schedule {
            SigmaSchedule::Explicit(v) => v.clone(),
            SigmaSchedule::Geometric { start_factor, decay, sigma_min } => {
                if !(*decay > 0.0 && *decay < 1.0) || !(*sigma_min > 0.0) || !(*start_factor > 0.0) {
                    return Err(Error::invalid("geometric sigma schedule needs 0 < decay < 1 and positive bounds"));
                }
                let mut out = Vec::new();
                let mut sigma = start_factor * alpha0.amax();
                while sigma >= *sigma_min {
                    out.push(sigma);
                    sigma *= decay;
                }
                out
            }
        };
        if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("sigma schedule must be positive"));
        }
        if sigmas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("sigma schedule must be strictly decreasing"));
        }
        Ok(match self.max_levels {
            Some(t) => sigmas.into_iter().take(t).collect(),
            None => sigmas,
        })
    }
}

/// `F_σ(α) = Σ exp(−α_i² / 2σ²)`, which tends to `m − ‖α‖₀` as `σ → 0`.
pub fn smoothed_l0(alpha: &DVector<f64>, sigma: f64) -> f64 {
    alpha.iter().map(|a| (-a * a / (2.0 * sigma * sigma)).exp()).sum()
}

/// One steepest-ascent step on `F_σ`: `α ← α − μ·α·exp(−α²/2σ²)`.
pub fn sl0_ascent_step(alpha: &mut DVector<f64>, sigma: f64, mu: f64) {
    let two_s2 = 2.0 * sigma * sigma;
    for a in alpha.iter_mut() {
        *a -= mu * *a * (-*a * *a / two_s2).exp();
    }
}

pub fn sl0(phi: &Frame, s: &Signal, cfg: &Sl0Config) -> Result<RecoveryResult> {
    sl0_with(&Projector::new(phi)?, phi, s, cfg)
}

pub fn sl0_with(proj: &Projector, phi: &Frame, s: &Signal, cfg: &Sl0Config) -> Result<RecoveryResult> {
    proj.check(phi)?;
    phi.check_signal(s)?;
    if cfg.inner_steps == 0 || !(cfg.step_mu > 0.0) {
        return Err(Error::invalid("SL0 needs inner_steps >= 1 and step_mu > 0"));
    }
    let mut alpha = proj.min_norm(s);
    let sigmas = cfg.sigmas(&alpha)?;
    let mut trace = Vec::with_capacity(sigmas.len());
    for &sigma in &sigmas {
        for _ in 0..cfg.inner_steps {
            sl0_ascent_step(&mut alpha, sigma, cfg.step_mu);
            proj.project(&mut alpha, s);
        }
        trace.push(smoothed_l0(&alpha, sigma));
    }
    let last_sigma = sigmas.last().copied().unwrap_or(0.0);
    let (code, diag) = finalize(phi, s, &alpha, last_sigma)?;
    let mut result = RecoveryResult::new(phi, s, code, sigmas.len(), true, trace);
    if let Some(d) = diag {
        result.note(d);
    }
    Ok(result)
}

// ---------------------------------------------------------------- LiMapS

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSchedule {
    /// `λ₀ = 1 / max|α₀|`, multiplied by `growth` after every iteration.
    Geometric { growth: f64 },
    /// Used in order; the last value repeats once the list runs out.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimapsConfig {
    pub lambda_schedule: LambdaSchedule,
    pub max_iterations: usize,
    /// Stop once `‖α_{t+1} − α_t‖ ≤ convergence_tol · ‖α_t‖`.
    pub convergence_tol: f64,
}

impl Default for LimapsConfig {
    fn default() -> Self {
        LimapsConfig {
            lambda_schedule: LambdaSchedule::Geometric { growth: 1.01 },
            max_iterations: 2000,
            convergence_tol: 1e-10,
        }
    }
}

/// `f_λ(a) = a(1 − e^{−λ|a|})`.
pub fn limaps_shrink(a: f64, lambda: f64) -> f64 {
    a * (1.0 - (-lambda * a.abs()).exp())
}

pub fn limaps(phi: &Frame, s: &Signal, cfg: &LimapsConfig) -> Result<RecoveryResult> {
    limaps_with(&Projector::new(phi)?, phi, s, cfg)
}

pub fn limaps_with(proj: &Projector, phi: &Frame, s: &Signal, cfg: &LimapsConfig) -> Result<RecoveryResult> {
    proj.check(phi)?;
    phi.check_signal(s)?;
    let mut alpha = proj.min_norm(s);
    let amax = alpha.amax();
    if amax == 0.0 {
        let code = SparseCode::zeros(phi.cols());
        return Ok(RecoveryResult::new(phi, s, code, 0, true, Vec::new()));
    }
    let lambda_at = |t: usize| -> Result<f64> {
        match &cfg.lambda_schedule {
            LambdaSchedule::Geometric { growth } => {
                if !(*growth > 1.0) {
                    return Err(Error::invalid("LiMapS growth factor must exceed 1"));
                }
                Ok(growth.powi(t as i32) / amax)
            }
            LambdaSchedule::Explicit(v) => {
                if v.is_empty() || v.windows(2).any(|w| w[1] <= w[0]) || v[0] <= 0.0 {
                    return Err(Error::invalid("lambda schedule must be positive and strictly increasing"));
                }
                Ok(v[t.min(v.len() - 1)])
            }
        }
    };
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut lambda = lambda_at(0)?;
    while iterations < cfg.max_iterations {
        lambda = lambda_at(iterations)?;
        let mut next = alpha.map(|a| limaps_shrink(a, lambda));
        proj.project(&mut next, s);
        let step = (&next - &alpha).norm();
        let scale = alpha.norm();
        alpha = next;
        iterations += 1;
        trace.push(step);
        if step <= cfg.convergence_tol * scale {
            converged = true;
            break;
        }
    }
    let (code, diag) = finalize(phi, s, &alpha, 1.0 / lambda)?;
    let mut result = RecoveryResult::new(phi, s, code, iterations, converged, trace);
    if let Some(d) = diag {
        result.note(d);
    }
    if !converged {
        result.note(Diagnostic::IterationCapReached);
    }
    Ok(result)
}

// ---------------------------------------------------------------- FOCUSS

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocussConfig {
    /// Target ℓq quasi-norm exponent, `0 < q ≤ 1`. The weight exponent is `1 − q/2`.
    pub q: f64,
    pub max_iterations: usize,
    /// Stop once `‖β_{k+1} − β_k‖ ≤ fixed_point_tol · ‖β_k‖`.
    pub fixed_point_tol: f64,
    /// Coefficients at or below this magnitude become zero for good.
    pub zero_clamp: f64,
}

impl Default for FocussConfig {
    fn default() -> Self {
        FocussConfig { q: 0.5, max_iterations: 1000, fixed_point_tol: 1e-12, zero_clamp: 1e-12 }
    }
}

impl FocussConfig {
    pub fn weight_exponent(&self) -> f64 {
        1.0 - self.q / 2.0
    }

    fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::invalid(format!("q must lie in (0, 1], got {}", self.q)));
        }
        if !(self.zero_clamp >= 0.0 && self.zero_clamp < 1e-8) {
            return Err(Error::invalid("zero_clamp must lie in [0, 1e-8)"));
        }
        Ok(())
    }
}

/// One reweighted step `β⁺ = B(ΦB)†s` with `B = diag(|β_i|^t)`.
///
/// Entries that are zero in `beta` stay zero.
pub fn focuss_step(phi: &Frame, s: &Signal, beta: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let active: Vec<usize> = (0..beta.len()).filter(|&i| beta[i] != 0.0).collect();
    let mut next = DVector::zeros(beta.len());
    if active.is_empty() {
        return Ok(next);
    }
    let weights: Vec<f64> = active.iter().map(|&i| beta[i].abs().powf(t)).collect();
    let mut weighted = phi.select(&active);
    for (j, w) in weights.iter().enumerate() {
        weighted.column_mut(j).scale_mut(*w);
    }
    let y = least_squares(&weighted, s)?;
    for (j, &i) in active.iter().enumerate() {
        next[i] = weights[j] * y[j];
    }
    Ok(next)
}

pub fn focuss(phi: &Frame, s: &Signal, cfg: &FocussConfig) -> Result<RecoveryResult> {
    cfg.validate()?;
    let proj = Projector::new(phi)?;
    phi.check_signal(s)?;
    let t = cfg.weight_exponent();
    let mut beta = proj.min_norm(s);
    let clamp = |b: &mut DVector<f64>| {
        for v in b.iter_mut() {
            if v.abs() <= cfg.zero_clamp {
                *v = 0.0;
            }
        }
    };
    clamp(&mut beta);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        if beta.iter().all(|v| *v == 0.0) {
            break;
        }
        let mut next = focuss_step(phi, s, &beta, t)?;
        clamp(&mut next);
        let step = (&next - &beta).norm();
        let scale = beta.norm();
        beta = next;
        iterations += 1;
        trace.push(beta.iter().map(|b| b.abs().powf(cfg.q)).sum());
        if step <= cfg.fixed_point_tol * scale {
            converged = true;
            break;
        }
    }
    if beta.iter().all(|v| *v == 0.0) {
        let code = SparseCode::zeros(phi.cols());
        let zero_signal = s.iter().all(|v| *v == 0.0);
        return Ok(RecoveryResult::new(phi, s, code, iterations, zero_signal, trace)
            .with_diagnostic(Diagnostic::AllClamped));
    }
    let (code, diag) = finalize(phi, s, &beta, cfg.zero_clamp)?;
    let mut result = RecoveryResult::new(phi, s, code, iterations, converged, trace);
    if let Some(d) = diag {
        result.note(d);
    }
    if !converged {
        result.note(Diagnostic::IterationCapReached);
    }
    Ok(result)
}
