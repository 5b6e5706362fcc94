//! Name-keyed registry of recovery solvers with defaulted parameters.
//!
//! Experiments and the CLI refer to solvers by name. Parameter overrides are
//! a flat set of optional fields; a field that the chosen solver does not
//! read is rejected by name.

use serde::{Deserialize, Serialize};

use crate::convex::{basis_pursuit, bpdn_lasso, elastic_net, lambda_max, LassoConfig};
use crate::error::{Error, Result};
use crate::frame_analysis::exhaustive_p0;
use crate::greedy::{ls_omp, mp, omp, StopRule};
use crate::linalg::{Frame, Signal};
use crate::recovery::RecoveryResult;
use crate::relax::{focuss, limaps_with, sl0_with, FocussConfig, LambdaSchedule, LimapsConfig, Projector, SigmaSchedule, Sl0Config};

pub const SOLVER_NAMES: [&str; 10] = ["mp", "omp", "ls_omp", "bp", "lasso", "elastic_net", "sl0", "limaps", "focuss", "p0"];

/// Default Lasso / elastic-net weight as a fraction of `2‖Φᵀs‖∞`.
pub const DEFAULT_LAMBDA_RATIO: f64 = 1e-5;
pub const DEFAULT_MIX: f64 = 0.5;

/// Optional overrides. Which fields a solver reads is listed in [`accepted_params`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    /// Absolute penalty weight; overrides `lambda_ratio`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kkt_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

impl SolverParams {
    fn set_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        macro_rules! check {
            ($($f:ident),*) => { $( if self.$f.is_some() { out.push(stringify!($f)); } )* };
        }
        check!(k, residual_tol, max_iterations, lambda, lambda_ratio, mix, kkt_tol, sigma_min, sigma_decay, inner_steps, step_mu, growth, tol, q);
        out
    }
}

pub fn accepted_params(name: &str) -> Result<&'static [&'static str]> {
    Ok(match name {
        "mp" | "omp" | "ls_omp" => &["k", "residual_tol", "max_iterations"],
        "bp" => &[],
        "lasso" => &["lambda", "lambda_ratio", "kkt_tol", "max_iterations"],
        "elastic_net" => &["lambda", "lambda_ratio", "mix", "kkt_tol", "max_iterations"],
        "sl0" => &["sigma_min", "sigma_decay", "inner_steps", "step_mu"],
        "limaps" => &["growth", "max_iterations", "tol"],
        "focuss" => &["q", "max_iterations", "tol"],
        "p0" => &["k"],
        other => return Err(unknown(other)),
    })
}

fn unknown(name: &str) -> Error {
    Error::UnknownSolver { name: name.to_string(), valid: SOLVER_NAMES.join(", ") }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Absolute(f64),
    /// Fraction of `2‖Φᵀs‖∞ / mix`, the smallest weight with a zero solution.
    Relative(f64),
}

impl Penalty {
    fn resolve(self, phi: &Frame, s: &Signal, mix: f64) -> f64 {
        match self {
            Penalty::Absolute(l) => l,
            Penalty::Relative(r) => r * lambda_max(phi, s) / mix.max(f64::MIN_POSITIVE),
        }
    }
}

/// A fully configured solver.
#[derive(Debug, Clone, PartialEq)]
pub enum Solver {
    Mp(StopRule),
    Omp(StopRule),
    LsOmp(StopRule),
    Bp,
    Lasso { penalty: Penalty, mix: f64, kkt_tol: f64, max_sweeps: usize },
    Sl0(Sl0Config),
    Limaps(LimapsConfig),
    Focuss(FocussConfig),
    /// Exhaustive search up to `k` atoms (`n` when unset).
    P0 { k: Option<usize> },
}

impl Solver {
    pub fn named(name: &str) -> Result<Solver> {
        Solver::with_params(name, &SolverParams::default())
    }

    pub fn with_params(name: &str, p: &SolverParams) -> Result<Solver> {
        let accepted = accepted_params(name)?;
        if let Some(bad) = p.set_fields().into_iter().find(|f| !accepted.contains(f)) {
            return Err(Error::Config {
                key: bad.to_string(),
                message: format!("not a parameter of solver `{name}` (accepted: {})", accepted.join(", ")),
            });
        }
        let greedy = |p: &SolverParams| StopRule {
            max_sparsity: p.k,
            residual_tol: Some(p.residual_tol.unwrap_or(crate::greedy::DEFAULT_RESIDUAL_TOL)),
            max_iterations: p.max_iterations.unwrap_or(1000),
        };
        let penalty = match (p.lambda, p.lambda_ratio) {
            (Some(l), _) => Penalty::Absolute(l),
            (None, r) => Penalty::Relative(r.unwrap_or(DEFAULT_LAMBDA_RATIO)),
        };
        let solver = match name {
            "mp" => Solver::Mp(greedy(p)),
            "omp" => Solver::Omp(greedy(p)),
            "ls_omp" => Solver::LsOmp(greedy(p)),
            "bp" => Solver::Bp,
            "lasso" | "elastic_net" => {
                let base = LassoConfig::new(0.0);
                Solver::Lasso {
                    penalty,
                    mix: if name == "lasso" { 1.0 } else { p.mix.unwrap_or(DEFAULT_MIX) },
                    kkt_tol: p.kkt_tol.unwrap_or(base.kkt_tol),
                    max_sweeps: p.max_iterations.unwrap_or(base.max_sweeps),
                }
            }
            "sl0" => {
                let mut cfg = Sl0Config::default();
                if let SigmaSchedule::Geometric { decay, sigma_min, .. } = &mut cfg.sigma_schedule {
                    *decay = p.sigma_decay.unwrap_or(*decay);
                    *sigma_min = p.sigma_min.unwrap_or(*sigma_min);
                }
                cfg.inner_steps = p.inner_steps.unwrap_or(cfg.inner_steps);
                cfg.step_mu = p.step_mu.unwrap_or(cfg.step_mu);
                Solver::Sl0(cfg)
            }
            "limaps" => {
                let mut cfg = LimapsConfig::default();
                if let Some(g) = p.growth {
                    cfg.lambda_schedule = LambdaSchedule::Geometric { growth: g };
                }
                cfg.max_iterations = p.max_iterations.unwrap_or(cfg.max_iterations);
                cfg.convergence_tol = p.tol.unwrap_or(cfg.convergence_tol);
                Solver::Limaps(cfg)
            }
            "focuss" => {
                let mut cfg = FocussConfig::default();
                cfg.q = p.q.unwrap_or(cfg.q);
                cfg.max_iterations = p.max_iterations.unwrap_or(cfg.max_iterations);
                cfg.fixed_point_tol = p.tol.unwrap_or(cfg.fixed_point_tol);
                Solver::Focuss(cfg)
            }
            "p0" => Solver::P0 { k: p.k },
            other => return Err(unknown(other)),
        };
        Ok(solver)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Solver::Mp(_) => "mp",
            Solver::Omp(_) => "omp",
            Solver::LsOmp(_) => "ls_omp",
            Solver::Bp => "bp",
            Solver::Lasso { mix, .. } if *mix == 1.0 => "lasso",
            Solver::Lasso { .. } => "elastic_net",
            Solver::Sl0(_) => "sl0",
            Solver::Limaps(_) => "limaps",
            Solver::Focuss(_) => "focuss",
            Solver::P0 { .. } => "p0",
        }
    }

    /// SL0 and LiMapS reuse the frame's pseudoinverse across signals.
    pub fn uses_projector(&self) -> bool {
        matches!(self, Solver::Sl0(_) | Solver::Limaps(_))
    }

    pub fn solve(&self, phi: &Frame, s: &Signal) -> Result<RecoveryResult> {
        if self.uses_projector() {
            return self.solve_with(phi, s, Some(&Projector::new(phi)?));
        }
        self.solve_with(phi, s, None)
    }

    /// `proj` must have been built from `phi`; it is ignored by solvers that
    /// do not project.
    pub fn solve_with(&self, phi: &Frame, s: &Signal, proj: Option<&Projector>) -> Result<RecoveryResult> {
        let n = phi.rows();
        let cap_sparsity = |stop: &StopRule| StopRule { max_sparsity: Some(stop.max_sparsity.unwrap_or(n)), ..*stop };
        match self {
            Solver::Mp(stop) => mp(phi, s, &StopRule { max_sparsity: stop.max_sparsity, ..*stop }),
            Solver::Omp(stop) => omp(phi, s, &cap_sparsity(stop)),
            Solver::LsOmp(stop) => ls_omp(phi, s, &cap_sparsity(stop)),
            Solver::Bp => basis_pursuit(phi, s),
            Solver::Lasso { penalty, mix, kkt_tol, max_sweeps } => {
                let cfg = LassoConfig { lambda: penalty.resolve(phi, s, *mix), mix: *mix, max_sweeps: *max_sweeps, kkt_tol: *kkt_tol };
                if *mix == 1.0 {
                    bpdn_lasso(phi, s, &cfg)
                } else {
                    elastic_net(phi, s, &cfg)
                }
            }
            Solver::Sl0(cfg) => match proj {
                Some(p) => sl0_with(p, phi, s, cfg),
                None => sl0_with(&Projector::new(phi)?, phi, s, cfg),
            },
            Solver::Limaps(cfg) => match proj {
                Some(p) => limaps_with(p, phi, s, cfg),
                None => limaps_with(&Projector::new(phi)?, phi, s, cfg),
            },
            Solver::Focuss(cfg) => focuss(phi, s, cfg),
            Solver::P0 { k } => exhaustive_p0(phi, s, k.unwrap_or(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_builds() {
        for name in SOLVER_NAMES {
            assert_eq!(Solver::named(name).unwrap().name(), name);
        }
    }

    #[test]
    fn unknown_name_lists_valid_solvers() {
        let err = Solver::named("omq").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("omq") && msg.contains("omp") && msg.contains("limaps"), "{msg}");
    }

    #[test]
    fn foreign_parameter_is_named() {
        let p = SolverParams { q: Some(0.3), ..Default::default() };
        match Solver::with_params("omp", &p) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "q"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_json_field_rejected() {
        let err = serde_json::from_str::<SolverParams>(r#"{"kk": 3}"#).unwrap_err();
        assert!(err.to_string().contains("kk"));
    }

    #[test]
    fn identity_frame_round_trip() {
        let phi = Frame::identity(4);
        let s = Signal::from_vec(vec![0.0, 2.0, 0.0, -1.0]);
        for name in ["omp", "ls_omp", "bp", "sl0", "limaps", "focuss", "p0"] {
            let r = Solver::named(name).unwrap().solve(&phi, &s).unwrap();
            assert_eq!(r.code.support(), &[1, 3], "{name}");
        }
    }
}
