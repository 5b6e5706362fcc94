use serde::{Deserialize, Serialize};

use crate::linalg::{Frame, Signal, SparseCode};

/// Non-fatal events a solver wants the caller to know about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    /// A support-restricted least-squares system was solved by pseudoinverse.
    RankDeficientSubproblem,
    /// The simplex found a zero reduced cost at the optimum.
    AlternateOptima,
    IterationCapReached,
    /// Selection stopped because no remaining atom correlates with the residual.
    NoProgress,
    /// The thresholded support could not reproduce the signal, so the dense
    /// iterate was returned instead.
    DenseFallback,
    /// Every coefficient was clamped to zero.
    AllClamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub code: SparseCode,
    /// `‖Φ·code − s‖₂`, recomputed from the returned code.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Per-iteration objective (residual norm for greedy methods).
    pub objective_trace: Vec<f64>,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    /// Atom indices in selection order (greedy methods only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selected: Vec<usize>,
}

impl RecoveryResult {
    pub fn new(
        phi: &Frame,
        s: &Signal,
        code: SparseCode,
        iterations: usize,
        converged: bool,
        objective_trace: Vec<f64>,
    ) -> Self {
        let residual_norm = residual_norm(phi, s, &code);
        RecoveryResult {
            code,
            residual_norm,
            iterations,
            converged,
            objective_trace,
            diagnostics: Vec::new(),
            selected: Vec::new(),
        }
    }

    pub fn with_diagnostic(mut self, d: Diagnostic) -> Self {
        self.note(d);
        self
    }

    pub fn note(&mut self, d: Diagnostic) {
        if !self.diagnostics.contains(&d) {
            self.diagnostics.push(d);
        }
    }
}

pub fn residual_norm(phi: &Frame, s: &Signal, code: &SparseCode) -> f64 {
    (phi.apply(code) - s).norm()
}

/// Magnitude of the SNR sentinel reported for exact (or hopeless) fits.
pub const SNR_CAP_DB: f64 = 300.0;

/// `20·log₁₀(signal / error)`, clamped to `±SNR_CAP_DB`.
///
/// A zero error gives `+SNR_CAP_DB`; a zero signal with non-zero error gives
/// `−SNR_CAP_DB`.
pub fn snr_db(signal_norm: f64, error_norm: f64) -> f64 {
    if error_norm == 0.0 {
        return SNR_CAP_DB;
    }
    if signal_norm == 0.0 {
        return -SNR_CAP_DB;
    }
    (20.0 * (signal_norm / error_norm).log10()).clamp(-SNR_CAP_DB, SNR_CAP_DB)
}
