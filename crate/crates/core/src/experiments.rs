//! Phase-transition surfaces and the synthetic dictionary-learning study.
//!
//! Every trial derives its random stream from `(seed, cell, trial)` or
//! `(seed, noise level, trial)`, runs independently on the rayon pool, and
//! results are reduced in trial order, so outputs are bit-identical across
//! runs and thread counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{atom_recovery_count, learn, Algorithm, Coder, LearnConfig, TrainingSet};
use crate::error::{Error, Result};
use crate::linalg::{Frame, SparseCode};
use crate::recovery::{snr_db, SNR_CAP_DB};
use crate::relax::Projector;
use crate::rng::{exact_k_sparse, gaussian_frame, gaussian_matrix, RngStream};
use crate::solvers::{Solver, SolverParams};

/// Cosine-dissimilarity threshold for atom recovery.
pub const ATOM_MATCH_EPS: f64 = 0.01;

/// Tolerance for the per-update fit non-increase check.
pub const MONOTONE_TOL: f64 = 1e-10;

/// `20·log₁₀(‖α̂‖ / ‖α̂ − α*‖)`, with the recovered norm on top.
///
/// `α̂ = α*` gives `+300`; `α̂ = 0` with `α* ≠ 0` gives `−300`.
pub fn recovery_snr(alpha_star: &SparseCode, alpha_hat: &SparseCode) -> Result<f64> {
    if alpha_star.len() != alpha_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("length {}", alpha_star.len()),
            found: format!("length {}", alpha_hat.len()),
        });
    }
    let diff = (alpha_hat.to_vector() - alpha_star.to_vector()).norm();
    Ok(snr_db(alpha_hat.norm(), diff))
}

// ---------------------------------------------------------------- phase grid

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub n: usize,
    /// `δ = n/m` runs over `resolution` evenly spaced values; `m = round(n/δ)`.
    pub delta_min: f64,
    pub delta_max: f64,
    /// `ρ = k/n` likewise; `k = max(1, round(ρn))`.
    pub rho_min: f64,
    pub rho_max: f64,
    pub resolution: usize,
    pub trials: usize,
    pub solvers: Vec<String>,
    #[serde(default)]
    pub solver_params: BTreeMap<String, SolverParams>,
    pub seed: u64,
}

impl PhaseConfig {
    /// n = 50, 10 × 10 cells, 20 trials.
    pub fn desk(seed: u64) -> Self {
        PhaseConfig {
            n: 50,
            delta_min: 0.1,
            delta_max: 0.98,
            rho_min: 0.02,
            rho_max: 0.5,
            resolution: 10,
            trials: 20,
            solvers: ["omp", "sl0", "limaps", "bp", "lasso"].map(String::from).to_vec(),
            solver_params: BTreeMap::new(),
            seed,
        }
    }

    /// n = 100, m ∈ [101, 1000], k ∈ [1, 50], 100 trials.
    pub fn full(seed: u64) -> Self {
        PhaseConfig { n: 100, delta_min: 0.1, delta_max: 0.99, rho_min: 0.01, resolution: 20, trials: 100, ..PhaseConfig::desk(seed) }
    }

    pub fn build_solvers(&self) -> Result<Vec<Solver>> {
        for key in self.solver_params.keys() {
            if !self.solvers.contains(key) {
                return Err(Error::Config {
                    key: format!("solver_params.{key}"),
                    message: "solver is not in the solver list".into(),
                });
            }
        }
        self.solvers
            .iter()
            .map(|name| Solver::with_params(name, &self.solver_params.get(name).cloned().unwrap_or_default()))
            .collect()
    }

    /// `(m, k)` per grid point, δ-major.
    pub fn grid(&self) -> Result<Vec<(usize, usize)>> {
        self.validate()?;
        let lin = |lo: f64, hi: f64, i: usize| {
            if self.resolution == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (self.resolution - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(self.resolution * self.resolution);
        for i in 0..self.resolution {
            let m = (self.n as f64 / lin(self.delta_min, self.delta_max, i)).round() as usize;
            for j in 0..self.resolution {
                let k = ((lin(self.rho_min, self.rho_max, j) * self.n as f64).round() as usize).max(1);
                if m <= self.n {
                    return Err(Error::Config { key: "delta_max".into(), message: format!("gives m = {m} <= n = {}", self.n) });
                }
                if 2 * k > self.n {
                    return Err(Error::Config { key: "rho_max".into(), message: format!("gives k = {k} > n/2") });
                }
                out.push((m, k));
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| Err(Error::Config { key: key.into(), message: message.into() });
        if self.n == 0 {
            return bad("n", "must be positive");
        }
        if !(self.delta_min > 0.0 && self.delta_min <= self.delta_max && self.delta_max < 1.0) {
            return bad("delta_min", "need 0 < delta_min <= delta_max < 1");
        }
        if !(self.rho_min > 0.0 && self.rho_min <= self.rho_max && self.rho_max <= 0.5) {
            return bad("rho_min", "need 0 < rho_min <= rho_max <= 0.5");
        }
        if self.resolution == 0 {
            return bad("resolution", "must be positive");
        }
        if self.trials == 0 {
            return bad("trials", "must be positive");
        }
        if self.solvers.is_empty() {
            return bad("solvers", "need at least one solver");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub mean_snr: f64,
    pub std_snr: f64,
    /// Trials where the solver returned an error (scored as −300 dB).
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub delta: f64,
    pub rho: f64,
    pub m: usize,
    pub k: usize,
    pub trials: usize,
    pub solvers: BTreeMap<String, SolverStats>,
}

fn trial_snrs(cfg: &PhaseConfig, solvers: &[Solver], m: usize, k: usize, stream: &RngStream) -> Vec<(f64, bool)> {
    let instance = (|| -> Result<_> {
        let phi = gaussian_frame(cfg.n, m, &stream.fork(0), true)?;
        let alpha = exact_k_sparse(m, k, &stream.fork(1))?;
        Ok((phi.apply(&alpha), phi, alpha))
    })();
    let Ok((s, phi, alpha)) = instance else {
        return vec![(-SNR_CAP_DB, true); solvers.len()];
    };
    let proj = if solvers.iter().any(Solver::uses_projector) { Projector::new(&phi).ok() } else { None };
    solvers
        .iter()
        .map(|solver| {
            if solver.uses_projector() && proj.is_none() {
                return (-SNR_CAP_DB, true);
            }
            match solver.solve_with(&phi, &s, proj.as_ref()).and_then(|r| recovery_snr(&alpha, &r.code)) {
                Ok(v) => (v, false),
                Err(_) => (-SNR_CAP_DB, true),
            }
        })
        .collect()
}

pub fn phase_grid(cfg: &PhaseConfig) -> Result<Vec<PhaseCell>> {
    let grid = cfg.grid()?;
    let solvers = cfg.build_solvers()?;
    let master = RngStream::new(cfg.seed);
    let tasks: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..cfg.trials).map(move |t| (c, t))).collect();
    let results: Vec<Vec<(f64, bool)>> = tasks
        .par_iter()
        .map(|&(c, t)| {
            let (m, k) = grid[c];
            trial_snrs(cfg, &solvers, m, k, &master.fork(c as u64).fork(t as u64))
        })
        .collect();

    let mut cells = Vec::with_capacity(grid.len());
    for (c, &(m, k)) in grid.iter().enumerate() {
        let chunk = &results[c * cfg.trials..(c + 1) * cfg.trials];
        let mut stats = BTreeMap::new();
        for (si, solver) in solvers.iter().enumerate() {
            let vals: Vec<f64> = chunk.iter().map(|r| r[si].0).collect();
            let failures = chunk.iter().filter(|r| r[si].1).count();
            let (mean, std) = mean_std(&vals);
            stats.insert(cfg.solvers[si].clone(), SolverStats { mean_snr: mean, std_snr: std, failures });
            debug_assert_eq!(solver.name(), cfg.solvers[si]);
        }
        cells.push(PhaseCell { delta: cfg.n as f64 / m as f64, rho: k as f64 / cfg.n as f64, m, k, trials: cfg.trials, solvers: stats });
    }
    Ok(cells)
}

/// Mean and sample standard deviation, summed in order.
pub fn mean_std(vals: &[f64]) -> (f64, f64) {
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Sum of mean SNR over all cells for every solver present in the grid.
fn raw_volumes(cells: &[PhaseCell]) -> Result<BTreeMap<String, f64>> {
    let first = cells.first().ok_or_else(|| Error::invalid("empty phase grid"))?;
    let names: Vec<&String> = first.solvers.keys().collect();
    let mut out = BTreeMap::new();
    for name in names {
        let mut v = 0.0;
        for (i, cell) in cells.iter().enumerate() {
            let stats = cell
                .solvers
                .get(name)
                .ok_or_else(|| Error::invalid(format!("cell {i} has no result for solver `{name}`")))?;
            v += stats.mean_snr;
        }
        out.insert(name.clone(), v);
    }
    for (i, cell) in cells.iter().enumerate() {
        if cell.solvers.len() != out.len() {
            return Err(Error::invalid(format!("cell {i} has a different solver set")));
        }
    }
    Ok(out)
}

/// Volume under every solver's surface divided by the largest volume.
pub fn volume_scores(cells: &[PhaseCell]) -> Result<BTreeMap<String, f64>> {
    let raw = raw_volumes(cells)?;
    let best = raw.values().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(raw
        .into_iter()
        .map(|(name, v)| {
            let score = if v == best {
                1.0
            } else if best == 0.0 {
                0.0
            } else {
                v / best
            };
            (name, score)
        })
        .collect())
}

pub fn volume_score(cells: &[PhaseCell], solver: &str) -> Result<f64> {
    volume_scores(cells)?
        .remove(solver)
        .ok_or_else(|| Error::invalid(format!("no results for solver `{solver}`")))
}

pub fn cells_csv(cells: &[PhaseCell]) -> String {
    let mut out = String::from("delta,rho,m,k,solver,mean_snr,std_snr,trials,failures\n");
    for c in cells {
        for (name, s) in &c.solvers {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                c.delta, c.rho, c.m, c.k, name, s.mean_snr, s.std_snr, c.trials, s.failures
            );
        }
    }
    out
}

/// Linear blue-white-red map over `[−300, +300]` dB.
fn heat_color(snr: f64) -> String {
    let t = ((snr + SNR_CAP_DB) / (2.0 * SNR_CAP_DB)).clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let u = t / 0.5;
        (255.0 * u, 255.0 * u, 255.0)
    } else {
        let u = (t - 0.5) / 0.5;
        (255.0, 255.0 * (1.0 - u), 255.0 * (1.0 - u))
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Self-contained SVG heatmap: δ increases to the right, ρ upwards.
pub fn heatmap_svg(cells: &[PhaseCell], solver: &str) -> Result<String> {
    let mut deltas: Vec<f64> = cells.iter().map(|c| c.delta).collect();
    let mut rhos: Vec<f64> = cells.iter().map(|c| c.rho).collect();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    rhos.sort_by(f64::total_cmp);
    rhos.dedup();
    let (cw, ch, left, top) = (48.0, 32.0, 70.0, 40.0);
    let width = left + cw * deltas.len() as f64 + 20.0;
    let height = top + ch * rhos.len() as f64 + 60.0;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="10">"#);
    let _ = writeln!(svg, r#"<text x="{left}" y="20" font-size="13">{solver}: mean SNR (dB), colour scale -300 (blue) to +300 (red)</text>"#);
    for c in cells {
        let stats = c.solvers.get(solver).ok_or_else(|| Error::invalid(format!("no results for solver `{solver}`")))?;
        let i = deltas.iter().position(|&d| d == c.delta).unwrap_or(0);
        let j = rhos.iter().position(|&r| r == c.rho).unwrap_or(0);
        let x = left + cw * i as f64;
        let y = top + ch * (rhos.len() - 1 - j) as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{}" stroke="grey" stroke-width="0.5"><title>delta={:.3} rho={:.3} snr={:.2}</title></rect>"#,
            heat_color(stats.mean_snr),
            c.delta,
            c.rho,
            stats.mean_snr
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{:.0}</text>"#, x + cw / 2.0, y + ch / 2.0 + 3.0, stats.mean_snr);
    }
    for (i, d) in deltas.iter().enumerate() {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{d:.2}</text>"#, left + cw * (i as f64 + 0.5), top + ch * rhos.len() as f64 + 14.0);
    }
    for (j, r) in rhos.iter().enumerate() {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{r:.2}</text>"#, left - 6.0, top + ch * (rhos.len() - 1 - j) as f64 + ch / 2.0 + 3.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">delta = n/m</text>"#, left + cw * deltas.len() as f64 / 2.0, height - 20.0);
    let _ = writeln!(svg, r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">rho = k/n</text>"#, top + ch * rhos.len() as f64 / 2.0, top + ch * rhos.len() as f64 / 2.0);
    svg.push_str("</svg>\n");
    Ok(svg)
}

// ---------------------------------------------------------------- dictionary study

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthDictConfig {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub samples: usize,
    pub iterations: usize,
    /// `‖DX‖_F / ‖N‖_F` in dB; `null` means no noise.
    pub noise_snr_db: Vec<Option<f64>>,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    #[serde(default = "default_coder")]
    pub coder: Coder,
    pub seed: u64,
}

fn default_group_size() -> usize {
    5
}

fn default_coder() -> Coder {
    Coder::Omp
}

impl SynthDictConfig {
    /// 50 × 100, k = 5, L = 2000, T = 50, 10 trials.
    pub fn desk(seed: u64) -> Self {
        SynthDictConfig {
            n: 50,
            m: 100,
            k: 5,
            samples: 2000,
            iterations: 50,
            noise_snr_db: vec![None, Some(30.0)],
            trials: 10,
            algorithms: vec![Algorithm::Ksvd, Algorithm::Rsvd],
            group_size: 5,
            coder: Coder::Omp,
            seed,
        }
    }

    /// L = 10000, T = 200, 100 trials, noise 10/30/50 dB and none.
    pub fn full(seed: u64) -> Self {
        SynthDictConfig {
            samples: 10_000,
            iterations: 200,
            trials: 100,
            noise_snr_db: vec![Some(10.0), Some(30.0), Some(50.0), None],
            ..SynthDictConfig::desk(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: key.into(), message });
        if !(self.n < self.m) {
            return bad("m", format!("need n < m, got n = {}, m = {}", self.n, self.m));
        }
        if !(self.k >= 1 && self.k < self.n) {
            return bad("k", format!("need 1 <= k < n, got {}", self.k));
        }
        if self.samples < self.m {
            return bad("samples", format!("need samples >= m = {}", self.m));
        }
        if self.trials == 0 {
            return bad("trials", "must be positive".into());
        }
        if self.algorithms.is_empty() {
            return bad("algorithms", "need at least one algorithm".into());
        }
        if self.group_size == 0 {
            return bad("group_size", "must be positive".into());
        }
        if self.noise_snr_db.iter().flatten().any(|v| !v.is_finite()) {
            return bad("noise_snr_db", "levels must be finite or null".into());
        }
        Ok(())
    }
}

/// One learning run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DictRun {
    pub noise_snr_db: Option<f64>,
    pub trial: usize,
    pub algorithm: Algorithm,
    pub e_snr: Vec<f64>,
    pub recovered_atoms: usize,
    /// Update steps whose fit error rose by more than the tolerance.
    pub monotone_violations: usize,
    pub reseeded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DictSummary {
    pub noise_snr_db: Option<f64>,
    pub algorithm: Algorithm,
    pub mean_curve: Vec<f64>,
    pub mean_final_e_snr: f64,
    pub mean_recovered: f64,
    pub std_recovered: f64,
    pub monotone_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthDictReport {
    pub config: SynthDictConfig,
    pub summaries: Vec<DictSummary>,
    pub runs: Vec<DictRun>,
}

impl SynthDictReport {
    pub fn summary(&self, noise: Option<f64>, algorithm: Algorithm) -> Option<&DictSummary> {
        self.summaries.iter().find(|s| s.noise_snr_db == noise && s.algorithm == algorithm)
    }
}

/// `Y = D·X + N` with a unit-norm Gaussian `D`, exactly `k` Gaussian
/// non-zeros per column of `X`, and `N` scaled to the requested SNR.
pub fn synth_training_set(cfg: &SynthDictConfig, noise: Option<f64>, stream: &RngStream) -> Result<(Frame, TrainingSet)> {
    let d = gaussian_frame(cfg.n, cfg.m, &stream.fork(0), true)?;
    let mut x = DMatrix::zeros(cfg.m, cfg.samples);
    let codes = stream.fork(1);
    for l in 0..cfg.samples {
        let c = exact_k_sparse(cfg.m, cfg.k, &codes.fork(l as u64))?;
        for &i in c.support() {
            x[(i, l)] = c.values()[i];
        }
    }
    let mut y = d.matrix() * &x;
    if let Some(snr) = noise {
        let n = gaussian_matrix(cfg.n, cfg.samples, &mut stream.fork(3).generator());
        let scale = y.norm() / n.norm() / 10f64.powf(snr / 20.0);
        y += n * scale;
    }
    Ok((d, TrainingSet::new(y)?))
}

pub fn synth_dict_experiment(cfg: &SynthDictConfig) -> Result<SynthDictReport> {
    cfg.validate()?;
    let master = RngStream::new(cfg.seed);
    let tasks: Vec<(usize, usize)> =
        (0..cfg.noise_snr_db.len()).flat_map(|v| (0..cfg.trials).map(move |t| (v, t))).collect();
    let per_trial: Vec<Result<Vec<DictRun>>> = tasks
        .par_iter()
        .map(|&(v, t)| {
            let noise = cfg.noise_snr_db[v];
            let stream = master.fork(v as u64).fork(t as u64);
            let (d_true, y) = synth_training_set(cfg, noise, &stream)?;
            cfg.algorithms
                .iter()
                .map(|&algorithm| {
                    let lc = LearnConfig {
                        group_size: cfg.group_size,
                        coder: cfg.coder,
                        ..LearnConfig::new(cfg.m, cfg.k, cfg.iterations, algorithm, stream.fork(2))
                    };
                    let trace = learn(&y, &lc)?;
                    let violations = trace
                        .updates
                        .iter()
                        .filter(|u| u.after > u.before + MONOTONE_TOL * u.before.max(1.0))
                        .count();
                    Ok(DictRun {
                        noise_snr_db: noise,
                        trial: t,
                        algorithm,
                        e_snr: trace.e_snr,
                        recovered_atoms: atom_recovery_count(&d_true, &trace.dictionary, ATOM_MATCH_EPS)?,
                        monotone_violations: violations,
                        reseeded: trace.reseeded,
                    })
                })
                .collect()
        })
        .collect();
    let mut runs = Vec::new();
    for r in per_trial {
        runs.extend(r?);
    }

    let mut summaries = Vec::new();
    for &noise in &cfg.noise_snr_db {
        for &algorithm in &cfg.algorithms {
            let group: Vec<&DictRun> = runs.iter().filter(|r| r.noise_snr_db == noise && r.algorithm == algorithm).collect();
            let len = cfg.iterations + 1;
            let mean_curve: Vec<f64> =
                (0..len).map(|i| group.iter().map(|r| r.e_snr[i]).sum::<f64>() / group.len() as f64).collect();
            let recovered: Vec<f64> = group.iter().map(|r| r.recovered_atoms as f64).collect();
            let (mean_recovered, std_recovered) = mean_std(&recovered);
            summaries.push(DictSummary {
                noise_snr_db: noise,
                algorithm,
                mean_final_e_snr: mean_curve[len - 1],
                mean_curve,
                mean_recovered,
                std_recovered,
                monotone_violations: group.iter().map(|r| r.monotone_violations).sum(),
            });
        }
    }
    Ok(SynthDictReport { config: cfg.clone(), summaries, runs })
}

fn noise_label(noise: Option<f64>) -> String {
    match noise {
        Some(v) => format!("{v}"),
        None => "none".into(),
    }
}

pub fn learn_curves_csv(report: &SynthDictReport) -> String {
    let mut out = String::from("noise_snr_db,algorithm,iteration,mean_e_snr\n");
    for s in &report.summaries {
        for (i, v) in s.mean_curve.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", noise_label(s.noise_snr_db), s.algorithm.name(), i, v);
        }
    }
    out
}

pub fn atoms_table_csv(report: &SynthDictReport) -> String {
    let mut out = String::from("noise_snr_db,algorithm,mean_recovered,std_recovered,mean_final_e_snr,trials\n");
    for s in &report.summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            noise_label(s.noise_snr_db),
            s.algorithm.name(),
            s.mean_recovered,
            s.std_recovered,
            s.mean_final_e_snr,
            report.config.trials
        );
    }
    out
}
