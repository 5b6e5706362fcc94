//! Dictionary learning by alternating sparse coding and dictionary update
//! (MOD, K-SVD, R-SVD), plus the evaluation metrics.
//!
//! Codes are stored as a dense `m × L` matrix; zero entries are off-support.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_analysis::exhaustive_p0;
use crate::greedy::{ls_omp, omp, StopRule};
use crate::linalg::{pseudoinverse, svd, Frame};
use crate::recovery::snr_db;
use crate::rng::RngStream;

/// Training examples as the columns of an `n × L` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    y: DMatrix<f64>,
}

impl TrainingSet {
    pub fn new(y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() == 0 || y.ncols() == 0 {
            return Err(Error::invalid("training set is empty"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("training set has non-finite entries"));
        }
        if let Some(j) = y.column_iter().position(|c| c.iter().all(|v| *v == 0.0)) {
            return Err(Error::invalid(format!("training example {j} is all zeros")));
        }
        Ok(TrainingSet { y })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn len(&self) -> usize {
        self.y.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.y.ncols() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Mod,
    Ksvd,
    Rsvd,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Mod => "mod",
            Algorithm::Ksvd => "ksvd",
            Algorithm::Rsvd => "rsvd",
        }
    }
}

/// Sparse solver used in the coding step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coder {
    Omp,
    LsOmp,
    /// Exhaustive search; desk-scale only.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coding {
    pub x: DMatrix<f64>,
    /// Columns the coder failed on; they are left at zero.
    pub failed: Vec<usize>,
}

/// Codes every column of `y` with at most `k` atoms of `d`.
pub fn sparse_coding_step(d: &Frame, y: &DMatrix<f64>, k: usize, coder: Coder) -> Result<Coding> {
    d.require_unit_norm()?;
    if y.nrows() != d.rows() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} rows", d.rows()),
            found: format!("{} rows", y.nrows()),
        });
    }
    let stop = StopRule::sparsity(k);
    let columns: Vec<Option<Vec<(usize, f64)>>> = (0..y.ncols())
        .into_par_iter()
        .map(|l| {
            let s: DVector<f64> = y.column(l).into_owned();
            let r = match coder {
                Coder::Omp => omp(d, &s, &stop),
                Coder::LsOmp => ls_omp(d, &s, &stop),
                Coder::Exhaustive => exhaustive_p0(d, &s, k),
            };
            r.ok().map(|r| r.code.support().iter().map(|&i| (i, r.code.values()[i])).collect())
        })
        .collect();
    let mut x = DMatrix::zeros(d.cols(), y.ncols());
    let mut failed = Vec::new();
    for (l, col) in columns.into_iter().enumerate() {
        match col {
            Some(entries) => {
                for (i, v) in entries {
                    x[(i, l)] = v;
                }
            }
            None => failed.push(l),
        }
    }
    Ok(Coding { x, failed })
}

fn residual(d: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    y - d * x
}

fn row_is_zero(x: &DMatrix<f64>, h: usize) -> bool {
    x.row(h).iter().all(|v| *v == 0.0)
}

fn check_shapes(d: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if d.nrows() != y.nrows() || d.ncols() != x.nrows() || x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            expected: format!("D {}x{}, X {}x{}", y.nrows(), x.nrows(), x.nrows(), y.ncols()),
            found: format!("D {}x{}, X {}x{}", d.nrows(), d.ncols(), x.nrows(), x.ncols()),
        });
    }
    Ok(())
}

/// Replaces every atom with an all-zero code row by the worst-represented
/// training example, normalized. Distinct atoms get distinct examples.
///
/// The product `DX` is untouched because those rows of `X` are zero.
fn reseed_unused(d: &mut DMatrix<f64>, x: &DMatrix<f64>, r: &DMatrix<f64>, y: &DMatrix<f64>) -> usize {
    let unused: Vec<usize> = (0..d.ncols()).filter(|&h| row_is_zero(x, h)).collect();
    if unused.is_empty() {
        return 0;
    }
    let norms: Vec<f64> = r.column_iter().map(|c| c.norm_squared()).collect();
    let mut order: Vec<usize> = (0..y.ncols()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let mut count = 0;
    for (h, &l) in unused.iter().zip(order.iter()) {
        let col = y.column(l);
        let norm = col.norm();
        if norm > 0.0 {
            d.set_column(*h, &(col / norm));
            count += 1;
        }
    }
    count
}

#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub dictionary: Frame,
    pub codes: DMatrix<f64>,
    /// Atoms replaced because nothing used them.
    pub reseeded: usize,
}

/// Method of optimal directions: `D' = Y X†`, columns renormalized with the
/// code rows rescaled inversely.
pub fn mod_update(d: &Frame, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Update> {
    check_shapes(d.matrix(), x, y)?;
    let raw = y * pseudoinverse(x)?;
    let mut dict = raw;
    let mut codes = x.clone();
    for h in 0..dict.ncols() {
        let norm = dict.column(h).norm();
        if norm > 0.0 && !row_is_zero(x, h) {
            dict.column_mut(h).unscale_mut(norm);
            codes.row_mut(h).scale_mut(norm);
        } else {
            dict.set_column(h, &d.atom(h));
            codes.row_mut(h).fill(0.0);
        }
    }
    let r = residual(&dict, &codes, y);
    let reseeded = reseed_unused(&mut dict, &codes, &r, y);
    Ok(Update { dictionary: Frame::new(dict)?, codes, reseeded })
}

/// K-SVD sweep: each atom and its non-zero coefficients are replaced by the
/// best rank-1 fit (`d_h = u₁`, `x̃_h = σ₁v₁`) of the error restricted to the
/// examples that use it. Updated atoms are used immediately by later ones.
pub fn ksvd_update(d: &Frame, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Update> {
    check_shapes(d.matrix(), x, y)?;
    let mut dict = d.matrix().clone();
    let mut codes = x.clone();
    let mut r = residual(&dict, &codes, y);
    for h in 0..dict.ncols() {
        let omega: Vec<usize> = (0..codes.ncols()).filter(|&l| codes[(h, l)] != 0.0).collect();
        if omega.is_empty() {
            continue;
        }
        let old = dict.column(h).into_owned();
        let mut e = DMatrix::zeros(dict.nrows(), omega.len());
        for (j, &l) in omega.iter().enumerate() {
            e.set_column(j, &(r.column(l) + &old * codes[(h, l)]));
        }
        let dec = svd(&e)?;
        let mut u = dec.u.column(0).into_owned();
        let mut v = dec.v.column(0).into_owned() * dec.singular_values[0];
        if u.dot(&old) < 0.0 {
            u.neg_mut();
            v.neg_mut();
        }
        dict.set_column(h, &u);
        for (j, &l) in omega.iter().enumerate() {
            codes[(h, l)] = v[j];
            let fitted = &u * v[j];
            r.set_column(l, &(e.column(j) - fitted));
        }
    }
    // Unused atoms have zero code rows, so replacing them after the sweep is
    // the same as replacing them in place.
    let reseeded = reseed_unused(&mut dict, &codes, &r, y);
    Ok(Update { dictionary: Frame::new(dict)?, codes, reseeded })
}

/// Atom indices sorted by popularity (non-zeros in the code row, ascending;
/// ties keep the lower index first) and cut into consecutive groups.
pub fn popularity_groups(x: &DMatrix<f64>, group_size: usize) -> Vec<Vec<usize>> {
    let usage: Vec<usize> = x.row_iter().map(|r| r.iter().filter(|v| **v != 0.0).count()).collect();
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by_key(|&i| (usage[i], i));
    order.chunks(group_size.max(1)).map(|c| c.to_vec()).collect()
}

/// Orthogonal factor `R = argmin_{RᵀR = I} ‖E − RH‖_F` from `M = EHᵀ`.
pub fn procrustes_rotation(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dec = svd(m)?;
    Ok(&dec.u * dec.v.transpose())
}

/// R-SVD sweep over popularity-ordered atom groups, each rotated by the
/// orthogonal Procrustes solution. Codes are left unchanged.
pub fn rsvd_update(d: &Frame, x: &DMatrix<f64>, y: &DMatrix<f64>, group_size: usize) -> Result<Update> {
    check_shapes(d.matrix(), x, y)?;
    if group_size == 0 {
        return Err(Error::invalid("group size must be at least 1"));
    }
    let mut dict = d.matrix().clone();
    let mut r = residual(&dict, x, y);
    for group in popularity_groups(x, group_size) {
        let used: Vec<usize> = (0..x.ncols()).filter(|&l| group.iter().any(|&h| x[(h, l)] != 0.0)).collect();
        if used.is_empty() {
            continue;
        }
        let d_group = dict.select_columns(&group);
        let x_group = x.select_rows(&group).select_columns(&used);
        let h = &d_group * &x_group;
        let e = r.select_columns(&used) + &h;
        let rot = procrustes_rotation(&(&e * h.transpose()))?;
        let rotated = &rot * &d_group;
        for (j, &atom) in group.iter().enumerate() {
            dict.set_column(atom, &rotated.column(j));
        }
        let new_fit = &rot * &h;
        for (j, &l) in used.iter().enumerate() {
            r.set_column(l, &(e.column(j) - new_fit.column(j)));
        }
    }
    let reseeded = reseed_unused(&mut dict, x, &r, y);
    Ok(Update { dictionary: Frame::new(dict)?, codes: x.clone(), reseeded })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub atoms: usize,
    pub sparsity: usize,
    pub iterations: usize,
    pub algorithm: Algorithm,
    /// R-SVD group size.
    pub group_size: usize,
    pub coder: Coder,
    pub rng: RngStream,
}

impl LearnConfig {
    pub fn new(atoms: usize, sparsity: usize, iterations: usize, algorithm: Algorithm, rng: RngStream) -> Self {
        LearnConfig { atoms, sparsity, iterations, algorithm, group_size: 5, coder: Coder::Omp, rng }
    }

    pub fn validate(&self, n: usize, len: usize) -> Result<()> {
        if !(n < self.atoms) {
            return Err(Error::invalid(format!("need more atoms than dimensions, got n={n}, m={}", self.atoms)));
        }
        if !(self.sparsity >= 1 && self.sparsity < n) {
            return Err(Error::invalid(format!("sparsity must lie in 1..{n}, got {}", self.sparsity)));
        }
        if self.group_size == 0 {
            return Err(Error::invalid("group size must be at least 1"));
        }
        if len < self.atoms {
            return Err(Error::invalid(format!("need at least {} examples, got {len}", self.atoms)));
        }
        Ok(())
    }
}

/// Fit error around one dictionary update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpdateCheck {
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone)]
pub struct LearnTrace {
    /// `E_SNR` of the initial coding, then after each iteration (`T + 1` entries).
    pub e_snr: Vec<f64>,
    /// `‖Y − DX‖_F` just before and just after each update step.
    pub updates: Vec<UpdateCheck>,
    pub dictionary: Frame,
    pub codes: DMatrix<f64>,
    pub reseeded: usize,
    /// Wall-clock seconds per iteration; not deterministic.
    pub seconds: Vec<f64>,
}

/// `D₀` is `m` distinct training examples picked at random, normalized.
pub fn initial_dictionary(y: &TrainingSet, atoms: usize, rng: &RngStream) -> Result<Frame> {
    if atoms > y.len() {
        return Err(Error::invalid(format!("cannot pick {atoms} distinct examples from {}", y.len())));
    }
    let picks = index::sample(&mut rng.generator(), y.len(), atoms).into_vec();
    let cols: Vec<DVector<f64>> = picks.iter().map(|&l| y.matrix().column(l).normalize()).collect();
    Frame::from_columns(&cols)
}

pub fn learn(y: &TrainingSet, cfg: &LearnConfig) -> Result<LearnTrace> {
    cfg.validate(y.dim(), y.len())?;
    let ym = y.matrix();
    let mut dict = initial_dictionary(y, cfg.atoms, &cfg.rng)?;
    let mut codes = sparse_coding_step(&dict, ym, cfg.sparsity, cfg.coder)?.x;
    let mut e_snr = vec![e_snr(ym, dict.matrix(), &codes)];
    let mut updates = Vec::with_capacity(cfg.iterations);
    let mut seconds = Vec::with_capacity(cfg.iterations);
    let mut reseeded = 0;
    for t in 0..cfg.iterations {
        let start = Instant::now();
        if t > 0 {
            codes = sparse_coding_step(&dict, ym, cfg.sparsity, cfg.coder)?.x;
        }
        let before = residual(dict.matrix(), &codes, ym).norm();
        let update = match cfg.algorithm {
            Algorithm::Mod => mod_update(&dict, &codes, ym)?,
            Algorithm::Ksvd => ksvd_update(&dict, &codes, ym)?,
            Algorithm::Rsvd => rsvd_update(&dict, &codes, ym, cfg.group_size)?,
        };
        dict = update.dictionary;
        codes = update.codes;
        reseeded += update.reseeded;
        let after = residual(dict.matrix(), &codes, ym).norm();
        updates.push(UpdateCheck { before, after });
        e_snr.push(snr_db(ym.norm(), after));
        seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(LearnTrace { e_snr, updates, dictionary: dict, codes, reseeded, seconds })
}

/// `20·log₁₀(‖Y‖_F / ‖Y − DX‖_F)`, with `+300` dB for an exact fit.
pub fn e_snr(y: &DMatrix<f64>, d: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    snr_db(y.norm(), residual(d, x, y).norm())
}

/// Size of a maximum one-to-one matching between true and learned atoms,
/// where a pair may match when `1 − |dᵢᵀd̃ⱼ| < eps`.
pub fn atom_recovery_count(d_true: &Frame, d_learned: &Frame, eps: f64) -> Result<usize> {
    if d_true.rows() != d_learned.rows() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} rows", d_true.rows()),
            found: format!("{} rows", d_learned.rows()),
        });
    }
    let cos = d_true.matrix().tr_mul(d_learned.matrix());
    let adj: Vec<Vec<usize>> = (0..d_true.cols())
        .map(|i| (0..d_learned.cols()).filter(|&j| 1.0 - cos[(i, j)].abs() < eps).collect())
        .collect();
    Ok(max_bipartite_matching(&adj, d_learned.cols()))
}

/// Kuhn's augmenting-path algorithm.
fn max_bipartite_matching(adj: &[Vec<usize>], right: usize) -> usize {
    fn augment(i: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].map_or(true, |o| augment(o, adj, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; right];
    let mut count = 0;
    for i in 0..adj.len() {
        let mut seen = vec![false; right];
        if augment(i, adj, &mut seen, &mut owner) {
            count += 1;
        }
    }
    count
}
