//! Frame-quality measures and exhaustive recovery-condition checks.
//!
//! Everything that enumerates column subsets takes an explicit cap and
//! refuses with [`Error::TooLarge`] instead of running for hours.

use std::collections::BTreeMap;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::convex::lp::{lp_solve, StandardFormLp};
use crate::error::{Error, Result};
use crate::linalg::{column_rank, restricted_least_squares, singular_values, Frame, Signal, SparseCode};
use crate::recovery::{Diagnostic, RecoveryResult};

/// Default bound on the number of column subsets (or LPs) one call may visit.
pub const DEFAULT_SUBSET_CAP: u128 = 1_000_000;

/// Residual, relative to `‖s‖`, below which a fit counts as exact.
pub const EXACT_RTOL: f64 = 1e-10;

const TIGHT_RTOL: f64 = 1e-10;
const ETF_TOL: f64 = 1e-8;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn check_cap(what: &'static str, count: u128, limit: u128) -> Result<()> {
    if count > limit {
        return Err(Error::TooLarge { what, count, limit });
    }
    Ok(())
}

fn gram_abs(phi: &Frame) -> Result<DMatrix<f64>> {
    let norms = phi.column_norms();
    if let Some(j) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroColumn(j));
    }
    let mut g = phi.matrix().tr_mul(phi.matrix());
    let m = phi.cols();
    for i in 0..m {
        for j in 0..m {
            g[(i, j)] = (g[(i, j)] / (norms[i] * norms[j])).abs();
        }
    }
    Ok(g)
}

/// Largest absolute cosine between two distinct atoms.
pub fn mutual_coherence(phi: &Frame) -> Result<f64> {
    if phi.cols() < 2 {
        return Err(Error::invalid("coherence needs at least two atoms"));
    }
    let g = gram_abs(phi)?;
    let m = phi.cols();
    let mut mu = 0.0_f64;
    for j in 1..m {
        for i in 0..j {
            mu = mu.max(g[(i, j)]);
        }
    }
    Ok(mu.min(1.0))
}

/// Lower bound on the coherence of any unit-norm `n × m` frame.
pub fn welch_bound(n: usize, m: usize) -> Result<f64> {
    if n == 0 || m < 2 || m < n {
        return Err(Error::invalid(format!("welch bound needs m >= n >= 1 and m >= 2, got n={n}, m={m}")));
    }
    Ok((((m - n) as f64) / (n as f64 * (m - 1) as f64)).sqrt())
}

/// Cumulative coherence: the largest total `|φⱼᵀφᵢ|` over `p` atoms `i ≠ j`.
pub fn babel(phi: &Frame, p: usize) -> Result<f64> {
    phi.require_unit_norm()?;
    let m = phi.cols();
    if p == 0 || p >= m {
        return Err(Error::invalid(format!("babel order must lie in 1..={}, got {p}", m - 1)));
    }
    let g = gram_abs(phi)?;
    let mut best = 0.0_f64;
    for j in 0..m {
        let mut row: Vec<f64> = (0..m).filter(|&i| i != j).map(|i| g[(i, j)]).collect();
        row.sort_by(|a, b| b.total_cmp(a));
        best = best.max(row[..p].iter().sum());
    }
    Ok(best)
}

fn subset_independent(phi: &Frame, cols: &[usize]) -> Result<bool> {
    Ok(column_rank(&phi.select(cols))? == cols.len())
}

/// Smallest number of linearly dependent atoms; `m + 1` if there is none.
pub fn spark(phi: &Frame) -> Result<usize> {
    spark_with_cap(phi, DEFAULT_SUBSET_CAP)
}

pub fn spark_with_cap(phi: &Frame, cap: u128) -> Result<usize> {
    let (n, m) = (phi.rows(), phi.cols());
    let top = m.min(n + 1);
    check_cap("column subsets", (1..=top).map(|s| binomial(m, s)).sum(), cap)?;
    for size in 1..=top {
        for cols in (0..m).combinations(size) {
            if !subset_independent(phi, &cols)? {
                return Ok(size);
            }
        }
    }
    Ok(m + 1)
}

/// Kruskal rank: the largest `k` such that every `k` atoms are independent.
///
/// Searches downwards from `min(n, m)`, so it shares no enumeration order
/// with [`spark`].
pub fn krank(phi: &Frame) -> Result<usize> {
    krank_with_cap(phi, DEFAULT_SUBSET_CAP)
}

pub fn krank_with_cap(phi: &Frame, cap: u128) -> Result<usize> {
    let (n, m) = (phi.rows(), phi.cols());
    let top = n.min(m);
    check_cap("column subsets", (1..=top).map(|s| binomial(m, s)).sum(), cap)?;
    for k in (1..=top).rev() {
        let mut all = true;
        for cols in (0..m).combinations(k) {
            if !subset_independent(phi, &cols)? {
                all = false;
                break;
            }
        }
        if all {
            return Ok(k);
        }
    }
    Ok(0)
}

/// `1 + 1/μ`, a lower bound on the spark; `+∞` when the atoms are orthogonal.
pub fn gershgorin_spark_bound(phi: &Frame) -> Result<f64> {
    let mu = mutual_coherence(phi)?;
    Ok(if mu == 0.0 { f64::INFINITY } else { 1.0 + 1.0 / mu })
}

/// Restricted isometry constant `δ_k = max_{|Λ|≤k} ‖Φ_ΛᵀΦ_Λ − I‖`.
///
/// Computed from the extreme singular values of every `k`-column submatrix;
/// subsets of size below `k` are covered by interlacing.
pub fn ric(phi: &Frame, k: usize) -> Result<f64> {
    ric_with_cap(phi, k, DEFAULT_SUBSET_CAP)
}

pub fn ric_with_cap(phi: &Frame, k: usize, cap: u128) -> Result<f64> {
    let (n, m) = (phi.rows(), phi.cols());
    if k == 0 || k > m {
        return Err(Error::invalid(format!("RIC order must lie in 1..={m}, got {k}")));
    }
    check_cap("column subsets", binomial(m, k), cap)?;
    let mut delta = 0.0_f64;
    for cols in (0..m).combinations(k) {
        let sv = singular_values(&phi.select(&cols))?;
        let smax = sv[0];
        let smin = if k > n { 0.0 } else { sv[k - 1] };
        delta = delta.max((smax * smax - 1.0).abs()).max((smin * smin - 1.0).abs());
    }
    Ok(delta)
}

/// Smallest `γ` with `‖z_Λ‖₁ ≤ γ‖z_{Λᶜ}‖₁` for all `z ∈ ker Φ`, `|Λ| ≤ k`.
///
/// One LP per support and sign pattern on it. Returns `0` for a trivial
/// kernel and `+∞` when some kernel vector lives entirely on `k` atoms.
pub fn nsp_constant(phi: &Frame, k: usize) -> Result<f64> {
    nsp_constant_with_cap(phi, k, DEFAULT_SUBSET_CAP)
}

pub fn nsp_constant_with_cap(phi: &Frame, k: usize, cap: u128) -> Result<f64> {
    let (n, m) = (phi.rows(), phi.cols());
    if k == 0 {
        return Err(Error::invalid("NSP order must be at least 1"));
    }
    if column_rank(phi.matrix())? == m {
        return Ok(0.0);
    }
    let k = k.min(m);
    let patterns = 1u128 << (k - 1).min(100);
    check_cap("NSP linear programs", binomial(m, k).saturating_mul(patterns), cap)?;

    // Variables (z⁺, z⁻, u); rows Φz⁺ − Φz⁻ = 0 and Σ_{Λᶜ}(z⁺ + z⁻) + u = 1.
    let nv = 2 * m + 1;
    let mut base = DMatrix::zeros(n + 1, nv);
    base.view_mut((0, 0), (n, m)).copy_from(phi.matrix());
    base.view_mut((0, m), (n, m)).copy_from(&(-phi.matrix()));
    base[(n, 2 * m)] = 1.0;
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;

    let mut gamma = 0.0_f64;
    for support in (0..m).combinations(k) {
        let mut constraints = base.clone();
        let mut in_support = vec![false; m];
        for &i in &support {
            in_support[i] = true;
        }
        for i in (0..m).filter(|&i| !in_support[i]) {
            constraints[(n, i)] = 1.0;
            constraints[(n, m + i)] = 1.0;
        }
        for pattern in 0..(1u64 << (k - 1)) {
            let mut cost = DVector::zeros(nv);
            for (pos, &i) in support.iter().enumerate() {
                let sign = if pos > 0 && pattern >> (pos - 1) & 1 == 1 { -1.0 } else { 1.0 };
                cost[i] = -sign;
                cost[m + i] = sign;
            }
            let lp = StandardFormLp::new(cost, constraints.clone(), rhs.clone())?;
            match lp_solve(&lp) {
                Ok(sol) => gamma = gamma.max(-sol.objective),
                Err(Error::Unbounded) => return Ok(f64::INFINITY),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(gamma)
}

/// `σ_k(s)_p`: the ℓp norm of everything but the `k` largest-magnitude entries.
///
/// Ties keep the lower index. `k` larger than the length gives 0.
pub fn best_k_term_error(s: &DVector<f64>, k: usize, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::invalid(format!("p must be positive, got {p}")));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].abs().total_cmp(&s[i].abs()).then(i.cmp(&j)));
    let tail = order.iter().skip(k).map(|&i| s[i].abs());
    Ok(if p.is_infinite() {
        tail.fold(0.0, f64::max)
    } else {
        tail.map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p)
    })
}

/// Exhaustive search for the sparsest least-squares fit with at most
/// `k_max` atoms.
///
/// Supports are visited by size and then lexicographically, and a later
/// support only wins by lowering the residual beyond the exactness
/// tolerance. The search stops at the first exact fit. `converged` on the
/// result is the exactness flag; `iterations` counts supports visited.
pub fn exhaustive_p0(phi: &Frame, s: &Signal, k_max: usize) -> Result<RecoveryResult> {
    exhaustive_p0_with_cap(phi, s, k_max, DEFAULT_SUBSET_CAP)
}

pub fn exhaustive_p0_with_cap(phi: &Frame, s: &Signal, k_max: usize, cap: u128) -> Result<RecoveryResult> {
    phi.check_signal(s)?;
    let m = phi.cols();
    let k_max = k_max.min(m);
    check_cap("candidate supports", (0..=k_max).map(|j| binomial(m, j)).sum(), cap)?;
    let tol = EXACT_RTOL * s.norm();
    let mut best = SparseCode::zeros(m);
    let mut best_res = s.norm();
    let mut best_flag = false;
    let mut visited = 1;
    let mut trace = vec![best_res];
    'sizes: for size in 1..=k_max {
        if best_res <= tol {
            break;
        }
        for cols in (0..m).combinations(size) {
            visited += 1;
            let (x, flagged) = restricted_least_squares(phi.matrix(), &cols, s)?;
            let code = SparseCode::from_support(m, &cols, x.as_slice());
            let res = (phi.apply(&code) - s).norm();
            if res < best_res - tol {
                best = code;
                best_res = res;
                best_flag = flagged;
                if best_res <= tol {
                    break 'sizes;
                }
            }
        }
        trace.push(best_res);
    }
    let exact = best_res <= tol;
    let result = RecoveryResult::new(phi, s, best, visited, exact, trace);
    Ok(if best_flag { result.with_diagnostic(Diagnostic::RankDeficientSubproblem) } else { result })
}

/// Lower and upper frame bounds `(σ_min², σ_max²)`.
///
/// `a` is reported as 0 when `Φ` lacks full row rank.
pub fn frame_bounds(phi: &Frame) -> Result<(f64, f64)> {
    let sv = singular_values(phi.matrix())?;
    let b = sv[0] * sv[0];
    let rank = column_rank(phi.matrix())?;
    let a = if rank < phi.rows() { 0.0 } else { sv[phi.rows() - 1].powi(2) };
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameFlags {
    pub tight: bool,
    pub parseval: bool,
    pub etf: bool,
    pub unit_norm: bool,
    /// Fewer than `n` independent rows; the lower bound is then 0.
    pub rank_deficient: bool,
}

pub fn frame_flags(phi: &Frame) -> Result<FrameFlags> {
    let (a, b) = frame_bounds(phi)?;
    let tight = (a - b).abs() <= TIGHT_RTOL * b;
    let parseval = tight && (a - 1.0).abs() <= TIGHT_RTOL;
    let unit_norm = phi.is_unit_norm();
    let etf = unit_norm && tight && phi.cols() >= 2 && phi.cols() >= phi.rows() && {
        let welch = welch_bound(phi.rows(), phi.cols())?;
        let g = gram_abs(phi)?;
        (0..phi.cols()).all(|j| (0..j).all(|i| (g[(i, j)] - welch).abs() <= ETF_TOL))
    };
    Ok(FrameFlags { tight, parseval, etf, unit_norm, rank_deficient: a == 0.0 })
}

fn finite_or_null<S: Serializer>(v: &f64, ser: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        ser.serialize_f64(*v)
    } else {
        ser.serialize_none()
    }
}

fn map_finite_or_null<S: Serializer>(
    map: &BTreeMap<usize, f64>,
    ser: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut out = ser.serialize_map(Some(map.len()))?;
    for (k, v) in map {
        out.serialize_entry(&k.to_string(), &if v.is_finite() { Some(*v) } else { None })?;
    }
    out.end()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameBounds {
    pub a: f64,
    pub b: f64,
}

/// Everything [`analyze`] measures. Infinite values serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameReport {
    pub rows: usize,
    pub cols: usize,
    pub coherence: f64,
    pub welch_bound: Option<f64>,
    pub frame_bounds: FrameBounds,
    pub flags: FrameFlags,
    #[serde(serialize_with = "finite_or_null")]
    pub gershgorin_bound: f64,
    pub spark: Option<usize>,
    pub krank: Option<usize>,
    #[serde(serialize_with = "map_finite_or_null")]
    pub ric: BTreeMap<usize, f64>,
    #[serde(serialize_with = "map_finite_or_null")]
    pub nsp: BTreeMap<usize, f64>,
}

impl FrameReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    /// Run spark and krank.
    pub exhaustive: bool,
    pub ric_orders: Vec<usize>,
    pub nsp_orders: Vec<usize>,
    pub subset_cap: u128,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions { exhaustive: true, ric_orders: vec![1, 2, 3], nsp_orders: vec![1, 2], subset_cap: DEFAULT_SUBSET_CAP }
    }
}

pub fn analyze(phi: &Frame, opts: &AnalyzeOptions) -> Result<FrameReport> {
    let (a, b) = frame_bounds(phi)?;
    let welch = if phi.cols() >= phi.rows() && phi.cols() >= 2 { Some(welch_bound(phi.rows(), phi.cols())?) } else { None };
    let (spark, krank) = if opts.exhaustive {
        (Some(spark_with_cap(phi, opts.subset_cap)?), Some(krank_with_cap(phi, opts.subset_cap)?))
    } else {
        (None, None)
    };
    let mut ric = BTreeMap::new();
    for &k in opts.ric_orders.iter().filter(|&&k| k <= phi.cols()) {
        ric.insert(k, ric_with_cap(phi, k, opts.subset_cap)?);
    }
    let mut nsp = BTreeMap::new();
    for &k in &opts.nsp_orders {
        nsp.insert(k, nsp_constant_with_cap(phi, k, opts.subset_cap)?);
    }
    Ok(FrameReport {
        rows: phi.rows(),
        cols: phi.cols(),
        coherence: mutual_coherence(phi)?,
        welch_bound: welch,
        frame_bounds: FrameBounds { a, b },
        flags: frame_flags(phi)?,
        gershgorin_bound: gershgorin_spark_bound(phi)?,
        spark,
        krank,
        ric,
        nsp,
    })
}
