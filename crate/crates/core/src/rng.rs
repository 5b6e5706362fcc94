//! Deterministic, splittable random streams and the random instance generators.
//!
//! A stream is a master seed plus a path of integers (cell index, trial index,
//! ...). The generator seed is a SplitMix64 fold of the seed and the path, and
//! the generator itself is ChaCha8. Gaussian draws use `rand_distr`'s ziggurat
//! `StandardNormal`. Output is reproducible for a given build; it is not meant
//! to match other implementations bit for bit.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{Frame, SparseCode};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, path: Vec::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// A child stream one level deeper. The parent is left untouched.
    pub fn fork(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        RngStream { seed: self.seed, path }
    }

    pub fn derived_seed(&self) -> u64 {
        // Length is folded in so that (a) and (a, 0) differ.
        let mut h = splitmix64(self.seed ^ 0x5350_4152_5345_u64);
        h = splitmix64(h ^ self.path.len() as u64);
        for &p in &self.path {
            h = splitmix64(h ^ p);
        }
        h
    }

    pub fn generator(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derived_seed())
    }
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// i.i.d. standard normal frame, optionally with unit-norm columns.
pub fn gaussian_frame(n: usize, m: usize, stream: &RngStream, unit_columns: bool) -> Result<Frame> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("gaussian_frame needs n, m >= 1"));
    }
    let mut rng = stream.generator();
    let mut matrix = gaussian_matrix(n, m, &mut rng);
    if unit_columns {
        for mut col in matrix.column_iter_mut() {
            let mut norm = col.norm();
            while norm == 0.0 {
                for v in col.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                norm = col.norm();
            }
            col /= norm;
        }
    }
    Frame::new(matrix)
}

/// `α_i = θ_i · ω_i` with `θ_i ~ Bernoulli(rho)` and `ω_i ~ N(0, 1)`.
pub fn bernoulli_gaussian(m: usize, rho: f64, stream: &RngStream) -> Result<SparseCode> {
    if !(0.0..=0.5).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 0.5], got {rho}")));
    }
    let mut rng = stream.generator();
    let values = (0..m)
        .map(|_| {
            let on = rng.gen_bool(rho);
            let w: f64 = rng.sample(StandardNormal);
            if on {
                w
            } else {
                0.0
            }
        })
        .collect();
    Ok(SparseCode::from_dense(values))
}

/// Bernoulli–Gaussian conditioned on exactly `k` non-zeros: uniform random
/// support, standard normal values.
pub fn exact_k_sparse(m: usize, k: usize, stream: &RngStream) -> Result<SparseCode> {
    if k > m {
        return Err(Error::invalid(format!("cannot place {k} non-zeros in length {m}")));
    }
    let mut rng = stream.generator();
    let mut support = index::sample(&mut rng, m, k).into_vec();
    support.sort_unstable();
    let mut values = vec![0.0; m];
    for &i in &support {
        let mut w: f64 = rng.sample(StandardNormal);
        while w == 0.0 {
            w = rng.sample(StandardNormal);
        }
        values[i] = w;
    }
    Ok(SparseCode::from_dense(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_frame() {
        let s = RngStream::new(42).fork(3).fork(7);
        let a = gaussian_frame(5, 9, &s, false).unwrap();
        let b = gaussian_frame(5, 9, &s, false).unwrap();
        assert_eq!(a, b);
        let c = gaussian_frame(5, 9, &RngStream::new(42).fork(3).fork(8), false).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn path_length_matters() {
        let a = RngStream::new(1).fork(0);
        let b = RngStream::new(1).fork(0).fork(0);
        assert_ne!(a.derived_seed(), b.derived_seed());
        assert_ne!(RngStream::new(1).derived_seed(), a.derived_seed());
    }

    #[test]
    fn unit_columns() {
        let f = gaussian_frame(7, 30, &RngStream::new(5), true).unwrap();
        for n in f.column_norms() {
            assert!((n - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn large_sample_moments() {
        let f = gaussian_frame(100, 1000, &RngStream::new(11), false).unwrap();
        let n = (100 * 1000) as f64;
        let mean = f.matrix().iter().sum::<f64>() / n;
        let var = f.matrix().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 0.02, "mean {mean}");
        assert!((0.97..=1.03).contains(&var), "var {var}");
    }

    #[test]
    fn bernoulli_gaussian_edges() {
        let z = bernoulli_gaussian(50, 0.0, &RngStream::new(3)).unwrap();
        assert_eq!(z.sparsity(), 0);
        let half = bernoulli_gaussian(10_000, 0.5, &RngStream::new(3)).unwrap();
        let frac = half.sparsity() as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&frac), "fraction {frac}");
        let again = bernoulli_gaussian(10_000, 0.5, &RngStream::new(3)).unwrap();
        assert_eq!(half, again);
        assert!(bernoulli_gaussian(10, 0.6, &RngStream::new(3)).is_err());
    }

    #[test]
    fn exact_sparsity() {
        let c = exact_k_sparse(40, 6, &RngStream::new(9)).unwrap();
        assert_eq!(c.sparsity(), 6);
        assert!(exact_k_sparse(3, 4, &RngStream::new(9)).is_err());
    }
}
