//! Reproducible sampling of the two independent Brownian drivers W and B.
//!
//! Every path draws from its own ChaCha stream keyed by `(master_seed, path
//! index)`, so a bundle is bit-identical whatever the worker count or the
//! order in which paths are produced.

use std::io::{self, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::problem::{build_uniform_partition, Partition, ProblemError};

#[derive(Debug, Error)]
pub enum PathsError {
    #[error("path count must be at least 1")]
    EmptyBundle,
    #[error("antithetic sampling needs an even path count, got {0}")]
    OddAntithetic(usize),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("integrand has {got} values but the range [{start}, {end}) needs {}", end - start)]
    LengthMismatch {
        got: usize,
        start: usize,
        end: usize,
    },
    #[error("cannot coarsen {steps} steps by a factor of {factor}")]
    BadCoarsening { steps: usize, factor: usize },
    #[error("bundle dump requires a uniform partition")]
    NonUniformPartition,
    #[error(transparent)]
    Partition(#[from] ProblemError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Seed plus the rule path index → independent substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub master_seed: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Generator for substream `index`. ChaCha streams are independent by
    /// construction, so no hashing of the index is needed.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index);
        rng
    }

    /// A new spec for an unrelated purpose (e.g. oracle sampling vs path
    /// sampling) derived from this one with a SplitMix64 finalizer.
    pub fn derive(&self, label: u64) -> RngSpec {
        let mut z = self
            .master_seed
            .wrapping_add(label.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        RngSpec::new(z ^ (z >> 31))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    W,
    B,
}

/// Increments ΔW_i, ΔB_i for M paths, stored path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    partition: Partition,
    seed: u64,
    path_count: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

pub fn sample_bundle(
    partition: &Partition,
    path_count: usize,
    rng: RngSpec,
    antithetic: bool,
) -> Result<PathBundle, PathsError> {
    if path_count == 0 {
        return Err(PathsError::EmptyBundle);
    }
    if antithetic && !path_count.is_multiple_of(2) {
        return Err(PathsError::OddAntithetic(path_count));
    }
    let n = partition.len();
    let sd: Vec<f64> = partition.steps().iter().map(|h| h.sqrt()).collect();
    let mut w = vec![0.0; path_count * n];
    let mut b = vec![0.0; path_count * n];

    let fill = |stream: u64, w_row: &mut [f64], b_row: &mut [f64]| {
        let mut r = rng.stream(stream);
        for (x, s) in w_row.iter_mut().zip(&sd) {
            let z: f64 = StandardNormal.sample(&mut r);
            *x = s * z;
        }
        for (x, s) in b_row.iter_mut().zip(&sd) {
            let z: f64 = StandardNormal.sample(&mut r);
            *x = s * z;
        }
    };

    if antithetic {
        w.par_chunks_mut(2 * n)
            .zip(b.par_chunks_mut(2 * n))
            .enumerate()
            .for_each(|(pair, (w_pair, b_pair))| {
                let (w0, w1) = w_pair.split_at_mut(n);
                let (b0, b1) = b_pair.split_at_mut(n);
                fill(pair as u64, w0, b0);
                for (dst, src) in w1.iter_mut().zip(w0.iter()) {
                    *dst = -*src;
                }
                for (dst, src) in b1.iter_mut().zip(b0.iter()) {
                    *dst = -*src;
                }
            });
    } else {
        w.par_chunks_mut(n)
            .zip(b.par_chunks_mut(n))
            .enumerate()
            .for_each(|(path, (w_row, b_row))| fill(path as u64, w_row, b_row));
    }

    Ok(PathBundle {
        partition: partition.clone(),
        seed: rng.master_seed,
        path_count,
        w,
        b,
    })
}

impl PathBundle {
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn path_count(&self) -> usize {
        self.path_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn steps(&self) -> usize {
        self.partition.len()
    }

    pub fn w_increments(&self, path: usize) -> &[f64] {
        let n = self.steps();
        &self.w[path * n..(path + 1) * n]
    }

    pub fn b_increments(&self, path: usize) -> &[f64] {
        let n = self.steps();
        &self.b[path * n..(path + 1) * n]
    }

    pub fn increments(&self, path: usize, driver: Driver) -> &[f64] {
        match driver {
            Driver::W => self.w_increments(path),
            Driver::B => self.b_increments(path),
        }
    }

    /// Value of the driver at t_i (partial sum of increments; 0 at i = 0).
    pub fn brownian_value(&self, path: usize, driver: Driver, i: usize) -> Result<f64, PathsError> {
        self.check_path(path)?;
        if i > self.steps() {
            return Err(PathsError::OutOfRange(format!(
                "grid index {i} > {}",
                self.steps()
            )));
        }
        Ok(self.increments(path, driver)[..i].iter().sum())
    }

    /// B_T − B_{t_i} for every i = 0…n, as suffix sums (last entry 0).
    pub fn b_future(&self, path: usize) -> Vec<f64> {
        suffix_sums(self.b_increments(path))
    }

    /// W_{t_i} for every i = 0…n.
    pub fn w_values(&self, path: usize) -> Vec<f64> {
        prefix_sums(self.w_increments(path))
    }

    /// Σ_{i=j}^{k−1} h_{t_{i+1}}·ΔB_i, with `integrand[i − j]` = h_{t_{i+1}}
    /// (right-endpoint evaluation, the discrete backward Itô convention).
    pub fn backward_ito_sum(
        &self,
        path: usize,
        integrand: &[f64],
        start: usize,
        end: usize,
    ) -> Result<f64, PathsError> {
        self.check_path(path)?;
        if start > end || end > self.steps() {
            return Err(PathsError::OutOfRange(format!(
                "range [{start}, {end}) outside [0, {}]",
                self.steps()
            )));
        }
        if integrand.len() != end - start {
            return Err(PathsError::LengthMismatch {
                got: integrand.len(),
                start,
                end,
            });
        }
        Ok(integrand
            .iter()
            .zip(&self.b_increments(path)[start..end])
            .map(|(h, db)| h * db)
            .sum())
    }

    /// Aggregates `factor` consecutive cells into one: the coarse bundle shares
    /// its noise with this one (common random numbers across refinements).
    pub fn coarsen(&self, factor: usize) -> Result<PathBundle, PathsError> {
        let n = self.steps();
        if factor == 0 || !n.is_multiple_of(factor) {
            return Err(PathsError::BadCoarsening { steps: n, factor });
        }
        let coarse_n = n / factor;
        let partition = if self.partition.is_uniform() {
            build_uniform_partition(coarse_n, self.partition.horizon())?
        } else {
            Partition::from_times(
                self.partition
                    .times()
                    .iter()
                    .step_by(factor)
                    .copied()
                    .collect(),
            )?
        };
        let agg =
            |src: &[f64]| -> Vec<f64> { src.chunks(factor).map(|c| c.iter().sum()).collect() };
        Ok(PathBundle {
            partition,
            seed: self.seed,
            path_count: self.path_count,
            w: agg(&self.w),
            b: agg(&self.b),
        })
    }

    fn check_path(&self, path: usize) -> Result<(), PathsError> {
        if path >= self.path_count {
            return Err(PathsError::OutOfRange(format!(
                "path {path} >= {}",
                self.path_count
            )));
        }
        Ok(())
    }

    /// Binary dump: header (seed u64, n u64, M u64, T f64), then little-endian
    /// f64 payload, W block then B block, each path-major.
    pub fn write_to<Wr: Write>(&self, mut out: Wr) -> Result<(), PathsError> {
        if !self.partition.is_uniform() {
            return Err(PathsError::NonUniformPartition);
        }
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&(self.steps() as u64).to_le_bytes())?;
        out.write_all(&(self.path_count as u64).to_le_bytes())?;
        out.write_all(&self.partition.horizon().to_le_bytes())?;
        for x in self.w.iter().chain(&self.b) {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<PathBundle, PathsError> {
        let mut word = [0u8; 8];
        let mut next = |input: &mut R| -> io::Result<[u8; 8]> {
            input.read_exact(&mut word)?;
            Ok(word)
        };
        let seed = u64::from_le_bytes(next(&mut input)?);
        let n = u64::from_le_bytes(next(&mut input)?) as usize;
        let m = u64::from_le_bytes(next(&mut input)?) as usize;
        let horizon = f64::from_le_bytes(next(&mut input)?);
        if m == 0 {
            return Err(PathsError::EmptyBundle);
        }
        let partition = build_uniform_partition(n, horizon)?;
        let mut read_block = |len: usize| -> io::Result<Vec<f64>> {
            (0..len)
                .map(|_| next(&mut input).map(f64::from_le_bytes))
                .collect()
        };
        let w = read_block(n * m)?;
        let b = read_block(n * m)?;
        Ok(PathBundle {
            partition,
            seed,
            path_count: m,
            w,
            b,
        })
    }
}

/// [0, x₀, x₀+x₁, …]
pub fn prefix_sums(increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for x in increments {
        acc += x;
        out.push(acc);
    }
    out
}

/// [Σ x, Σ_{j≥1} x_j, …, x_{n−1}, 0]
pub fn suffix_sums(increments: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; increments.len() + 1];
    let mut acc = 0.0;
    for (i, x) in increments.iter().enumerate().rev() {
        acc += x;
        out[i] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> Partition {
        build_uniform_partition(n, 1.0).unwrap()
    }

    #[test]
    fn antithetic_pairs_flip_sign() {
        let b = sample_bundle(&grid(1), 2, RngSpec::new(7), true).unwrap();
        assert_eq!(b.w_increments(1)[0], -b.w_increments(0)[0]);
        assert_eq!(b.b_increments(1)[0], -b.b_increments(0)[0]);
        assert!(matches!(
            sample_bundle(&grid(1), 3, RngSpec::new(7), true),
            Err(PathsError::OddAntithetic(3))
        ));
        assert!(matches!(
            sample_bundle(&grid(1), 0, RngSpec::new(7), false),
            Err(PathsError::EmptyBundle)
        ));
    }

    #[test]
    fn same_seed_same_bundle() {
        let a = sample_bundle(&grid(8), 50, RngSpec::new(42), false).unwrap();
        let b = sample_bundle(&grid(8), 50, RngSpec::new(42), false).unwrap();
        assert_eq!(a, b);
        let c = sample_bundle(&grid(8), 50, RngSpec::new(43), false).unwrap();
        assert_ne!(a, c);
        // a path's increments do not depend on how many paths are drawn
        let d = sample_bundle(&grid(8), 10, RngSpec::new(42), false).unwrap();
        assert_eq!(d.w_increments(9), a.w_increments(9));
    }

    #[test]
    fn thread_count_independence() {
        let p = grid(16);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_bundle(&p, 999, RngSpec::new(3), false).unwrap())
        };
        assert_eq!(run(1), run(8));
    }

    #[test]
    fn brownian_values() {
        let b = sample_bundle(&grid(5), 3, RngSpec::new(1), false).unwrap();
        assert_eq!(b.brownian_value(1, Driver::W, 0).unwrap(), 0.0);
        let total: f64 = b.b_increments(2).iter().sum();
        assert_eq!(b.brownian_value(2, Driver::B, 5).unwrap(), total);
        for i in 0..5 {
            let d = b.brownian_value(0, Driver::W, i + 1).unwrap()
                - b.brownian_value(0, Driver::W, i).unwrap();
            assert_abs_diff_eq!(d, b.w_increments(0)[i], epsilon = 1e-14);
        }
        assert!(b.brownian_value(0, Driver::B, 6).is_err());
        assert!(b.brownian_value(3, Driver::B, 0).is_err());
    }

    #[test]
    fn backward_sum_examples() {
        let b = sample_bundle(&grid(6), 2, RngSpec::new(5), false).unwrap();
        let gamma = 0.7;
        let s = b.backward_ito_sum(0, &[gamma; 3], 2, 5).unwrap();
        let expect = gamma
            * (b.brownian_value(0, Driver::B, 5).unwrap()
                - b.brownian_value(0, Driver::B, 2).unwrap());
        assert_abs_diff_eq!(s, expect, epsilon = 1e-14);
        assert_eq!(b.backward_ito_sum(1, &[0.0; 6], 0, 6).unwrap(), 0.0);
        assert!(matches!(
            b.backward_ito_sum(0, &[1.0; 2], 2, 5),
            Err(PathsError::LengthMismatch { .. })
        ));
        assert!(b.backward_ito_sum(0, &[], 4, 3).is_err());
    }

    #[test]
    fn future_sums_match_values() {
        let b = sample_bundle(&grid(7), 1, RngSpec::new(11), false).unwrap();
        let fut = b.b_future(0);
        let bt = b.brownian_value(0, Driver::B, 7).unwrap();
        for (i, f) in fut.iter().enumerate() {
            assert_abs_diff_eq!(
                *f,
                bt - b.brownian_value(0, Driver::B, i).unwrap(),
                epsilon = 1e-14
            );
        }
        assert_eq!(fut[7], 0.0);
        assert_eq!(b.w_values(0)[0], 0.0);
    }

    #[test]
    fn coarsening_aggregates_cells() {
        let fine = sample_bundle(&grid(8), 4, RngSpec::new(9), false).unwrap();
        let coarse = fine.coarsen(4).unwrap();
        assert_eq!(coarse.partition().len(), 2);
        assert_eq!(coarse.partition(), &grid(2));
        for p in 0..4 {
            assert_abs_diff_eq!(
                coarse.brownian_value(p, Driver::B, 1).unwrap(),
                fine.brownian_value(p, Driver::B, 4).unwrap(),
                epsilon = 1e-14
            );
            assert_abs_diff_eq!(
                coarse.brownian_value(p, Driver::W, 2).unwrap(),
                fine.brownian_value(p, Driver::W, 8).unwrap(),
                epsilon = 1e-14
            );
        }
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn dump_restore() {
        let b = sample_bundle(&grid(4), 3, RngSpec::new(21), false).unwrap();
        let mut buf = Vec::new();
        b.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 2 * 4 * 3 * 8);
        assert_eq!(&buf[..8], &21u64.to_le_bytes());
        // first payload word is path 0's ΔW_0
        assert_eq!(&buf[32..40], &b.w_increments(0)[0].to_le_bytes());
        // B block starts after the full W block
        assert_eq!(&buf[32 + 96..32 + 104], &b.b_increments(0)[0].to_le_bytes());
        let back = PathBundle::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, b);
        assert!(PathBundle::read_from(&buf[..40]).is_err());
    }
}
