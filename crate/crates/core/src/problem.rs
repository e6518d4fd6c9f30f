//! Synthetic problem instances.
//!
//! Benchmark instances draw `A = (1 - c) G + c 1` with `G` standard
//! normal, plant `x⋆ = Aᵀ w` for a standard normal `w`, set `b = A x⋆`, and
//! split the rows into `⌊m/n⌋ + 1` consecutive blocks. All randomness comes
//! from one seeded ChaCha8 stream turned into normals by Box–Muller, so an
//! instance is fully determined by its [`GenerationDescriptor`].

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::affine::{intersection, residual, AffineSubspace, Point, CONSISTENCY_TOL};
use crate::error::{Error, Result};

/// Identifies the random stream: ChaCha8 seeded with `seed_from_u64`, normals
/// by Box–Muller (both outputs used), matrix entries drawn row by row.
pub const GENERATOR_ID: &str = "chacha8-boxmuller-v1";

/// Reproducible recipe for a benchmark instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationDescriptor {
    pub m: usize,
    pub n: usize,
    pub coherence: f64,
    pub seed: u64,
    pub generator_id: String,
    pub block_count: usize,
}

impl GenerationDescriptor {
    pub fn new(m: usize, n: usize, coherence: f64, seed: u64) -> Result<Self> {
        let descriptor = Self {
            m,
            n,
            coherence,
            seed,
            generator_id: GENERATOR_ID.to_string(),
            block_count: default_block_count(m, n),
        };
        descriptor.validate()?;
        Ok(descriptor)
    }

    pub fn validate(&self) -> Result<()> {
        check_coherence(self.coherence)?;
        if self.n == 0 || self.m <= self.n {
            return Err(Error::InvalidInstance(format!(
                "benchmark instances need m > n >= 1, got m={} n={}",
                self.m, self.n
            )));
        }
        if self.generator_id != GENERATOR_ID {
            return Err(Error::UnknownGenerator(self.generator_id.clone()));
        }
        let expected = default_block_count(self.m, self.n);
        if self.block_count != expected {
            return Err(Error::InvalidInstance(format!(
                "block_count {} does not match floor(m/n)+1 = {expected}",
                self.block_count
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let descriptor: Self = serde_json::from_str(text)?;
        descriptor.validate()?;
        Ok(descriptor)
    }
}

/// `⌊m/n⌋ + 1`.
pub fn default_block_count(m: usize, n: usize) -> usize {
    m / n.max(1) + 1
}

/// Sizes of `blocks` consecutive row blocks covering `m` rows; the first
/// `m mod blocks` blocks carry one extra row.
pub fn block_sizes(m: usize, blocks: usize) -> Vec<usize> {
    let base = m / blocks;
    let extra = m % blocks;
    (0..blocks).map(|i| base + usize::from(i < extra)).collect()
}

fn check_coherence(c: f64) -> Result<()> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(Error::InvalidCoherence(c))
    }
}

/// Standard normal samples from a seeded ChaCha8 stream via Box–Muller.
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Independent substream `stream` of `seed`.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal_vector(&mut self, len: usize) -> DVector<f64> {
        DVector::from_fn(len, |_, _| self.next_normal())
    }

    /// `rows × cols` matrix of `(1 - c) z + c`, drawn row by row.
    pub fn coherent_matrix(&mut self, rows: usize, cols: usize, coherence: f64) -> DMatrix<f64> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push((1.0 - coherence) * self.next_normal() + coherence);
        }
        DMatrix::from_row_slice(rows, cols, &data)
    }
}

/// `(1 - c) G + c 1` with `G` an `m × n` standard normal matrix.
pub fn gaussian_matrix(m: usize, n: usize, coherence: f64, seed: u64) -> Result<DMatrix<f64>> {
    check_coherence(coherence)?;
    if m == 0 || n == 0 {
        return Err(Error::InvalidInstance(format!(
            "matrix dimensions must be positive, got {m}x{n}"
        )));
    }
    Ok(NormalStream::new(seed).coherent_matrix(m, n, coherence))
}

/// An ordered list of affine blocks with a common ambient dimension.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    subspaces: Vec<AffineSubspace>,
    ambient_dim: usize,
    known_solution: Option<Point>,
    descriptor: Option<GenerationDescriptor>,
}

impl ProblemInstance {
    /// Wraps hand-built blocks, checking dimensions and that the blocks
    /// intersect.
    pub fn new(subspaces: Vec<AffineSubspace>) -> Result<Self> {
        intersection(&subspaces)?;
        Self::from_consistent_blocks(subspaces)
    }

    fn from_consistent_blocks(subspaces: Vec<AffineSubspace>) -> Result<Self> {
        let first = subspaces.first().ok_or(Error::EmptyInput("no subspaces"))?;
        let ambient_dim = first.ambient_dim();
        if let Some(bad) = subspaces.iter().find(|u| u.ambient_dim() != ambient_dim) {
            return Err(Error::DimensionMismatch {
                expected: ambient_dim,
                found: bad.ambient_dim(),
            });
        }
        let subspaces = subspaces
            .into_iter()
            .enumerate()
            .map(|(i, u)| u.with_label(i))
            .collect();
        Ok(Self {
            subspaces,
            ambient_dim,
            known_solution: None,
            descriptor: None,
        })
    }

    /// Attaches a reference solution, which must satisfy every block.
    pub fn with_known_solution(mut self, solution: Point) -> Result<Self> {
        if solution.len() != self.ambient_dim {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim,
                found: solution.len(),
            });
        }
        let res = residual(&self.subspaces, &solution)?;
        let tolerance = CONSISTENCY_TOL * (1.0 + solution.norm());
        if res.is_nan() || res > tolerance {
            return Err(Error::InconsistentSystem {
                residual: res,
                tolerance,
            });
        }
        self.known_solution = Some(solution);
        Ok(self)
    }

    pub fn subspaces(&self) -> &[AffineSubspace] {
        &self.subspaces
    }

    pub fn block_count(&self) -> usize {
        self.subspaces.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn total_rows(&self) -> usize {
        self.subspaces.iter().map(AffineSubspace::row_count).sum()
    }

    pub fn known_solution(&self) -> Option<&Point> {
        self.known_solution.as_ref()
    }

    pub fn descriptor(&self) -> Option<&GenerationDescriptor> {
        self.descriptor.as_ref()
    }

    /// Concatenation of all blocks, `(A, b)`.
    pub fn stacked(&self) -> (DMatrix<f64>, DVector<f64>) {
        let rows = self.total_rows();
        let mut a = DMatrix::zeros(rows, self.ambient_dim);
        let mut b = DVector::zeros(rows);
        let mut offset = 0;
        for u in &self.subspaces {
            let r = u.row_count();
            a.rows_mut(offset, r).copy_from(u.constraint_matrix());
            b.rows_mut(offset, r).copy_from(u.rhs());
            offset += r;
        }
        (a, b)
    }

    /// SHA-256 over block shapes and the raw bytes of every `A_i`, `b_i`
    /// (row-major, little endian).
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for u in &self.subspaces {
            let a = u.constraint_matrix();
            hasher.update((a.nrows() as u64).to_le_bytes());
            hasher.update((a.ncols() as u64).to_le_bytes());
            for i in 0..a.nrows() {
                for j in 0..a.ncols() {
                    hasher.update(a[(i, j)].to_le_bytes());
                }
            }
            for v in u.rhs().iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

fn split_rows(a: &DMatrix<f64>, b: &DVector<f64>, sizes: &[usize]) -> Result<Vec<AffineSubspace>> {
    let mut offset = 0;
    let mut blocks = Vec::with_capacity(sizes.len());
    for &rows in sizes {
        let block = AffineSubspace::new(
            a.rows(offset, rows).into_owned(),
            b.rows(offset, rows).into_owned(),
        )?;
        blocks.push(block);
        offset += rows;
    }
    Ok(blocks)
}

/// Benchmark instance: `m > n`, `⌊m/n⌋ + 1` blocks, unique solution `x⋆ = Aᵀ w`.
pub fn build_instance(m: usize, n: usize, coherence: f64, seed: u64) -> Result<ProblemInstance> {
    from_descriptor(&GenerationDescriptor::new(m, n, coherence, seed)?)
}

/// Regenerates an instance from its descriptor; bit-exact across calls.
pub fn from_descriptor(descriptor: &GenerationDescriptor) -> Result<ProblemInstance> {
    descriptor.validate()?;
    let GenerationDescriptor {
        m,
        n,
        coherence,
        seed,
        block_count,
        ..
    } = *descriptor;
    let mut stream = NormalStream::new(seed);
    let a = stream.coherent_matrix(m, n, coherence);
    let w = stream.normal_vector(m);
    let solution = a.tr_mul(&w);
    let b = &a * &solution;
    let blocks = split_rows(&a, &b, &block_sizes(m, block_count))?;
    let mut instance = ProblemInstance::from_consistent_blocks(blocks)?;
    instance.known_solution = Some(solution);
    instance.descriptor = Some(descriptor.clone());
    Ok(instance)
}

/// Blocks of the given row counts sharing a planted random point; no
/// reference solution is attached.
pub fn build_planted_instance(
    n: usize,
    block_row_counts: &[usize],
    coherence: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    check_coherence(coherence)?;
    if n == 0 || block_row_counts.is_empty() || block_row_counts.contains(&0) {
        return Err(Error::InvalidInstance(
            "need n >= 1 and at least one block, each with >= 1 row".into(),
        ));
    }
    let total: usize = block_row_counts.iter().sum();
    let mut stream = NormalStream::new(seed);
    let a = stream.coherent_matrix(total, n, coherence);
    let planted = stream.normal_vector(n);
    let b = &a * &planted;
    ProblemInstance::from_consistent_blocks(split_rows(&a, &b, block_row_counts)?)
}

/// Planted instance with at most `n` rows in total, so `S` is generically an
/// affine subspace of dimension `n - Σ rows` (a point when the rows sum to `n`).
pub fn build_underdetermined_instance(
    n: usize,
    block_row_counts: &[usize],
    coherence: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    let total: usize = block_row_counts.iter().sum();
    if total > n {
        return Err(Error::InvalidInstance(format!(
            "underdetermined instance needs at most n={n} rows, got {total}"
        )));
    }
    build_planted_instance(n, block_row_counts, coherence, seed)
}
