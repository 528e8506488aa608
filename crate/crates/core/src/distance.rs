//! Squared Euclidean distance, computed two ways.
//!
//! [`direct_sq_l2`] is the reference: one left-to-right sum over the
//! components. [`staged_distance`] reproduces the three-stage datapath used
//! by the engines:
//!
//! 1. *partial distance*: split both vectors into `r = ceil(d / w)` chunks of
//!    `w` components (tail zero-padded) and reduce each chunk;
//! 2. *vector adder*: group the `r` chunk values into `r' = ceil(r / m)`
//!    blocks of `m` and accumulate them element-wise into an array `B`;
//! 3. *full adder*: sum the `m` entries of `B`.
//!
//! Everything accumulates in `f32`. The two routes agree to within a relative
//! `1e-5`, the cost of the different summation order.

use thiserror::Error;

pub const DEFAULT_CHUNK_WIDTH: usize = 16;
pub const DEFAULT_ACC_WIDTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistanceError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("chunk width and accumulator width must be positive (got w={w}, m={m})")]
    InvalidParams { w: usize, m: usize },
    #[error("expected {expected} accumulator blocks, got {actual}")]
    WrongBlockCount { expected: usize, actual: usize },
    #[error("accumulator block {index} has length {len}, expected {m}")]
    WrongBlockLength { index: usize, len: usize, m: usize },
}

/// Chunk width `w` and accumulator width `m` of the staged datapath.
///
/// The derived counts depend on the dimensionality and are computed on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistanceStagingParams {
    w: usize,
    m: usize,
}

impl DistanceStagingParams {
    pub fn new(w: usize, m: usize) -> Result<Self, DistanceError> {
        if w == 0 || m == 0 {
            return Err(DistanceError::InvalidParams { w, m });
        }
        Ok(Self { w, m })
    }

    pub fn chunk_width(&self) -> usize {
        self.w
    }

    pub fn acc_width(&self) -> usize {
        self.m
    }

    /// `r`: number of `w`-wide chunks covering `d` components.
    pub fn chunks(&self, d: usize) -> usize {
        d.div_ceil(self.w)
    }

    /// `r'`: vector-adder activations per vector.
    pub fn activations(&self, d: usize) -> usize {
        self.chunks(d).div_ceil(self.m)
    }
}

impl Default for DistanceStagingParams {
    fn default() -> Self {
        Self {
            w: DEFAULT_CHUNK_WIDTH,
            m: DEFAULT_ACC_WIDTH,
        }
    }
}

fn check_dims(q: &[f32], x: &[f32]) -> Result<(), DistanceError> {
    if q.len() != x.len() {
        return Err(DistanceError::DimensionMismatch(q.len(), x.len()));
    }
    Ok(())
}

/// Reference squared L2, summed left to right in index order.
pub fn direct_sq_l2(q: &[f32], x: &[f32]) -> Result<f32, DistanceError> {
    check_dims(q, x)?;
    let mut acc = 0.0f32;
    for (a, b) in q.iter().zip(x) {
        let diff = a - b;
        acc += diff * diff;
    }
    Ok(acc)
}

/// Interleaved partial sums kept per chunk.
const CHUNK_LANES: usize = 8;

/// Squared distance of one chunk: component `i` goes to partial sum `i % 8`,
/// and the eight sums are combined pairwise. Trailing zero components
/// therefore leave the result bit-identical.
#[inline]
fn chunk_distance(q: &[f32], x: &[f32]) -> f32 {
    let mut lanes = [0.0f32; CHUNK_LANES];
    let mut qc = q.chunks_exact(CHUNK_LANES);
    let mut xc = x.chunks_exact(CHUNK_LANES);
    for (a, b) in (&mut qc).zip(&mut xc) {
        for i in 0..CHUNK_LANES {
            let diff = a[i] - b[i];
            lanes[i] += diff * diff;
        }
    }
    for ((s, a), b) in lanes.iter_mut().zip(qc.remainder()).zip(xc.remainder()) {
        let diff = a - b;
        *s += diff * diff;
    }
    ((lanes[0] + lanes[4]) + (lanes[2] + lanes[6]))
        + ((lanes[1] + lanes[5]) + (lanes[3] + lanes[7]))
}

/// The `r` per-chunk distances. Padding components are zero on both sides,
/// so the final chunk just covers fewer real components.
pub fn partial_distances(
    q: &[f32],
    x: &[f32],
    params: DistanceStagingParams,
) -> Result<Vec<f32>, DistanceError> {
    check_dims(q, x)?;
    Ok(q.chunks(params.w)
        .zip(x.chunks(params.w))
        .map(|(qc, xc)| chunk_distance(qc, xc))
        .collect())
}

/// Groups chunk distances into the zero-padded `m`-wide arrays fed to the vector adder.
pub fn group_blocks(chunk_distances: &[f32], m: usize) -> Vec<Vec<f32>> {
    chunk_distances
        .chunks(m)
        .map(|c| {
            let mut block = c.to_vec();
            block.resize(m, 0.0);
            block
        })
        .collect()
}

/// Vector adder: `B = B + A` for each incoming block, starting from zero.
/// Emits `B` once exactly `r_prime` blocks have arrived.
pub fn vector_add_accumulate<'a, I>(
    blocks: I,
    m: usize,
    r_prime: usize,
) -> Result<Vec<f32>, DistanceError>
where
    I: IntoIterator<Item = &'a [f32]>,
{
    let mut acc = vec![0.0f32; m];
    let mut seen = 0usize;
    for (index, block) in blocks.into_iter().enumerate() {
        if block.len() != m {
            return Err(DistanceError::WrongBlockLength {
                index,
                len: block.len(),
                m,
            });
        }
        for (b, a) in acc.iter_mut().zip(block) {
            *b += a;
        }
        seen += 1;
    }
    if seen != r_prime {
        return Err(DistanceError::WrongBlockCount {
            expected: r_prime,
            actual: seen,
        });
    }
    Ok(acc)
}

/// Full adder: left-to-right sum of the accumulator array.
pub fn full_add(acc: &[f32]) -> f32 {
    acc.iter().fold(0.0f32, |s, v| s + v)
}

/// Staged distance composed explicitly from the three stages.
pub fn staged_distance(
    q: &[f32],
    x: &[f32],
    params: DistanceStagingParams,
) -> Result<f32, DistanceError> {
    let chunks = partial_distances(q, x, params)?;
    let blocks = group_blocks(&chunks, params.m);
    let acc = vector_add_accumulate(
        blocks.iter().map(Vec::as_slice),
        params.m,
        params.activations(q.len()),
    )?;
    Ok(full_add(&acc))
}

/// Widest accumulator array given a dedicated one-component-chunk loop.
const MAX_FAST_LANES: usize = 64;

/// Allocation-free staged distance for the scan loops.
///
/// Performs the same `f32` operations in the same order as
/// [`staged_distance`], minus the additions of padding zeros, which cannot
/// change a non-negative sum. Results are bit-identical. Callers guarantee
/// equal lengths.
#[inline]
pub fn staged_distance_unchecked(q: &[f32], x: &[f32], params: DistanceStagingParams) -> f32 {
    debug_assert_eq!(q.len(), x.len());
    let (w, m) = (params.w, params.m);
    match (w, m) {
        (1, 1) => {
            let mut acc = 0.0f32;
            for (a, b) in q.iter().zip(x) {
                let diff = a - b;
                acc += diff * diff;
            }
            acc
        }
        (1, m) if m <= MAX_FAST_LANES => single_component_chunks(q, x, m),
        _ => staged_by_lane(q, x, w, m),
    }
}

/// `w = 1`: every chunk distance is one squared difference, and lane `j`
/// collects components `j, j + m, ...`.
fn single_component_chunks(q: &[f32], x: &[f32], m: usize) -> f32 {
    let mut acc = [0.0f32; MAX_FAST_LANES];
    let acc = &mut acc[..m];
    let mut qb = q.chunks_exact(m);
    let mut xb = x.chunks_exact(m);
    for (qs, xs) in (&mut qb).zip(&mut xb) {
        for ((s, a), b) in acc.iter_mut().zip(qs).zip(xs) {
            let diff = a - b;
            *s += diff * diff;
        }
    }
    for ((s, a), b) in acc.iter_mut().zip(qb.remainder()).zip(xb.remainder()) {
        let diff = a - b;
        *s += diff * diff;
    }
    acc[..m.min(q.len())].iter().fold(0.0f32, |s, v| s + v)
}

fn staged_by_lane(q: &[f32], x: &[f32], w: usize, m: usize) -> f32 {
    let r = q.len().div_ceil(w);
    let mut total = 0.0f32;
    for lane in 0..m.min(r) {
        let mut acc = 0.0f32;
        let mut t = lane;
        while t < r {
            let start = t * w;
            let end = (start + w).min(q.len());
            acc += chunk_distance(&q[start..end], &x[start..end]);
            t += m;
        }
        total += acc;
    }
    total
}
