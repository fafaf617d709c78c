//! Deterministic data-parallel primitives.
//!
//! Every reduction here fixes its chunk structure from the problem size
//! alone, accumulates within a chunk in index order, and combines chunk
//! results in chunk order. The parallel (rayon) and sequential paths execute
//! the same floating-point operations in the same order, so results are
//! bit-identical regardless of the `parallel` feature or the worker count.
//!
//! The `*_seq` variants are always compiled; the plain names dispatch to
//! rayon when the `parallel` feature is enabled. Benchmarks compare the two.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::linalg::pairwise_sum;

/// Chunk length for scalar reductions.
const SUM_CHUNK: usize = 1024;

/// Upper bound on the number of chunk-local buffers held alive by
/// `accumulate`; keeps memory bounded when `dim` is a large parameter vector.
const MAX_ACCUM_CHUNKS: usize = 64;

fn chunk_len(n: usize, max_chunks: usize, min_chunk: usize) -> usize {
    let by_count = n.div_ceil(max_chunks.max(1));
    by_count.max(min_chunk).max(1)
}

/// `out[i] = f(i)` for `i in 0..n`, order preserved.
pub fn map_collect<U: Send, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

pub fn map_collect_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

fn sum_chunk_serial<F>(range: std::ops::Range<usize>, f: &F) -> f64
where
    F: Fn(usize) -> f64,
{
    let mut acc = 0.0;
    for i in range {
        acc += f(i);
    }
    acc
}

/// Deterministic sum of `f(0) + ... + f(n-1)`.
pub fn indexed_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunk = SUM_CHUNK;
    let n_chunks = n.div_ceil(chunk).max(1);
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .map(|c| sum_chunk_serial(c * chunk..((c + 1) * chunk).min(n), &f))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = (0..n_chunks)
        .map(|c| sum_chunk_serial(c * chunk..((c + 1) * chunk).min(n), &f))
        .collect();
    pairwise_sum(&partials)
}

pub fn indexed_sum_seq<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    let chunk = SUM_CHUNK;
    let n_chunks = n.div_ceil(chunk).max(1);
    let partials: Vec<f64> = (0..n_chunks)
        .map(|c| sum_chunk_serial(c * chunk..((c + 1) * chunk).min(n), &f))
        .collect();
    pairwise_sum(&partials)
}

fn accum_chunk_serial<F>(range: std::ops::Range<usize>, dim: usize, f: &F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]),
{
    let mut buf = vec![0.0; dim];
    for i in range {
        f(i, &mut buf);
    }
    buf
}

/// Deterministic accumulation of `dim`-sized contributions over `n` items.
///
/// `f(i, buf)` must add item `i`'s contribution into `buf`. Item order within
/// a chunk and chunk combination order are both fixed.
pub fn indexed_accumulate<F>(n: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let chunk = chunk_len(n, MAX_ACCUM_CHUNKS, 64);
    let n_chunks = n.div_ceil(chunk).max(1);
    #[cfg(feature = "parallel")]
    let bufs: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| accum_chunk_serial(c * chunk..((c + 1) * chunk).min(n), dim, &f))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let bufs: Vec<Vec<f64>> = (0..n_chunks)
        .map(|c| accum_chunk_serial(c * chunk..((c + 1) * chunk).min(n), dim, &f))
        .collect();
    combine_buffers(bufs, dim)
}

pub fn indexed_accumulate_seq<F>(n: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]),
{
    let chunk = chunk_len(n, MAX_ACCUM_CHUNKS, 64);
    let n_chunks = n.div_ceil(chunk).max(1);
    let bufs: Vec<Vec<f64>> = (0..n_chunks)
        .map(|c| accum_chunk_serial(c * chunk..((c + 1) * chunk).min(n), dim, &f))
        .collect();
    combine_buffers(bufs, dim)
}

fn combine_buffers(bufs: Vec<Vec<f64>>, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for buf in bufs {
        for (o, b) in out.iter_mut().zip(buf.iter()) {
            *o += b;
        }
    }
    out
}

/// Install a global rayon pool with `n` workers. No-op without the
/// `parallel` feature. Returns whether the request took effect.
pub fn configure_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}
