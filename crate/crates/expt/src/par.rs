//! Fixed-chunk parallelism.
//!
//! Work that accumulates floating-point results (batch gradients, candidate
//! scoring) is always split into [`GRAD_CHUNKS`] contiguous chunks and the
//! chunk results folded in index order. The chunk boundaries and fold order
//! never depend on the worker count, so the `parallel` feature (rayon) and
//! the sequential fallback produce bitwise-identical numbers.

/// Number of accumulation chunks. Fixed so results are reproducible across
/// machines and thread counts.
pub const GRAD_CHUNKS: usize = 16;

/// Run `f(chunk_index)` for every chunk and return the results in index
/// order. With the `parallel` feature, chunks run on the rayon pool;
/// otherwise sequentially. Either way the output order is by index.
pub fn map_chunks<R: Send>(n_chunks: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_chunks).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_chunks).map(f).collect()
    }
}

/// The half-open index range chunk `c` owns when `n` items are split into
/// `chunks` contiguous pieces (sizes differ by at most one; earlier chunks
/// take the remainder).
pub fn chunk_range(n: usize, chunks: usize, c: usize) -> std::ops::Range<usize> {
    debug_assert!(c < chunks);
    let base = n / chunks;
    let rem = n % chunks;
    let lo = c * base + c.min(rem);
    let hi = lo + base + usize::from(c < rem);
    lo..hi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_ranges_partition_exactly() {
        for n in [0usize, 1, 7, 16, 17, 100, 128] {
            let mut covered = Vec::new();
            for c in 0..GRAD_CHUNKS {
                covered.extend(chunk_range(n, GRAD_CHUNKS, c));
            }
            assert_eq!(covered, (0..n).collect::<Vec<_>>(), "n={n}");
        }
    }

    #[test]
    fn chunk_sizes_differ_by_at_most_one() {
        for n in [5usize, 31, 33, 100] {
            let sizes: Vec<usize> = (0..GRAD_CHUNKS)
                .map(|c| chunk_range(n, GRAD_CHUNKS, c).len())
                .collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            assert!(hi - lo <= 1, "n={n}: {sizes:?}");
        }
    }

    #[test]
    fn map_chunks_preserves_index_order() {
        let out = map_chunks(GRAD_CHUNKS, |c| c * 10);
        let expect: Vec<usize> = (0..GRAD_CHUNKS).map(|c| c * 10).collect();
        assert_eq!(out, expect);
    }
}
