//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run the same closures sequentially. Work is always split by index, so
//! each output element is produced by the same sequence of floating-point
//! operations regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many scalar operations a kernel stays on the calling thread.
pub(crate) const PAR_MIN_WORK: usize = 1 << 15;

/// Applies `f(index, chunk)` to consecutive `chunk_len`-sized chunks of `data`.
pub(crate) fn for_each_chunk_mut<F>(data: &mut [f64], chunk_len: usize, work_per_chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if chunk_len == 0 || data.is_empty() {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        let n_chunks = data.len().div_ceil(chunk_len);
        if n_chunks > 1 && n_chunks.saturating_mul(work_per_chunk) >= PAR_MIN_WORK {
            data.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    let _ = work_per_chunk;
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Ordered map over `0..n`; the result vector is indexed like the input range.
pub(crate) fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n > 1 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Number of worker threads the parallel kernels may use.
pub fn current_num_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Runs `f` with every kernel forced onto a single thread.
///
/// Used by the benchmarks to compare the parallel and sequential paths inside
/// one binary. Without the `parallel` feature this is a plain call.
pub fn run_sequential<R: Send, F: FnOnce() -> R + Send>(f: F) -> R {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool");
        pool.install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        f()
    }
}
