// Row-parallel helpers. Each chunk is computed independently, so output is
// identical for any thread count.

#[cfg(feature = "std")]
use rayon::prelude::*;

/// Calls `f(index, chunk)` for every `chunk_len`-sized chunk of `data`.
pub fn for_each_chunk<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk_len == 0 {
        return;
    }
    #[cfg(feature = "std")]
    data.par_chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "std"))]
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Maps `0..n` to a vector in index order.
pub fn map_range<T, F>(n: usize, f: F) -> alloc::vec::Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "std")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "std"))]
    {
        (0..n).map(f).collect()
    }
}
