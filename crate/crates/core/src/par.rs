//! Thin execution layer over rayon.
//!
//! With the `parallel` feature the helpers fan work out over the global rayon
//! pool; without it they run the same closures in order on the calling thread.
//! Every helper partitions work so that each output element is produced by
//! exactly one closure invocation, so results are bit-identical either way.

/// Work below this many multiply-adds stays on the calling thread.
pub const MIN_PARALLEL_WORK: usize = 1 << 16;

/// Runs `f(row_index, row)` over consecutive `row_len`-sized chunks of `out`.
pub fn for_each_row<F>(out: &mut [f64], row_len: usize, work_per_row: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        let rows = out.len() / row_len;
        if rows > 1 && rows.saturating_mul(work_per_row) >= MIN_PARALLEL_WORK {
            use rayon::prelude::*;
            out.par_chunks_mut(row_len)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
            return;
        }
    }
    let _ = work_per_row;
    for (i, row) in out.chunks_mut(row_len).enumerate() {
        f(i, row);
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if items.len() > 1 {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// True when the crate was built with the rayon backend.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_visited_once_in_place() {
        let mut out = vec![0.0; 12 * 5000];
        for_each_row(&mut out, 5000, 5000, |i, row| {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (i * 5000 + j) as f64;
            }
        });
        assert!(out.iter().enumerate().all(|(k, &x)| x == k as f64));
    }

    #[test]
    fn map_preserves_order() {
        let v: Vec<u64> = (0..100).collect();
        assert_eq!(map(&v, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
