//! Order-preserving data-parallel helpers.
//!
//! With the `parallel` feature these run on rayon; without it they are plain
//! sequential loops. Callers must only rely on output order, never on
//! execution order, so both builds produce identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, returning results in input order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

/// Maps `f` over consecutive chunks of `chunk` items (last one may be short).
/// The second argument to `f` is the offset of the chunk's first item.
pub fn map_chunks<T, R, F>(items: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &[T]) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        items
            .par_chunks(chunk)
            .enumerate()
            .map(|(i, c)| f(i * chunk, c))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items
            .chunks(chunk)
            .enumerate()
            .map(|(i, c)| f(i * chunk, c))
            .collect()
    }
}

/// Runs `f` with at most `workers` threads available to nested parallel work.
/// Without the `parallel` feature this just calls `f`.
pub fn with_workers<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
        {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let xs: Vec<u32> = (0..1000).collect();
        let ys = map(&xs, |i, &x| (i as u32) * 2 + x);
        assert!(ys.iter().enumerate().all(|(i, &y)| y == 3 * i as u32));
    }

    #[test]
    fn chunks_cover_input_with_offsets() {
        let xs: Vec<u32> = (0..10).collect();
        let parts = map_chunks(&xs, 4, |off, c| (off, c.len()));
        assert_eq!(parts, vec![(0, 4), (4, 4), (8, 2)]);
    }

    #[test]
    fn with_workers_returns_value() {
        assert_eq!(with_workers(2, || 7), 7);
    }
}
