//! Trial-level data parallelism. With the `parallel` feature the work is
//! spread over a rayon pool; without it everything runs in order on the
//! calling thread. Results always come back in input order.

/// Applies `f` to every item on the calling thread.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Applies `f` to every item on a pool of `jobs` threads (all cores when
/// `None`).
#[cfg(feature = "parallel")]
pub fn map_parallel<T, R, F>(items: &[T], jobs: Option<usize>, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    let run = || items.par_iter().map(&f).collect();
    match jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(run),
            Err(_) => map_sequential(items, &f),
        },
        None => run(),
    }
}

/// Parallel when the feature is enabled and `jobs != Some(1)`.
pub fn map_trials<T, R, F>(items: &[T], jobs: Option<usize>, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if jobs != Some(1) {
            return map_parallel(items, jobs, f);
        }
    }
    let _ = jobs;
    map_sequential(items, f)
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
