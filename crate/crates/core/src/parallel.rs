//! Ordered parallel map over independent work items.
//!
//! With the `parallel` feature the items run on a rayon pool of the requested
//! size; without it, or with `parallelism <= 1`, they run in order on the
//! calling thread. Results always come back in input order.

#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if parallelism <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); running sequentially");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], _parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Worker count: explicit value, else `KANESIM_PARALLELISM`, else the
/// number of available cores.
pub fn resolve_parallelism(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var("KANESIM_PARALLELISM").ok().and_then(|v| v.trim().parse().ok()))
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u64> = (0..100).collect();
        for p in [1, 2, 8] {
            let out = map(&items, p, |x| x * x);
            assert_eq!(out, items.iter().map(|x| x * x).collect::<Vec<_>>());
        }
    }

    #[test]
    fn explicit_parallelism_wins() {
        assert_eq!(resolve_parallelism(Some(3)), 3);
        assert_eq!(resolve_parallelism(Some(0)), 1);
    }
}
