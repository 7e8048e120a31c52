use rayon::prelude::*;

/// Default bound on concurrent provider requests.
pub const DEFAULT_MAX_IN_FLIGHT: usize = 16;

/// Maps `f` over `items` with at most `limit` calls in flight. Output order
/// always matches input order, whatever order the calls complete in.
pub fn bounded_map<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if limit <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(limit).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(err) => {
            log::warn!("could not start worker pool ({err}); running sequentially");
            items.iter().map(f).collect()
        }
    }
}
