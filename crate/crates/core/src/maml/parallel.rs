use std::sync::OnceLock;

use rayon::prelude::*;
use rayon::ThreadPool;

/// Caps worker threads; unset or 0 means rayon's default.
pub const THREADS_ENV: &str = "EPISODIC_MAML_THREADS";

fn pool() -> Option<&'static ThreadPool> {
    static POOL: OnceLock<Option<ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        let n = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .unwrap_or(0);
        if n == 0 {
            return None;
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| log::warn!("ignoring {THREADS_ENV}={n}: {e}"))
            .ok()
    })
    .as_ref()
}

/// Applies `f` to every item, possibly in parallel, and returns the
/// results in input order.
pub(crate) fn map_in_order<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let run = || items.par_iter().map(&f).collect();
    match pool() {
        Some(p) => p.install(run),
        None => run(),
    }
}
