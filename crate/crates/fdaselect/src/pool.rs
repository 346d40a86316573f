//! Worker pool sized by `FDASELECT_THREADS`.

use std::env;

pub const THREADS_ENV: &str = "FDASELECT_THREADS";

/// Thread count from the environment; 0 when unset or invalid, meaning
/// rayon's default.
pub fn thread_count() -> usize {
    env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

/// Run `f` inside a pool honouring [`THREADS_ENV`].
pub fn with_pool<T, F>(f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

pub fn effective_threads() -> usize {
    match thread_count() {
        0 => rayon::current_num_threads(),
        n => n,
    }
}
