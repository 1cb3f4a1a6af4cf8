//! Order-preserving parallel map over independent work items.
//!
//! `SIDEINFO_THREADS` caps the worker count; `0` runs everything on the
//! calling thread. Results always come back in input order, so reductions
//! over them are identical to a sequential run.

use std::sync::OnceLock;

use rayon::prelude::*;
use rayon::ThreadPool;

pub const THREADS_ENV: &str = "SIDEINFO_THREADS";

enum Mode {
    Sequential,
    Global,
    Pool(ThreadPool),
}

fn mode() -> &'static Mode {
    static MODE: OnceLock<Mode> = OnceLock::new();
    MODE.get_or_init(|| match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(0) | Some(1) => Mode::Sequential,
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build().map(Mode::Pool).unwrap_or(Mode::Global),
        None => Mode::Global,
    })
}

pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode() {
        Mode::Sequential => items.iter().map(f).collect(),
        Mode::Global => items.par_iter().map(f).collect(),
        Mode::Pool(pool) => pool.install(|| items.par_iter().map(f).collect()),
    }
}
