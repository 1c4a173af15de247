//! Reconstruction and forecasting of high-dimensional spatio-temporal fields
//! from sparse sensor trajectories: an LSTM-encoder/shallow-decoder model
//! (SHRED), shallow decoder networks, and a gappy-POD/QR baseline, together
//! with the experiment harness that compares them.

// index loops are the clearer style in the dense kernels
#![allow(clippy::needless_range_loop)]

pub mod datasets;
pub mod error;
pub mod gradcore;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod plot;
pub mod pod;

pub use error::{Error, Result};

/// Returns true when deterministic mode is forced via the environment.
pub fn deterministic_mode() -> bool {
    std::env::var("SHREDKIT_DETERMINISTIC").is_ok_and(|v| v == "1")
}

/// Runs `f` over `items`, in parallel across `workers` threads when the
/// `parallel` feature is enabled and more than one worker is requested.
/// Output order always matches input order, and each item is processed
/// independently, so the two paths produce identical results.
pub fn map_items<T, U, F>(items: Vec<T>, workers: usize, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("thread pool");
            use rayon::prelude::*;
            return pool.install(|| items.into_par_iter().map(f).collect());
        }
    }
    let _ = workers;
    items.into_iter().map(f).collect()
}
