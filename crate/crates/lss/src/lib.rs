//! Command-line front end, parallel ensembles, experiment harness and file
//! formats on top of [`lss_core`].

pub mod cli;
pub mod config;
pub mod experiments;
pub mod fd;
pub mod output;

/// Runs `f` on a dedicated pool of `jobs` worker threads.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("failed to start worker pool")
        .install(f)
}
