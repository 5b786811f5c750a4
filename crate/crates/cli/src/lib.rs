pub mod config;
pub mod error;
pub mod oracle_check;
pub mod replay;
pub mod sweep;

/// Worker count from `MAJOLYAP_THREADS`, else the available parallelism.
pub fn thread_count() -> usize {
    std::env::var("MAJOLYAP_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
