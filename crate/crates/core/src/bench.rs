//! Timing helpers for the scaling benchmarks.

use std::time::{Duration, Instant};

/// Per-call time of `f`, repeating it until at least `min_total` has elapsed.
pub fn time_per_call<T>(min_total: Duration, mut f: impl FnMut() -> T) -> Duration {
    let start = Instant::now();
    let mut calls = 0u32;
    loop {
        std::hint::black_box(f());
        calls += 1;
        let elapsed = start.elapsed();
        if elapsed >= min_total {
            return elapsed / calls;
        }
    }
}

/// Median of `runs` samples of [`time_per_call`].
pub fn median_time<T>(runs: usize, min_total: Duration, mut f: impl FnMut() -> T) -> Duration {
    let mut samples: Vec<Duration> = (0..runs.max(1)).map(|_| time_per_call(min_total, &mut f)).collect();
    samples.sort();
    samples[samples.len() / 2]
}

/// Least-squares slope of `log10(y)` against `log10(x)`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.log10(), y.log10())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}
