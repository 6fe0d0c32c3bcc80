//! Windowed aggregation of per-iteration advantage summaries from training
//! logs, for tracking where the estimator's advantages sit over a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MbbError, Result};
use crate::ppo::{AdvStat, RunLog};

/// Advantage range and pooled mean over a contiguous block of iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStat {
    /// First and last iteration in the window, 1-based and inclusive.
    pub start_iteration: usize,
    pub end_iteration: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Environment steps the window's statistics cover.
    pub samples: usize,
}

/// Folds per-iteration summaries into blocks of `window` iterations; the last
/// block may be shorter. The pooled mean is exact because each summary keeps
/// its sum and count.
pub fn advantage_windows(stats: &[AdvStat], window: usize) -> Result<Vec<WindowStat>> {
    if window == 0 {
        return Err(MbbError::Config("window length must be positive".into()));
    }
    let mut out = Vec::new();
    for (w, chunk) in stats.chunks(window).enumerate() {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut count = 0usize;
        for s in chunk {
            if s.count == 0 {
                continue;
            }
            min = min.min(s.min);
            max = max.max(s.max);
            sum += s.sum;
            count += s.count;
        }
        if count == 0 {
            continue;
        }
        out.push(WindowStat {
            start_iteration: w * window + 1,
            end_iteration: w * window + chunk.len(),
            min,
            max,
            mean: sum / count as f64,
            samples: count,
        });
    }
    Ok(out)
}

/// Windowed advantage statistics for a training run.
pub fn run_advantage_windows(log: &RunLog, window: usize) -> Result<Vec<WindowStat>> {
    advantage_windows(&log.advantage_stats, window)
}

pub fn windows_to_csv(windows: &[WindowStat]) -> String {
    let mut out = String::from("start_iteration,end_iteration,min,max,mean,samples\n");
    for w in windows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{}\n",
            w.start_iteration, w.end_iteration, w.min, w.max, w.mean, w.samples
        ));
    }
    out
}

pub fn write_windows_csv(windows: &[WindowStat], path: &Path) -> Result<()> {
    std::fs::write(path, windows_to_csv(windows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn constant_advantages_collapse_to_a_point() {
        let stats: Vec<AdvStat> =
            (0..25).map(|_| AdvStat::from_slice(&[2.5; 40])).collect();
        let windows = advantage_windows(&stats, 10).unwrap();
        assert_eq!(windows.len(), 3);
        for w in &windows {
            assert_eq!(w.min, 2.5);
            assert_eq!(w.max, 2.5);
            assert_eq!(w.mean, 2.5);
        }
        assert_eq!(windows[2].start_iteration, 21);
        assert_eq!(windows[2].end_iteration, 25);
        assert_eq!(windows[2].samples, 5 * 40);
    }

    /// A baseline that reproduces the return exactly zeroes every advantage,
    /// and the window statistics must show that.
    #[test]
    fn exact_baseline_gives_all_zero_windows() {
        let stats: Vec<AdvStat> =
            (0..12).map(|_| AdvStat::from_slice(&vec![0.0; 64])).collect();
        for w in advantage_windows(&stats, 10).unwrap() {
            assert_eq!((w.min, w.max, w.mean), (0.0, 0.0, 0.0));
        }
    }

    /// Window stats recomputed directly from the raw per-step values must
    /// agree with the aggregation over per-iteration summaries.
    #[test]
    fn windows_match_direct_recomputation_from_raw_values() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let raw: Vec<Vec<f64>> = (0..23)
            .map(|_| {
                let n = rng.random_range(3..30);
                (0..n).map(|_| rng.random_range(-50.0..50.0)).collect()
            })
            .collect();
        let stats: Vec<AdvStat> = raw.iter().map(|v| AdvStat::from_slice(v)).collect();
        let windows = advantage_windows(&stats, 10).unwrap();
        assert_eq!(windows.len(), 3);
        for (w, chunk) in windows.iter().zip(raw.chunks(10)) {
            let flat: Vec<f64> = chunk.iter().flatten().copied().collect();
            let min = flat.iter().copied().fold(f64::INFINITY, f64::min);
            let max = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = flat.iter().sum::<f64>() / flat.len() as f64;
            assert_eq!(w.min, min);
            assert_eq!(w.max, max);
            assert!((w.mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
            assert_eq!(w.samples, flat.len());
        }
    }

    #[test]
    fn zero_window_and_empty_iterations_are_handled() {
        assert!(advantage_windows(&[], 0).is_err());
        assert!(advantage_windows(&[], 10).unwrap().is_empty());
        let empty = AdvStat::from_slice(&[]);
        assert!(advantage_windows(&[empty], 10).unwrap().is_empty());
    }

    #[test]
    fn csv_has_one_line_per_window() {
        let stats: Vec<AdvStat> = (0..20).map(|_| AdvStat::from_slice(&[1.0, -1.0])).collect();
        let windows = advantage_windows(&stats, 10).unwrap();
        let csv = windows_to_csv(&windows);
        assert_eq!(csv.lines().count(), 1 + windows.len());
        assert!(csv.starts_with("start_iteration,"));
    }
}
