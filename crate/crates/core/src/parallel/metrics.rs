//! Speedup and efficiency from timing samples.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSample {
    /// Problem size in unknowns.
    pub n: usize,
    pub p: usize,
    pub time: f64,
    /// Largest per-worker communication volume in bytes, if measured.
    pub volume: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongPoint {
    pub n: usize,
    pub p: usize,
    #[serde(rename = "S")]
    pub speedup: f64,
    #[serde(rename = "Es")]
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakPoint {
    pub n: usize,
    pub p: usize,
    #[serde(rename = "Ew")]
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingMetrics {
    pub samples: Vec<TimingSample>,
    pub p0: usize,
    pub strong: Vec<StrongPoint>,
    pub weak: Vec<WeakPoint>,
    /// Slope of log volume against log(N/p).
    pub volume_exponent: Option<f64>,
    /// Largest cluster size per level and the ratios between consecutive
    /// levels.
    pub level_sizes: Vec<usize>,
    pub alpha: Vec<f64>,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn scaling_report(samples: &[TimingSample], level_sizes: &[usize]) -> Result<ScalingMetrics> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples);
    }
    let p0 = samples.iter().map(|s| s.p).min().unwrap();
    let time_at = |n: usize, p: usize| samples.iter().find(|s| s.n == n && s.p == p).map(|s| s.time);
    let mut strong = Vec::new();
    let mut weak = Vec::new();
    for s in samples {
        if let Some(t0) = time_at(s.n, p0) {
            let speedup = t0 / s.time;
            strong.push(StrongPoint { n: s.n, p: s.p, speedup, efficiency: speedup * p0 as f64 / s.p as f64 });
        }
        if (s.n * p0) % s.p == 0 {
            if let Some(t0) = time_at(s.n * p0 / s.p, p0) {
                weak.push(WeakPoint { n: s.n, p: s.p, efficiency: t0 / s.time });
            }
        }
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter_map(|s| s.volume.filter(|&v| v > 0.0).map(|v| (((s.n as f64) / s.p as f64).ln(), v.ln())))
        .collect();
    let alpha = level_sizes.windows(2).map(|w| w[1] as f64 / w[0] as f64).collect();
    Ok(ScalingMetrics {
        samples: samples.to_vec(),
        p0,
        strong,
        weak,
        volume_exponent: fit_slope(&pts),
        level_sizes: level_sizes.to_vec(),
        alpha,
    })
}
