//! Seed aggregation.

use serde::{Deserialize, Serialize};

/// Mean and standard error of the mean over independent runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSem {
    pub mean: f64,
    /// Sample standard deviation (n − 1) over √n; zero for a single value.
    pub sem: f64,
    pub n: usize,
}

impl MeanSem {
    /// Ignores non-finite entries; all-NaN input gives a NaN mean.
    pub fn of(values: &[f64]) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let n = finite.len();
        if n == 0 {
            return Self { mean: f64::NAN, sem: f64::NAN, n: 0 };
        }
        let mean = finite.iter().sum::<f64>() / n as f64;
        let sem = if n < 2 {
            0.0
        } else {
            let var = finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Self { mean, sem, n }
    }
}
