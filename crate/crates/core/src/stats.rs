use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 95% Student-t critical values for df = 1..=30.
const T_975: [f64; 30] = [
    12.706205, 4.302653, 3.182446, 2.776445, 2.570582, 2.446912, 2.364624, 2.306004, 2.262157,
    2.228139, 2.200985, 2.178813, 2.160369, 2.144787, 2.131450, 2.119905, 2.109816, 2.100922,
    2.093024, 2.085963, 2.079614, 2.073873, 2.068658, 2.063899, 2.059539, 2.055529, 2.051831,
    2.048407, 2.045230, 2.042272,
];
const Z_975: f64 = 1.959964;

pub fn t_critical_975(df: usize) -> f64 {
    match df {
        0 => f64::NAN,
        1..=30 => T_975[df - 1],
        _ => Z_975,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; unset for a single score.
    pub std: Option<f64>,
    pub ci95_low: Option<f64>,
    pub ci95_high: Option<f64>,
    /// Fewer than two scores: no spread or interval.
    pub degenerate: bool,
}

/// Mean, sample std and Student-t 95% interval of per-seed scores.
pub fn summarize(scores: &[f64]) -> Result<StatSummary> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let n = scores.len();
    let mean = scores.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(StatSummary {
            scores: scores.to_vec(),
            mean,
            std: None,
            ci95_low: None,
            ci95_high: None,
            degenerate: true,
        });
    }
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    let half = t_critical_975(n - 1) * std / (n as f64).sqrt();
    Ok(StatSummary {
        scores: scores.to_vec(),
        mean,
        std: Some(std),
        ci95_low: Some(mean - half),
        ci95_high: Some(mean + half),
        degenerate: false,
    })
}
