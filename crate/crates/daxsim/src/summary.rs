//! Mean and root-mean-square error over seeds.

use daxsim_core::report::metrics;
use daxsim_core::{ControllerMode, ExperimentReport};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub mode: ControllerMode,
    pub metric: String,
    pub mean: f64,
    /// sqrt(mean((x - mean)^2)); zero for a single seed.
    pub rms_error: f64,
    pub samples: usize,
}

/// A metric's values across seeds.
type Samples = (&'static str, Vec<f64>);

/// One row per (experiment, mode, metric), in first-seen order. A metric
/// that only some seeds define is averaged over those seeds.
pub fn summarize(reports: &[ExperimentReport]) -> Vec<SummaryRow> {
    let mut groups: Vec<((&str, ControllerMode), Vec<Samples>)> = Vec::new();
    for r in reports {
        let key = (r.name.as_str(), r.mode);
        let i = match groups.iter().position(|g| g.0 == key) {
            Some(i) => i,
            None => {
                groups.push((key, Vec::new()));
                groups.len() - 1
            }
        };
        let g = &mut groups[i].1;
        for (m, v) in metrics(r) {
            match g.iter_mut().find(|e| e.0 == m) {
                Some(e) => e.1.push(v),
                None => g.push((m, vec![v])),
            }
        }
    }
    groups
        .into_iter()
        .flat_map(|((name, mode), ms)| {
            ms.into_iter().map(move |(m, xs)| {
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let rms_error = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                SummaryRow { experiment: name.to_string(), mode, metric: m.to_string(), mean, rms_error, samples: xs.len() }
            })
        })
        .collect()
}
