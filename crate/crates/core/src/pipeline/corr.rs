use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::ingest::{AnalysisTable, Condition};
use crate::metrics::pearson_r;

/// One stimulus in the scatter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub frame_id: String,
    pub condition: Condition,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCorrelation {
    pub condition: Condition,
    pub n: usize,
    /// `None` with fewer than 3 stimuli or a constant column.
    pub r: Option<f64>,
}

/// Correlation between two stimulus-level columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub x: String,
    pub y: String,
    pub n_stimuli: usize,
    pub r: f64,
    pub per_condition: Vec<ConditionCorrelation>,
    pub scatter: Vec<ScatterPoint>,
}

/// Pearson r between `x` and `y` over unique (frame_id, condition) stimuli.
///
/// Predictors are constant across subjects and electrodes, so rows are
/// collapsed to one per stimulus first; a stimulus carrying two different
/// values of either column is an error.
pub fn corr_analysis(table: &AnalysisTable, x: &str, y: &str) -> Result<CorrelationReport, PipelineError> {
    let xs = table
        .numeric(x)
        .ok_or_else(|| PipelineError::UnknownColumn(x.to_string()))?;
    let ys = table
        .numeric(y)
        .ok_or_else(|| PipelineError::UnknownColumn(y.to_string()))?;
    let mut cells: BTreeMap<(&str, Condition), (f64, f64)> = BTreeMap::new();
    for (i, k) in table.keys().iter().enumerate() {
        let v = (xs[i], ys[i]);
        if let Some(prev) = cells.insert((k.frame_id.as_str(), k.condition), v) {
            if prev != v {
                return Err(PipelineError::InconsistentStimulus {
                    frame_id: k.frame_id.clone(),
                    condition: k.condition,
                });
            }
        }
    }
    if cells.len() < 3 {
        return Err(PipelineError::TooFewStimuli(cells.len()));
    }
    let scatter: Vec<ScatterPoint> = cells
        .iter()
        .map(|(&(f, c), &(x, y))| ScatterPoint {
            frame_id: f.to_string(),
            condition: c,
            x,
            y,
        })
        .collect();
    let (sx, sy): (Vec<f64>, Vec<f64>) = scatter.iter().map(|p| (p.x, p.y)).unzip();
    let r = pearson_r(&sx, &sy)?;
    let per_condition = Condition::ALL
        .iter()
        .map(|&c| {
            let (cx, cy): (Vec<f64>, Vec<f64>) =
                scatter.iter().filter(|p| p.condition == c).map(|p| (p.x, p.y)).unzip();
            ConditionCorrelation {
                condition: c,
                n: cx.len(),
                r: pearson_r(&cx, &cy).ok(),
            }
        })
        .collect();
    Ok(CorrelationReport {
        x: x.to_string(),
        y: y.to_string(),
        n_stimuli: scatter.len(),
        r,
        per_condition,
        scatter,
    })
}

/// Index of the report with the largest |r|.
pub fn stronger_correlation(reports: &[CorrelationReport]) -> Option<usize> {
    reports
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.r.abs().total_cmp(&b.1.r.abs()))
        .map(|(i, _)| i)
}
