use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::ingest::{AnalysisTable, Condition, Roi};
use crate::lmm::{build_design, fit_ml, FittedModel, ModelSpec, PredictMode};
use crate::stats::{self, Alternative, FdrMethod, TestResult};

/// Measurement-level train/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSpec {
    pub fraction: f64,
    pub seed: u64,
    /// Hold out `round(fraction * count)` rows of every condition instead
    /// of flipping an independent coin per row.
    pub stratify: bool,
}

impl HoldoutSpec {
    pub fn new(fraction: f64, seed: u64) -> Result<Self, PipelineError> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(PipelineError::Config(format!(
                "holdout fraction must lie strictly between 0 and 1, got {fraction}"
            )));
        }
        Ok(Self {
            fraction,
            seed,
            stratify: false,
        })
    }
}

impl Default for HoldoutSpec {
    fn default() -> Self {
        Self {
            fraction: 0.15,
            seed: 0,
            stratify: false,
        }
    }
}

/// Row indices of the two halves, each in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_rows(table: &AnalysisTable, spec: &HoldoutSpec) -> Result<Split, PipelineError> {
    HoldoutSpec::new(spec.fraction, spec.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut is_test = vec![false; table.len()];
    if spec.stratify {
        for c in Condition::ALL {
            let mut rows: Vec<usize> = (0..table.len()).filter(|&i| table.keys()[i].condition == c).collect();
            rows.shuffle(&mut rng);
            let k = (spec.fraction * rows.len() as f64).round() as usize;
            for &i in &rows[..k] {
                is_test[i] = true;
            }
        }
    } else {
        for t in is_test.iter_mut() {
            *t = rng.random::<f64>() < spec.fraction;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..table.len()).partition(|&i| is_test[i]);
    Ok(Split { train, test })
}

/// Directional condition contrasts and the ROIs they are evaluated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastPlan {
    /// `(a, b, alternative)`: test mean(a) vs mean(b) under `alternative`.
    pub pairs: Vec<(Condition, Condition, Alternative)>,
    pub rois: Vec<Roi>,
    /// For each ordered model pair (i < j) and condition, test
    /// prediction_i vs prediction_j under this alternative.
    pub between_models: Option<Alternative>,
}

impl Default for ContrastPlan {
    fn default() -> Self {
        Self {
            pairs: vec![
                (Condition::Best, Condition::Related, Alternative::Less),
                (Condition::Related, Condition::Unrelated, Alternative::Less),
                (Condition::Unrelated, Condition::Implausible, Alternative::Less),
            ],
            rois: vec![Roi::Central, Roi::Posterior],
            between_models: Some(Alternative::Less),
        }
    }
}

impl ContrastPlan {
    fn validate(&self) -> Result<(), PipelineError> {
        for (a, b, _) in &self.pairs {
            if a == b {
                return Err(PipelineError::Config(format!("contrast compares {a} with itself")));
            }
        }
        if self.rois.is_empty() {
            return Err(PipelineError::Config("contrast plan has no ROIs".into()));
        }
        Ok(())
    }
}

/// Mean and standard error of a set of amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

/// Per-condition held-out amplitudes over the plan's ROIs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub n: usize,
    pub observed: MeanSe,
    /// One entry per model, in input order.
    pub predicted: Vec<MeanSe>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelHoldout {
    pub label: String,
    pub model: FittedModel,
    /// Root mean squared error over all held-out rows.
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutReport {
    pub spec: HoldoutSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub models: Vec<ModelHoldout>,
    pub conditions: Vec<ConditionSummary>,
    pub contrasts: Vec<TestResult>,
    pub fdr: FdrMethod,
}

fn mean_se(xs: &[f64]) -> Result<MeanSe, PipelineError> {
    let (mean, se) = stats::mean_se(xs)?;
    Ok(MeanSe { mean, se })
}

/// Fit each model on the training rows, predict held-out rows
/// conditionally, and run the plan's Welch contrasts on the predictions.
pub fn holdout_eval(
    table: &AnalysisTable,
    models: &[(String, ModelSpec)],
    holdout: &HoldoutSpec,
    plan: &ContrastPlan,
    fdr: FdrMethod,
) -> Result<HoldoutReport, PipelineError> {
    plan.validate()?;
    if models.is_empty() {
        return Err(PipelineError::Config("holdout needs at least one model".into()));
    }
    let split = split_rows(table, holdout)?;
    let train = table.subset(&split.train);
    let test = table.subset(&split.test);

    let (fitted, predictions): (Vec<ModelHoldout>, Vec<Vec<f64>>) = models
        .iter()
        .map(|(label, spec)| {
            let wrap = |source| PipelineError::Fit {
                model: label.clone(),
                source,
            };
            let model = fit_ml(&build_design(&train, spec).map_err(wrap)?).map_err(wrap)?;
            let pred = model.predict(&test, PredictMode::Conditional).map_err(wrap)?;
            let sse: f64 = pred.iter().zip(test.amplitude()).map(|(p, y)| (p - y).powi(2)).sum();
            let rmse = (sse / test.len().max(1) as f64).sqrt();
            Ok((
                ModelHoldout {
                    label: label.clone(),
                    model,
                    rmse,
                },
                pred,
            ))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?
        .into_iter()
        .unzip();

    // cells: condition -> held-out row indices within the plan's ROIs
    let cells: Vec<Vec<usize>> = Condition::ALL
        .iter()
        .map(|c| {
            (0..test.len())
                .filter(|&i| test.keys()[i].condition == *c && plan.rois.contains(&test.keys()[i].roi))
                .collect()
        })
        .collect();
    let mut conditions = Vec::with_capacity(4);
    for (c, rows) in Condition::ALL.iter().zip(&cells) {
        if rows.len() < 2 {
            return Err(PipelineError::EmptyCell {
                condition: *c,
                rows: rows.len(),
            });
        }
        let observed: Vec<f64> = rows.iter().map(|&i| test.amplitude()[i]).collect();
        let predicted = predictions
            .iter()
            .map(|p| mean_se(&rows.iter().map(|&i| p[i]).collect::<Vec<_>>()))
            .collect::<Result<_, _>>()?;
        conditions.push(ConditionSummary {
            condition: *c,
            n: rows.len(),
            observed: mean_se(&observed)?,
            predicted,
        });
    }

    let values = |m: usize, c: Condition| -> Vec<f64> { cells[c.index()].iter().map(|&i| predictions[m][i]).collect() };
    let mut contrasts = Vec::new();
    for (m, model) in fitted.iter().enumerate() {
        for &(a, b, alt) in &plan.pairs {
            let t = stats::welch_t(&values(m, a), &values(m, b), alt)?;
            contrasts.push(t.with_label(format!("{}: {a} {} {b}", model.label, symbol(alt))));
        }
    }
    if let Some(alt) = plan.between_models {
        for i in 0..fitted.len() {
            for j in i + 1..fitted.len() {
                for c in Condition::ALL {
                    let t = stats::welch_t(&values(i, c), &values(j, c), alt)?;
                    contrasts.push(t.with_label(format!(
                        "{c}: {} {} {}",
                        fitted[i].label,
                        symbol(alt),
                        fitted[j].label
                    )));
                }
            }
        }
    }
    let mut refs: Vec<&mut TestResult> = contrasts.iter_mut().collect();
    stats::adjust_family(&mut refs, fdr)?;

    Ok(HoldoutReport {
        spec: *holdout,
        n_train: split.train.len(),
        n_test: split.test.len(),
        models: fitted,
        conditions,
        contrasts,
        fdr,
    })
}

fn symbol(alt: Alternative) -> &'static str {
    match alt {
        Alternative::Less => "<",
        Alternative::Greater => ">",
        Alternative::TwoSided => "!=",
    }
}
