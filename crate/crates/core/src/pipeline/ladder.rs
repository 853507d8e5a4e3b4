use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::ingest::AnalysisTable;
use crate::lmm::{build_design, build_design_pruned, fit_ml, FittedModel, ModelSpec, Term};
use crate::stats::{self, Alternative, FdrMethod, TestResult};

/// Which earlier rung each rung's LRT is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    Previous,
    Baseline,
}

/// A sequence of nested models: the baseline plus each prefix of `additions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    pub label: String,
    pub outcome: String,
    pub baseline: Vec<Term>,
    pub additions: Vec<Term>,
    pub random: Vec<String>,
    pub comparison: Comparison,
    /// Drop aliased columns instead of failing; a rung whose new columns
    /// are all dropped is reported as redundant.
    pub rank_guard: bool,
}

impl LadderSpec {
    /// ROI-only baseline with subject, frame and electrode intercepts.
    pub fn new(label: impl Into<String>, additions: Vec<Term>) -> Self {
        Self {
            label: label.into(),
            outcome: "amplitude".into(),
            baseline: vec![Term::main("roi")],
            additions,
            random: vec!["subject".into(), "frame_id".into(), "electrode".into()],
            comparison: Comparison::Previous,
            rank_guard: false,
        }
    }

    /// `roi` -> `+predictor` -> `+predictor:roi`.
    pub fn for_predictor(predictor: &str) -> Self {
        Self::new(
            predictor,
            vec![Term::main(predictor), Term::interaction(predictor, "roi")],
        )
    }

    pub fn rung_spec(&self, rung: usize) -> ModelSpec {
        ModelSpec {
            outcome: self.outcome.clone(),
            fixed: self.baseline.iter().chain(&self.additions[..rung]).cloned().collect(),
            random: self.random.clone(),
        }
    }

    pub fn rung_name(&self, rung: usize) -> String {
        if rung == 0 {
            "baseline".into()
        } else {
            format!("+{}", self.additions[rung - 1])
        }
    }

    pub fn n_rungs(&self) -> usize {
        self.additions.len() + 1
    }
}

/// One fitted rung.
#[derive(Debug, Clone, PartialEq)]
pub struct RungResult {
    pub ladder: String,
    pub rung: usize,
    pub name: String,
    pub model: FittedModel,
    /// AIC(rung) - AIC(baseline); negative is better.
    pub delta_aic: f64,
    /// Rung index the LRT compares against.
    pub compared_to: Option<usize>,
    pub test: Option<TestResult>,
    /// All columns this rung adds were removed by the rank guard.
    pub redundant: bool,
}

impl RungResult {
    pub fn formula(&self) -> String {
        self.model.spec.to_string()
    }
}

/// Fitted ladders plus the FDR method applied across all their tests.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderReport {
    pub rungs: Vec<RungResult>,
    pub fdr: FdrMethod,
}

impl LadderReport {
    pub fn ladder(&self, label: &str) -> impl Iterator<Item = &RungResult> {
        let label = label.to_string();
        self.rungs.iter().filter(move |r| r.ladder == label)
    }

    pub fn top(&self, label: &str) -> Option<&RungResult> {
        self.ladder(label).last()
    }

    /// The rung with the lowest AIC in a ladder.
    pub fn best(&self, label: &str) -> Option<&RungResult> {
        self.ladder(label)
            .min_by(|a, b| a.model.aic().total_cmp(&b.model.aic()))
    }

    pub fn labels(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for r in &self.rungs {
            if !seen.contains(&r.ladder.as_str()) {
                seen.push(r.ladder.as_str());
            }
        }
        seen
    }

    pub fn tests_mut(&mut self) -> Vec<&mut TestResult> {
        self.rungs
            .iter_mut()
            .filter(|r| !r.redundant)
            .filter_map(|r| r.test.as_mut())
            .collect()
    }

    pub fn tests(&self) -> Vec<&TestResult> {
        self.rungs.iter().filter_map(|r| r.test.as_ref()).collect()
    }
}

fn fit_rung(table: &AnalysisTable, ladder: &LadderSpec, rung: usize) -> Result<FittedModel, PipelineError> {
    let spec = ladder.rung_spec(rung);
    let wrap = |source| PipelineError::Fit {
        model: format!("{} {}", ladder.label, ladder.rung_name(rung)),
        source,
    };
    let design = if ladder.rank_guard && rung > 0 {
        build_design_pruned(table, &spec).map_err(wrap)?
    } else {
        build_design(table, &spec).map_err(wrap)?
    };
    fit_ml(&design).map_err(wrap)
}

fn audit_nesting(ladder: &LadderSpec, reduced: &RungResult, full: &RungResult) -> Result<(), PipelineError> {
    let small: BTreeSet<&Term> = reduced.model.spec.fixed.iter().collect();
    let big: BTreeSet<&Term> = full.model.spec.fixed.iter().collect();
    let fail = |reason: String| PipelineError::NotNested {
        ladder: ladder.label.clone(),
        reduced: reduced.name.clone(),
        full: full.name.clone(),
        reason,
    };
    if !small.is_subset(&big) || reduced.model.spec.random != full.model.spec.random {
        return Err(fail("terms are not a superset".into()));
    }
    if full.model.n_params < reduced.model.n_params {
        return Err(fail(format!(
            "parameter count falls from {} to {}",
            reduced.model.n_params, full.model.n_params
        )));
    }
    Ok(())
}

/// Fit every rung of every ladder (in parallel), compute LRTs and AIC
/// deltas, and FDR-adjust all non-redundant LRTs as one family.
pub fn run_ladders(
    table: &AnalysisTable,
    ladders: &[LadderSpec],
    fdr: FdrMethod,
) -> Result<LadderReport, PipelineError> {
    let mut labels = BTreeSet::new();
    for l in ladders {
        if !labels.insert(l.label.as_str()) {
            return Err(PipelineError::Config(format!(
                "ladder label `{}` is used twice",
                l.label
            )));
        }
    }
    let jobs: Vec<(usize, usize)> = ladders
        .iter()
        .enumerate()
        .flat_map(|(i, l)| (0..l.n_rungs()).map(move |r| (i, r)))
        .collect();
    let fits: Vec<FittedModel> = jobs
        .par_iter()
        .map(|&(i, r)| fit_rung(table, &ladders[i], r))
        .collect::<Result<_, _>>()?;

    let mut rungs = Vec::with_capacity(jobs.len());
    let mut fits = fits.into_iter();
    for ladder in ladders {
        let start = rungs.len();
        for rung in 0..ladder.n_rungs() {
            let model = fits.next().expect("one fit per job");
            rungs.push(RungResult {
                ladder: ladder.label.clone(),
                rung,
                name: ladder.rung_name(rung),
                model,
                delta_aic: 0.0,
                compared_to: None,
                test: None,
                redundant: false,
            });
        }
        let base_aic = rungs[start].model.aic();
        for rung in 1..ladder.n_rungs() {
            let reference = match ladder.comparison {
                Comparison::Previous => rung - 1,
                Comparison::Baseline => 0,
            };
            let (head, tail) = rungs.split_at_mut(start + rung);
            let reduced = &head[start + reference];
            let full = &mut tail[0];
            audit_nesting(ladder, reduced, full)?;
            full.delta_aic = full.model.aic() - base_aic;
            full.compared_to = Some(reference);
            let label = format!("{}: {} vs {}", ladder.label, full.name, reduced.name);
            if full.model.n_fixed() == reduced.model.n_fixed() {
                // every new column was aliased with earlier ones
                full.redundant = true;
                full.test = Some(TestResult {
                    label,
                    statistic: 0.0,
                    df: 0.0,
                    p_raw: 1.0,
                    p_adjusted: None,
                    alternative: Alternative::Greater,
                });
            } else {
                let test = stats::lrt(&reduced.model, &full.model)?.with_label(label);
                full.test = Some(test);
            }
        }
    }
    let mut report = LadderReport { rungs, fdr };
    stats::adjust_family(&mut report.tests_mut(), fdr)?;
    Ok(report)
}

pub fn run_ladder(table: &AnalysisTable, ladder: &LadderSpec, fdr: FdrMethod) -> Result<LadderReport, PipelineError> {
    run_ladders(table, std::slice::from_ref(ladder), fdr)
}

/// Ladder for adding `added` on top of `base` and `base:roi`: the baseline
/// holds `roi + base + base:roi`, then `+added`, then `+added:roi`. Both
/// additions are tested against the baseline, and aliased columns are
/// dropped and reported rather than rejected.
pub fn variance_partition_spec(base: &str, added: &str) -> LadderSpec {
    LadderSpec {
        baseline: vec![Term::main("roi"), Term::main(base), Term::interaction(base, "roi")],
        comparison: Comparison::Baseline,
        rank_guard: true,
        ..LadderSpec::new(
            format!("{added} over {base}"),
            vec![Term::main(added), Term::interaction(added, "roi")],
        )
    }
}

pub fn variance_partition(
    table: &AnalysisTable,
    base: &str,
    added: &str,
    fdr: FdrMethod,
) -> Result<LadderReport, PipelineError> {
    run_ladder(table, &variance_partition_spec(base, added), fdr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, PredictorTruth, SynthSpec};

    fn data(slope: f64, seed: u64) -> AnalysisTable {
        let mut s = SynthSpec::new(6, 12, 6, seed);
        s.predictors = vec![
            PredictorTruth::new("surprisal_a", [3.0, 5.0, 7.0, 9.0], 1.5, slope),
            PredictorTruth::new("cossim_a", [0.3; 4], 0.1, 0.0),
        ];
        s.residual_sd = 2.0;
        generate(&s).unwrap().0
    }

    #[test]
    fn ladder_shape_and_aic_identity() {
        let t = data(0.8, 1);
        let report = run_ladder(&t, &LadderSpec::for_predictor("surprisal_a"), FdrMethod::By).unwrap();
        assert_eq!(report.rungs.len(), 3);
        assert!(report.rungs[0].test.is_none());
        let t1 = report.rungs[1].test.as_ref().unwrap();
        assert_eq!(t1.df, 1.0);
        assert!(t1.p_adjusted.unwrap() < 1e-6);
        assert_eq!(report.rungs[2].test.as_ref().unwrap().df, 5.0);
        for w in report.rungs.windows(2) {
            let d_aic = w[1].model.aic() - w[0].model.aic();
            let expect = 2.0 * (w[1].model.n_params as f64 - w[0].model.n_params as f64)
                - 2.0 * (w[1].model.loglik - w[0].model.loglik);
            assert!((d_aic - expect).abs() < 1e-9);
        }
        assert_eq!(report.best("surprisal_a").unwrap().rung.min(1), 1);
    }

    #[test]
    fn invariant_to_row_order() {
        let t = data(0.5, 2);
        let ladder = LadderSpec::for_predictor("surprisal_a");
        let a = run_ladder(&t, &ladder, FdrMethod::Bh).unwrap();
        let mut order: Vec<usize> = (0..t.len()).rev().collect();
        order.rotate_left(17);
        let b = run_ladder(&t.subset(&order), &ladder, FdrMethod::Bh).unwrap();
        for (x, y) in a.rungs.iter().zip(&b.rungs) {
            assert!((x.model.loglik - y.model.loglik).abs() < 1e-6);
        }
    }

    #[test]
    fn redundant_addition() {
        let mut t = data(0.5, 3);
        let copy = t.numeric("surprisal_a").unwrap().to_vec();
        t.add_predictor("copy", copy).unwrap();
        let report = variance_partition(&t, "surprisal_a", "copy", FdrMethod::By).unwrap();
        for r in &report.rungs[1..] {
            assert!(r.redundant, "{}", r.name);
            let test = r.test.as_ref().unwrap();
            assert_eq!(test.statistic, 0.0);
            assert!(!r.model.dropped_columns.is_empty());
        }
        // strict ladders reject the alias instead
        let strict = LadderSpec::new("strict", vec![Term::main("surprisal_a"), Term::main("copy")]);
        assert!(matches!(
            run_ladder(&t, &strict, FdrMethod::By),
            Err(PipelineError::Fit { .. })
        ));
    }

    #[test]
    fn partition_compares_against_base() {
        let t = data(0.5, 4);
        let report = variance_partition(&t, "surprisal_a", "cossim_a", FdrMethod::By).unwrap();
        assert_eq!(report.rungs[2].compared_to, Some(0));
        assert_eq!(report.rungs[2].test.as_ref().unwrap().df, 6.0);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let t = data(0.5, 5);
        let l = LadderSpec::for_predictor("surprisal_a");
        assert!(matches!(
            run_ladders(&t, &[l.clone(), l], FdrMethod::By),
            Err(PipelineError::Config(_))
        ));
    }
}
