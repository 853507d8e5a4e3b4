//! Library-level end-to-end checks: raw inputs through to fitted reports.

use n400::ingest::{build_analysis_table, reduce_epochs, AnalysisTable, EpochSample, PredictorRecipe, Window};
use n400::lmm::{fit_table, parse_summary};
use n400::metrics::LogBase;
use n400::pipeline::{holdout_eval, run_ladders, split_rows, ContrastPlan, HoldoutSpec, LadderSpec};
use n400::stats::FdrMethod;
use n400::synth::{self, generate, PredictorTruth, SynthSpec};

fn planted(seed: u64) -> (AnalysisTable, synth::GroundTruth) {
    let mut s = SynthSpec::new(4, 12, 6, seed);
    s.residual_sd = 1.5;
    s.predictors = vec![
        PredictorTruth::new("surprisal_a", [3.0, 5.0, 7.0, 9.0], 1.5, 0.6),
        PredictorTruth::new("cossim_a", [0.5, 0.4, 0.3, 0.2], 0.1, 0.0).linked(0, -0.48),
    ];
    generate(&s).unwrap()
}

#[test]
fn epochs_reduce_to_the_planted_table() {
    let (table, truth) = planted(1);
    // spread each window mean over samples whose in-window mean is exact,
    // with large out-of-window values that must be ignored
    let mut samples = Vec::new();
    for t in synth::trials_of(&table) {
        for (time, offset) in [
            (200.0, 100.0),
            (300.0, -1.0),
            (400.0, 0.0),
            (500.0, 1.0),
            (600.0, -100.0),
        ] {
            samples.push(EpochSample {
                subject: t.subject.clone(),
                frame_id: t.frame_id.clone(),
                condition: t.condition,
                electrode: t.electrode.clone(),
                roi: t.roi,
                time_ms: time,
                amplitude: t.amplitude + offset,
            });
        }
    }
    let trials = reduce_epochs(&samples, Window::default()).unwrap();
    let (stimuli, records) = synth::emit_lm_fixture(&truth, "a").unwrap();
    let rebuilt = build_analysis_table(
        &stimuli,
        &records,
        &trials,
        &PredictorRecipe::standard(&["a".into()]),
        LogBase::NATS,
    )
    .unwrap();
    assert_eq!(rebuilt.len(), table.len());
    for (a, b) in rebuilt.amplitude().iter().zip(table.amplitude()) {
        assert!((a - b).abs() < 1e-12);
    }
    for col in ["surprisal_a", "cossim_a"] {
        for (a, b) in rebuilt.numeric(col).unwrap().iter().zip(table.numeric(col).unwrap()) {
            assert!((a - b).abs() < 1e-9, "{col}: {a} vs {b}");
        }
    }
}

#[test]
fn holdout_is_reproducible_per_seed() {
    let (table, _) = planted(2);
    let models = vec![("a".to_string(), LadderSpec::for_predictor("surprisal_a").rung_spec(2))];
    let plan = ContrastPlan {
        between_models: None,
        ..ContrastPlan::default()
    };
    let spec = HoldoutSpec::new(0.3, 9).unwrap();
    let first = holdout_eval(&table, &models, &spec, &plan, FdrMethod::By).unwrap();
    let second = holdout_eval(&table, &models, &spec, &plan, FdrMethod::By).unwrap();
    assert_eq!(first, second);
    let other = split_rows(&table, &HoldoutSpec::new(0.3, 10).unwrap()).unwrap();
    assert_ne!(split_rows(&table, &spec).unwrap().test, other.test);
}

#[test]
fn summary_round_trip() {
    let (table, _) = planted(3);
    let model = fit_table(&table, &LadderSpec::for_predictor("surprisal_a").rung_spec(1)).unwrap();
    let parsed = parse_summary(&model.summary_text()).unwrap();
    assert_eq!(parsed.n_obs, model.n_obs);
    assert_eq!(parsed.fingerprint, model.fingerprint);
    assert_eq!(parsed.loglik, model.loglik);
    for (f, (b, se)) in parsed.fixed.iter().zip(model.beta.iter().zip(&model.beta_se)) {
        assert_eq!((f.estimate, f.se), (*b, *se));
    }
}

#[test]
fn ladders_share_one_fdr_family() {
    let (table, _) = planted(4);
    let ladders = [
        LadderSpec::for_predictor("surprisal_a"),
        LadderSpec::for_predictor("cossim_a"),
    ];
    let report = run_ladders(&table, &ladders, FdrMethod::Bh).unwrap();
    let tests = report.tests();
    assert_eq!(tests.len(), 4);
    let raw: Vec<f64> = tests.iter().map(|t| t.p_raw).collect();
    let adjusted = n400::stats::fdr_adjust(&raw, FdrMethod::Bh).unwrap();
    for (t, a) in tests.iter().zip(adjusted) {
        assert_eq!(t.p_adjusted, Some(a));
    }
}
