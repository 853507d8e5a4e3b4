//! Planted-truth datasets.
//!
//! [`generate`] draws a fully crossed subject x frame x condition x electrode
//! table whose amplitudes follow a known mixed model. Predictor values live
//! at the stimulus level (one per frame and condition) and may be correlated
//! pairwise. [`emit_lm_fixture`] writes stimuli and language-model records
//! from which ingest recovers exactly those predictor values.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AnalysisTable, Condition, IngestError, LmSentenceRecord, Roi, RowKey, Stimulus, TrialMeasurement};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("degenerate synthetic spec: {0}")]
    Degenerate(String),
    #[error("cosine {0} must lie strictly between -1 and 1")]
    Cosine(f64),
    #[error("surprisal {0} must be finite and non-negative")]
    Surprisal(f64),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Correlate a predictor's stimulus-level noise with an earlier predictor's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    /// Index of the earlier predictor in `SynthSpec::predictors`.
    pub source: usize,
    pub rho: f64,
}

/// Generator and true effect for one predictor column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorTruth {
    /// Column name. `surprisal_*` values are clamped at 0 and `cossim_*`
    /// values into (-1, 1) so that they stay emittable as LM output.
    pub name: String,
    /// Stimulus-level mean per condition, in `Condition::ALL` order.
    pub condition_means: [f64; 4],
    pub sd: f64,
    /// Slope shared by every ROI.
    pub slope: f64,
    /// Additional slope per ROI, in `Roi::ALL` order.
    pub roi_slopes: [f64; 6],
    pub link: Option<Link>,
}

impl PredictorTruth {
    pub fn new(name: impl Into<String>, condition_means: [f64; 4], sd: f64, slope: f64) -> Self {
        Self {
            name: name.into(),
            condition_means,
            sd,
            slope,
            roi_slopes: [0.0; 6],
            link: None,
        }
    }

    pub fn linked(mut self, source: usize, rho: f64) -> Self {
        self.link = Some(Link { source, rho });
        self
    }

    fn clamp(&self, v: f64) -> f64 {
        const EDGE: f64 = 1e-6;
        if self.name.starts_with("surprisal_") {
            v.max(0.0)
        } else if self.name.starts_with("cossim_") {
            v.clamp(-1.0 + EDGE, 1.0 - EDGE)
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub subjects: usize,
    pub frames: usize,
    pub electrodes: usize,
    pub intercept: f64,
    /// Additive offset per ROI, in `Roi::ALL` order.
    pub roi_effects: [f64; 6],
    /// Additive offset per condition, in `Condition::ALL` order.
    pub condition_effects: [f64; 4],
    pub predictors: Vec<PredictorTruth>,
    pub subject_sd: f64,
    pub frame_sd: f64,
    pub electrode_sd: f64,
    pub residual_sd: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Small crossed layout with no predictors and unit variances.
    pub fn new(subjects: usize, frames: usize, electrodes: usize, seed: u64) -> Self {
        Self {
            subjects,
            frames,
            electrodes,
            intercept: 0.0,
            roi_effects: [0.0; 6],
            condition_effects: [0.0; 4],
            predictors: Vec::new(),
            subject_sd: 1.0,
            frame_sd: 1.0,
            electrode_sd: 1.0,
            residual_sd: 1.0,
            seed,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.subjects * self.frames * 4 * self.electrodes
    }

    fn validate(&self) -> Result<(), SynthError> {
        for (what, count) in [
            ("subjects", self.subjects),
            ("frames", self.frames),
            ("electrodes", self.electrodes),
        ] {
            if count == 0 {
                return Err(SynthError::Degenerate(format!("{what} must be positive")));
            }
        }
        let sds = [self.subject_sd, self.frame_sd, self.electrode_sd, self.residual_sd];
        if sds.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(SynthError::Degenerate(
                "standard deviations must be finite and >= 0".into(),
            ));
        }
        for (j, p) in self.predictors.iter().enumerate() {
            if !(p.sd >= 0.0) || !p.sd.is_finite() {
                return Err(SynthError::Degenerate(format!("predictor {} has invalid sd", p.name)));
            }
            if let Some(link) = p.link {
                if link.source >= j {
                    return Err(SynthError::Degenerate(format!(
                        "predictor {} links to a later predictor",
                        p.name
                    )));
                }
                if !(link.rho.abs() < 1.0) {
                    return Err(SynthError::Degenerate(format!("|rho| must be < 1 for {}", p.name)));
                }
            }
            if matches!(
                p.name.as_str(),
                "amplitude" | "subject" | "frame_id" | "condition" | "electrode" | "roi"
            ) {
                return Err(SynthError::Degenerate(format!("predictor name {} is reserved", p.name)));
            }
        }
        Ok(())
    }
}

pub fn subject_id(i: usize) -> String {
    format!("s{:02}", i + 1)
}

pub fn frame_id(i: usize) -> String {
    format!("f{:03}", i + 1)
}

pub fn electrode_id(i: usize) -> String {
    format!("e{:02}", i + 1)
}

/// Electrodes are spread over the six ROIs round-robin.
pub fn electrode_roi(i: usize) -> Roi {
    Roi::ALL[i % Roi::ALL.len()]
}

/// Planted predictor values for one (frame, condition) stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusCell {
    pub frame_id: String,
    pub condition: Condition,
    /// One value per predictor, in spec order.
    pub values: Vec<f64>,
}

/// Everything needed to check a fit against the generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    /// True fixed effects under treatment coding with the alphabetically
    /// first level as reference (ROI `central`, condition `best`).
    pub coefficients: BTreeMap<String, f64>,
    pub stimuli: Vec<StimulusCell>,
    /// Drawn random intercepts per grouping factor, keyed by level.
    pub random_effects: BTreeMap<String, BTreeMap<String, f64>>,
}

impl GroundTruth {
    pub fn predictor_values(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.spec.predictors.iter().position(|p| p.name == name)?;
        Some(self.stimuli.iter().map(|c| c.values[j]).collect())
    }
}

fn reference_roi() -> Roi {
    *Roi::ALL.iter().min_by_key(|r| r.as_str()).expect("six ROIs")
}

fn reference_condition() -> Condition {
    *Condition::ALL
        .iter()
        .min_by_key(|c| c.as_str())
        .expect("four conditions")
}

/// Map the generating parameters onto treatment-coded coefficient names.
fn treatment_coefficients(spec: &SynthSpec) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let roi_ref = reference_roi();
    let cond_ref = reference_condition();
    out.insert(
        "(Intercept)".to_string(),
        spec.intercept + spec.roi_effects[roi_ref.index()] + spec.condition_effects[cond_ref.index()],
    );
    for r in Roi::ALL.iter().filter(|r| **r != roi_ref) {
        out.insert(
            format!("roi[{r}]"),
            spec.roi_effects[r.index()] - spec.roi_effects[roi_ref.index()],
        );
    }
    for c in Condition::ALL.iter().filter(|c| **c != cond_ref) {
        out.insert(
            format!("condition[{c}]"),
            spec.condition_effects[c.index()] - spec.condition_effects[cond_ref.index()],
        );
    }
    for p in &spec.predictors {
        out.insert(p.name.clone(), p.slope + p.roi_slopes[roi_ref.index()]);
        for r in Roi::ALL.iter().filter(|r| **r != roi_ref) {
            out.insert(
                format!("{}:roi[{r}]", p.name),
                p.roi_slopes[r.index()] - p.roi_slopes[roi_ref.index()],
            );
        }
    }
    out
}

fn draw(rng: &mut ChaCha8Rng, sd: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Draw a planted-truth table. Rows are sorted by
/// (subject, frame_id, condition, electrode).
pub fn generate(spec: &SynthSpec) -> Result<(AnalysisTable, GroundTruth), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let k = spec.predictors.len();
    let mut stimuli = Vec::with_capacity(spec.frames * 4);
    for f in 0..spec.frames {
        for c in Condition::ALL {
            let mut z = vec![0.0; k];
            let mut values = vec![0.0; k];
            for (j, p) in spec.predictors.iter().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                z[j] = match p.link {
                    Some(Link { source, rho }) => rho * z[source] + (1.0 - rho * rho).sqrt() * e,
                    None => e,
                };
                values[j] = p.clamp(p.condition_means[c.index()] + p.sd * z[j]);
            }
            stimuli.push(StimulusCell {
                frame_id: frame_id(f),
                condition: c,
                values,
            });
        }
    }

    let subj = draw(&mut rng, spec.subject_sd, spec.subjects);
    let frame = draw(&mut rng, spec.frame_sd, spec.frames);
    let elec = draw(&mut rng, spec.electrode_sd, spec.electrodes);

    let n = spec.n_rows();
    let mut keys = Vec::with_capacity(n);
    let mut amplitude = Vec::with_capacity(n);
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); k];
    for s in 0..spec.subjects {
        for f in 0..spec.frames {
            for c in Condition::ALL {
                let cell = &stimuli[f * 4 + c.index()];
                for e in 0..spec.electrodes {
                    let roi = electrode_roi(e);
                    let mut fixed = spec.intercept + spec.roi_effects[roi.index()] + spec.condition_effects[c.index()];
                    for (j, p) in spec.predictors.iter().enumerate() {
                        let x = cell.values[j];
                        fixed += (p.slope + p.roi_slopes[roi.index()]) * x;
                        columns[j].push(x);
                    }
                    let noise: f64 = rng.sample(StandardNormal);
                    amplitude.push(fixed + subj[s] + frame[f] + elec[e] + spec.residual_sd * noise);
                    keys.push(RowKey {
                        subject: subject_id(s),
                        frame_id: frame_id(f),
                        condition: c,
                        electrode: electrode_id(e),
                        roi,
                    });
                }
            }
        }
    }
    let predictors = spec.predictors.iter().map(|p| p.name.clone()).zip(columns).collect();
    let table = AnalysisTable::new(keys, amplitude, predictors)?.sorted();

    let level_map = |ids: &dyn Fn(usize) -> String, v: &[f64]| -> BTreeMap<String, f64> {
        v.iter().enumerate().map(|(i, x)| (ids(i), *x)).collect()
    };
    let mut random_effects = BTreeMap::new();
    random_effects.insert("subject".to_string(), level_map(&subject_id, &subj));
    random_effects.insert("frame_id".to_string(), level_map(&frame_id, &frame));
    random_effects.insert("electrode".to_string(), level_map(&electrode_id, &elec));

    let truth = GroundTruth {
        spec: spec.clone(),
        coefficients: treatment_coefficients(spec),
        stimuli,
        random_effects,
    };
    Ok((table, truth))
}

/// Window-mean measurements matching a synthetic table, for writing `eeg.csv`.
pub fn trials_of(table: &AnalysisTable) -> Vec<TrialMeasurement> {
    table
        .keys()
        .iter()
        .zip(table.amplitude())
        .map(|(k, a)| TrialMeasurement {
            subject: k.subject.clone(),
            frame_id: k.frame_id.clone(),
            condition: k.condition,
            electrode: k.electrode.clone(),
            roi: k.roi,
            amplitude: *a,
        })
        .collect()
}

const CONTEXT: [&str; 3] = ["the", "reader", "saw"];
/// Offsets along e3 for the context words; they sum to exactly zero so the
/// context mean is e1.
const CONTEXT_OFFSETS: [f64; 3] = [0.5, -0.5, 0.0];
const DIM: usize = 4;

fn unit(i: usize) -> Vec<f64> {
    let mut v = vec![0.0; DIM];
    v[i] = 1.0;
    v
}

/// Language-model output for one sentence whose target word has the given
/// surprisal (nats) and context cosine similarity.
///
/// Context words embed as `e1 + a_k e3` with `sum a_k = 0`, so their mean is
/// `e1`; the target embeds as `cos e1 + sin e2`. Targets of odd-numbered
/// frames are split over two subtokens carrying 40% and 60% of the surprisal.
pub fn lm_record(
    model_id: &str,
    frame_id: &str,
    condition: Condition,
    split_target: bool,
    surprisal: f64,
    cosine: f64,
) -> Result<LmSentenceRecord, SynthError> {
    if !(cosine > -1.0 && cosine < 1.0) {
        return Err(SynthError::Cosine(cosine));
    }
    if !(surprisal >= 0.0) || !surprisal.is_finite() {
        return Err(SynthError::Surprisal(surprisal));
    }
    let mut tokens: Vec<String> = CONTEXT.iter().map(|w| w.to_string()).collect();
    let mut logprobs: Vec<Option<f64>> = vec![None, Some(-1.5), Some(-2.25)];
    let mut embeddings: Vec<Vec<f64>> = CONTEXT_OFFSETS
        .iter()
        .map(|a| {
            let mut v = unit(0);
            v[2] = *a;
            v
        })
        .collect();
    let mut word_alignment = vec![(0, 1), (1, 2), (2, 3)];
    let sin = (1.0 - cosine * cosine).sqrt();
    let mut target = unit(0);
    target[0] = cosine;
    target[1] = sin;
    let target_word = format!("{}_{}", frame_id, condition.as_str());
    if split_target {
        let first = 0.4 * surprisal;
        tokens.push(format!("{target_word}#1"));
        tokens.push(format!("{target_word}#2"));
        logprobs.push(Some(-first));
        logprobs.push(Some(-(surprisal - first)));
        embeddings.push(target.clone());
        embeddings.push(target);
        word_alignment.push((3, 5));
    } else {
        tokens.push(target_word);
        logprobs.push(Some(-surprisal));
        embeddings.push(target);
        word_alignment.push((3, 4));
    }
    Ok(LmSentenceRecord {
        model_id: model_id.to_string(),
        frame_id: frame_id.to_string(),
        condition,
        tokens,
        logprobs,
        word_alignment,
        embeddings,
    })
}

/// Stimuli plus LM records for `model_id` whose derived predictors equal
/// the planted `surprisal_<model_id>` and `cossim_<model_id>` values.
///
/// A missing similarity column is emitted as cosine 0. A planted `cloze`
/// predictor, when present, is copied into the stimulus file.
pub fn emit_lm_fixture(
    truth: &GroundTruth,
    model_id: &str,
) -> Result<(Vec<Stimulus>, Vec<LmSentenceRecord>), SynthError> {
    let find = |name: String| truth.spec.predictors.iter().position(|p| p.name == name);
    let s_idx = find(format!("surprisal_{model_id}"))
        .ok_or_else(|| SynthError::Degenerate(format!("no surprisal_{model_id} predictor to emit")))?;
    let c_idx = find(format!("cossim_{model_id}"));
    let cloze_idx = find("cloze".to_string());
    let mut stimuli = Vec::with_capacity(truth.stimuli.len());
    let mut records = Vec::with_capacity(truth.stimuli.len());
    for (i, cell) in truth.stimuli.iter().enumerate() {
        let split = (i / 4) % 2 == 1;
        let cosine = c_idx.map_or(0.0, |j| cell.values[j]);
        let rec = lm_record(
            model_id,
            &cell.frame_id,
            cell.condition,
            split,
            cell.values[s_idx],
            cosine,
        )?;
        let mut words: Vec<String> = CONTEXT.iter().map(|w| w.to_string()).collect();
        words.push(format!("{}_{}", cell.frame_id, cell.condition.as_str()));
        stimuli.push(Stimulus {
            frame_id: cell.frame_id.clone(),
            condition: cell.condition,
            words,
            target_index: CONTEXT.len(),
            cloze: cloze_idx.map(|j| cell.values[j]),
        });
        records.push(rec);
    }
    Ok((stimuli, records))
}
