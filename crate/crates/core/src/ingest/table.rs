use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use super::{Condition, IngestError, LmSentenceRecord, Roi, Stimulus, TrialMeasurement};
use crate::metrics::{self, LogBase};

const FACTOR_COLUMNS: [&str; 5] = ["subject", "frame_id", "condition", "electrode", "roi"];
const OUTCOME_COLUMN: &str = "amplitude";

/// Grouping and design labels of one measurement row.
///
/// Field order defines the canonical row order of an [`AnalysisTable`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowKey {
    pub subject: String,
    pub frame_id: String,
    pub condition: Condition,
    pub electrode: String,
    pub roi: Roi,
}

/// Borrowed view of one table column.
#[derive(Debug, Clone)]
pub enum ColumnRef<'a> {
    Numeric(&'a [f64]),
    Factor(Vec<&'a str>),
}

/// Long-format measurement table: one row per subject x sentence x electrode.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisTable {
    keys: Vec<RowKey>,
    amplitude: Vec<f64>,
    predictors: Vec<(String, Vec<f64>)>,
}

impl AnalysisTable {
    pub fn new(
        keys: Vec<RowKey>,
        amplitude: Vec<f64>,
        predictors: Vec<(String, Vec<f64>)>,
    ) -> Result<Self, IngestError> {
        let mut table = Self {
            keys,
            amplitude: Vec::new(),
            predictors: Vec::new(),
        };
        if amplitude.len() != table.keys.len() {
            return Err(IngestError::Table(format!(
                "{} amplitudes for {} rows",
                amplitude.len(),
                table.keys.len()
            )));
        }
        if amplitude.iter().any(|a| !a.is_finite()) {
            return Err(IngestError::Table("amplitude column has non-finite values".into()));
        }
        table.amplitude = amplitude;
        for (name, values) in predictors {
            table.add_predictor(name, values)?;
        }
        Ok(table)
    }

    /// Append a numeric predictor column.
    pub fn add_predictor(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<(), IngestError> {
        let name = name.into();
        if name.is_empty() || name.contains([',', ':', '"', '\n']) {
            return Err(IngestError::Table(format!("invalid column name `{name}`")));
        }
        if self.column(&name).is_some() {
            return Err(IngestError::Table(format!("duplicate column `{name}`")));
        }
        if values.len() != self.keys.len() {
            return Err(IngestError::Table(format!(
                "column `{name}` has {} values for {} rows",
                values.len(),
                self.keys.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::Table(format!(
                "column `{name}` has missing or non-finite values"
            )));
        }
        self.predictors.push((name, values));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[RowKey] {
        &self.keys
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn predictor_names(&self) -> impl Iterator<Item = &str> {
        self.predictors.iter().map(|(n, _)| n.as_str())
    }

    pub fn numeric(&self, name: &str) -> Option<&[f64]> {
        if name == OUTCOME_COLUMN {
            return Some(&self.amplitude);
        }
        self.predictors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn column(&self, name: &str) -> Option<ColumnRef<'_>> {
        let factor: Option<Vec<&str>> = match name {
            "subject" => Some(self.keys.iter().map(|k| k.subject.as_str()).collect()),
            "frame_id" => Some(self.keys.iter().map(|k| k.frame_id.as_str()).collect()),
            "electrode" => Some(self.keys.iter().map(|k| k.electrode.as_str()).collect()),
            "condition" => Some(self.keys.iter().map(|k| k.condition.as_str()).collect()),
            "roi" => Some(self.keys.iter().map(|k| k.roi.as_str()).collect()),
            _ => None,
        };
        match factor {
            Some(f) => Some(ColumnRef::Factor(f)),
            None => self.numeric(name).map(ColumnRef::Numeric),
        }
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            keys: indices.iter().map(|&i| self.keys[i].clone()).collect(),
            amplitude: indices.iter().map(|&i| self.amplitude[i]).collect(),
            predictors: self
                .predictors
                .iter()
                .map(|(n, v)| (n.clone(), indices.iter().map(|&i| v[i]).collect()))
                .collect(),
        }
    }

    /// Rows in canonical (subject, frame_id, condition, electrode) order.
    pub fn sorted(&self) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.keys[a].cmp(&self.keys[b]));
        self.subset(&order)
    }

    /// Replace the outcome column.
    pub fn with_amplitude(&self, amplitude: Vec<f64>) -> Result<Self, IngestError> {
        Self::new(self.keys.clone(), amplitude, self.predictors.clone())
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec![OUTCOME_COLUMN, "roi", "subject", "frame_id", "electrode", "condition"];
        header.extend(self.predictor_names());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (i, key) in self.keys.iter().enumerate() {
            record.clear();
            record.push(format_sig9(self.amplitude[i]));
            record.push(key.roi.to_string());
            record.push(key.subject.clone());
            record.push(key.frame_id.clone());
            record.push(key.electrode.clone());
            record.push(key.condition.to_string());
            for (_, v) in &self.predictors {
                record.push(format_sig9(v[i]));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self, IngestError> {
        let mut reader = csv::Reader::from_reader(source);
        let headers = reader.headers()?.clone();
        let pos = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| IngestError::Malformed {
                    line: 1,
                    message: format!("missing column `{name}`"),
                })
        };
        let amp_col = pos(OUTCOME_COLUMN)?;
        let cols: Vec<usize> = FACTOR_COLUMNS.iter().map(|c| pos(c)).collect::<Result<_, _>>()?;
        let predictor_cols: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| *h != OUTCOME_COLUMN && !FACTOR_COLUMNS.contains(h))
            .map(|(i, h)| (i, h.to_string()))
            .collect();
        let mut keys = Vec::new();
        let mut amplitude = Vec::new();
        let mut predictors: Vec<Vec<f64>> = vec![Vec::new(); predictor_cols.len()];
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let number = |i: usize| -> Result<f64, IngestError> {
                let raw = &record[i];
                raw.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| IngestError::Malformed {
                        line,
                        message: format!("column `{}`: `{raw}` is not a finite number", &headers[i]),
                    })
            };
            let condition = record[cols[2]].parse().map_err(|_| IngestError::UnknownCondition {
                line,
                label: record[cols[2]].to_string(),
            })?;
            let roi = record[cols[4]].parse().map_err(|_| IngestError::UnknownRoi {
                line,
                label: record[cols[4]].to_string(),
            })?;
            keys.push(RowKey {
                subject: record[cols[0]].to_string(),
                frame_id: record[cols[1]].to_string(),
                condition,
                electrode: record[cols[3]].to_string(),
                roi,
            });
            amplitude.push(number(amp_col)?);
            for ((i, _), column) in predictor_cols.iter().zip(predictors.iter_mut()) {
                column.push(number(*i)?);
            }
        }
        let predictors = predictor_cols.into_iter().map(|(_, n)| n).zip(predictors).collect();
        Self::new(keys, amplitude, predictors)
    }
}

/// Shortest decimal form of `v` rounded to 9 significant digits.
///
/// Re-formatting a value that was parsed from this output reproduces the
/// same bytes.
pub(crate) fn format_sig9(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{}", rounded + 0.0)
}

/// How to derive one predictor column from stimuli and language-model output.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PredictorRecipe {
    /// Target-word surprisal under a model: column `surprisal_<model>`.
    Surprisal { model_id: String },
    /// Target vs. preceding-context cosine similarity: column `cossim_<model>`.
    CosineSimilarity { model_id: String },
    /// `1 - cossim`: column `cosdist_<model>`.
    CosineDistance { model_id: String },
    /// Cloze probability from the stimulus file: column `cloze`.
    Cloze,
}

impl PredictorRecipe {
    pub fn column_name(&self) -> String {
        match self {
            PredictorRecipe::Surprisal { model_id } => format!("surprisal_{model_id}"),
            PredictorRecipe::CosineSimilarity { model_id } => format!("cossim_{model_id}"),
            PredictorRecipe::CosineDistance { model_id } => format!("cosdist_{model_id}"),
            PredictorRecipe::Cloze => "cloze".to_string(),
        }
    }

    pub fn model_id(&self) -> Option<&str> {
        match self {
            PredictorRecipe::Surprisal { model_id }
            | PredictorRecipe::CosineSimilarity { model_id }
            | PredictorRecipe::CosineDistance { model_id } => Some(model_id),
            PredictorRecipe::Cloze => None,
        }
    }

    /// Surprisal and cosine-similarity columns for each model.
    pub fn standard(model_ids: &[String]) -> Vec<Self> {
        let mut out: Vec<Self> = model_ids
            .iter()
            .map(|m| PredictorRecipe::Surprisal { model_id: m.clone() })
            .collect();
        out.extend(
            model_ids
                .iter()
                .map(|m| PredictorRecipe::CosineSimilarity { model_id: m.clone() }),
        );
        out
    }
}

impl fmt::Display for PredictorRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorRecipe::Surprisal { model_id } => write!(f, "surprisal:{model_id}"),
            PredictorRecipe::CosineSimilarity { model_id } => write!(f, "cossim:{model_id}"),
            PredictorRecipe::CosineDistance { model_id } => write!(f, "cosdist:{model_id}"),
            PredictorRecipe::Cloze => f.write_str("cloze"),
        }
    }
}

impl FromStr for PredictorRecipe {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "cloze" {
            return Ok(PredictorRecipe::Cloze);
        }
        let (kind, model) = s.split_once(':').ok_or_else(|| {
            format!("predictor `{s}` should look like surprisal:<model>, cossim:<model>, cosdist:<model> or cloze")
        })?;
        let model_id = model.to_string();
        if model_id.is_empty() {
            return Err(format!("predictor `{s}` has an empty model id"));
        }
        match kind {
            "surprisal" => Ok(PredictorRecipe::Surprisal { model_id }),
            "cossim" => Ok(PredictorRecipe::CosineSimilarity { model_id }),
            "cosdist" => Ok(PredictorRecipe::CosineDistance { model_id }),
            _ => Err(format!("unknown predictor kind `{kind}`")),
        }
    }
}

fn stimulus_key(frame_id: &str, condition: Condition) -> String {
    format!("{frame_id}/{condition}")
}

/// Join trials with stimuli and language-model output into an analysis table.
///
/// Rows come out sorted by (subject, frame_id, condition, electrode).
pub fn build_analysis_table(
    stimuli: &[Stimulus],
    lm_records: &[LmSentenceRecord],
    trials: &[TrialMeasurement],
    recipes: &[PredictorRecipe],
    base: LogBase,
) -> Result<AnalysisTable, IngestError> {
    let mut stim_index: HashMap<(&str, Condition), &Stimulus> = HashMap::new();
    for s in stimuli {
        if stim_index.insert((s.frame_id.as_str(), s.condition), s).is_some() {
            return Err(IngestError::Table(format!(
                "duplicate stimulus {}",
                stimulus_key(&s.frame_id, s.condition)
            )));
        }
    }
    let mut lm_index: HashMap<(&str, &str, Condition), &LmSentenceRecord> = HashMap::new();
    for r in lm_records {
        if lm_index
            .insert((r.model_id.as_str(), r.frame_id.as_str(), r.condition), r)
            .is_some()
        {
            return Err(IngestError::DuplicateLmRecord {
                model_id: r.model_id.clone(),
                frame_id: r.frame_id.clone(),
                condition: r.condition,
            });
        }
    }

    let needed: BTreeSet<(&str, Condition)> = trials.iter().map(|t| (t.frame_id.as_str(), t.condition)).collect();
    let unmatched: Vec<String> = needed
        .iter()
        .filter(|k| !stim_index.contains_key(*k))
        .map(|(f, c)| format!("trial stimulus {}", stimulus_key(f, *c)))
        .collect();
    if !unmatched.is_empty() {
        return Err(IngestError::Unmatched { keys: unmatched });
    }

    // one value per (recipe, stimulus)
    let mut values: Vec<BTreeMap<(&str, Condition), f64>> = vec![BTreeMap::new(); recipes.len()];
    let mut missing = Vec::new();
    for &(frame, condition) in &needed {
        let stim = stim_index[&(frame, condition)];
        for (recipe, column) in recipes.iter().zip(values.iter_mut()) {
            let value = match recipe {
                PredictorRecipe::Cloze => match stim.cloze {
                    Some(c) => c,
                    None => {
                        missing.push(format!("cloze for {}", stimulus_key(frame, condition)));
                        continue;
                    }
                },
                _ => {
                    let model = recipe.model_id().expect("model recipe");
                    let Some(record) = lm_index.get(&(model, frame, condition)) else {
                        missing.push(format!("lm record {model}/{}", stimulus_key(frame, condition)));
                        continue;
                    };
                    if record.word_count() != stim.words.len() {
                        return Err(IngestError::Table(format!(
                            "lm record {model}/{} aligns {} words but the stimulus has {}",
                            stimulus_key(frame, condition),
                            record.word_count(),
                            stim.words.len()
                        )));
                    }
                    let metric_err = |source| IngestError::Metric {
                        key: format!("{model}/{}", stimulus_key(frame, condition)),
                        source,
                    };
                    match recipe {
                        PredictorRecipe::Surprisal { .. } => metrics::word_surprisal(record, stim.target_index, base)
                            .map_err(metric_err)?
                            .value(),
                        PredictorRecipe::CosineSimilarity { .. } => {
                            metrics::context_similarity(record, stim.target_index)
                                .map_err(metric_err)?
                                .cosine_similarity
                        }
                        PredictorRecipe::CosineDistance { .. } => {
                            metrics::context_similarity(record, stim.target_index)
                                .map_err(metric_err)?
                                .cosine_distance
                        }
                        PredictorRecipe::Cloze => unreachable!(),
                    }
                }
            };
            column.insert((frame, condition), value);
        }
    }
    if !missing.is_empty() {
        return Err(IngestError::Unmatched { keys: missing });
    }

    let mut rows: Vec<&TrialMeasurement> = trials.iter().collect();
    rows.sort_by(|a, b| {
        (&a.subject, &a.frame_id, a.condition, &a.electrode).cmp(&(&b.subject, &b.frame_id, b.condition, &b.electrode))
    });
    let keys = rows
        .iter()
        .map(|t| RowKey {
            subject: t.subject.clone(),
            frame_id: t.frame_id.clone(),
            condition: t.condition,
            electrode: t.electrode.clone(),
            roi: t.roi,
        })
        .collect();
    let amplitude = rows.iter().map(|t| t.amplitude).collect();
    let predictors = recipes
        .iter()
        .zip(&values)
        .map(|(recipe, column)| {
            let v = rows
                .iter()
                .map(|t| column[&(t.frame_id.as_str(), t.condition)])
                .collect();
            (recipe.column_name(), v)
        })
        .collect();
    AnalysisTable::new(keys, amplitude, predictors)
}
