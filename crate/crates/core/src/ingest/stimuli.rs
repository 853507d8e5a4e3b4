use std::io::{Read, Write};

use super::{Condition, IngestError};

/// One sentence: a frame in one condition, with its target word position.
#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    pub frame_id: String,
    pub condition: Condition,
    pub words: Vec<String>,
    /// 0-based index of the target word in `words`.
    pub target_index: usize,
    pub cloze: Option<f64>,
}

impl Stimulus {
    pub fn target_word(&self) -> &str {
        &self.words[self.target_index]
    }

    pub fn sentence(&self) -> String {
        self.words.join(" ")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StimulusFormat {
    pub delimiter: u8,
}

impl Default for StimulusFormat {
    fn default() -> Self {
        Self { delimiter: b'\t' }
    }
}

/// Parse a delimited stimulus file with header columns
/// `frame_id, condition, sentence, target_index[, cloze]`.
pub fn parse_stimuli<R: Read>(source: R, format: &StimulusFormat) -> Result<Vec<Stimulus>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .quoting(false)
        .flexible(true)
        .has_headers(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let missing = |name: &str| IngestError::Malformed {
        line: 1,
        message: format!("missing header column `{name}`"),
    };
    let frame_col = find("frame_id").ok_or_else(|| missing("frame_id"))?;
    let cond_col = find("condition").ok_or_else(|| missing("condition"))?;
    let sent_col = find("sentence").ok_or_else(|| missing("sentence"))?;
    let target_col = find("target_index").ok_or_else(|| missing("target_index"))?;
    let cloze_col = find("cloze");

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(IngestError::Malformed {
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let frame_id = record[frame_col].trim().to_string();
        if frame_id.is_empty() {
            return Err(IngestError::Malformed {
                line,
                message: "empty frame_id".into(),
            });
        }
        let label = record[cond_col].trim();
        let condition = label.parse().map_err(|_| IngestError::UnknownCondition {
            line,
            label: label.to_string(),
        })?;
        let words: Vec<String> = record[sent_col].split_whitespace().map(str::to_string).collect();
        let target_index: usize = record[target_col].trim().parse().map_err(|_| IngestError::Malformed {
            line,
            message: format!("target_index `{}` is not a non-negative integer", &record[target_col]),
        })?;
        if target_index >= words.len() {
            return Err(IngestError::TargetOutOfRange {
                line,
                target_index,
                words: words.len(),
            });
        }
        let cloze = match cloze_col.map(|c| record[c].trim()) {
            None | Some("") | Some("NA") => None,
            Some(raw) => {
                let v: f64 = raw.parse().map_err(|_| IngestError::Malformed {
                    line,
                    message: format!("cloze `{raw}` is not a number"),
                })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(IngestError::Malformed {
                        line,
                        message: format!("cloze {v} outside [0, 1]"),
                    });
                }
                if condition == Condition::Implausible && v != 0.0 {
                    return Err(IngestError::Malformed {
                        line,
                        message: format!("implausible item has nonzero cloze {v}"),
                    });
                }
                Some(v)
            }
        };
        out.push(Stimulus {
            frame_id,
            condition,
            words,
            target_index,
            cloze,
        });
    }
    Ok(out)
}

/// Write stimuli in the TSV layout read by [`parse_stimuli`].
pub fn write_stimuli<W: Write>(mut sink: W, stimuli: &[Stimulus]) -> std::io::Result<()> {
    let with_cloze = stimuli.iter().any(|s| s.cloze.is_some());
    if with_cloze {
        writeln!(sink, "frame_id\tcondition\tsentence\ttarget_index\tcloze")?;
    } else {
        writeln!(sink, "frame_id\tcondition\tsentence\ttarget_index")?;
    }
    for s in stimuli {
        write!(
            sink,
            "{}\t{}\t{}\t{}",
            s.frame_id,
            s.condition,
            s.sentence(),
            s.target_index
        )?;
        if with_cloze {
            match s.cloze {
                Some(c) => write!(sink, "\t{c}")?,
                None => write!(sink, "\t")?,
            }
        }
        writeln!(sink)?;
    }
    Ok(())
}
