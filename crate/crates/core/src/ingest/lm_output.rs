use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Condition, IngestError};

/// Language-model output for one sentence: subtoken log-probabilities,
/// word-to-subtoken alignment and context-free subtoken embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmSentenceRecord {
    pub model_id: String,
    pub frame_id: String,
    pub condition: Condition,
    pub tokens: Vec<String>,
    /// Natural-log probabilities; `None` where the model made no prediction.
    pub logprobs: Vec<Option<f64>>,
    /// Half-open `[start, end)` subtoken span per word, in word order.
    pub word_alignment: Vec<(usize, usize)>,
    pub embeddings: Vec<Vec<f64>>,
}

impl LmSentenceRecord {
    pub fn word_count(&self) -> usize {
        self.word_alignment.len()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.first().map_or(0, Vec::len)
    }

    pub fn span(&self, word: usize) -> Option<(usize, usize)> {
        self.word_alignment.get(word).copied()
    }

    /// Check the record's structural invariants; `line` is used in errors.
    pub fn validate(&self, line: u64) -> Result<(), IngestError> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(IngestError::Malformed {
                line,
                message: "record has no tokens".into(),
            });
        }
        if self.logprobs.len() != n {
            return Err(IngestError::Malformed {
                line,
                message: format!("{} logprobs for {n} tokens", self.logprobs.len()),
            });
        }
        if self.embeddings.len() != n {
            return Err(IngestError::Malformed {
                line,
                message: format!("{} embeddings for {n} tokens", self.embeddings.len()),
            });
        }
        for (i, lp) in self.logprobs.iter().enumerate() {
            if let Some(v) = *lp {
                if !v.is_finite() {
                    return Err(IngestError::Malformed {
                        line,
                        message: format!("token {i} has non-finite log-probability"),
                    });
                }
                if v > 0.0 {
                    return Err(IngestError::PositiveLogprob {
                        line,
                        token: i,
                        value: v,
                    });
                }
            }
        }
        let d = self.embeddings[0].len();
        if d == 0 {
            return Err(IngestError::Malformed {
                line,
                message: "embeddings have dimension 0".into(),
            });
        }
        for (i, e) in self.embeddings.iter().enumerate() {
            if e.len() != d {
                return Err(IngestError::DimensionMismatch {
                    line,
                    expected: d,
                    found: e.len(),
                });
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(IngestError::Malformed {
                    line,
                    message: format!("embedding {i} has non-finite entries"),
                });
            }
            if e.iter().all(|&v| v == 0.0) {
                return Err(IngestError::Malformed {
                    line,
                    message: format!("embedding {i} is the zero vector"),
                });
            }
        }
        if self.word_alignment.is_empty() {
            return Err(IngestError::Alignment {
                line,
                message: "is empty".into(),
            });
        }
        let mut expected_start = 0;
        for (w, &(start, end)) in self.word_alignment.iter().enumerate() {
            if start != expected_start {
                let kind = if start > expected_start { "gap" } else { "overlap" };
                return Err(IngestError::Alignment {
                    line,
                    message: format!("{kind} before word {w}: span starts at {start}, expected {expected_start}"),
                });
            }
            if end <= start {
                return Err(IngestError::Alignment {
                    line,
                    message: format!("word {w} has empty span [{start}, {end})"),
                });
            }
            expected_start = end;
        }
        if expected_start != n {
            return Err(IngestError::Alignment {
                line,
                message: format!("covers {expected_start} of {n} tokens"),
            });
        }
        Ok(())
    }
}

/// Parse JSON-lines language-model output. Blank lines are skipped.
pub fn parse_lm_output<R: BufRead>(source: R) -> Result<Vec<LmSentenceRecord>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LmSentenceRecord = serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        record.validate(line_no)?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_lm_output<W: Write>(mut sink: W, records: &[LmSentenceRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut sink, r)?;
        writeln!(sink)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_record() {
        let text = r#"{"model_id":"gpt2","frame_id":"f1","condition":"best","tokens":["The","dog"],"logprobs":[null,-3.2],"word_alignment":[[0,1],[1,2]],"embeddings":[[1,0,0,0],[0,1,0,0]]}"#;
        let recs = parse_lm_output(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].logprobs, vec![None, Some(-3.2)]);
        assert_eq!(recs[0].dim(), 4);
        assert_eq!(recs[0].span(1), Some((1, 2)));
    }

    #[test]
    fn mixed_dimensions() {
        let text = r#"{"model_id":"m","frame_id":"f1","condition":"best","tokens":["a","b"],"logprobs":[null,-1],"word_alignment":[[0,1],[1,2]],"embeddings":[[1,0,0,0],[0,1,0,0,0]]}"#;
        assert!(matches!(
            parse_lm_output(text.as_bytes()),
            Err(IngestError::DimensionMismatch {
                expected: 4,
                found: 5,
                ..
            })
        ));
    }

    #[test]
    fn positive_logprob() {
        let text = r#"{"model_id":"m","frame_id":"f1","condition":"best","tokens":["a","b"],"logprobs":[null,0.1],"word_alignment":[[0,1],[1,2]],"embeddings":[[1,0],[0,1]]}"#;
        assert!(matches!(
            parse_lm_output(text.as_bytes()),
            Err(IngestError::PositiveLogprob { token: 1, .. })
        ));
    }

    #[test]
    fn alignment_gap_and_overlap() {
        let gap = r#"{"model_id":"m","frame_id":"f1","condition":"best","tokens":["a","b","c"],"logprobs":[null,-1,-1],"word_alignment":[[0,1],[2,3]],"embeddings":[[1,0],[0,1],[1,1]]}"#;
        let err = parse_lm_output(gap.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("gap"), "{err}");
        let overlap = r#"{"model_id":"m","frame_id":"f1","condition":"best","tokens":["a","b","c"],"logprobs":[null,-1,-1],"word_alignment":[[0,2],[1,3]],"embeddings":[[1,0],[0,1],[1,1]]}"#;
        let err = parse_lm_output(overlap.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("overlap"), "{err}");
        let short = r#"{"model_id":"m","frame_id":"f1","condition":"best","tokens":["a","b","c"],"logprobs":[null,-1,-1],"word_alignment":[[0,1],[1,2]],"embeddings":[[1,0],[0,1],[1,1]]}"#;
        assert!(parse_lm_output(short.as_bytes()).is_err());
    }

    #[test]
    fn zero_embedding_rejected() {
        let text = r#"{"model_id":"m","frame_id":"f1","condition":"best","tokens":["a"],"logprobs":[null],"word_alignment":[[0,1]],"embeddings":[[0,0]]}"#;
        assert!(parse_lm_output(text.as_bytes()).is_err());
    }

    #[test]
    fn error_carries_line_number() {
        let good = r#"{"model_id":"m","frame_id":"f1","condition":"best","tokens":["a"],"logprobs":[null],"word_alignment":[[0,1]],"embeddings":[[1,0]]}"#;
        let text = format!("{good}\n\n{{not json\n");
        match parse_lm_output(text.as_bytes()) {
            Err(IngestError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
