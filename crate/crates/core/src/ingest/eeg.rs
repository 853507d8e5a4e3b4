use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Deserialize;

use super::{Condition, IngestError, Roi};

/// Mean amplitude of one electrode on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMeasurement {
    pub subject: String,
    pub frame_id: String,
    pub condition: Condition,
    pub electrode: String,
    pub roi: Roi,
    /// Microvolts.
    pub amplitude: f64,
}

/// One sample of an epoch in the per-sample `epochs.csv` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSample {
    pub subject: String,
    pub frame_id: String,
    pub condition: Condition,
    pub electrode: String,
    pub roi: Roi,
    pub time_ms: f64,
    pub amplitude: f64,
}

/// Closed time window in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

impl Default for Window {
    /// The canonical N400 window.
    fn default() -> Self {
        Self::new(300.0, 500.0)
    }
}

/// Arithmetic mean of the amplitudes whose timestamps lie in the window
/// (both bounds inclusive).
pub fn window_mean(samples: &[(f64, f64)], window: Window) -> Result<f64, IngestError> {
    let (sum, count) = samples
        .iter()
        .filter(|(t, _)| window.contains(*t))
        .fold((0.0, 0usize), |(s, c), &(_, a)| (s + a, c + 1));
    if count == 0 {
        return Err(IngestError::EmptyWindow {
            start: window.start,
            end: window.end,
        });
    }
    Ok(sum / count as f64)
}

#[derive(Deserialize)]
struct TrialRow {
    subject: String,
    frame_id: String,
    condition: String,
    electrode: String,
    roi: String,
    amplitude: f64,
}

#[derive(Deserialize)]
struct EpochRow {
    subject: String,
    frame_id: String,
    condition: String,
    electrode: String,
    roi: String,
    time_ms: f64,
    amplitude: f64,
}

fn labels(line: u64, condition: &str, roi: &str) -> Result<(Condition, Roi), IngestError> {
    let c = condition.parse().map_err(|_| IngestError::UnknownCondition {
        line,
        label: condition.to_string(),
    })?;
    let r = roi.parse().map_err(|_| IngestError::UnknownRoi {
        line,
        label: roi.to_string(),
    })?;
    Ok((c, r))
}

fn csv_line(err: &csv::Error) -> u64 {
    err.position().map_or(0, |p| p.line())
}

/// Parse `eeg.csv`: one window-mean amplitude per row.
pub fn parse_trials<R: Read>(source: R) -> Result<Vec<TrialMeasurement>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<TrialRow>().enumerate() {
        let row = row.map_err(|e| IngestError::Malformed {
            line: csv_line(&e).max(i as u64 + 2),
            message: e.to_string(),
        })?;
        let line = i as u64 + 2;
        let (condition, roi) = labels(line, &row.condition, &row.roi)?;
        if !row.amplitude.is_finite() {
            return Err(IngestError::Malformed {
                line,
                message: "amplitude is not finite".into(),
            });
        }
        out.push(TrialMeasurement {
            subject: row.subject,
            frame_id: row.frame_id,
            condition,
            electrode: row.electrode,
            roi,
            amplitude: row.amplitude,
        });
    }
    Ok(out)
}

/// Parse `epochs.csv`: one sample per row.
pub fn parse_epochs<R: Read>(source: R) -> Result<Vec<EpochSample>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<EpochRow>().enumerate() {
        let row = row.map_err(|e| IngestError::Malformed {
            line: csv_line(&e).max(i as u64 + 2),
            message: e.to_string(),
        })?;
        let line = i as u64 + 2;
        let (condition, roi) = labels(line, &row.condition, &row.roi)?;
        if !row.amplitude.is_finite() || !row.time_ms.is_finite() {
            return Err(IngestError::Malformed {
                line,
                message: "time or amplitude is not finite".into(),
            });
        }
        out.push(EpochSample {
            subject: row.subject,
            frame_id: row.frame_id,
            condition,
            electrode: row.electrode,
            roi,
            time_ms: row.time_ms,
            amplitude: row.amplitude,
        });
    }
    Ok(out)
}

/// Collapse per-sample epochs into window means, one per
/// (subject, frame, condition, electrode).
pub fn reduce_epochs(samples: &[EpochSample], window: Window) -> Result<Vec<TrialMeasurement>, IngestError> {
    type Key<'a> = (&'a str, &'a str, Condition, &'a str);
    let mut groups: BTreeMap<Key<'_>, (Roi, Vec<(f64, f64)>)> = BTreeMap::new();
    for s in samples {
        let key = (
            s.subject.as_str(),
            s.frame_id.as_str(),
            s.condition,
            s.electrode.as_str(),
        );
        let entry = groups.entry(key).or_insert_with(|| (s.roi, Vec::new()));
        if entry.0 != s.roi {
            return Err(IngestError::Table(format!(
                "electrode {} is labelled both {} and {}",
                s.electrode, entry.0, s.roi
            )));
        }
        entry.1.push((s.time_ms, s.amplitude));
    }
    groups
        .into_iter()
        .map(|((subject, frame_id, condition, electrode), (roi, series))| {
            let amplitude = window_mean(&series, window).map_err(|_| IngestError::Unmatched {
                keys: vec![format!(
                    "no samples in [{}, {}] ms for subject {subject}, frame {frame_id}, condition {condition}, electrode {electrode}",
                    window.start, window.end
                )],
            })?;
            Ok(TrialMeasurement {
                subject: subject.to_string(),
                frame_id: frame_id.to_string(),
                condition,
                electrode: electrode.to_string(),
                roi,
                amplitude,
            })
        })
        .collect()
}

/// Write measurements in the `eeg.csv` layout read by [`parse_trials`].
pub fn write_trials<W: Write>(sink: W, trials: &[TrialMeasurement]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["subject", "frame_id", "condition", "electrode", "roi", "amplitude"])?;
    for t in trials {
        w.write_record([
            t.subject.as_str(),
            t.frame_id.as_str(),
            t.condition.as_str(),
            t.electrode.as_str(),
            t.roi.as_str(),
            &t.amplitude.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn window_examples() {
        let w = Window::default();
        assert_eq!(
            window_mean(&[(300.0, 1.0), (400.0, 2.0), (500.0, 3.0)], w).unwrap(),
            2.0
        );
        assert_eq!(window_mean(&[(299.0, 100.0), (300.0, 4.0)], w).unwrap(), 4.0);
        assert_eq!(window_mean(&[(350.0, -7.5)], w).unwrap(), -7.5);
        assert!(matches!(
            window_mean(&[(200.0, 1.0), (501.0, 2.0)], w),
            Err(IngestError::EmptyWindow { .. })
        ));
        assert!(window_mean(&[], w).is_err());
    }

    proptest! {
        #[test]
        fn window_mean_ignores_order_and_outside_samples(
            inside in prop::collection::vec((300.0f64..=500.0, -50.0f64..50.0), 1..40),
            outside in prop::collection::vec((prop_oneof![0.0f64..299.99, 500.01f64..900.0], -500.0f64..500.0), 0..20),
            seed in any::<u64>(),
        ) {
            let w = Window::default();
            let base = window_mean(&inside, w).unwrap();
            let mut mixed: Vec<_> = inside.iter().chain(outside.iter()).copied().collect();
            // deterministic shuffle
            let mut s = seed;
            for i in (1..mixed.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                mixed.swap(i, (s >> 33) as usize % (i + 1));
            }
            let other = window_mean(&mixed, w).unwrap();
            prop_assert!((base - other).abs() <= 1e-12 * (1.0 + base.abs()));
        }
    }

    #[test]
    fn trials_csv() {
        let text = "subject,frame_id,condition,electrode,roi,amplitude\ns1,f1,best,Cz,Central,-2.5\ns1,f1,related,Pz,posterior,1.0\n";
        let t = parse_trials(text.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].roi, Roi::Central);
        assert_eq!(t[1].condition, Condition::Related);
        let mut buf = Vec::new();
        write_trials(&mut buf, &t).unwrap();
        assert_eq!(parse_trials(buf.as_slice()).unwrap(), t);
        let bad = "subject,frame_id,condition,electrode,roi,amplitude\ns1,f1,best,Cz,Occipital,1\n";
        assert!(matches!(
            parse_trials(bad.as_bytes()),
            Err(IngestError::UnknownRoi { line: 2, .. })
        ));
        let bad = "subject,frame_id,condition,electrode,roi,amplitude\ns1,f1,best,Cz,central,abc\n";
        assert!(matches!(
            parse_trials(bad.as_bytes()),
            Err(IngestError::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn epochs_reduce_to_window_means() {
        let text = "subject,frame_id,condition,electrode,roi,time_ms,amplitude\n\
                    s1,f1,best,Cz,central,250,9\n\
                    s1,f1,best,Cz,central,300,1\n\
                    s1,f1,best,Cz,central,500,3\n\
                    s1,f1,best,Pz,posterior,400,-4\n";
        let samples = parse_epochs(text.as_bytes()).unwrap();
        let trials = reduce_epochs(&samples, Window::default()).unwrap();
        assert_eq!(trials.len(), 2);
        assert_eq!(trials[0].electrode, "Cz");
        assert_eq!(trials[0].amplitude, 2.0);
        assert_eq!(trials[1].amplitude, -4.0);
    }
}
