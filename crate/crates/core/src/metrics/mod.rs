//! Word-level predictors derived from language-model output.
//!
//! Surprisal is the negative log-probability of a word given its preceding
//! context; multi-subtoken words sum their subtoken surprisals (chain rule).
//! Semantic similarity is the cosine between a target word's context-free
//! embedding and the mean embedding of all words before it.

use std::f64::consts::E;

use thiserror::Error;

use crate::ingest::LmSentenceRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("log-probability {0} must be finite and <= 0")]
    InvalidLogprob(f64),
    #[error("log base {0} must be positive and different from 1")]
    InvalidBase(f64),
    #[error("word {word} has no alignment span ({words} words)")]
    NoSuchWord { word: usize, words: usize },
    #[error("word {word} spans a token with no log-probability (token {token})")]
    MissingLogprob { word: usize, token: usize },
    #[error("target word 0 has no preceding context")]
    NoContext,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} points, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("series has zero variance")]
    ZeroVariance,
}

/// Surprisal of a word, in units of the chosen log base.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Surprisal(f64);

impl Surprisal {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Cosine similarity with its matching distance `1 - similarity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScore {
    pub cosine_similarity: f64,
    pub cosine_distance: f64,
}

impl SimilarityScore {
    fn from_similarity(s: f64) -> Self {
        Self {
            cosine_similarity: s,
            cosine_distance: 1.0 - s,
        }
    }
}

/// Logarithm base for surprisal. Defaults to `e` (nats).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogBase(f64);

impl LogBase {
    pub const NATS: LogBase = LogBase(E);
    pub const BITS: LogBase = LogBase(2.0);

    pub fn new(base: f64) -> Result<Self, MetricsError> {
        if base.is_finite() && base > 0.0 && base != 1.0 {
            Ok(Self(base))
        } else {
            Err(MetricsError::InvalidBase(base))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    fn in_base(self, nats: f64) -> f64 {
        if self.0 == E {
            nats
        } else {
            nats / self.0.ln()
        }
    }
}

impl Default for LogBase {
    fn default() -> Self {
        Self::NATS
    }
}

/// `-logprob` expressed in `base`. `logprob` is a natural log.
pub fn surprisal(logprob: f64, base: LogBase) -> Result<Surprisal, MetricsError> {
    if !logprob.is_finite() || logprob > 0.0 {
        return Err(MetricsError::InvalidLogprob(logprob));
    }
    Ok(Surprisal(base.in_base(-logprob) + 0.0))
}

fn word_span(record: &LmSentenceRecord, word: usize) -> Result<(usize, usize), MetricsError> {
    record.span(word).ok_or(MetricsError::NoSuchWord {
        word,
        words: record.word_count(),
    })
}

/// Surprisal of a whole word: the sum of its subtoken surprisals.
pub fn word_surprisal(record: &LmSentenceRecord, word: usize, base: LogBase) -> Result<Surprisal, MetricsError> {
    let (start, end) = word_span(record, word)?;
    let mut total = 0.0;
    for token in start..end {
        let lp = record.logprobs[token].ok_or(MetricsError::MissingLogprob { word, token })?;
        total += surprisal(lp, base)?.value();
    }
    Ok(Surprisal(total))
}

/// Mean of a word's subtoken embeddings.
pub fn word_embedding(record: &LmSentenceRecord, word: usize) -> Result<Vec<f64>, MetricsError> {
    let (start, end) = word_span(record, word)?;
    mean_of(record.embeddings[start..end].iter().map(Vec::as_slice), record.dim())
}

/// Mean of the word embeddings of words `0..target`; each word weighs the
/// same regardless of how many subtokens it has.
pub fn context_mean_embedding(record: &LmSentenceRecord, target: usize) -> Result<Vec<f64>, MetricsError> {
    if target == 0 {
        return Err(MetricsError::NoContext);
    }
    word_span(record, target)?;
    let words = (0..target)
        .map(|w| word_embedding(record, w))
        .collect::<Result<Vec<_>, _>>()?;
    mean_of(words.iter().map(Vec::as_slice), record.dim())
}

fn mean_of<'a>(vectors: impl Iterator<Item = &'a [f64]>, dim: usize) -> Result<Vec<f64>, MetricsError> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for v in vectors {
        if v.len() != dim {
            return Err(MetricsError::DimensionMismatch(dim, v.len()));
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::TooFew { needed: 1, got: 0 });
    }
    for a in &mut acc {
        *a /= n as f64;
    }
    Ok(acc)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<SimilarityScore, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    let s = (dot / (na * nb)).clamp(-1.0, 1.0);
    Ok(SimilarityScore::from_similarity(s))
}

/// Cosine between the target word's embedding and its preceding-context mean.
pub fn context_similarity(record: &LmSentenceRecord, target: usize) -> Result<SimilarityScore, MetricsError> {
    let context = context_mean_embedding(record, target)?;
    let word = word_embedding(record, target)?;
    cosine(&word, &context)
}

/// Sample Pearson correlation coefficient.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(MetricsError::TooFew {
            needed: 3,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Condition;
    use proptest::prelude::*;

    fn record(
        logprobs: Vec<Option<f64>>,
        alignment: Vec<(usize, usize)>,
        embeddings: Vec<Vec<f64>>,
    ) -> LmSentenceRecord {
        LmSentenceRecord {
            model_id: "m".into(),
            frame_id: "f".into(),
            condition: Condition::Best,
            tokens: (0..logprobs.len()).map(|i| format!("t{i}")).collect(),
            logprobs,
            word_alignment: alignment,
            embeddings,
        }
    }

    #[test]
    fn surprisal_examples() {
        assert_eq!(surprisal(0.0, LogBase::NATS).unwrap().value(), 0.0);
        assert_eq!(surprisal(-2.0, LogBase::NATS).unwrap().value(), 2.0);
        let bits = surprisal(-(2f64.ln()), LogBase::BITS).unwrap().value();
        assert!((bits - 1.0).abs() < 1e-15);
        assert!(surprisal(0.1, LogBase::NATS).is_err());
        assert!(surprisal(f64::NEG_INFINITY, LogBase::NATS).is_err());
        assert!(LogBase::new(1.0).is_err());
        assert!(LogBase::new(-2.0).is_err());
    }

    #[test]
    fn word_surprisal_examples() {
        let r = record(
            vec![None, Some(-1.0), Some(-0.5), Some(-3.2)],
            vec![(0, 1), (1, 3), (3, 4)],
            vec![vec![1.0]; 4],
        );
        assert_eq!(word_surprisal(&r, 1, LogBase::NATS).unwrap().value(), 1.5);
        assert_eq!(word_surprisal(&r, 2, LogBase::NATS).unwrap().value(), 3.2);
        assert_eq!(
            word_surprisal(&r, 0, LogBase::NATS),
            Err(MetricsError::MissingLogprob { word: 0, token: 0 })
        );
        assert!(matches!(
            word_surprisal(&r, 3, LogBase::NATS),
            Err(MetricsError::NoSuchWord { .. })
        ));
    }

    #[test]
    fn context_mean_examples() {
        let one = record(
            vec![None, Some(-1.0)],
            vec![(0, 1), (1, 2)],
            vec![vec![1.0, 0.0, 2.0, 3.0], vec![5.0, 5.0, 5.0, 5.0]],
        );
        assert_eq!(context_mean_embedding(&one, 1).unwrap(), vec![1.0, 0.0, 2.0, 3.0]);

        let two = record(
            vec![None, Some(-1.0), Some(-1.0)],
            vec![(0, 1), (1, 2), (2, 3)],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![3.0, 3.0]],
        );
        assert_eq!(context_mean_embedding(&two, 2).unwrap(), vec![0.5, 0.5]);

        // a two-subtoken word averages first, then counts once
        let nested = record(
            vec![None, Some(-1.0), Some(-1.0), Some(-1.0)],
            vec![(0, 2), (2, 3), (3, 4)],
            vec![vec![2.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0], vec![9.0, 9.0]],
        );
        assert_eq!(context_mean_embedding(&nested, 2).unwrap(), vec![1.0, 1.0]);
        assert_eq!(context_mean_embedding(&nested, 0), Err(MetricsError::NoContext));
    }

    #[test]
    fn cosine_examples() {
        let c = cosine(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((c.cosine_similarity - 1.0).abs() < 1e-15);
        assert!(c.cosine_distance.abs() < 1e-15);
        let c = cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!((c.cosine_similarity, c.cosine_distance), (0.0, 1.0));
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c.cosine_similarity - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(MetricsError::ZeroVector));
        assert_eq!(cosine(&[1.0], &[1.0, 0.0]), Err(MetricsError::DimensionMismatch(1, 2)));
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0, 7.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((pearson_r(&xs, &ys).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson_r(&xs, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson_r(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(pearson_r(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert_eq!(
            pearson_r(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(MetricsError::ZeroVariance)
        );
        assert_eq!(
            pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch(3, 2))
        );
    }

    proptest! {
        #[test]
        fn surprisal_is_monotone(a in -50.0f64..0.0, b in -50.0f64..0.0) {
            let (sa, sb) = (surprisal(a, LogBase::NATS).unwrap(), surprisal(b, LogBase::NATS).unwrap());
            // higher probability, lower surprisal
            if a > b { prop_assert!(sa <= sb); }
        }

        #[test]
        fn word_surprisal_is_additive(lps in prop::collection::vec(-20.0f64..0.0, 1..6)) {
            let n = lps.len();
            let mut logprobs = vec![None];
            logprobs.extend(lps.iter().copied().map(Some));
            let r = record(logprobs, vec![(0, 1), (1, n + 1)], vec![vec![1.0]; n + 1]);
            let total: f64 = lps.iter().sum();
            let ws = word_surprisal(&r, 1, LogBase::NATS).unwrap().value();
            prop_assert!((ws - surprisal(total, LogBase::NATS).unwrap().value()).abs() < 1e-12);
        }

        #[test]
        fn cosine_scale_and_sign(
            a in prop::collection::vec(-10.0f64..10.0, 3),
            b in prop::collection::vec(-10.0f64..10.0, 3),
            k in 0.01f64..100.0,
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let base = cosine(&a, &b).unwrap().cosine_similarity;
            let scaled: Vec<f64> = a.iter().map(|x| x * k).collect();
            prop_assert!((cosine(&scaled, &b).unwrap().cosine_similarity - base).abs() < 1e-12);
            let negated: Vec<f64> = b.iter().map(|x| -x).collect();
            prop_assert!((cosine(&a, &negated).unwrap().cosine_similarity + base).abs() < 1e-12);
            let s = cosine(&a, &b).unwrap();
            prop_assert_eq!(s.cosine_distance, 1.0 - s.cosine_similarity);
        }

        #[test]
        fn pearson_affine_invariance(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30),
            a in 0.1f64..10.0,
            b in -5.0f64..5.0,
        ) {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            prop_assume!(pearson_r(&xs, &ys).is_ok());
            let r = pearson_r(&xs, &ys).unwrap();
            let mapped: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            prop_assert!((pearson_r(&mapped, &ys).unwrap() - r).abs() < 1e-9);
            let flipped: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
            prop_assert!((pearson_r(&flipped, &ys).unwrap() + r).abs() < 1e-9);
        }

        #[test]
        fn context_mean_ignores_subtoken_order(
            e1 in prop::collection::vec(-5.0f64..5.0, 2),
            e2 in prop::collection::vec(-5.0f64..5.0, 2),
        ) {
            let target = vec![1.0, 1.0];
            let fwd = record(vec![None, Some(-1.0), Some(-1.0)], vec![(0, 2), (2, 3)], vec![e1.clone(), e2.clone(), target.clone()]);
            let rev = record(vec![None, Some(-1.0), Some(-1.0)], vec![(0, 2), (2, 3)], vec![e2, e1, target]);
            let a = context_mean_embedding(&fwd, 1).unwrap();
            let b = context_mean_embedding(&rev, 1).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
