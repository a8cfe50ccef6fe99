//! Template comparison: chi-square, SAFE similarity, key-point matching and
//! the Euclidean/cosine baselines.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::descriptors::{to_pdf, GABOR_ID, HOG_ID, LBP_ID, NTNU_ID, SAFE_ID};
use crate::error::{Error, Result};
use crate::keypoints::{self, MatchParams, SIFT_ID};
use crate::model::{Payload, Template, TemplateKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    Chi2,
    Euclidean,
    Cosine,
    SafeComplex,
    KeypointMatch,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Chi2 => "chi2",
            Measure::Euclidean => "euclidean",
            Measure::Cosine => "cosine",
            Measure::SafeComplex => "safe-complex",
            Measure::KeypointMatch => "keypoint-match",
        }
    }

    pub fn polarity(self) -> Polarity {
        match self {
            Measure::Chi2 | Measure::Euclidean => Polarity::Distance,
            Measure::Cosine | Measure::SafeComplex | Measure::KeypointMatch => Polarity::Similarity,
        }
    }

    fn accepts(self, kind: TemplateKind) -> bool {
        use TemplateKind::*;
        match self {
            Measure::Chi2 | Measure::Euclidean | Measure::Cosine => matches!(kind, RealVector | CodeHistogram | Embedding),
            Measure::SafeComplex => kind == ComplexVector,
            Measure::KeypointMatch => kind == KeypointSet,
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Measure::Chi2, Measure::Euclidean, Measure::Cosine, Measure::SafeComplex, Measure::KeypointMatch]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown measure '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Similarity,
    Distance,
}

impl Polarity {
    /// Maps a raw score so that larger always means more similar.
    pub fn to_similarity(self, raw: f64) -> f64 {
        match self {
            Polarity::Similarity => raw,
            Polarity::Distance => -raw,
        }
    }
}

/// How one comparator's templates are compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorBinding {
    pub comparator_id: String,
    pub kind: TemplateKind,
    pub measure: Measure,
    pub polarity: Polarity,
    #[serde(default)]
    pub match_params: MatchParams,
}

impl ComparatorBinding {
    pub fn new(comparator_id: impl Into<String>, kind: TemplateKind, measure: Measure) -> Result<Self> {
        if !measure.accepts(kind) {
            return Err(Error::invalid(format!("measure {measure} cannot compare {kind} templates")));
        }
        Ok(Self {
            comparator_id: comparator_id.into(),
            kind,
            measure,
            polarity: measure.polarity(),
            match_params: MatchParams::default(),
        })
    }

    /// Standard binding for a built-in comparator; any other id is treated as
    /// an external embedding compared with chi-square.
    pub fn for_comparator(id: &str) -> Self {
        let (kind, measure) = match id {
            SAFE_ID => (TemplateKind::ComplexVector, Measure::SafeComplex),
            GABOR_ID | LBP_ID | HOG_ID => (TemplateKind::RealVector, Measure::Chi2),
            NTNU_ID => (TemplateKind::CodeHistogram, Measure::Chi2),
            SIFT_ID => (TemplateKind::KeypointSet, Measure::KeypointMatch),
            _ => (TemplateKind::Embedding, Measure::Chi2),
        };
        Self::new(id, kind, measure).expect("built-in bindings are consistent")
    }
}

/// Score of one comparison together with its polarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawScore {
    pub value: f64,
    pub polarity: Polarity,
}

impl RawScore {
    pub fn similarity(self) -> f64 {
        self.polarity.to_similarity(self.value)
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: vec![a.len() as u64],
            right: vec![b.len() as u64],
        });
    }
    Ok(())
}

/// Chi-square distance `sum (p - q)^2 / (p + q)`; bins empty in both inputs add nothing.
pub fn chi2(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p, q)?;
    if p.iter().chain(q).any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid("chi-square inputs must be finite and non-negative"));
    }
    Ok(p.iter()
        .zip(q)
        .filter(|(&a, &b)| a + b > 0.0)
        .map(|(&a, &b)| (a - b) * (a - b) / (a + b))
        .sum())
}

pub fn euclidean(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p, q)?;
    Ok(p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

pub fn cosine(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p, q)?;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (np, nq) = (norm(p), norm(q));
    if np == 0.0 || nq == 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero vector".into()));
    }
    Ok(p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() / (np * nq))
}

/// `|M| cos(arg M)` with `M = <q, t> / <|q|, |t|>`, conjugating `t`.
///
/// This is the real part of `M`, so it lies in [-1, 1] and is unchanged when
/// the arguments are swapped.
pub fn safe_score(q: &[Complex64], t: &[Complex64]) -> Result<f64> {
    if q.len() != t.len() {
        return Err(Error::DimensionMismatch {
            left: vec![q.len() as u64],
            right: vec![t.len() as u64],
        });
    }
    let inner: Complex64 = q.iter().zip(t).map(|(a, b)| a * b.conj()).sum();
    let mags: f64 = q.iter().zip(t).map(|(a, b)| a.norm() * b.norm()).sum();
    if !(mags > 0.0) {
        return Err(Error::Degenerate("SAFE template has zero magnitude".into()));
    }
    let m = inner / mags;
    Ok(m.norm() * m.arg().cos())
}

/// Real values of a template prepared for histogram comparison.
fn histogram_values(t: &Template) -> Vec<f64> {
    match t.payload() {
        Payload::Real(v) if t.kind() == TemplateKind::Embedding => {
            // Embeddings may be negative: shift to a zero minimum, then normalize.
            let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut out: Vec<f64> = v.iter().map(|x| x - min).collect();
            to_pdf(&mut out);
            out
        }
        Payload::Real(v) => v.clone(),
        Payload::Counts(c) => {
            let mut out: Vec<f64> = c.iter().map(|&x| x as f64).collect();
            to_pdf(&mut out);
            out
        }
        Payload::Complex(_) => unreachable!("complex templates never reach histogram measures"),
    }
}

fn plain_values(t: &Template) -> Vec<f64> {
    match t.payload() {
        Payload::Real(v) => v.clone(),
        Payload::Counts(c) => c.iter().map(|&x| x as f64).collect(),
        Payload::Complex(_) => unreachable!("complex templates never reach vector measures"),
    }
}

/// Compares two templates under `binding`.
pub fn compare(a: &Template, b: &Template, binding: &ComparatorBinding) -> Result<RawScore> {
    for t in [a, b] {
        if t.kind() != binding.kind {
            return Err(Error::KindMismatch {
                expected: binding.kind.name().into(),
                found: t.kind().name().into(),
            });
        }
    }
    let same_shape = if binding.kind == TemplateKind::KeypointSet {
        a.dims().get(1) == b.dims().get(1)
    } else {
        a.dims() == b.dims()
    };
    if !same_shape {
        return Err(Error::DimensionMismatch {
            left: a.dims().to_vec(),
            right: b.dims().to_vec(),
        });
    }
    let value = match binding.measure {
        Measure::Chi2 => chi2(&histogram_values(a), &histogram_values(b))?,
        Measure::Euclidean => euclidean(&plain_values(a), &plain_values(b))?,
        Measure::Cosine => cosine(&plain_values(a), &plain_values(b))?,
        Measure::SafeComplex => match (a.payload(), b.payload()) {
            (Payload::Complex(q), Payload::Complex(t)) => safe_score(q, t)?,
            _ => unreachable!("kind check guarantees complex payloads"),
        },
        Measure::KeypointMatch => {
            let (ka, kb) = (keypoints::from_template(a)?, keypoints::from_template(b)?);
            keypoints::match_score(&ka, &kb, &binding.match_params)
        }
    };
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("{} score", binding.comparator_id)));
    }
    Ok(RawScore {
        value,
        polarity: binding.polarity,
    })
}
