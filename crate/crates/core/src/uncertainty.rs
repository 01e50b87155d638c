//! Per-point uncertainty scores and the thresholded open-set prediction rule.

use std::fmt;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Which end of a score field indicates unknown points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    LowMeansUnknown,
    HighMeansUnknown,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::LowMeansUnknown => "low_means_unknown",
            Polarity::HighMeansUnknown => "high_means_unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "low_means_unknown" => Some(Polarity::LowMeansUnknown),
            "high_means_unknown" => Some(Polarity::HighMeansUnknown),
            _ => None,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMethod {
    Msp,
    MaxLogit,
    External,
}

impl ScoreMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMethod::Msp => "msp",
            ScoreMethod::MaxLogit => "maxlogit",
            ScoreMethod::External => "external",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "msp" => Some(ScoreMethod::Msp),
            "maxlogit" => Some(ScoreMethod::MaxLogit),
            "external" => Some(ScoreMethod::External),
            _ => None,
        }
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-point scalar scores together with how to read them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreField<R> {
    pub scores: Vec<R>,
    pub polarity: Polarity,
    pub method: ScoreMethod,
}

impl<R: Real> ScoreField<R> {
    /// Wraps externally produced scores (for example an uncertainty head output).
    pub fn external(scores: Vec<R>, polarity: Polarity) -> Result<Self> {
        if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteInput { row });
        }
        Ok(Self {
            scores,
            polarity,
            method: ScoreMethod::External,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn require(&self, polarity: Polarity) -> Result<()> {
        if self.polarity == polarity {
            Ok(())
        } else {
            Err(Error::PolarityMismatch {
                expected: polarity.as_str(),
                found: self.polarity.as_str(),
            })
        }
    }

    /// Scores re-oriented so that larger means more likely unknown.
    pub fn unknown_oriented(&self) -> Vec<R> {
        match self.polarity {
            Polarity::HighMeansUnknown => self.scores.clone(),
            Polarity::LowMeansUnknown => self.scores.iter().map(|&s| -s).collect(),
        }
    }
}

fn check_finite<R: Real>(logits: &Array2<R>) -> Result<()> {
    if logits.ncols() < 2 {
        return Err(Error::ShapeMismatch("at least two classes are required".into()));
    }
    for (row, r) in logits.rows().into_iter().enumerate() {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { row });
        }
    }
    Ok(())
}

/// Maximum softmax probability of one row, with max subtraction.
pub fn max_softmax<R: Real>(row: ArrayView1<'_, R>) -> R {
    let max = row.iter().copied().fold(R::neg_infinity(), R::max);
    let denom: R = row.iter().map(|&v| (v - max).exp()).sum();
    // exp(max - max) = 1 is the numerator of the winning class.
    R::one() / denom
}

fn row_map<R: Real>(logits: &Array2<R>, f: impl Fn(ArrayView1<'_, R>) -> R + Sync) -> Vec<R> {
    (0..logits.nrows())
        .into_par_iter()
        .map(|i| f(logits.row(i)))
        .collect()
}

/// Maximum softmax probability per point.
pub fn msp_scores<R: Real>(logits: &Array2<R>) -> Result<ScoreField<R>> {
    check_finite(logits)?;
    Ok(ScoreField {
        scores: row_map(logits, max_softmax),
        polarity: Polarity::LowMeansUnknown,
        method: ScoreMethod::Msp,
    })
}

/// Maximum raw logit per point.
pub fn maxlogit_scores<R: Real>(logits: &Array2<R>) -> Result<ScoreField<R>> {
    check_finite(logits)?;
    Ok(ScoreField {
        scores: row_map(logits, |r| r.iter().copied().fold(R::neg_infinity(), R::max)),
        polarity: Polarity::LowMeansUnknown,
        method: ScoreMethod::MaxLogit,
    })
}

pub fn score<R: Real>(logits: &Array2<R>, method: ScoreMethod) -> Result<ScoreField<R>> {
    match method {
        ScoreMethod::Msp => msp_scores(logits),
        ScoreMethod::MaxLogit => maxlogit_scores(logits),
        ScoreMethod::External => Err(Error::ShapeMismatch(
            "external scores are supplied, not computed from logits".into(),
        )),
    }
}

/// Index of the row maximum; ties go to the lowest class index.
pub fn argmax<R: Real>(row: ArrayView1<'_, R>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Closed-set argmax, replaced by the unknown label `C` wherever the
/// unknown score reaches `threshold` (a score equal to the threshold is unknown).
pub fn predict_open_set<R: Real>(
    logits: &Array2<R>,
    unknown_scores: &ScoreField<R>,
    threshold: R,
) -> Result<Vec<i32>> {
    unknown_scores.require(Polarity::HighMeansUnknown)?;
    if unknown_scores.len() != logits.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} logit rows",
            unknown_scores.len(),
            logits.nrows()
        )));
    }
    let unknown = logits.ncols() as i32;
    Ok((0..logits.nrows())
        .map(|i| {
            if unknown_scores.scores[i] < threshold {
                argmax(logits.row(i)) as i32
            } else {
                unknown
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn msp_uniform_row() {
        let s = msp_scores(&array![[0.0_f64, 0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(s.scores, vec![0.25]);
        assert_eq!(s.polarity, Polarity::LowMeansUnknown);
    }

    #[test]
    fn msp_ln2_row() {
        let s = msp_scores(&array![[2.0_f64.ln(), 0.0]]).unwrap();
        assert!((s.scores[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn msp_saturates_without_overflow() {
        let s = msp_scores(&array![[1000.0_f64, 0.0]]).unwrap();
        assert!((s.scores[0] - 1.0).abs() < 1e-12);
        let s32 = msp_scores(&array![[1000.0_f32, 0.0]]).unwrap();
        assert!(s32.scores[0].is_finite());
    }

    #[test]
    fn msp_rejects_non_finite() {
        assert!(matches!(
            msp_scores(&array![[0.0, 1.0], [f64::INFINITY, 0.0]]),
            Err(Error::NonFiniteInput { row: 1 })
        ));
    }

    #[test]
    fn maxlogit_values() {
        let s = maxlogit_scores(&array![[3.0_f64, 1.0, -2.0], [0.7, 0.7, 0.7]]).unwrap();
        assert_eq!(s.scores, vec![3.0, 0.7]);
    }

    #[test]
    fn open_set_rule() {
        let ext = |v: f64| ScoreField::external(vec![v], Polarity::HighMeansUnknown).unwrap();
        assert_eq!(predict_open_set(&array![[5.0, 1.0]], &ext(0.9), 0.5).unwrap(), vec![2]);
        assert_eq!(predict_open_set(&array![[1.0, 5.0]], &ext(0.1), 0.5).unwrap(), vec![1]);
        assert_eq!(predict_open_set(&array![[1.0, 5.0]], &ext(0.5), 0.5).unwrap(), vec![2]);
    }

    #[test]
    fn open_set_requires_high_polarity() {
        let msp = msp_scores(&array![[1.0, 0.0]]).unwrap();
        assert!(matches!(
            predict_open_set(&array![[1.0, 0.0]], &msp, 0.5),
            Err(Error::PolarityMismatch { .. })
        ));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(array![1.0, 3.0, 3.0].view()), 1);
    }
}
