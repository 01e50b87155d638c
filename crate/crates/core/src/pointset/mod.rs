//! Point clouds joined with per-point class logits, label sets, and their
//! on-disk formats.

mod csv_format;
mod owpc;

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use owpc::{OWPC_MAGIC, FLAG_FEATURES, FLAG_FEATURE_COUNT, FLAG_LABELS};

/// Label value reserved for points of unknown class.
pub const UNKNOWN_LABEL: i32 = -1;

/// N points with coordinates, an N×C logit field and optional labels/features.
#[derive(Debug, Clone, PartialEq)]
pub struct PointProbabilityCloud<R> {
    coords: Array2<R>,
    logits: Array2<R>,
    labels: Option<Vec<i32>>,
    features: Option<Array2<R>>,
}

impl<R: Real> PointProbabilityCloud<R> {
    pub fn new(
        coords: Array2<R>,
        logits: Array2<R>,
        labels: Option<Vec<i32>>,
        features: Option<Array2<R>>,
    ) -> Result<Self> {
        let n = coords.nrows();
        if n == 0 {
            return Err(Error::InvalidCloud("cloud needs at least one point".into()));
        }
        if coords.ncols() != 3 {
            return Err(Error::InvalidCloud(format!(
                "coords must be N×3, got N×{}",
                coords.ncols()
            )));
        }
        if logits.nrows() != n {
            return Err(Error::InvalidCloud(format!(
                "logits have {} rows for {n} points",
                logits.nrows()
            )));
        }
        if logits.ncols() < 2 {
            return Err(Error::InvalidCloud("at least two classes are required".into()));
        }
        if coords.iter().chain(logits.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCloud("coords and logits must be finite".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::InvalidCloud(format!(
                    "{} labels for {n} points",
                    labels.len()
                )));
            }
            if let Some(&bad) = labels.iter().find(|&&l| l < UNKNOWN_LABEL) {
                return Err(Error::InvalidCloud(format!("label {bad} below -1")));
            }
        }
        if let Some(features) = &features {
            if features.nrows() != n {
                return Err(Error::InvalidCloud(format!(
                    "features have {} rows for {n} points",
                    features.nrows()
                )));
            }
        }
        Ok(Self {
            coords,
            logits,
            labels,
            features,
        })
    }

    pub fn n_points(&self) -> usize {
        self.coords.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.logits.ncols()
    }

    pub fn coords(&self) -> &Array2<R> {
        &self.coords
    }

    pub fn logits(&self) -> &Array2<R> {
        &self.logits
    }

    pub fn labels(&self) -> Option<&[i32]> {
        self.labels.as_deref()
    }

    pub fn features(&self) -> Option<&Array2<R>> {
        self.features.as_ref()
    }

    /// Coordinates of point `i`.
    pub fn point(&self, i: usize) -> [R; 3] {
        [self.coords[[i, 0]], self.coords[[i, 1]], self.coords[[i, 2]]]
    }

    pub fn with_labels(mut self, labels: Vec<i32>) -> Result<Self> {
        self.labels = Some(labels);
        Self::new(self.coords, self.logits, self.labels, self.features)
    }
}

/// Supported cloud file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Owpc,
    Csv,
}

impl CloudFormat {
    /// Picks the format from a file extension (`.csv` means CSV, anything else OWPC).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CloudFormat::Csv,
            _ => CloudFormat::Owpc,
        }
    }
}

pub fn load_cloud<R: Real>(path: &Path, format: CloudFormat) -> Result<PointProbabilityCloud<R>> {
    match format {
        CloudFormat::Owpc => owpc::decode(&std::fs::read(path)?),
        CloudFormat::Csv => csv_format::decode(&std::fs::read(path)?),
    }
}

/// Writes a cloud. OWPC stores coords, logits and features as `f32`; CSV keeps
/// full precision.
pub fn save_cloud<R: Real>(
    cloud: &PointProbabilityCloud<R>,
    path: &Path,
    format: CloudFormat,
) -> Result<()> {
    let bytes = match format {
        CloudFormat::Owpc => owpc::encode(cloud)?,
        CloudFormat::Csv => csv_format::encode(cloud).into_bytes(),
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

pub use csv_format::{decode as decode_csv, encode as encode_csv};
pub use owpc::{decode as decode_owpc, encode as encode_owpc};

/// Which label set a [`LabelSet`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    ClosedSet,
    Pseudo,
    NovelOneHot,
    Distilled,
}

/// Hard labels, soft label rows, or both.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet<R> {
    kind: LabelKind,
    hard: Option<Vec<i32>>,
    soft: Option<Array2<R>>,
}

/// Tolerance on soft-row sums.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

impl<R: Real> LabelSet<R> {
    pub fn closed_set(hard: Vec<i32>) -> Self {
        Self {
            kind: LabelKind::ClosedSet,
            hard: Some(hard),
            soft: None,
        }
    }

    pub fn pseudo(hard: Vec<i32>) -> Self {
        Self {
            kind: LabelKind::Pseudo,
            hard: Some(hard),
            soft: None,
        }
    }

    /// One-hot rows for novel-labeled points.
    pub fn novel_onehot(hard: Vec<i32>, width: usize) -> Result<Self> {
        let mut soft = Array2::zeros((hard.len(), width));
        for (row, &label) in hard.iter().enumerate() {
            if label < 0 || label as usize >= width {
                return Err(Error::ClassLabelOutOfRange {
                    row,
                    label: label as i64,
                    classes: width,
                });
            }
            soft[[row, label as usize]] = R::one();
        }
        Ok(Self {
            kind: LabelKind::NovelOneHot,
            hard: Some(hard),
            soft: Some(soft),
        })
    }

    pub fn distilled(soft: Array2<R>) -> Result<Self> {
        check_simplex_rows(&soft)?;
        Ok(Self {
            kind: LabelKind::Distilled,
            hard: None,
            soft: Some(soft),
        })
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn hard(&self) -> Option<&[i32]> {
        self.hard.as_deref()
    }

    pub fn soft(&self) -> Option<&Array2<R>> {
        self.soft.as_ref()
    }

    pub fn into_hard(self) -> Option<Vec<i32>> {
        self.hard
    }
}

pub(crate) fn check_simplex_rows<R: Real>(soft: &Array2<R>) -> Result<()> {
    let tol = R::lit(SIMPLEX_TOLERANCE);
    for (row, values) in soft.rows().into_iter().enumerate() {
        let mut sum = R::zero();
        for &v in values {
            if !v.is_finite() || v < R::zero() {
                return Err(Error::InvalidSimplexRow { row });
            }
            sum += v;
        }
        if (sum - R::one()).abs() > tol {
            return Err(Error::InvalidSimplexRow { row });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> PointProbabilityCloud<f64> {
        PointProbabilityCloud::new(
            array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]],
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn three_point_cloud_shape() {
        let c = tiny();
        assert_eq!(c.n_points(), 3);
        assert_eq!(c.n_classes(), 2);
        assert_eq!(c.point(2), [2.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_non_finite_logits() {
        let err = PointProbabilityCloud::new(
            array![[0.0, 0.0, 0.0]],
            array![[f64::NAN, 0.0]],
            None,
            None,
        );
        assert!(matches!(err, Err(Error::InvalidCloud(_))));
    }

    #[test]
    fn rejects_single_class_and_bad_labels() {
        assert!(PointProbabilityCloud::<f64>::new(array![[0.0, 0.0, 0.0]], array![[1.0]], None, None).is_err());
        assert!(tiny().with_labels(vec![0, -2, 1]).is_err());
        // Novel-class labels (>= C) are allowed.
        assert!(tiny().with_labels(vec![0, -1, 5]).is_ok());
    }

    #[test]
    fn distilled_rows_must_sum_to_one() {
        assert!(LabelSet::distilled(array![[0.5, 0.5], [0.2, 0.8]]).is_ok());
        assert!(matches!(
            LabelSet::distilled(array![[0.5, 0.5], [0.2, 0.7]]),
            Err(Error::InvalidSimplexRow { row: 1 })
        ));
    }

    #[test]
    fn novel_onehot_rows() {
        let l = LabelSet::<f64>::novel_onehot(vec![2, 0], 3).unwrap();
        assert_eq!(l.soft().unwrap(), &array![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]);
        assert_eq!(l.kind(), LabelKind::NovelOneHot);
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(CloudFormat::from_path(Path::new("a.CSV")), CloudFormat::Csv);
        assert_eq!(CloudFormat::from_path(Path::new("a.owpc")), CloudFormat::Owpc);
    }
}
