//! Incremental-learning targets: temperature-softened teacher rows, one-hot
//! rows on novel-labeled points, and the KL objective between the softened
//! student and those targets.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::pointset::{check_simplex_rows, LabelKind, LabelSet};
use crate::scalar::Real;

/// Novel-label value for points without a novel annotation.
pub const NOT_NOVEL: i32 = -1;

/// Target entries are clamped to this floor before the log ratio.
pub const TARGET_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillConfig {
    pub temperature: f64,
    pub n_novel: usize,
    /// First novel class id `C`; novel classes are `C..C + n_novel`.
    pub novel_label_offset: usize,
}

impl DistillConfig {
    pub fn width(&self) -> usize {
        self.novel_label_offset + self.n_novel
    }
}

/// `softmax(row / T)`.
pub fn soften<R: Real>(row: ArrayView1<'_, R>, temperature: R) -> Result<Vec<R>> {
    if !(temperature > R::zero() && temperature.is_finite()) {
        return Err(Error::NonpositiveTemperature);
    }
    Ok(log_soften(row, temperature).into_iter().map(R::exp).collect())
}

fn log_soften<R: Real>(row: ArrayView1<'_, R>, temperature: R) -> Vec<R> {
    let scaled: Vec<R> = row.iter().map(|&v| v / temperature).collect();
    let max = scaled.iter().copied().fold(R::neg_infinity(), R::max);
    let lse = max + scaled.iter().map(|&v| (v - max).exp()).sum::<R>().ln();
    scaled.into_iter().map(|v| v - lse).collect()
}

/// One-hot rows where a point carries a novel label, softened teacher rows
/// elsewhere.
pub fn make_distilled_gt<R: Real>(
    teacher_logits: &Array2<R>,
    novel_labels: &[i32],
    config: &DistillConfig,
) -> Result<LabelSet<R>> {
    let (n, width) = teacher_logits.dim();
    if width != config.width() {
        return Err(Error::ShapeMismatch(format!(
            "teacher has {width} columns, expected C + n = {}",
            config.width()
        )));
    }
    if novel_labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{} novel labels for {n} rows", novel_labels.len())));
    }
    let temperature = R::lit(config.temperature);
    if !(temperature > R::zero() && temperature.is_finite()) {
        return Err(Error::NonpositiveTemperature);
    }
    let lo = config.novel_label_offset as i32;
    let hi = config.width() as i32;
    let mut soft = Array2::zeros((n, width));
    for (i, &label) in novel_labels.iter().enumerate() {
        if label == NOT_NOVEL {
            let row = teacher_logits.row(i);
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput { row: i });
            }
            for (k, v) in soften(row, temperature)?.into_iter().enumerate() {
                soft[[i, k]] = v;
            }
        } else if (lo..hi).contains(&label) {
            soft[[i, label as usize]] = R::one();
        } else {
            return Err(Error::NovelLabelOutOfRange {
                row: i,
                label: label as i64,
                lo: lo as i64,
                hi: hi as i64,
            });
        }
    }
    LabelSet::distilled(soft)
}

/// Mean over points of `KL(soften(student, T) || target)`, with target entries
/// floored at [`TARGET_FLOOR`]. Returns `(loss, d loss / d student_logits)`.
pub fn il_loss<R: Real>(
    student_logits: &Array2<R>,
    distilled: &LabelSet<R>,
    temperature: R,
) -> Result<(R, Array2<R>)> {
    if !(temperature > R::zero() && temperature.is_finite()) {
        return Err(Error::NonpositiveTemperature);
    }
    let targets = match (distilled.kind(), distilled.soft()) {
        (LabelKind::Distilled | LabelKind::NovelOneHot, Some(s)) => s,
        _ => return Err(Error::ShapeMismatch("distilled labels need soft rows".into())),
    };
    check_simplex_rows(targets)?;
    let (n, width) = student_logits.dim();
    if targets.dim() != (n, width) {
        return Err(Error::ShapeMismatch(format!(
            "student is {n}×{width}, targets are {}×{}",
            targets.nrows(),
            targets.ncols()
        )));
    }
    let floor = R::lit(TARGET_FLOOR);
    let inv_n = R::one() / R::lit(n as f64);
    let mut total = R::zero();
    let mut grad = Array2::zeros((n, width));
    for i in 0..n {
        let row = student_logits.row(i);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { row: i });
        }
        let log_q = log_soften(row, temperature);
        let q: Vec<R> = log_q.iter().map(|&l| l.exp()).collect();
        // g_c = log q_c - log y_c; d/dz_j = q_j (g_j - sum_c q_c g_c) / T
        let g: Vec<R> = log_q
            .iter()
            .zip(targets.row(i))
            .map(|(&lq, &y)| lq - y.max(floor).ln())
            .collect();
        let expected: R = q.iter().zip(&g).map(|(&qc, &gc)| qc * gc).sum();
        total += expected;
        for j in 0..width {
            grad[[i, j]] = q[j] * (g[j] - expected) / temperature * inv_n;
        }
    }
    Ok((total * inv_n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn soften_identity_and_uniform() {
        let row = array![1.0_f64, 2.0, -0.5];
        let p = soften(row.view(), 1.0).unwrap();
        let denom: f64 = row.iter().map(|v| v.exp()).sum();
        for (k, &v) in row.iter().enumerate() {
            assert!((p[k] - v.exp() / denom).abs() < 1e-15);
        }
        let u = soften(array![3.0_f64, 3.0, 3.0, 3.0].view(), 7.0).unwrap();
        assert!(u.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn soften_temperature_two() {
        let e = std::f64::consts::E;
        let p = soften(array![2.0_f64, 0.0].view(), 2.0).unwrap();
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn soften_rejects_bad_temperature() {
        assert!(matches!(soften(array![1.0_f64].view(), 0.0), Err(Error::NonpositiveTemperature)));
        assert!(matches!(soften(array![1.0_f64].view(), -1.0), Err(Error::NonpositiveTemperature)));
    }

    fn cfg(t: f64) -> DistillConfig {
        DistillConfig { temperature: t, n_novel: 2, novel_label_offset: 3 }
    }

    #[test]
    fn all_novel_rows_are_one_hot() {
        let teacher = Array2::<f64>::from_elem((2, 5), 0.3);
        let d = make_distilled_gt(&teacher, &[3, 4], &cfg(2.0)).unwrap();
        assert_eq!(d.soft().unwrap(), &array![[0.0, 0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0, 1.0]]);
    }

    #[test]
    fn no_novel_rows_are_softmax() {
        let teacher = array![[1.0_f64, 0.0, 2.0, -1.0, 0.5]];
        let d = make_distilled_gt(&teacher, &[NOT_NOVEL], &cfg(1.0)).unwrap();
        let expect = soften(teacher.row(0), 1.0).unwrap();
        for (got, want) in d.soft().unwrap().row(0).iter().zip(&expect) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn novel_label_range() {
        let teacher = Array2::<f64>::zeros((1, 5));
        assert!(matches!(
            make_distilled_gt(&teacher, &[1], &cfg(1.0)),
            Err(Error::NovelLabelOutOfRange { label: 1, lo: 3, hi: 5, .. })
        ));
        assert!(make_distilled_gt(&teacher, &[5], &cfg(1.0)).is_err());
    }

    #[test]
    fn kl_zero_at_match_and_nonnegative() {
        let teacher = array![[1.0_f64, 0.0, 2.0, -1.0, 0.5], [0.0, 0.1, 0.2, 0.3, 0.4]];
        let d = make_distilled_gt(&teacher, &[NOT_NOVEL, NOT_NOVEL], &cfg(3.0)).unwrap();
        let (loss, grad) = il_loss(&teacher, &d, 3.0).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
        let (loss, _) = il_loss(&array![[0.0, 5.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0, 1.0]], &d, 3.0).unwrap();
        assert!(loss > 0.0);
    }

    #[test]
    fn il_loss_rejects_closed_labels() {
        let l = LabelSet::<f64>::closed_set(vec![0]);
        assert!(il_loss(&Array2::zeros((1, 2)), &l, 1.0).is_err());
    }
}
