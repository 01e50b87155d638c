//! Pseudo ground truth: closed-set labels with detected unknown objects
//! overwritten by the unknown class id `C`.

use crate::error::{Error, Result};
use crate::gbd::UnknownMask;
use crate::pointset::{LabelSet, UNKNOWN_LABEL};
use crate::scalar::Real;

/// Labels every point of every mask object with `n_classes`; all other points,
/// including rejected region points, keep their closed-set label. Closed-set
/// labels may use `-1` for ignored points.
pub fn make_pseudo_gt<R: Real>(
    closed_labels: &[i32],
    mask: &UnknownMask,
    n_classes: usize,
) -> Result<LabelSet<R>> {
    let n = closed_labels.len();
    for (row, &l) in closed_labels.iter().enumerate() {
        if l < UNKNOWN_LABEL || l >= n_classes as i32 {
            return Err(Error::ClassLabelOutOfRange {
                row,
                label: l as i64,
                classes: n_classes,
            });
        }
    }
    let mut out = closed_labels.to_vec();
    for &i in mask.objects.iter().flatten() {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        out[i] = n_classes as i32;
    }
    if let Some(&i) = mask.rejected.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    Ok(LabelSet::pseudo(out))
}
