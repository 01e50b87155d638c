//! Unknown-identification ranking metrics and segmentation IoU.
//!
//! Ranking metrics expect scores where larger means more likely unknown, and
//! treat unknown as the positive class.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::scalar::Real;

fn check_binary<R: Real>(scores: &[R], is_unknown: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != is_unknown.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            is_unknown.len()
        )));
    }
    if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteInput { row });
    }
    let pos = is_unknown.iter().filter(|&&u| u).count();
    let neg = is_unknown.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClassInput);
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score.
fn descending<R: Real>(scores: &[R]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    order
}

/// Tie blocks of a descending order: `(true positives, false positives)` per block.
fn tie_blocks<R: Real>(scores: &[R], is_unknown: &[bool], order: &[usize]) -> Vec<(R, usize, usize)> {
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut tp, mut fp) = (0, 0);
        while i < order.len() && scores[order[i]] == s {
            if is_unknown[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        blocks.push((s, tp, fp));
    }
    blocks
}

/// Probability that a random unknown point outranks a random known point,
/// ties counting one half.
pub fn auroc<R: Real>(scores: &[R], is_unknown: &[bool]) -> Result<R> {
    let (pos, neg) = check_binary(scores, is_unknown)?;
    let order = descending(scores);
    // Each block: its positives beat every negative in later blocks and tie
    // with the negatives inside the block.
    let mut negatives_below = neg;
    let mut twice_wins: u128 = 0;
    for (_, tp, fp) in tie_blocks(scores, is_unknown, &order) {
        negatives_below -= fp;
        twice_wins += (tp as u128) * (2 * negatives_below as u128 + fp as u128);
    }
    Ok(R::lit(twice_wins as f64) / R::lit(2.0 * pos as f64 * neg as f64))
}

/// One operating point of the precision-recall sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint<R> {
    pub threshold: R,
    pub precision: R,
    pub recall: R,
}

/// Precision and recall at every distinct score, from the highest threshold down.
pub fn pr_curve<R: Real>(scores: &[R], is_unknown: &[bool]) -> Result<Vec<PrPoint<R>>> {
    let (pos, _) = check_binary(scores, is_unknown)?;
    let order = descending(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    Ok(tie_blocks(scores, is_unknown, &order)
        .into_iter()
        .map(|(s, btp, bfp)| {
            tp += btp;
            fp += bfp;
            PrPoint {
                threshold: s,
                precision: R::lit(tp as f64) / R::lit((tp + fp) as f64),
                recall: R::lit(tp as f64) / R::lit(pos as f64),
            }
        })
        .collect())
}

/// Step-wise area under the precision-recall curve (average precision).
pub fn aupr<R: Real>(scores: &[R], is_unknown: &[bool]) -> Result<R> {
    let mut prev_recall = R::zero();
    let mut area = R::zero();
    for p in pr_curve(scores, is_unknown)? {
        area += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    Ok(area)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiouReport<R> {
    /// IoU per class present in prediction or ground truth.
    pub per_class: BTreeMap<i32, R>,
    pub mean: R,
}

/// Per-class IoU over `class_set`; classes absent from both arrays are skipped.
pub fn miou<R: Real>(pred: &[i32], gt: &[i32], class_set: &BTreeSet<i32>) -> Result<MiouReport<R>> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions for {} labels", pred.len(), gt.len())));
    }
    if class_set.is_empty() {
        return Err(Error::EmptyClassSet);
    }
    // (tp, fp, fn)
    let mut counts: BTreeMap<i32, (usize, usize, usize)> = BTreeMap::new();
    for (&p, &g) in pred.iter().zip(gt) {
        if p == g {
            if class_set.contains(&p) {
                counts.entry(p).or_default().0 += 1;
            }
        } else {
            if class_set.contains(&p) {
                counts.entry(p).or_default().1 += 1;
            }
            if class_set.contains(&g) {
                counts.entry(g).or_default().2 += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyClassSet);
    }
    let per_class: BTreeMap<i32, R> = counts
        .into_iter()
        .map(|(c, (tp, fp, fn_))| (c, R::lit(tp as f64) / R::lit((tp + fp + fn_) as f64)))
        .collect();
    let mean = per_class.values().copied().sum::<R>() / R::lit(per_class.len() as f64);
    Ok(MiouReport { per_class, mean })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiouSplit<R> {
    pub all: MiouReport<R>,
    pub old: MiouReport<R>,
    pub novel: MiouReport<R>,
}

/// mIoU over `old ∪ novel`, over `old` only and over `novel` only.
pub fn miou_split<R: Real>(
    pred: &[i32],
    gt: &[i32],
    old_classes: &BTreeSet<i32>,
    novel_classes: &BTreeSet<i32>,
) -> Result<MiouSplit<R>> {
    let all_classes: BTreeSet<i32> = old_classes.union(novel_classes).copied().collect();
    Ok(MiouSplit {
        all: miou(pred, gt, &all_classes)?,
        old: miou(pred, gt, old_classes)?,
        novel: miou(pred, gt, novel_classes)?,
    })
}
