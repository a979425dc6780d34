use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::{iou, Detection};

/// Score descending, then prior index, then class.
pub(crate) fn rank(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.prior_index.cmp(&b.prior_index))
        .then(a.class_id.cmp(&b.class_id))
}

/// Greedy per-class non-maximum suppression.
///
/// Within each class, candidates are visited best-first and kept only if
/// their IoU with every box already kept is below `iou_threshold`. The
/// survivors of all classes are merged best-first and cut to `top_k`.
pub fn nms(candidates: Vec<Detection>, iou_threshold: f32, top_k: usize) -> Vec<Detection> {
    let mut by_class: BTreeMap<usize, Vec<Detection>> = BTreeMap::new();
    for d in candidates {
        by_class.entry(d.class_id).or_default().push(d);
    }
    let mut kept = Vec::new();
    for (_, mut group) in by_class {
        group.sort_by(rank);
        let mut class_kept: Vec<Detection> = Vec::new();
        for d in group {
            if class_kept
                .iter()
                .all(|k| iou(&k.bbox, &d.bbox) < iou_threshold)
            {
                class_kept.push(d);
            }
        }
        kept.extend(class_kept);
    }
    kept.sort_by(rank);
    kept.truncate(top_k);
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssd::CornerBox;

    fn det(class_id: usize, score: f32, prior_index: usize, b: [f32; 4]) -> Detection {
        Detection {
            class_id,
            score,
            bbox: CornerBox::new(b[0], b[1], b[2], b[3]),
            prior_index,
        }
    }

    #[test]
    fn duplicate_suppressed() {
        let out = nms(
            vec![
                det(1, 0.8, 1, [0.1, 0.1, 0.5, 0.5]),
                det(1, 0.9, 0, [0.1, 0.1, 0.5, 0.5]),
            ],
            0.45,
            100,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 0.9);
    }

    #[test]
    fn disjoint_all_survive() {
        let out = nms(
            vec![
                det(1, 0.6, 0, [0.0, 0.0, 0.2, 0.2]),
                det(1, 0.7, 1, [0.3, 0.3, 0.5, 0.5]),
                det(1, 0.8, 2, [0.6, 0.6, 0.9, 0.9]),
            ],
            0.45,
            100,
        );
        assert_eq!(out.len(), 3);
        assert!(out.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn classes_are_independent() {
        let out = nms(
            vec![
                det(1, 0.9, 0, [0.1, 0.1, 0.5, 0.5]),
                det(2, 0.8, 0, [0.1, 0.1, 0.5, 0.5]),
            ],
            0.45,
            100,
        );
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn tie_prefers_lower_prior() {
        let out = nms(
            vec![
                det(1, 0.9, 7, [0.1, 0.1, 0.5, 0.5]),
                det(1, 0.9, 3, [0.1, 0.1, 0.5, 0.5]),
            ],
            0.45,
            100,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].prior_index, 3);
    }

    #[test]
    fn truncates_to_top_k() {
        let cands = (0..10)
            .map(|i| {
                let x = i as f32 * 0.1;
                det(1, 0.5 + i as f32 * 0.01, i, [x, 0.0, x + 0.05, 0.05])
            })
            .collect();
        let out = nms(cands, 0.45, 3);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].prior_index, 9);
    }
}
