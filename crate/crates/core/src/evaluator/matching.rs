use serde::Serialize;

use crate::dataio::{Annotation, Detection};
use crate::geometry::{iou, overlap_over_detection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DetOutcome {
    TruePositive { annotation: usize, iou: f64 },
    FalsePositive,
    Ignored,
}

impl DetOutcome {
    pub fn is_tp(&self) -> bool {
        matches!(self, DetOutcome::TruePositive { .. })
    }

    pub fn is_fp(&self) -> bool {
        matches!(self, DetOutcome::FalsePositive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TpPair {
    pub detection: usize,
    pub annotation: usize,
    pub iou: f64,
}

/// Result of matching one frame. Indices refer to the slices passed to
/// [`match_frame`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatch {
    /// One entry per detection, in input order.
    pub outcomes: Vec<DetOutcome>,
    /// Non-ignore annotations left unmatched, ascending.
    pub false_negatives: Vec<usize>,
    /// Number of non-ignore annotations.
    pub positives: usize,
}

impl FrameMatch {
    pub fn tps(&self) -> Vec<TpPair> {
        self.outcomes
            .iter()
            .enumerate()
            .filter_map(|(i, o)| match *o {
                DetOutcome::TruePositive { annotation, iou } => Some(TpPair {
                    detection: i,
                    annotation,
                    iou,
                }),
                _ => None,
            })
            .collect()
    }

    pub fn fps(&self) -> Vec<usize> {
        self.indices(DetOutcome::is_fp)
    }

    pub fn ignored(&self) -> Vec<usize> {
        self.indices(|o| matches!(o, DetOutcome::Ignored))
    }

    pub fn fns(&self) -> &[usize] {
        &self.false_negatives
    }

    fn indices(&self, pred: impl Fn(&DetOutcome) -> bool) -> Vec<usize> {
        self.outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| pred(o))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Greedy one-to-one matching. Detections are visited by descending score
/// (ties keep input order); each takes the unmatched non-ignore annotation
/// of highest IoU, provided it reaches `threshold`, with equal IoUs going to
/// the lowest annotation id. A detection left over is ignored when it
/// overlaps some ignore region by at least `threshold` of its own area, and
/// a false positive otherwise. Ignore regions absorb any number of
/// detections.
pub fn match_frame(annotations: &[Annotation], detections: &[Detection], threshold: f64) -> FrameMatch {
    let mut positives: Vec<usize> = (0..annotations.len()).filter(|&i| !annotations[i].ignore).collect();
    positives.sort_by_key(|&i| annotations[i].id);
    let regions: Vec<usize> = (0..annotations.len()).filter(|&i| annotations[i].ignore).collect();

    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score));

    let mut taken = vec![false; annotations.len()];
    let mut outcomes = vec![DetOutcome::FalsePositive; detections.len()];
    for &d in &order {
        let det = &detections[d].bbox;
        let mut best: Option<(usize, f64)> = None;
        for &g in &positives {
            if taken[g] {
                continue;
            }
            let v = iou(det, &annotations[g].bbox);
            if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        outcomes[d] = match best {
            Some((g, v)) => {
                taken[g] = true;
                DetOutcome::TruePositive { annotation: g, iou: v }
            }
            None if regions
                .iter()
                .any(|&r| overlap_over_detection(det, &annotations[r].bbox) >= threshold) =>
            {
                DetOutcome::Ignored
            }
            None => DetOutcome::FalsePositive,
        };
    }
    let mut false_negatives: Vec<usize> = positives.iter().copied().filter(|&g| !taken[g]).collect();
    false_negatives.sort_unstable();
    FrameMatch {
        outcomes,
        false_negatives,
        positives: positives.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::FrameId;
    use crate::geometry::BBox;

    fn f() -> FrameId {
        FrameId::new("v", 0).unwrap()
    }

    fn gt(id: u64, x: f64) -> Annotation {
        Annotation::person(id, f(), BBox::new(x, 0.0, 41.0, 100.0).unwrap())
    }

    fn det(x: f64, score: f64) -> Detection {
        Detection::new(f(), BBox::new(x, 0.0, 41.0, 100.0).unwrap(), score).unwrap()
    }

    #[test]
    fn higher_score_wins_the_shared_gt() {
        let m = match_frame(&[gt(1, 0.0)], &[det(2.0, 0.3), det(1.0, 0.9)], 0.5);
        assert!(m.outcomes[1].is_tp());
        assert!(m.outcomes[0].is_fp());
        assert!(m.fns().is_empty());
    }

    #[test]
    fn equal_iou_goes_to_lowest_id() {
        // detection sits halfway between two annotations
        let anns = [gt(9, 0.0), gt(4, 10.0)];
        let m = match_frame(&anns, &[det(5.0, 1.0)], 0.5);
        assert_eq!(m.tps()[0].annotation, 1);
        assert_eq!(m.fns(), &[0]);
    }

    #[test]
    fn score_ties_keep_input_order() {
        let m = match_frame(&[gt(1, 0.0)], &[det(3.0, 0.5), det(0.0, 0.5)], 0.5);
        assert!(m.outcomes[0].is_tp());
        assert!(m.outcomes[1].is_fp());
    }

    #[test]
    fn ignore_regions_absorb_everything() {
        let mut region = Annotation::person(1, f(), BBox::new(0.0, 0.0, 300.0, 300.0).unwrap());
        region.ignore = true;
        let dets: Vec<_> = (0..5).map(|i| det(f64::from(i) * 20.0, 1.0)).collect();
        let m = match_frame(&[region], &dets, 0.5);
        assert_eq!(m.ignored().len(), 5);
        assert_eq!(m.positives, 0);
    }

    #[test]
    fn threshold_is_inclusive() {
        // shifting by a third of the height gives IoU exactly 0.5
        let a = Annotation::person(1, f(), BBox::new(0.0, 0.0, 10.0, 150.0).unwrap());
        let d = Detection::new(f(), BBox::new(0.0, 50.0, 10.0, 150.0).unwrap(), 1.0).unwrap();
        assert_eq!(iou(&a.bbox, &d.bbox), 0.5);
        assert!(match_frame(&[a], &[d], 0.5).outcomes[0].is_tp());
    }

    #[test]
    fn non_overlapping_is_fp_and_gt_is_fn() {
        let m = match_frame(&[gt(1, 0.0)], &[det(500.0, 1.0)], 0.5);
        assert_eq!(m.fps(), vec![0]);
        assert_eq!(m.fns(), &[0]);
    }
}
