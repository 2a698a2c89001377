//! Annotation quality procedures: pruning one set against another,
//! detector-guided re-alignment, annotator agreement and review flags.

use std::fmt::Write as _;

use serde::Serialize;

use crate::dataio::{Annotation, Dataset, Detection, DetectionSet, FrameId, Source};
use crate::error::{Error, Result};
use crate::geometry::{clip_visible, iou, normalize_aspect, AspectRatio, BBox};

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("IoU threshold {t} outside (0, 1)")))
    }
}

/// One-to-one greedy matching by descending IoU over pairs reaching
/// `threshold`. Equal IoUs are ordered by the unordered pair of keys, so
/// swapping the two sides yields the mirrored matching.
fn greedy_pairs(a: &[(u64, BBox)], b: &[(u64, BBox)], threshold: f64) -> Vec<(usize, usize, f64)> {
    let mut cands = Vec::new();
    for (i, (ka, ba)) in a.iter().enumerate() {
        for (j, (kb, bb)) in b.iter().enumerate() {
            let v = iou(ba, bb);
            if v >= threshold {
                cands.push((v, (*ka).min(*kb), (*ka).max(*kb), i, j));
            }
        }
    }
    cands.sort_by(|x, y| {
        y.0.total_cmp(&x.0)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
            .then(x.3.cmp(&y.3))
            .then(x.4.cmp(&y.4))
    });
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut out = Vec::new();
    for (v, _, _, i, j) in cands {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push((i, j, v));
        }
    }
    out
}

fn keyed<'a>(anns: impl Iterator<Item = &'a Annotation>) -> (Vec<&'a Annotation>, Vec<(u64, BBox)>) {
    let v: Vec<&Annotation> = anns.collect();
    let k = v.iter().map(|a| (a.id, a.bbox)).collect();
    (v, k)
}

/// Builds the pruned set: originals matched by a new annotation are kept
/// as they are, unmatched originals become ignore regions, and new
/// annotations without an original counterpart are appended with fresh ids
/// and source `pruned`. Boxes and ignore regions are matched separately.
pub fn prune(original: &Dataset, new: &Dataset, iou_threshold: f64) -> Result<Dataset> {
    check_threshold(iou_threshold)?;
    original.check_same_frames(new)?;
    let mut out: Vec<Annotation> = Vec::with_capacity(original.annotations().len());
    let mut next_id = original.next_id();
    for f in original.frames() {
        let (orig, new_anns) = (original.frame_annotations(f), new.frame_annotations(f));
        for ignore in [false, true] {
            let (oa, ok) = keyed(orig.iter().filter(|a| a.ignore == ignore));
            let (na, nk) = keyed(new_anns.iter().filter(|a| a.ignore == ignore));
            let pairs = greedy_pairs(&ok, &nk, iou_threshold);
            let mut o_hit = vec![false; oa.len()];
            let mut n_hit = vec![false; na.len()];
            for &(i, j, _) in &pairs {
                o_hit[i] = true;
                n_hit[j] = true;
            }
            for (a, hit) in oa.iter().zip(&o_hit) {
                let mut a = (*a).clone();
                if !hit {
                    a.ignore = true;
                }
                out.push(a);
            }
            for (a, hit) in na.iter().zip(&n_hit) {
                if !hit {
                    let mut a = (*a).clone();
                    a.id = next_id;
                    a.source = Source::Pruned;
                    next_id += 1;
                    out.push(a);
                }
            }
        }
    }
    original.with_annotations(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignConfig {
    pub iou_min: f64,
    pub score_min: f64,
    pub aspect: AspectRatio,
    pub one_to_one: bool,
    /// Pick pairs by detection score instead of IoU (for ablations).
    pub score_greedy: bool,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            iou_min: 0.5,
            score_min: f64::NEG_INFINITY,
            aspect: AspectRatio::default(),
            one_to_one: true,
            score_greedy: false,
        }
    }
}

/// Maps `v` by the affine transform taking `from` onto `to`.
fn transfer(v: &BBox, from: &BBox, to: &BBox) -> Option<BBox> {
    let sx = to.w() / from.w();
    let sy = to.h() / from.h();
    let mapped = BBox::new(
        to.x() + (v.x() - from.x()) * sx,
        to.y() + (v.y() - from.y()) * sy,
        v.w() * sx,
        v.h() * sy,
    )
    .ok()?;
    clip_visible(to, &mapped).0
}

fn align_frame(anns: &[Annotation], dets: &[Detection], cfg: &AlignConfig) -> Vec<Annotation> {
    let cands: Vec<&Detection> = dets.iter().filter(|d| d.score >= cfg.score_min).collect();
    let mut pairs = Vec::new();
    for (i, a) in anns.iter().enumerate().filter(|(_, a)| !a.ignore) {
        for (j, d) in cands.iter().enumerate() {
            let v = iou(&a.bbox, &d.bbox);
            if v >= cfg.iou_min {
                pairs.push((i, j, v));
            }
        }
    }
    let key = |p: &(usize, usize, f64)| if cfg.score_greedy { cands[p.1].score } else { p.2 };
    pairs.sort_by(|x, y| {
        key(y)
            .total_cmp(&key(x))
            .then(y.2.total_cmp(&x.2))
            .then(anns[x.0].id.cmp(&anns[y.0].id))
            .then(x.1.cmp(&y.1))
    });
    let mut used_a = vec![false; anns.len()];
    let mut used_d = vec![false; cands.len()];
    let mut out = anns.to_vec();
    for (i, j, _) in pairs {
        if used_a[i] || (cfg.one_to_one && used_d[j]) {
            continue;
        }
        used_a[i] = true;
        used_d[j] = true;
        let replacement = normalize_aspect(&cands[j].bbox, cfg.aspect);
        let a = &mut out[i];
        a.visible = a.visible.and_then(|v| transfer(&v, &a.bbox, &replacement));
        a.bbox = replacement;
        a.source = Source::Aligned;
    }
    out
}

/// Snaps annotations onto nearby detections. Matched annotations take the
/// aspect-normalized detection box (visible boxes follow the same affine
/// map); everything else, ignore regions included, passes through.
pub fn align(ds: &Dataset, dets: &DetectionSet, cfg: &AlignConfig) -> Result<Dataset> {
    check_threshold(cfg.iou_min)?;
    dets.check_within(ds)?;
    let mut out = Vec::with_capacity(ds.annotations().len());
    for (f, anns) in ds.frame_groups() {
        out.extend(align_frame(anns, dets.frame(f), cfg));
    }
    ds.with_annotations(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffPair {
    pub frame: FrameId,
    pub a: u64,
    pub b: u64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffReport {
    pub matched: Vec<DiffPair>,
    pub a_only: Vec<Annotation>,
    pub b_only: Vec<Annotation>,
    /// `2 |matched| / (|A| + |B|)` over non-ignore annotations; 1 when both
    /// sets are empty.
    pub agreement: f64,
}

impl DiffReport {
    pub fn mirrored(&self) -> DiffReport {
        DiffReport {
            matched: self
                .matched
                .iter()
                .map(|p| DiffPair {
                    frame: p.frame.clone(),
                    a: p.b,
                    b: p.a,
                    iou: p.iou,
                })
                .collect(),
            a_only: self.b_only.clone(),
            b_only: self.a_only.clone(),
            agreement: self.agreement,
        }
    }

    pub fn block(&self) -> String {
        format!(
            "[diff]\nmatched = {}\na_only = {}\nb_only = {}\nagreement = {}\n",
            self.matched.len(),
            self.a_only.len(),
            self.b_only.len(),
            self.agreement
        )
    }
}

fn diff_frame(a: &[Annotation], b: &[Annotation], threshold: f64) -> (Vec<(usize, usize, f64)>, Vec<usize>, Vec<usize>) {
    let ka: Vec<(u64, BBox)> = a.iter().map(|x| (x.id, x.bbox)).collect();
    let kb: Vec<(u64, BBox)> = b.iter().map(|x| (x.id, x.bbox)).collect();
    let pairs = greedy_pairs(&ka, &kb, threshold);
    let a_only = (0..a.len()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    let b_only = (0..b.len()).filter(|j| !pairs.iter().any(|p| p.1 == *j)).collect();
    (pairs, a_only, b_only)
}

/// Agreement between two annotations of the same frames (two annotators,
/// or two versions). Only non-ignore annotations take part.
pub fn diff(a: &Dataset, b: &Dataset, iou_threshold: f64) -> Result<DiffReport> {
    check_threshold(iou_threshold)?;
    a.check_same_frames(b)?;
    let mut report = DiffReport {
        matched: Vec::new(),
        a_only: Vec::new(),
        b_only: Vec::new(),
        agreement: 1.0,
    };
    let (mut na, mut nb) = (0usize, 0usize);
    for f in a.frames() {
        let fa: Vec<Annotation> = a.frame_annotations(f).iter().filter(|x| !x.ignore).cloned().collect();
        let fb: Vec<Annotation> = b.frame_annotations(f).iter().filter(|x| !x.ignore).cloned().collect();
        na += fa.len();
        nb += fb.len();
        let (pairs, a_only, b_only) = diff_frame(&fa, &fb, iou_threshold);
        let mut pairs = pairs;
        pairs.sort_by_key(|p| fa[p.0].id);
        for (i, j, v) in pairs {
            report.matched.push(DiffPair {
                frame: f.clone(),
                a: fa[i].id,
                b: fb[j].id,
                iou: v,
            });
        }
        report.a_only.extend(a_only.into_iter().map(|i| fa[i].clone()));
        report.b_only.extend(b_only.into_iter().map(|j| fb[j].clone()));
    }
    if na + nb > 0 {
        report.agreement = 2.0 * report.matched.len() as f64 / (na + nb) as f64;
    }
    Ok(report)
}

/// Diff restricted to one frame.
pub fn diff_frame_annotations(a: &[Annotation], b: &[Annotation], iou_threshold: f64) -> Result<DiffReport> {
    check_threshold(iou_threshold)?;
    let fa: Vec<Annotation> = a.iter().filter(|x| !x.ignore).cloned().collect();
    let fb: Vec<Annotation> = b.iter().filter(|x| !x.ignore).cloned().collect();
    let (mut pairs, a_only, b_only) = diff_frame(&fa, &fb, iou_threshold);
    pairs.sort_by_key(|p| fa[p.0].id);
    let n = fa.len() + fb.len();
    Ok(DiffReport {
        agreement: if n == 0 { 1.0 } else { 2.0 * pairs.len() as f64 / n as f64 },
        matched: pairs
            .into_iter()
            .map(|(i, j, v)| DiffPair {
                frame: fa[i].frame.clone(),
                a: fa[i].id,
                b: fb[j].id,
                iou: v,
            })
            .collect(),
        a_only: a_only.into_iter().map(|i| fa[i].clone()).collect(),
        b_only: b_only.into_iter().map(|j| fb[j].clone()).collect(),
    })
}

/// An old annotation that the new set does not account for, left for a
/// human to judge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReviewItem {
    pub frame: FrameId,
    pub annotation: Annotation,
    pub max_iou_to_new: f64,
    pub tags: Vec<String>,
}

/// Old non-ignore annotations with no counterpart among the new non-ignore
/// ones. Nothing is added automatically.
pub fn consolidate_flags(new: &Dataset, old: &Dataset, iou_threshold: f64) -> Result<Vec<ReviewItem>> {
    check_threshold(iou_threshold)?;
    new.check_same_frames(old)?;
    let mut items = Vec::new();
    for f in old.frames() {
        let fo: Vec<Annotation> = old.frame_annotations(f).iter().filter(|x| !x.ignore).cloned().collect();
        let fnew: Vec<Annotation> = new.frame_annotations(f).iter().filter(|x| !x.ignore).cloned().collect();
        let (_, old_only, _) = diff_frame(&fo, &fnew, iou_threshold);
        for i in old_only {
            let max_iou_to_new = fnew.iter().map(|n| iou(&fo[i].bbox, &n.bbox)).fold(0.0, f64::max);
            items.push(ReviewItem {
                frame: f.clone(),
                annotation: fo[i].clone(),
                max_iou_to_new,
                tags: Vec::new(),
            });
        }
    }
    Ok(items)
}

pub fn review_csv(items: &[ReviewItem]) -> String {
    let mut s = String::from("video/frame,x,y,w,h,max_iou_to_new\n");
    for it in items {
        let b = &it.annotation.bbox;
        let _ = writeln!(s, "{},{},{},{},{},{}", it.frame, b.x(), b.y(), b.w(), b.h(), it.max_iou_to_new);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Label;

    fn f(i: u32) -> FrameId {
        FrameId::new("v", i).unwrap()
    }

    fn person(id: u64, frame: u32, x: f64) -> Annotation {
        Annotation::person(id, f(frame), BBox::new(x, 10.0, 41.0, 100.0).unwrap())
    }

    fn ds(anns: Vec<Annotation>) -> Dataset {
        Dataset::new([f(0), f(1)], anns, vec!["m".into()]).unwrap()
    }

    #[test]
    fn prune_rules() {
        let orig = ds(vec![person(1, 0, 0.0), person(2, 0, 200.0), person(3, 1, 0.0)]);
        // shifted by 5 px: IoU well above 0.5, geometry must stay original
        let new = ds(vec![person(10, 0, 5.0), person(11, 1, 0.0), person(12, 1, 300.0)]);
        let out = prune(&orig, &new, 0.5).unwrap();
        let a = out.annotations();
        assert_eq!(a.len(), 4);
        assert_eq!(a[0], person(1, 0, 0.0));
        assert!(a[1].ignore && a[1].id == 2);
        assert_eq!(a[2], person(3, 1, 0.0));
        assert_eq!((a[3].id, a[3].source, a[3].bbox.x()), (4, Source::Pruned, 300.0));
        assert_eq!(prune(&orig, &orig, 0.5).unwrap(), orig);
    }

    #[test]
    fn prune_matches_ignore_regions_among_themselves() {
        let mut crowd = person(1, 0, 0.0);
        crowd.ignore = true;
        crowd.label = Label::People;
        let orig = ds(vec![crowd.clone()]);
        let new = ds(vec![person(5, 0, 0.0)]);
        let out = prune(&orig, &new, 0.5).unwrap();
        // the crowd stays, the person is new
        assert_eq!(out.annotations().len(), 2);
        assert_eq!(out.annotations()[0], crowd);
        assert_eq!(out.annotations()[1].source, Source::Pruned);
    }

    #[test]
    fn prune_needs_same_frames() {
        let other = Dataset::new([f(0)], vec![], vec![]).unwrap();
        assert!(matches!(prune(&ds(vec![]), &other, 0.5), Err(Error::FrameMismatch(_))));
    }

    #[test]
    fn align_replaces_and_transfers_visible() {
        let mut a = person(1, 0, 0.0);
        a.visible = Some(BBox::new(0.0, 10.0, 41.0, 50.0).unwrap());
        let mut crowd = person(2, 0, 0.0);
        crowd.ignore = true;
        let data = ds(vec![a, crowd.clone()]);
        let det = BBox::new(4.0, 14.0, 41.0, 100.0).unwrap();
        let dets: DetectionSet = [Detection::new(f(0), det, 0.7).unwrap()].into_iter().collect();
        let out = align(&data, &dets, &AlignConfig::default()).unwrap();
        let got = &out.annotations()[0];
        assert_eq!(got.bbox, det);
        assert_eq!(got.source, Source::Aligned);
        assert_eq!(got.visible, Some(BBox::new(4.0, 14.0, 41.0, 50.0).unwrap()));
        assert_eq!(out.annotations()[1], crowd);

        let strict = AlignConfig {
            score_min: 0.8,
            ..AlignConfig::default()
        };
        assert_eq!(align(&data, &dets, &strict).unwrap(), data);
    }

    #[test]
    fn align_one_candidate_two_annotations() {
        let data = ds(vec![person(1, 0, 0.0), person(2, 0, 12.0)]);
        let det = BBox::new(10.0, 10.0, 41.0, 100.0).unwrap();
        let dets: DetectionSet = [Detection::new(f(0), det, 1.0).unwrap()].into_iter().collect();
        let out = align(&data, &dets, &AlignConfig::default()).unwrap();
        assert_eq!(out.annotations()[0], person(1, 0, 0.0));
        assert_eq!(out.annotations()[1].bbox, det);

        let many = AlignConfig {
            one_to_one: false,
            ..AlignConfig::default()
        };
        let out = align(&data, &dets, &many).unwrap();
        assert!(out.annotations().iter().all(|a| a.bbox == det));
    }

    #[test]
    fn diff_cases() {
        let a = ds(vec![person(1, 0, 0.0), person(2, 0, 200.0), person(3, 1, 0.0)]);
        let same = diff(&a, &a, 0.5).unwrap();
        assert_eq!(same.agreement, 1.0);
        assert!(same.a_only.is_empty() && same.b_only.is_empty());

        let b = ds(vec![person(7, 0, 2.0), person(8, 1, 1.0)]);
        let r = diff(&a, &b, 0.5).unwrap();
        assert_eq!(r.a_only.len(), 1);
        assert_eq!(r.a_only[0].id, 2);
        assert_eq!(r.agreement, 4.0 / 5.0);
        assert_eq!(diff(&b, &a, 0.5).unwrap(), r.mirrored());

        let far = ds(vec![person(9, 0, 500.0)]);
        assert_eq!(diff(&a, &far, 0.5).unwrap().agreement, 0.0);
        assert_eq!(diff(&ds(vec![]), &ds(vec![]), 0.5).unwrap().agreement, 1.0);
    }

    #[test]
    fn review_items() {
        let new = ds(vec![person(1, 0, 0.0)]);
        assert!(consolidate_flags(&new, &new, 0.5).unwrap().is_empty());

        // IoU 0.2 with the new box: 41-wide boxes overlapping by 41/3 px
        let dx = 41.0 - 41.0 / 3.0;
        let old = ds(vec![person(5, 0, dx)]);
        let items = consolidate_flags(&new, &old, 0.5).unwrap();
        assert_eq!(items.len(), 1);
        assert!((items[0].max_iou_to_new - 0.2).abs() < 1e-12);
        assert!(review_csv(&items).starts_with("video/frame,x,y,w,h,max_iou_to_new\nv/0,"));

        let mut crowd = person(6, 1, 0.0);
        crowd.ignore = true;
        let old = ds(vec![person(5, 0, 0.0), crowd]);
        assert!(consolidate_flags(&new, &old, 0.5).unwrap().is_empty());
    }
}
