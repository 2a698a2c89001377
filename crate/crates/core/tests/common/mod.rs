#![allow(dead_code)]

use pedbench::dataio::{Annotation, Dataset, Detection, DetectionSet, FrameId, Label, Source};
use pedbench::evaluator::SubsetSpec;
use pedbench::geometry::{iou, normalize_aspect, overlap_over_detection, BBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Aspect-0.41 persons with detections translated by up to 10 % of the box.
pub fn jittered(seed: u64, frames: u32) -> (Dataset, DetectionSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anns = Vec::new();
    let mut dets = DetectionSet::new();
    let mut id = 0;
    for fi in 0..frames {
        let f = FrameId::new("j", fi).unwrap();
        for k in 0..rng.random_range(1..5) {
            let h: f64 = rng.random_range(50.0..200.0);
            let b = BBox::new(k as f64 * 150.0 + rng.random_range(0.0..20.0), rng.random_range(0.0..100.0), 0.41 * h, h).unwrap();
            anns.push(Annotation::person(id, f.clone(), b));
            id += 1;
            let d = b
                .translated(rng.random_range(-0.1..0.1) * b.w(), rng.random_range(-0.1..0.1) * b.h())
                .unwrap();
            dets.push(Detection::new(f.clone(), d, rng.random_range(0.0..1.0)).unwrap());
        }
    }
    let universe = (0..frames).map(|i| FrameId::new("j", i).unwrap());
    (Dataset::new(universe, anns, vec![]).unwrap(), dets)
}

/// Cluttered random frames on a coarse integer grid so that equal scores,
/// equal IoUs and boxes sitting exactly on the threshold all happen.
pub fn random_scene(seed: u64, frames: u32) -> (Dataset, DetectionSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anns = Vec::new();
    let mut dets = DetectionSet::new();
    let mut ids: Vec<u64> = (0..frames as u64 * 8).collect();
    // shuffle ids so that id order and insertion order disagree
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let mut next = 0;
    let labels = [Label::Person, Label::Person, Label::Person, Label::People, Label::PersonUncertain];
    for f in 0..frames {
        let frame = FrameId::new("rand", f).unwrap();
        let mut gts = Vec::new();
        for _ in 0..rng.random_range(0..6) {
            let h = f64::from(rng.random_range(8..30u32)) * 5.0;
            let w = (h * 0.41).round().max(1.0);
            let b = BBox::new(
                f64::from(rng.random_range(0..40u32)) * 5.0,
                f64::from(rng.random_range(0..20u32)) * 5.0,
                w,
                h,
            )
            .unwrap();
            let visible = if rng.random_bool(0.2) {
                Some(BBox::new(b.x(), b.y(), b.w(), (b.h() * 0.5).max(1.0)).unwrap())
            } else {
                None
            };
            anns.push(Annotation {
                id: ids[next],
                frame: frame.clone(),
                label: labels[rng.random_range(0..labels.len())],
                bbox: b,
                visible,
                ignore: rng.random_bool(0.15),
                source: Source::Original,
            });
            next += 1;
            gts.push(b);
        }
        for _ in 0..rng.random_range(0..10) {
            let score = f64::from(rng.random_range(0..8u32)) / 8.0;
            let b = if !gts.is_empty() && rng.random_bool(0.6) {
                let g = gts[rng.random_range(0..gts.len())];
                BBox::new(
                    g.x() + f64::from(rng.random_range(-3..=3i32)) * 4.0,
                    g.y() + f64::from(rng.random_range(-3..=3i32)) * 8.0,
                    g.w(),
                    g.h(),
                )
                .unwrap()
            } else {
                let h = f64::from(rng.random_range(8..30u32)) * 5.0;
                BBox::new(
                    f64::from(rng.random_range(0..40u32)) * 5.0,
                    f64::from(rng.random_range(0..20u32)) * 5.0,
                    (h * 0.41).round(),
                    h,
                )
                .unwrap()
            };
            dets.push(Detection::new(frame.clone(), b, score).unwrap());
        }
    }
    let universe: Vec<FrameId> = (0..frames).map(|f| FrameId::new("rand", f).unwrap()).collect();
    (Dataset::new(universe, anns, vec![]).unwrap(), dets)
}

#[derive(Debug, Default, PartialEq)]
pub struct OracleMatch {
    /// (detection, annotation) pairs, by detection index
    pub tps: Vec<(usize, usize)>,
    pub fps: Vec<usize>,
    pub fns: Vec<usize>,
    pub ignored: Vec<usize>,
}

/// Straightforward re-statement of the matching rules: repeatedly take the
/// highest-scoring unprocessed detection (first in input order on ties) and
/// scan every annotation for the best candidate.
pub fn oracle_match(anns: &[Annotation], dets: &[Detection], thr: f64) -> OracleMatch {
    let mut done = vec![false; dets.len()];
    let mut used = vec![false; anns.len()];
    let mut out = OracleMatch::default();
    for _ in 0..dets.len() {
        let mut pick: Option<usize> = None;
        for (i, d) in dets.iter().enumerate() {
            if !done[i] && pick.is_none_or(|p| d.score > dets[p].score) {
                pick = Some(i);
            }
        }
        let i = pick.unwrap();
        done[i] = true;
        let mut best: Option<(usize, f64)> = None;
        for (g, a) in anns.iter().enumerate() {
            if a.ignore || used[g] {
                continue;
            }
            let v = iou(&dets[i].bbox, &a.bbox);
            if v < thr {
                continue;
            }
            let better = match best {
                None => true,
                Some((b, bv)) => v > bv || (v == bv && a.id < anns[b].id),
            };
            if better {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
            out.tps.push((i, g));
        } else if anns
            .iter()
            .any(|a| a.ignore && overlap_over_detection(&dets[i].bbox, &a.bbox) >= thr)
        {
            out.ignored.push(i);
        } else {
            out.fps.push(i);
        }
    }
    out.tps.sort();
    out.fps.sort();
    out.ignored.sort();
    out.fns = (0..anns.len()).filter(|&g| !anns[g].ignore && !used[g]).collect();
    out
}

pub fn oracle_frame(anns: &[Annotation], dets: &[Detection], thr: f64) -> (usize, usize) {
    let m = oracle_match(anns, dets, thr);
    (m.tps.len(), m.fps.len())
}

/// One random frame within the given bounds: coarse integer grid,
/// duplicated scores, a mix of ignore regions and positives.
pub fn random_frame(rng: &mut ChaCha8Rng, max_anns: usize, max_dets: usize) -> (Vec<Annotation>, Vec<Detection>) {
    let frame = FrameId::new("f", 0).unwrap();
    let mut ids: Vec<u64> = (0..max_anns as u64).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let mut anns = Vec::new();
    for k in 0..rng.random_range(0..=max_anns) {
        let b = BBox::new(
            f64::from(rng.random_range(0..12u32)) * 4.0,
            f64::from(rng.random_range(0..12u32)) * 4.0,
            f64::from(rng.random_range(2..10u32)) * 4.0,
            f64::from(rng.random_range(4..16u32)) * 4.0,
        )
        .unwrap();
        let mut a = Annotation::person(ids[k], frame.clone(), b);
        a.ignore = rng.random_bool(0.25);
        anns.push(a);
    }
    let mut dets = Vec::new();
    for _ in 0..rng.random_range(0..=max_dets) {
        let b = if !anns.is_empty() && rng.random_bool(0.7) {
            let g = anns[rng.random_range(0..anns.len())].bbox;
            BBox::new(
                g.x() + f64::from(rng.random_range(-2..=2i32)) * 4.0,
                g.y() + f64::from(rng.random_range(-2..=2i32)) * 4.0,
                g.w(),
                g.h(),
            )
            .unwrap()
        } else {
            BBox::new(
                f64::from(rng.random_range(0..12u32)) * 4.0,
                f64::from(rng.random_range(0..12u32)) * 4.0,
                f64::from(rng.random_range(2..10u32)) * 4.0,
                f64::from(rng.random_range(4..16u32)) * 4.0,
            )
            .unwrap()
        };
        let score = f64::from(rng.random_range(0..5u32)) / 4.0;
        dets.push(Detection::new(frame.clone(), b, score).unwrap());
    }
    (anns, dets)
}

fn prepared(ds: &Dataset, dets: &DetectionSet, spec: &SubsetSpec) -> Vec<(Vec<Annotation>, Vec<Detection>)> {
    ds.frames()
        .iter()
        .map(|f| {
            let anns = ds
                .frame_annotations(f)
                .iter()
                .map(|a| {
                    let mut a = a.clone();
                    a.ignore = a.ignore || !spec.includes(&a);
                    if spec.aspect_normalize && !a.ignore {
                        a.bbox = normalize_aspect(&a.bbox, spec.aspect);
                    }
                    a
                })
                .collect();
            let d = dets
                .frame(f)
                .iter()
                .map(|d| {
                    let mut d = d.clone();
                    if spec.aspect_normalize {
                        d.bbox = normalize_aspect(&d.bbox, spec.aspect);
                    }
                    d
                })
                .collect();
            (anns, d)
        })
        .collect()
}

/// Brute force curve: re-runs the oracle matcher from scratch for every
/// distinct score. Returns (threshold, fppi, miss_rate), without the anchor.
pub fn oracle_curve(ds: &Dataset, dets: &DetectionSet, spec: &SubsetSpec) -> Vec<(f64, f64, f64)> {
    let frames = prepared(ds, dets, spec);
    let positives: usize = frames
        .iter()
        .map(|(a, _)| a.iter().filter(|a| !a.ignore).count())
        .sum();
    let mut scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    scores.dedup();
    scores
        .into_iter()
        .map(|s| {
            let (mut tp, mut fp) = (0, 0);
            for (anns, d) in &frames {
                let kept: Vec<Detection> = d.iter().filter(|d| d.score >= s).cloned().collect();
                let (t, f) = oracle_frame(anns, &kept, spec.iou_threshold);
                tp += t;
                fp += f;
            }
            (
                s,
                fp as f64 / frames.len() as f64,
                (positives - tp) as f64 / positives as f64,
            )
        })
        .collect()
}

/// Reference log-average: reference points written out literally.
pub fn oracle_lamr(points: &[(f64, f64)], refs: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &r in refs {
        let mut m = 1.0;
        for &(fppi, miss) in points {
            if fppi <= r {
                m = miss;
            }
        }
        acc += f64::max(m, 1e-10).ln();
    }
    (acc / refs.len() as f64).exp()
}

pub const MR2_REFS: [f64; 9] = [
    0.01, 0.0177827941, 0.0316227766, 0.0562341325, 0.1, 0.177827941, 0.316227766, 0.562341325, 1.0,
];

/// Re-blur sharpness measure written out with explicit matrices: rows are
/// `i`, columns `j`, the low-pass filter is a 1x9 (resp. 9x1) mean with
/// edge replication, and the directional scores are compared at the end.
pub fn reference_blur(img: &[Vec<f64>]) -> f64 {
    let m = img.len();
    let n = img[0].len();
    let px = |i: isize, j: isize| img[i.clamp(0, m as isize - 1) as usize][j.clamp(0, n as isize - 1) as usize];
    let mut b_ver = vec![vec![0.0; n]; m];
    let mut b_hor = vec![vec![0.0; n]; m];
    for i in 0..m as isize {
        for j in 0..n as isize {
            let mut v = 0.0;
            let mut h = 0.0;
            for k in -4..=4 {
                v += px(i + k, j);
                h += px(i, j + k);
            }
            b_ver[i as usize][j as usize] = v / 9.0;
            b_hor[i as usize][j as usize] = h / 9.0;
        }
    }
    let (mut s_f_ver, mut s_v_ver, mut s_f_hor, mut s_v_hor) = (0.0, 0.0, 0.0, 0.0);
    for i in 1..m {
        for j in 0..n {
            let d_f = (img[i][j] - img[i - 1][j]).abs();
            let d_b = (b_ver[i][j] - b_ver[i - 1][j]).abs();
            s_f_ver += d_f;
            s_v_ver += f64::max(0.0, d_f - d_b);
        }
    }
    for i in 0..m {
        for j in 1..n {
            let d_f = (img[i][j] - img[i][j - 1]).abs();
            let d_b = (b_hor[i][j] - b_hor[i][j - 1]).abs();
            s_f_hor += d_f;
            s_v_hor += f64::max(0.0, d_f - d_b);
        }
    }
    let mut scores = Vec::new();
    if s_f_ver > 0.0 {
        scores.push((s_f_ver - s_v_ver) / s_f_ver);
    }
    if s_f_hor > 0.0 {
        scores.push((s_f_hor - s_v_hor) / s_f_hor);
    }
    if scores.is_empty() {
        return 1.0;
    }
    scores.into_iter().fold(0.0, f64::max).clamp(0.0, 1.0)
}

/// Separable Gaussian smoothing, kernel radius ceil(3 sigma), replicated
/// borders. `sigma == 0` returns the input.
pub fn gaussian(img: &[Vec<f64>], sigma: f64) -> Vec<Vec<f64>> {
    if sigma == 0.0 {
        return img.to_vec();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    let m = img.len() as isize;
    let n = img[0].len() as isize;
    let pass = |src: &Vec<Vec<f64>>, horizontal: bool| {
        let mut out = vec![vec![0.0; n as usize]; m as usize];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for (t, w) in (-r..=r).zip(&k) {
                    let (ii, jj) = if horizontal { (i, (j + t).clamp(0, n - 1)) } else { ((i + t).clamp(0, m - 1), j) };
                    acc += w * src[ii as usize][jj as usize];
                }
                out[i as usize][j as usize] = acc.clamp(0.0, 1.0);
            }
        }
        out
    };
    pass(&pass(&img.to_vec(), true), false)
}

pub fn to_rows(p: &pedbench::oracle::Patch) -> Vec<Vec<f64>> {
    (0..p.height()).map(|y| (0..p.width()).map(|x| p.get(x, y)).collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> pedbench::oracle::Patch {
    pedbench::oracle::Patch::new(rows[0].len(), rows.len(), rows.concat()).unwrap()
}

pub fn camera() -> pedbench::oracle::Patch {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/camera_128.pgm");
    pedbench::oracle::load_gray(&path).unwrap()
}
