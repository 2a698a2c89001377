//! Matching and metrics: subset filtering, greedy matching with ignore
//! regions, FPPI/miss-rate curves and log-average miss rates.

mod curve;
mod matching;
mod subset;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataio::{Annotation, Dataset, Detection, DetectionSet, FrameId};
use crate::error::{Error, Result};
use crate::geometry::normalize_aspect;

pub use curve::{
    curve_csv, fppi_at_recall, log_average_miss_rate, log_average_miss_rate_with_step,
    reference_points, Curve, CurvePoint, LAMR_EPSILON, LAMR_STEP_DECADES,
};
pub use matching::{match_frame, DetOutcome, FrameMatch, TpPair};
pub use subset::{apply_subset, SubsetSpec};

/// Which annotation set an evaluation ran against: the original ground
/// truth (`O`) or the re-annotated one (`N`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    O,
    N,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::O => "O",
            Variant::N => "N",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "O" | "o" => Ok(Variant::O),
            "N" | "n" => Ok(Variant::N),
            _ => Err(Error::Config(format!("annotation variant must be O or N, got {s:?}"))),
        }
    }
}

/// One frame after subset filtering and aspect normalization, with its
/// match against every detection (lowest score included).
#[derive(Debug, Clone)]
pub struct FrameEval {
    pub frame: FrameId,
    pub annotations: Vec<Annotation>,
    /// Detections as matched (after the optional height prefilter and
    /// aspect normalization).
    pub detections: Vec<Detection>,
    /// The same detections as supplied, index for index.
    pub raw_detections: Vec<Detection>,
    pub matched: FrameMatch,
}

/// Full matching over a dataset. Greedy matching visits detections in
/// descending score order, so the matching restricted to scores `>= s` is a
/// prefix of this one: every curve point can be read off a single pass.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub frames: Vec<FrameEval>,
    pub positives: usize,
}

fn prepare_frame(
    frame: &FrameId,
    anns: &[Annotation],
    dets: &[Detection],
    spec: &SubsetSpec,
) -> FrameEval {
    let mut annotations: Vec<Annotation> = anns.iter().map(|a| spec.mark(a)).collect();
    let raw_detections: Vec<Detection> = dets
        .iter()
        .filter(|d| spec.keeps_detection(d))
        .cloned()
        .collect();
    let mut detections = raw_detections.clone();
    if spec.aspect_normalize {
        for a in annotations.iter_mut().filter(|a| !a.ignore) {
            a.bbox = normalize_aspect(&a.bbox, spec.aspect);
        }
        for d in &mut detections {
            d.bbox = normalize_aspect(&d.bbox, spec.aspect);
        }
    }
    let matched = match_frame(&annotations, &detections, spec.iou_threshold);
    FrameEval {
        frame: frame.clone(),
        annotations,
        detections,
        raw_detections,
        matched,
    }
}

impl Evaluation {
    pub fn run(ds: &Dataset, dets: &DetectionSet, spec: &SubsetSpec) -> Result<Self> {
        spec.validate()?;
        dets.check_within(ds)?;
        let frames: Vec<FrameEval> = ds
            .frame_groups()
            .par_iter()
            .map(|(frame, anns)| prepare_frame(frame, anns, dets.frame(frame), spec))
            .collect();
        let positives = frames.iter().map(|f| f.matched.positives).sum();
        Ok(Evaluation { frames, positives })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Builds the curve after letting `reclass` rewrite each detection's
    /// outcome (the oracle modes turn chosen false positives into ignored
    /// detections).
    pub fn curve_with(
        &self,
        reclass: impl Fn(&FrameEval, usize, DetOutcome) -> DetOutcome,
    ) -> Result<Curve> {
        if self.positives == 0 {
            return Err(Error::EmptyPositiveSet);
        }
        let mut scored: Vec<(f64, DetOutcome)> = Vec::new();
        for fe in &self.frames {
            for (i, d) in fe.detections.iter().enumerate() {
                scored.push((d.score, reclass(fe, i, fe.matched.outcomes[i])));
            }
        }
        Ok(Curve::from_outcomes(scored, self.frames.len(), self.positives))
    }

    pub fn curve(&self) -> Result<Curve> {
        self.curve_with(|_, _, o| o)
    }

    /// Largest score threshold whose FPPI reaches `fppi`; falls back to the
    /// lowest score when the curve never gets there.
    pub fn operating_threshold(&self, fppi: f64) -> Result<f64> {
        let curve = self.curve()?;
        Ok(curve
            .points()
            .iter()
            .find(|p| p.fppi >= fppi)
            .or_else(|| curve.points().last())
            .map(|p| p.threshold)
            .unwrap_or(f64::INFINITY))
    }
}

pub fn compute_curve(ds: &Dataset, dets: &DetectionSet, spec: &SubsetSpec) -> Result<Curve> {
    Evaluation::run(ds, dets, spec)?.curve()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub variant: Variant,
    /// Log-average miss rate over FPPI `[1e-2, 1e0]`.
    pub mr2: f64,
    /// Log-average miss rate over FPPI `[1e-4, 1e0]`.
    pub mr4: f64,
    /// Counts at the last curve point with FPPI <= 1.
    pub counts_at_fppi1: Counts,
    pub curve: Curve,
}

impl EvalSummary {
    pub fn from_curve(curve: Curve, variant: Variant) -> Result<Self> {
        let mr2 = log_average_miss_rate(&curve, 1e-2, 1e0)?;
        let mr4 = log_average_miss_rate(&curve, 1e-4, 1e0)?;
        let at1 = curve.point_at(1.0);
        let counts_at_fppi1 = Counts {
            tp: at1.tp,
            fp: at1.fp,
            fn_: curve.positives() - at1.tp,
        };
        Ok(EvalSummary {
            variant,
            mr2,
            mr4,
            counts_at_fppi1,
            curve,
        })
    }

    /// `MR-2(O) 18.50 MR-4(O) 33.20` with values in percent.
    pub fn headline(&self) -> String {
        format!(
            "MR-2({v}) {:.2} MR-4({v}) {:.2}",
            self.mr2 * 100.0,
            self.mr4 * 100.0,
            v = self.variant
        )
    }

    /// Key/value text block, stable across runs.
    pub fn block(&self, name: &str) -> String {
        let c = &self.counts_at_fppi1;
        format!(
            "[{name}]\nvariant = {}\nmr2 = {}\nmr4 = {}\nframes = {}\npositives = {}\ntp_at_fppi1 = {}\nfp_at_fppi1 = {}\nfn_at_fppi1 = {}\ncurve_points = {}\n",
            self.variant,
            self.mr2,
            self.mr4,
            self.curve.frames(),
            self.curve.positives(),
            c.tp,
            c.fp,
            c.fn_,
            self.curve.points().len()
        )
    }
}

pub fn evaluate(
    ds: &Dataset,
    dets: &DetectionSet,
    spec: &SubsetSpec,
    variant: Variant,
) -> Result<EvalSummary> {
    EvalSummary::from_curve(compute_curve(ds, dets, spec)?, variant)
}

/// Median IoU of true-positive pairs among detections scoring above
/// `min_score`. Even counts take the lower of the two middle values.
pub fn median_tp_iou(
    ds: &Dataset,
    dets: &DetectionSet,
    spec: &SubsetSpec,
    min_score: f64,
) -> Result<f64> {
    let kept: DetectionSet = dets.iter().filter(|d| d.score > min_score).cloned().collect();
    let ev = Evaluation::run(ds, &kept, spec)?;
    let mut ious: Vec<f64> = ev
        .frames
        .iter()
        .flat_map(|f| f.matched.tps().into_iter().map(|p| p.iou))
        .collect();
    if ious.is_empty() {
        return Err(Error::NoTruePositives);
    }
    ious.sort_by(f64::total_cmp);
    Ok(ious[(ious.len() - 1) / 2])
}

/// `(threshold, MR-2)` for each IoU threshold, everything else fixed.
pub fn mr_vs_iou_sweep(
    ds: &Dataset,
    dets: &DetectionSet,
    spec: &SubsetSpec,
    thresholds: &[f64],
) -> Result<Vec<(f64, f64)>> {
    thresholds
        .iter()
        .map(|&t| {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("IoU threshold {t} outside (0, 1)")));
            }
            let s = SubsetSpec {
                iou_threshold: t,
                ..spec.clone()
            };
            Ok((t, evaluate(ds, dets, &s, Variant::O)?.mr2))
        })
        .collect()
}

pub fn sweep_csv(rows: &[(f64, f64)]) -> String {
    let mut s = String::from("iou,mr2\n");
    for (t, m) in rows {
        s.push_str(&format!("{t},{m}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic_scene, SceneParams, ScoreModel};
    use crate::geometry::BBox;

    fn perfect(frames: u32) -> (Dataset, DetectionSet) {
        let p = SceneParams {
            frames,
            scores: ScoreModel {
                tp: (1.0, 1.0),
                ..ScoreModel::default()
            },
            ..SceneParams::default()
        };
        let s = generate_synthetic_scene(1, &p).unwrap();
        let dets = s.detection_set();
        (s.dataset, dets)
    }

    #[test]
    fn perfect_detector_single_point() {
        let (ds, dets) = perfect(10);
        let curve = compute_curve(&ds, &dets, &SubsetSpec::everything()).unwrap();
        assert_eq!(curve.points().len(), 1);
        assert_eq!(curve.points()[0].fppi, 0.0);
        assert_eq!(curve.points()[0].miss_rate, 0.0);
        let s = evaluate(&ds, &dets, &SubsetSpec::everything(), Variant::O).unwrap();
        assert!(s.mr2 < 1e-9 && s.mr4 < 1e-9);
        assert_eq!(s.counts_at_fppi1, Counts { tp: 10, fp: 0, fn_: 0 });
    }

    #[test]
    fn background_above_tps_reaches_k_fppi() {
        let k = 3;
        let p = SceneParams {
            frames: 20,
            gt_per_frame: 2,
            background_per_frame: k,
            scores: ScoreModel {
                tp: (0.1, 0.5),
                background: (0.6, 0.9),
                ..ScoreModel::default()
            },
            ..SceneParams::default()
        };
        let s = generate_synthetic_scene(5, &p).unwrap();
        let curve = compute_curve(&s.dataset, &s.detection_set(), &SubsetSpec::everything()).unwrap();
        let pts = curve.points();
        // anchor, then every background FP before any TP
        assert_eq!(pts[0].miss_rate, 1.0);
        let at_k = pts.iter().find(|p| p.fppi == k as f64).unwrap();
        assert_eq!(at_k.miss_rate, 1.0);
        let last = pts.last().unwrap();
        assert_eq!((last.fppi, last.miss_rate), (k as f64, 0.0));
    }

    #[test]
    fn empty_positive_set_is_an_error() {
        let f = FrameId::new("v", 0).unwrap();
        let ds = Dataset::new([f], vec![], vec![]).unwrap();
        assert!(matches!(
            compute_curve(&ds, &DetectionSet::new(), &SubsetSpec::reasonable()),
            Err(Error::EmptyPositiveSet)
        ));
    }

    #[test]
    fn detections_on_unknown_frames_rejected() {
        let (ds, mut dets) = perfect(2);
        dets.push(Detection::new(FrameId::new("elsewhere", 0).unwrap(), BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), 1.0).unwrap());
        assert!(matches!(
            compute_curve(&ds, &dets, &SubsetSpec::everything()),
            Err(Error::FrameMismatch(_))
        ));
    }

    #[test]
    fn median_iou_lower_middle() {
        let frames: Vec<_> = (0..4).map(|i| FrameId::new("v", i).unwrap()).collect();
        let gt = BBox::new(0.0, 0.0, 41.0, 100.0).unwrap();
        let anns = frames
            .iter()
            .enumerate()
            .map(|(i, f)| Annotation::person(i as u64, f.clone(), gt))
            .collect();
        let ds = Dataset::new(frames.clone(), anns, vec![]).unwrap();
        // vertical shift d gives IoU (h - d) / (h + d): d = 25 -> 0.6, d = 100/19 -> 0.9
        let shifts = [25.0, 100.0 / 19.0, 25.0, 100.0 / 19.0];
        let dets: DetectionSet = frames
            .iter()
            .zip(shifts)
            .map(|(f, d)| Detection::new(f.clone(), gt.translated(0.0, d).unwrap(), 1.0).unwrap())
            .collect();
        let spec = SubsetSpec {
            aspect_normalize: false,
            ..SubsetSpec::everything()
        };
        let m = median_tp_iou(&ds, &dets, &spec, 0.0).unwrap();
        assert!((m - 0.6).abs() < 1e-12, "{m}");

        let exact: DetectionSet = frames
            .iter()
            .map(|f| Detection::new(f.clone(), gt, 1.0).unwrap())
            .collect();
        assert_eq!(median_tp_iou(&ds, &exact, &spec, 0.0).unwrap(), 1.0);
        assert!(matches!(
            median_tp_iou(&ds, &exact, &spec, 5.0),
            Err(Error::NoTruePositives)
        ));
    }

    #[test]
    fn sweep_rejects_out_of_range_thresholds() {
        let (ds, dets) = perfect(3);
        assert!(mr_vs_iou_sweep(&ds, &dets, &SubsetSpec::everything(), &[0.5, 1.0]).is_err());
        let rows = mr_vs_iou_sweep(&ds, &dets, &SubsetSpec::everything(), &[0.5, 0.7, 0.9]).unwrap();
        assert!(rows.iter().all(|r| r.1 < 1e-9));
    }

    #[test]
    fn summary_text_is_stable() {
        let (ds, dets) = perfect(4);
        let s = evaluate(&ds, &dets, &SubsetSpec::everything(), Variant::N).unwrap();
        assert_eq!(s.headline(), "MR-2(N) 0.00 MR-4(N) 0.00");
        assert!(s.block("eval").starts_with("[eval]\nvariant = N\nmr2 = "));
        assert!(s.block("eval").contains("\ntp_at_fppi1 = 4\nfp_at_fppi1 = 0\n"));
    }
}
