//! Error decomposition: localisation versus background false positives,
//! oracle evaluations that forgive one class, and per-detection image
//! measures for score-correlate plots.

mod images;
mod measures;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataio::{Dataset, DetectionSet, FrameId};
use crate::error::{Error, Result};
use crate::evaluator::{curve_csv, DetOutcome, EvalSummary, Evaluation, FrameEval, SubsetSpec, Variant};
use crate::geometry::{iou, BBox};

pub use images::{load_gray, parse_pgm, ImageSource};
pub use measures::{blur_score, contrast_score, ContrastLevels, Patch};

/// Default operating point for error analysis, in false positives per image.
pub const ANALYSIS_FPPI: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FpKind {
    /// Overlaps some ground truth (IoU > 0) without matching it.
    Localisation,
    /// Overlaps no ground truth at all.
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FpClass {
    pub frame: FrameId,
    pub detection: usize,
    pub score: f64,
    pub class: FpKind,
    pub max_iou: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OracleConfig {
    /// Let ignore regions count as ground truth when deciding overlap.
    pub include_ignore: bool,
}

fn fp_kind(fe: &FrameEval, det: usize, cfg: OracleConfig) -> (FpKind, f64) {
    let b = &fe.detections[det].bbox;
    let max_iou = fe
        .annotations
        .iter()
        .filter(|a| cfg.include_ignore || !a.ignore)
        .map(|a| iou(b, &a.bbox))
        .fold(0.0, f64::max);
    let kind = if max_iou > 0.0 {
        FpKind::Localisation
    } else {
        FpKind::Background
    };
    (kind, max_iou)
}

/// Every false positive scoring at least `min_score`, frame by frame in
/// detection input order.
pub fn classify_false_positives(ev: &Evaluation, min_score: f64, cfg: OracleConfig) -> Vec<FpClass> {
    let mut out = Vec::new();
    for fe in &ev.frames {
        for (i, o) in fe.matched.outcomes.iter().enumerate() {
            let score = fe.detections[i].score;
            if o.is_fp() && score >= min_score {
                let (class, max_iou) = fp_kind(fe, i, cfg);
                out.push(FpClass {
                    frame: fe.frame.clone(),
                    detection: i,
                    score,
                    class,
                    max_iou,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct FpBreakdown {
    pub localisation: usize,
    pub background: usize,
}

pub fn fp_breakdown(classes: &[FpClass]) -> FpBreakdown {
    let localisation = classes.iter().filter(|c| c.class == FpKind::Localisation).count();
    FpBreakdown {
        localisation,
        background: classes.len() - localisation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    Localisation,
    Background,
    Both,
}

impl OracleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            OracleMode::Localisation => "localisation",
            OracleMode::Background => "background",
            OracleMode::Both => "both",
        }
    }

    fn forgives(&self, kind: FpKind) -> bool {
        match self {
            OracleMode::Both => true,
            OracleMode::Localisation => kind == FpKind::Localisation,
            OracleMode::Background => kind == FpKind::Background,
        }
    }
}

impl FromStr for OracleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loc" | "localisation" | "localization" => Ok(OracleMode::Localisation),
            "bg" | "background" => Ok(OracleMode::Background),
            "both" => Ok(OracleMode::Both),
            _ => Err(Error::Config(format!("oracle mode must be loc, bg or both, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub mode: OracleMode,
    pub baseline: EvalSummary,
    pub oracle: EvalSummary,
    /// False positives (over all thresholds) turned into ignored detections.
    pub forgiven: usize,
}

impl OracleReport {
    /// MR-2 gain in percentage points.
    pub fn delta_mr2(&self) -> f64 {
        (self.baseline.mr2 - self.oracle.mr2) * 100.0
    }

    pub fn block(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[oracle]");
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "variant = {}", self.baseline.variant);
        let _ = writeln!(s, "baseline_mr2 = {}", self.baseline.mr2);
        let _ = writeln!(s, "baseline_mr4 = {}", self.baseline.mr4);
        let _ = writeln!(s, "oracle_mr2 = {}", self.oracle.mr2);
        let _ = writeln!(s, "oracle_mr4 = {}", self.oracle.mr4);
        let _ = writeln!(s, "delta_mr2_pp = {}", self.delta_mr2());
        let _ = writeln!(s, "delta_mr4_pp = {}", delta_mr(self));
        let _ = writeln!(s, "forgiven_fps = {}", self.forgiven);
        s
    }

    pub fn baseline_csv(&self) -> String {
        curve_csv(&self.baseline.curve)
    }

    pub fn oracle_csv(&self) -> String {
        curve_csv(&self.oracle.curve)
    }
}

/// MR-4 gain of the oracle over the baseline, in percentage points.
pub fn delta_mr(report: &OracleReport) -> f64 {
    (report.baseline.mr4 - report.oracle.mr4) * 100.0
}

/// Re-scores an existing matching with the chosen false-positive class
/// treated as ignored. True positives and misses are untouched.
pub fn oracle_from_evaluation(
    ev: &Evaluation,
    variant: Variant,
    mode: OracleMode,
    cfg: OracleConfig,
) -> Result<OracleReport> {
    let baseline = EvalSummary::from_curve(ev.curve()?, variant)?;
    let forgive = |fe: &FrameEval, i: usize, o: DetOutcome| {
        if o.is_fp() && mode.forgives(fp_kind(fe, i, cfg).0) {
            DetOutcome::Ignored
        } else {
            o
        }
    };
    let forgiven = ev
        .frames
        .iter()
        .map(|fe| {
            fe.matched
                .outcomes
                .iter()
                .enumerate()
                .filter(|&(i, o)| !forgive(fe, i, *o).is_fp() && o.is_fp())
                .count()
        })
        .sum();
    let oracle = EvalSummary::from_curve(ev.curve_with(forgive)?, variant)?;
    Ok(OracleReport {
        mode,
        baseline,
        oracle,
        forgiven,
    })
}

pub fn oracle_evaluate(
    ds: &Dataset,
    dets: &DetectionSet,
    spec: &SubsetSpec,
    variant: Variant,
    mode: OracleMode,
    cfg: OracleConfig,
) -> Result<OracleReport> {
    oracle_from_evaluation(&Evaluation::run(ds, dets, spec)?, variant, mode, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    #[serde(rename = "TP")]
    Tp,
    #[serde(rename = "FP")]
    Fp,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Tp => "TP",
            Outcome::Fp => "FP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatchMeasures {
    pub frame: FrameId,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
    pub outcome: Outcome,
    pub height: f64,
    pub blur: f64,
    pub contrast: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelateConfig {
    pub operating_fppi: f64,
    pub levels: ContrastLevels,
}

impl Default for CorrelateConfig {
    fn default() -> Self {
        CorrelateConfig {
            operating_fppi: ANALYSIS_FPPI,
            levels: ContrastLevels::default(),
        }
    }
}

/// Size, blur and contrast of every true and false positive at the
/// operating point. Frames without an image and patches too small to
/// measure are skipped; the reasons come back as warnings.
pub fn export_correlates(
    ev: &Evaluation,
    images: &ImageSource,
    cfg: CorrelateConfig,
) -> Result<(Vec<PatchMeasures>, Vec<String>)> {
    let threshold = ev.operating_threshold(cfg.operating_fppi)?;
    let per_frame: Vec<(Vec<PatchMeasures>, Vec<String>)> = ev
        .frames
        .par_iter()
        .map(|fe| {
            let picked: Vec<(usize, Outcome)> = fe
                .matched
                .outcomes
                .iter()
                .enumerate()
                .filter(|&(i, _)| fe.detections[i].score >= threshold)
                .filter_map(|(i, o)| match o {
                    DetOutcome::TruePositive { .. } => Some((i, Outcome::Tp)),
                    DetOutcome::FalsePositive => Some((i, Outcome::Fp)),
                    DetOutcome::Ignored => None,
                })
                .collect();
            let mut rows = Vec::new();
            let mut warnings = Vec::new();
            if picked.is_empty() {
                return (rows, warnings);
            }
            let image = match images.load(&fe.frame) {
                Ok(img) => img,
                Err(e) => {
                    warnings.push(format!("{}: skipping {} detections: {e}", fe.frame, picked.len()));
                    return (rows, warnings);
                }
            };
            for (i, outcome) in picked {
                let d = &fe.raw_detections[i];
                let measured = image
                    .crop(&d.bbox)
                    .ok_or(Error::PatchTooSmall { width: 0, height: 0 })
                    .and_then(|p| Ok((blur_score(&p)?, contrast_score(&p, cfg.levels))));
                match measured {
                    Ok((blur, contrast)) => rows.push(PatchMeasures {
                        frame: fe.frame.clone(),
                        bbox: d.bbox,
                        score: d.score,
                        outcome,
                        height: d.bbox.h(),
                        blur,
                        contrast,
                    }),
                    Err(e) => warnings.push(format!("{}: skipping detection {i}: {e}", fe.frame)),
                }
            }
            (rows, warnings)
        })
        .collect();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (r, w) in per_frame {
        rows.extend(r);
        warnings.extend(w);
    }
    Ok((rows, warnings))
}

pub fn correlates_csv(rows: &[PatchMeasures]) -> String {
    let mut s = String::from("video/frame,x,y,w,h,score,outcome,height,blur,contrast\n");
    for r in rows {
        let b = &r.bbox;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.frame,
            b.x(),
            b.y(),
            b.w(),
            b.h(),
            r.score,
            r.outcome.as_str(),
            r.height,
            r.blur,
            r.contrast
        );
    }
    s
}

/// Counts of human-entered free-form tags ("tree leaves", "cyclist", ...).
/// Tags are trimmed; blanks are dropped; spelling is kept as entered.
pub fn tag_histogram<'a>(tags: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for t in tags.into_iter().map(str::trim).filter(|t| !t.is_empty()) {
        *out.entry(t.to_string()).or_insert(0) += 1;
    }
    out
}
