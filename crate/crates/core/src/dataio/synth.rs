//! Seeded synthetic scenes with a known TP/FP/FN structure.
//!
//! Frames are 640x480. Ground truth and ignore regions sit in eight 80px
//! columns of the upper band (y < 190); localisation errors are ground-truth
//! boxes pushed down by 0.6 of their height (IoU 0.25 with their own box,
//! zero with everything else); background errors live in the lower band
//! (y >= 300) and overlap nothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Annotation, Dataset, Detection, DetectionSet, FrameId, Label, Source};
use crate::error::{Error, Result};
use crate::geometry::{BBox, DEFAULT_ASPECT};

const SLOTS: u32 = 8;
const SLOT_WIDTH: f64 = 80.0;
const FRAME_W: f64 = 640.0;
const FRAME_H: f64 = 480.0;
const BAND_TOP: f64 = 10.0;
const BAND_BOTTOM: f64 = 190.0;
const LOWER_BAND: f64 = 300.0;

/// The role a generated detection was built to play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetRole {
    TruePositive,
    /// Second, lower-scored hit on an already detected person.
    Double,
    /// Overlaps a person with IoU 0.25.
    Localisation,
    /// Overlaps no annotation at all.
    Background,
    /// Fully inside an ignore region.
    InIgnore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDetection {
    pub detection: Detection,
    pub role: DetRole,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreModel {
    pub tp: (f64, f64),
    pub background: (f64, f64),
    pub localisation: (f64, f64),
}

impl Default for ScoreModel {
    fn default() -> Self {
        ScoreModel {
            tp: (0.5, 1.0),
            background: (0.0, 0.6),
            localisation: (0.0, 0.6),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub frames: u32,
    pub gt_per_frame: u32,
    pub gt_height: (f64, f64),
    /// Maximum translation of a true positive, as a fraction of box size
    /// (0 gives exact copies).
    pub jitter: f64,
    pub missed_per_frame: u32,
    pub background_per_frame: u32,
    pub localisation_per_frame: u32,
    pub doubles_per_frame: u32,
    pub ignore_regions_per_frame: u32,
    pub dets_in_ignore_per_frame: u32,
    pub scores: ScoreModel,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            frames: 10,
            gt_per_frame: 1,
            gt_height: (60.0, 160.0),
            jitter: 0.0,
            missed_per_frame: 0,
            background_per_frame: 0,
            localisation_per_frame: 0,
            doubles_per_frame: 0,
            ignore_regions_per_frame: 0,
            dets_in_ignore_per_frame: 0,
            scores: ScoreModel::default(),
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.frames == 0 {
            return bad("frames must be > 0".into());
        }
        if self.gt_per_frame + self.ignore_regions_per_frame > SLOTS {
            return bad(format!(
                "at most {SLOTS} ground-truth boxes plus ignore regions per frame"
            ));
        }
        let (lo, hi) = self.gt_height;
        if !(20.0..=BAND_BOTTOM - BAND_TOP).contains(&lo) || !(lo..=BAND_BOTTOM - BAND_TOP).contains(&hi) {
            return bad(format!("gt height range must lie within [20, 180], got {lo}..{hi}"));
        }
        if !(0.0..=0.15).contains(&self.jitter) {
            return bad(format!("jitter must be in [0, 0.15], got {}", self.jitter));
        }
        if self.missed_per_frame > self.gt_per_frame {
            return bad("missed_per_frame exceeds gt_per_frame".into());
        }
        if self.localisation_per_frame > self.gt_per_frame {
            return bad("localisation_per_frame exceeds gt_per_frame".into());
        }
        if self.doubles_per_frame > self.gt_per_frame - self.missed_per_frame {
            return bad("doubles_per_frame exceeds detected ground truth".into());
        }
        if self.dets_in_ignore_per_frame > 0 && self.ignore_regions_per_frame == 0 {
            return bad("dets_in_ignore_per_frame needs ignore regions".into());
        }
        for (name, (a, b)) in [
            ("tp", self.scores.tp),
            ("background", self.scores.background),
            ("localisation", self.scores.localisation),
        ] {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return bad(format!("{name} score range {a}..{b} is invalid"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub dataset: Dataset,
    pub detections: Vec<LabeledDetection>,
}

impl SyntheticScene {
    pub fn detection_set(&self) -> DetectionSet {
        self.detections.iter().map(|d| d.detection.clone()).collect()
    }

    pub fn count(&self, role: DetRole) -> usize {
        self.detections.iter().filter(|d| d.role == role).count()
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn pedestrian(x: f64, y: f64, h: f64) -> Result<BBox> {
    BBox::new(x, y, DEFAULT_ASPECT * h, h)
}

/// Deterministic in `(seed, params)`.
pub fn generate_synthetic_scene(seed: u64, params: &SceneParams) -> Result<SyntheticScene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::new();
    let mut annotations = Vec::new();
    let mut detections = Vec::new();
    let mut next_id = 0u64;

    for fi in 0..params.frames {
        let frame = FrameId::new("synth", fi)?;
        frames.push(frame.clone());
        let mut push_det = |bbox: BBox, score: f64, role: DetRole| {
            detections.push(LabeledDetection {
                detection: Detection {
                    frame: frame.clone(),
                    bbox,
                    score,
                },
                role,
            });
        };

        let mut gts = Vec::new();
        for slot in 0..params.gt_per_frame {
            let h = uniform(&mut rng, params.gt_height);
            let w = DEFAULT_ASPECT * h;
            let x = f64::from(slot) * SLOT_WIDTH + uniform(&mut rng, (0.0, SLOT_WIDTH - w));
            let y = uniform(&mut rng, (BAND_TOP, BAND_BOTTOM - h));
            let bbox = pedestrian(x, y, h)?;
            annotations.push(Annotation::person(next_id, frame.clone(), bbox));
            next_id += 1;
            gts.push(bbox);
        }

        let mut ignore_regions = Vec::new();
        for k in 0..params.ignore_regions_per_frame {
            let slot = params.gt_per_frame + k;
            let bbox = BBox::new(f64::from(slot) * SLOT_WIDTH + 2.0, 20.0, SLOT_WIDTH - 4.0, 120.0)?;
            annotations.push(Annotation {
                id: next_id,
                frame: frame.clone(),
                label: Label::People,
                bbox,
                visible: None,
                ignore: true,
                source: Source::Original,
            });
            next_id += 1;
            ignore_regions.push(bbox);
        }

        let missed = params.missed_per_frame as usize;
        let mut tp_scores = Vec::new();
        for gt in &gts[missed..] {
            let dx = uniform(&mut rng, (-params.jitter, params.jitter)) * gt.w();
            let dy = uniform(&mut rng, (-params.jitter, params.jitter)) * gt.h();
            let score = uniform(&mut rng, params.scores.tp);
            tp_scores.push(score);
            push_det(gt.translated(dx, dy)?, score, DetRole::TruePositive);
        }
        for (gt, &tp_score) in gts[missed..]
            .iter()
            .zip(&tp_scores)
            .take(params.doubles_per_frame as usize)
        {
            let dx = uniform(&mut rng, (-0.05, 0.05)) * gt.w();
            let lo = params.scores.tp.0.min(tp_score);
            let score = lo + (tp_score - lo) * uniform(&mut rng, (0.0, 1.0));
            push_det(gt.translated(dx, 0.0)?, score, DetRole::Double);
        }
        for gt in gts.iter().take(params.localisation_per_frame as usize) {
            let score = uniform(&mut rng, params.scores.localisation);
            push_det(gt.translated(0.0, 0.6 * gt.h())?, score, DetRole::Localisation);
        }
        for _ in 0..params.background_per_frame {
            let h = uniform(&mut rng, (30.0, 100.0));
            let x = uniform(&mut rng, (0.0, FRAME_W - DEFAULT_ASPECT * h));
            let y = uniform(&mut rng, (LOWER_BAND, FRAME_H - h));
            let score = uniform(&mut rng, params.scores.background);
            push_det(pedestrian(x, y, h)?, score, DetRole::Background);
        }
        for k in 0..params.dets_in_ignore_per_frame {
            let region = ignore_regions[k as usize % ignore_regions.len()];
            let h = 60.0;
            let x = region.x() + uniform(&mut rng, (0.0, region.w() - DEFAULT_ASPECT * h));
            let y = region.y() + uniform(&mut rng, (0.0, region.h() - h));
            let score = uniform(&mut rng, params.scores.background);
            push_det(pedestrian(x, y, h)?, score, DetRole::InIgnore);
        }
    }

    let dataset = Dataset::new(
        frames,
        annotations,
        vec![format!("synthetic scene seed={seed}")],
    )?;
    Ok(SyntheticScene {
        dataset,
        detections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{iou, overlap_over_detection};

    fn busy() -> SceneParams {
        SceneParams {
            frames: 20,
            gt_per_frame: 4,
            jitter: 0.1,
            missed_per_frame: 1,
            background_per_frame: 3,
            localisation_per_frame: 2,
            doubles_per_frame: 1,
            ignore_regions_per_frame: 2,
            dets_in_ignore_per_frame: 1,
            ..SceneParams::default()
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let a = generate_synthetic_scene(7, &busy()).unwrap();
        let b = generate_synthetic_scene(7, &busy()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_scene(8, &busy()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn roles_have_the_intended_geometry() {
        let scene = generate_synthetic_scene(3, &busy()).unwrap();
        for ld in &scene.detections {
            let anns = scene.dataset.frame_annotations(&ld.detection.frame);
            let gt_ious: Vec<f64> = anns
                .iter()
                .filter(|a| !a.ignore)
                .map(|a| iou(&a.bbox, &ld.detection.bbox))
                .collect();
            let max_iou = gt_ious.iter().cloned().fold(0.0, f64::max);
            let max_ign = anns
                .iter()
                .filter(|a| a.ignore)
                .map(|a| overlap_over_detection(&ld.detection.bbox, &a.bbox))
                .fold(0.0, f64::max);
            match ld.role {
                DetRole::TruePositive | DetRole::Double => assert!(max_iou >= 0.5),
                DetRole::Localisation => {
                    assert!(max_iou > 0.0 && max_iou < 0.5);
                    assert_eq!(max_ign, 0.0);
                }
                DetRole::Background => {
                    assert_eq!(max_iou, 0.0);
                    assert_eq!(max_ign, 0.0);
                }
                DetRole::InIgnore => {
                    assert_eq!(max_iou, 0.0);
                    assert_eq!(max_ign, 1.0);
                }
            }
        }
        assert_eq!(scene.count(DetRole::TruePositive), 60);
        assert_eq!(scene.count(DetRole::Background), 60);
        assert_eq!(scene.dataset.annotations().len(), 120);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = SceneParams {
            gt_per_frame: 7,
            ignore_regions_per_frame: 2,
            ..SceneParams::default()
        };
        assert!(generate_synthetic_scene(0, &p).is_err());
        let p = SceneParams {
            jitter: 0.5,
            ..SceneParams::default()
        };
        assert!(generate_synthetic_scene(0, &p).is_err());
    }
}
