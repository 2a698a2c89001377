use std::collections::BTreeSet;

use crate::dataio::{Annotation, Dataset, Detection, Label};
use crate::error::{Error, Result};
use crate::geometry::AspectRatio;

// Occlusion is a ratio of areas; 1 - 65/100 must still count as 0.35.
const OCCLUSION_SLACK: f64 = 1e-12;

/// Which ground truth counts as a positive. Annotations outside the subset
/// are not dropped: they become ignore regions, so detections on them are
/// neither rewarded nor punished.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSpec {
    /// Inclusive lower bound on full-box height in pixels.
    pub height_min: f64,
    /// Exclusive upper bound, unbounded when `None`.
    pub height_max: Option<f64>,
    pub occlusion_min: f64,
    pub occlusion_max: f64,
    pub labels: BTreeSet<Label>,
    pub iou_threshold: f64,
    pub aspect_normalize: bool,
    pub aspect: AspectRatio,
    /// Drop detections whose height lies outside the height range widened
    /// by this factor before matching. Off by default.
    pub detection_height_margin: Option<f64>,
}

impl Default for SubsetSpec {
    fn default() -> Self {
        SubsetSpec::reasonable()
    }
}

impl SubsetSpec {
    /// Pedestrians at least 50 px tall and at most 35 % occluded.
    pub fn reasonable() -> Self {
        SubsetSpec {
            height_min: 50.0,
            height_max: None,
            occlusion_min: 0.0,
            occlusion_max: 0.35,
            labels: BTreeSet::from([Label::Person]),
            iou_threshold: 0.5,
            aspect_normalize: true,
            aspect: AspectRatio::default(),
            detection_height_margin: None,
        }
    }

    /// Every person regardless of size or occlusion.
    pub fn all() -> Self {
        SubsetSpec {
            height_min: 0.0,
            occlusion_max: 1.0,
            ..SubsetSpec::reasonable()
        }
    }

    /// Every annotation of every label.
    pub fn everything() -> Self {
        SubsetSpec {
            labels: [Label::Person, Label::People, Label::PersonUncertain, Label::Other].into(),
            ..SubsetSpec::all()
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "reasonable" => Ok(SubsetSpec::reasonable()),
            "all" => Ok(SubsetSpec::all()),
            "everything" => Ok(SubsetSpec::everything()),
            _ => Err(Error::Config(format!(
                "unknown subset {name:?} (expected reasonable, all or everything)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Config(format!(
                "IoU threshold {} outside (0, 1)",
                self.iou_threshold
            )));
        }
        if !(self.height_min >= 0.0 && self.height_min.is_finite()) {
            return Err(Error::Config(format!("bad minimum height {}", self.height_min)));
        }
        if let Some(m) = self.height_max {
            if !(m > self.height_min) {
                return Err(Error::Config(format!(
                    "height range [{}, {m}) is empty",
                    self.height_min
                )));
            }
        }
        if !(0.0 <= self.occlusion_min
            && self.occlusion_min <= self.occlusion_max
            && self.occlusion_max <= 1.0)
        {
            return Err(Error::Config(format!(
                "occlusion range [{}, {}] not within [0, 1]",
                self.occlusion_min, self.occlusion_max
            )));
        }
        if let Some(m) = self.detection_height_margin {
            if !(m >= 1.0 && m.is_finite()) {
                return Err(Error::Config(format!("detection height margin {m} must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn includes(&self, a: &Annotation) -> bool {
        let h = a.bbox.h();
        let occ = a.occlusion();
        self.labels.contains(&a.label)
            && h >= self.height_min
            && self.height_max.is_none_or(|m| h < m)
            && occ >= self.occlusion_min - OCCLUSION_SLACK
            && occ <= self.occlusion_max + OCCLUSION_SLACK
    }

    pub(crate) fn mark(&self, a: &Annotation) -> Annotation {
        let mut out = a.clone();
        if !out.ignore && !self.includes(a) {
            out.ignore = true;
        }
        out
    }

    pub(crate) fn keeps_detection(&self, d: &Detection) -> bool {
        match self.detection_height_margin {
            None => true,
            Some(r) => {
                let h = d.bbox.h();
                h >= self.height_min / r && self.height_max.is_none_or(|m| h < m * r)
            }
        }
    }
}

/// Marks every annotation outside `spec` as ignore. Annotations inside the
/// subset are returned untouched.
pub fn apply_subset(ds: &Dataset, spec: &SubsetSpec) -> Result<Dataset> {
    spec.validate()?;
    ds.with_annotations(ds.annotations().iter().map(|a| spec.mark(a)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::FrameId;
    use crate::geometry::BBox;

    fn ann(id: u64, h: f64, visible_h: Option<f64>, label: Label) -> Annotation {
        let bbox = BBox::new(0.0, 0.0, 0.41 * h, h).unwrap();
        let mut a = Annotation::person(id, FrameId::new("v", 0).unwrap(), bbox);
        a.label = label;
        a.visible = visible_h.map(|v| BBox::new(0.0, 0.0, 0.41 * h, v).unwrap());
        a
    }

    #[test]
    fn reasonable_subset_boundaries() {
        let s = SubsetSpec::reasonable();
        assert!(s.includes(&ann(0, 50.0, None, Label::Person)));
        assert!(!s.includes(&ann(0, 49.9, None, Label::Person)));
        assert!(s.includes(&ann(0, 100.0, Some(65.0), Label::Person)));
        assert!(!s.includes(&ann(0, 100.0, Some(64.0), Label::Person)));
        assert!(!s.includes(&ann(0, 100.0, None, Label::People)));
    }

    #[test]
    fn outside_becomes_ignore_inside_untouched() {
        let anns = vec![
            ann(1, 100.0, None, Label::Person),
            ann(2, 20.0, None, Label::Person),
            ann(3, 100.0, None, Label::PersonUncertain),
        ];
        let ds = Dataset::new([FrameId::new("v", 0).unwrap()], anns.clone(), vec![]).unwrap();
        let out = apply_subset(&ds, &SubsetSpec::reasonable()).unwrap();
        assert_eq!(out.annotations()[0], anns[0]);
        assert!(out.annotations()[1].ignore && out.annotations()[2].ignore);
        assert_eq!(apply_subset(&ds, &SubsetSpec::everything()).unwrap(), ds);
    }

    #[test]
    fn validation() {
        let mut s = SubsetSpec::reasonable();
        s.iou_threshold = 1.0;
        assert!(s.validate().is_err());
        s = SubsetSpec::reasonable();
        s.occlusion_min = 0.5;
        s.occlusion_max = 0.2;
        assert!(s.validate().is_err());
        assert!(SubsetSpec::by_name("tiny").is_err());
    }

    #[test]
    fn detection_prefilter_widens_the_range() {
        let s = SubsetSpec {
            detection_height_margin: Some(1.25),
            ..SubsetSpec::reasonable()
        };
        let det = |h: f64| Detection::new(FrameId::new("v", 0).unwrap(), BBox::new(0.0, 0.0, 10.0, h).unwrap(), 1.0).unwrap();
        assert!(s.keeps_detection(&det(40.0)));
        assert!(!s.keeps_detection(&det(39.0)));
        assert!(SubsetSpec::reasonable().keeps_detection(&det(1.0)));
    }
}
