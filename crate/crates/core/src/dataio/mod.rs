//! Annotation and detection records, their file formats, keyframe
//! interpolation and synthetic scene generation.

mod caltech;
mod canonical;
mod interp;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clip_visible, BBox};

pub use caltech::{read_caltech_csv, CsvFrameMap};
pub use interp::{interpolate_keyframes, sinusoid_offset_demo, Keyframe, OffsetDemo, OffsetSample, Track};
pub use synth::{generate_synthetic_scene, DetRole, LabeledDetection, SceneParams, ScoreModel, SyntheticScene};

/// A video and a frame index within it, written `video/index`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FrameId {
    pub video: String,
    pub index: u32,
}

impl FrameId {
    pub fn new(video: impl Into<String>, index: u32) -> Result<Self> {
        let video = video.into();
        if video.is_empty() || video.chars().any(|c| c.is_whitespace() || c == ',') {
            return Err(Error::Config(format!("invalid video id {video:?}")));
        }
        Ok(FrameId { video, index })
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.video, self.index)
    }
}

impl FromStr for FrameId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (video, index) = s
            .rsplit_once('/')
            .ok_or_else(|| Error::Config(format!("frame id {s:?} is not video/index")))?;
        let index = index
            .parse()
            .map_err(|_| Error::Config(format!("frame id {s:?} has a non-integer index")))?;
        FrameId::new(video, index)
    }
}

impl TryFrom<String> for FrameId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FrameId> for String {
    fn from(f: FrameId) -> String {
        f.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "person")]
    Person,
    /// Crowd region.
    #[serde(rename = "people")]
    People,
    /// Uncertain pedestrian.
    #[serde(rename = "person?")]
    PersonUncertain,
    #[serde(rename = "other")]
    Other,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Person => "person",
            Label::People => "people",
            Label::PersonUncertain => "person?",
            Label::Other => "other",
        }
    }

    /// Known labels map to themselves; anything else is `None`.
    pub fn parse_known(s: &str) -> Option<Label> {
        match s {
            "person" => Some(Label::Person),
            "people" => Some(Label::People),
            "person?" => Some(Label::PersonUncertain),
            "other" => Some(Label::Other),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where an annotation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Original,
    New,
    Pruned,
    Aligned,
    HumanBaseline,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Original => "original",
            Source::New => "new",
            Source::Pruned => "pruned",
            Source::Aligned => "aligned",
            Source::HumanBaseline => "human-baseline",
        }
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "original" => Source::Original,
            "new" => Source::New,
            "pruned" => Source::Pruned,
            "aligned" => Source::Aligned,
            "human-baseline" => Source::HumanBaseline,
            _ => return Err(Error::Config(format!("unknown source tag {s:?}"))),
        })
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u64,
    pub frame: FrameId,
    pub label: Label,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub visible: Option<BBox>,
    pub ignore: bool,
    pub source: Source,
}

impl Annotation {
    pub fn person(id: u64, frame: FrameId, bbox: BBox) -> Self {
        Annotation {
            id,
            frame,
            label: Label::Person,
            bbox,
            visible: None,
            ignore: false,
            source: Source::Original,
        }
    }

    pub fn occlusion(&self) -> f64 {
        crate::geometry::occlusion_fraction(&self.bbox, self.visible.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: FrameId,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    pub fn new(frame: FrameId, bbox: BBox, score: f64) -> Result<Self> {
        if !score.is_finite() {
            return Err(Error::Config(format!("detection score {score} is not finite")));
        }
        Ok(Detection { frame, bbox, score })
    }
}

/// Ground truth over a fixed universe of frames.
///
/// Frames are kept sorted and unique; annotations are kept sorted by
/// `(frame, id)`, so two datasets with the same content compare equal and
/// serialize identically regardless of insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    frames: Vec<FrameId>,
    annotations: Vec<Annotation>,
    meta: Vec<String>,
}

impl Dataset {
    pub fn new(
        frames: impl IntoIterator<Item = FrameId>,
        annotations: Vec<Annotation>,
        meta: Vec<String>,
    ) -> Result<Self> {
        Ok(Dataset::new_with_warnings(frames, annotations, meta)?.0)
    }

    pub(crate) fn new_with_warnings(
        frames: impl IntoIterator<Item = FrameId>,
        mut annotations: Vec<Annotation>,
        meta: Vec<String>,
    ) -> Result<(Self, Vec<String>)> {
        let frames: Vec<FrameId> = frames
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if frames.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut warnings = Vec::new();
        let mut ids = BTreeSet::new();
        for a in &mut annotations {
            if frames.binary_search(&a.frame).is_err() {
                return Err(Error::FrameMismatch(format!(
                    "annotation {} refers to frame {} outside the dataset",
                    a.id, a.frame
                )));
            }
            if !ids.insert(a.id) {
                return Err(Error::Config(format!("duplicate annotation id {}", a.id)));
            }
            if let Some(v) = a.visible {
                let (clipped, changed) = clip_visible(&a.bbox, &v);
                if changed {
                    warnings.push(format!(
                        "annotation {} in {}: visible box outside full box, clipped",
                        a.id, a.frame
                    ));
                    a.visible = clipped;
                }
            }
        }
        annotations.sort_by(|a, b| a.frame.cmp(&b.frame).then(a.id.cmp(&b.id)));
        Ok((
            Dataset {
                frames,
                annotations,
                meta,
            },
            warnings,
        ))
    }

    pub fn frames(&self) -> &[FrameId] {
        &self.frames
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn meta(&self) -> &[String] {
        &self.meta
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn contains_frame(&self, frame: &FrameId) -> bool {
        self.frames.binary_search(frame).is_ok()
    }

    /// Annotations of one frame (contiguous thanks to the sort order).
    pub fn frame_annotations(&self, frame: &FrameId) -> &[Annotation] {
        let start = self.annotations.partition_point(|a| a.frame < *frame);
        let end = self.annotations.partition_point(|a| a.frame <= *frame);
        &self.annotations[start..end]
    }

    /// Every frame of the universe paired with its annotations, empty frames
    /// included, in frame order.
    pub fn frame_groups(&self) -> Vec<(&FrameId, &[Annotation])> {
        let mut out = Vec::with_capacity(self.frames.len());
        let mut rest = &self.annotations[..];
        for f in &self.frames {
            let n = rest.partition_point(|a| a.frame <= *f);
            out.push((f, &rest[..n]));
            rest = &rest[n..];
        }
        out
    }

    pub fn next_id(&self) -> u64 {
        self.annotations.iter().map(|a| a.id + 1).max().unwrap_or(0)
    }

    /// Same frames and meta, different annotations.
    pub fn with_annotations(&self, annotations: Vec<Annotation>) -> Result<Self> {
        Dataset::new(self.frames.clone(), annotations, self.meta.clone())
    }

    pub fn with_meta(mut self, note: impl Into<String>) -> Self {
        self.meta.push(note.into());
        self
    }

    pub fn into_parts(self) -> (Vec<FrameId>, Vec<Annotation>, Vec<String>) {
        (self.frames, self.annotations, self.meta)
    }

    pub(crate) fn check_same_frames(&self, other: &Dataset) -> Result<()> {
        if self.frames != other.frames {
            let a: BTreeSet<_> = self.frames.iter().collect();
            let b: BTreeSet<_> = other.frames.iter().collect();
            let first = a.symmetric_difference(&b).next();
            return Err(Error::FrameMismatch(format!(
                "datasets cover different frames ({} vs {}), e.g. {}",
                self.frames.len(),
                other.frames.len(),
                first.map(|f| f.to_string()).unwrap_or_default()
            )));
        }
        Ok(())
    }
}

/// Detections grouped by frame, input order preserved within a frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    by_frame: BTreeMap<FrameId, Vec<Detection>>,
}

impl DetectionSet {
    pub fn new() -> Self {
        DetectionSet::default()
    }

    pub fn push(&mut self, det: Detection) {
        self.by_frame.entry(det.frame.clone()).or_default().push(det);
    }

    pub fn frame(&self, frame: &FrameId) -> &[Detection] {
        self.by_frame.get(frame).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn frames(&self) -> impl Iterator<Item = &FrameId> {
        self.by_frame.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Detection> {
        self.by_frame.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.by_frame.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies `f` to every detection, keeping grouping and order.
    pub fn map(&self, mut f: impl FnMut(&Detection) -> Detection) -> DetectionSet {
        let mut out = DetectionSet::new();
        for d in self.iter() {
            out.push(f(d));
        }
        out
    }

    /// Errors if some detection sits on a frame the dataset does not know.
    pub fn check_within(&self, ds: &Dataset) -> Result<()> {
        match self.by_frame.keys().find(|f| !ds.contains_frame(f)) {
            Some(f) => Err(Error::FrameMismatch(format!(
                "detections reference frame {f} which is not in the annotation set"
            ))),
            None => Ok(()),
        }
    }
}

impl FromIterator<Detection> for DetectionSet {
    fn from_iter<I: IntoIterator<Item = Detection>>(iter: I) -> Self {
        let mut set = DetectionSet::new();
        for d in iter {
            set.push(d);
        }
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationFormat {
    Canonical,
    CaltechText,
}

impl FromStr for AnnotationFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(AnnotationFormat::Canonical),
            "caltech-text" => Ok(AnnotationFormat::CaltechText),
            _ => Err(Error::Config(format!("unknown annotation format {s:?}"))),
        }
    }
}

/// Reads a dataset, logging data-quality warnings.
pub fn read_annotations(path: &Path, format: AnnotationFormat) -> Result<Dataset> {
    let (ds, warnings) = read_annotations_with_warnings(path, format)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(ds)
}

pub fn read_annotations_with_warnings(
    path: &Path,
    format: AnnotationFormat,
) -> Result<(Dataset, Vec<String>)> {
    match format {
        AnnotationFormat::Canonical => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            canonical::parse_annotations(&text, &path.display().to_string())
        }
        AnnotationFormat::CaltechText => caltech::read(path),
    }
}

pub fn write_annotations(ds: &Dataset, path: &Path, format: AnnotationFormat) -> Result<()> {
    match format {
        AnnotationFormat::Canonical => {
            std::fs::write(path, canonical::format_annotations(ds)).map_err(|e| Error::io(path, e))
        }
        AnnotationFormat::CaltechText => caltech::write(ds, path),
    }
}

pub use canonical::{
    format_annotation_line, format_annotations, format_detections, parse_annotation_records,
    parse_annotations, parse_detections,
};

/// Reads detections from a canonical `D` file, a Caltech CSV file, or a
/// directory holding any mix of them.
pub fn read_detections(path: &Path, map: CsvFrameMap) -> Result<DetectionSet> {
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    let mut set = DetectionSet::new();
    for file in files {
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let is_canonical = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'))
            .is_some_and(|l| l.starts_with("D "));
        let dets = if is_canonical {
            canonical::parse_detections(&text, &file.display().to_string())?
        } else {
            caltech::parse_csv(&text, &file, map)?
        };
        for d in dets {
            set.push(d);
        }
    }
    Ok(set)
}

pub fn write_detections(dets: &DetectionSet, path: &Path) -> Result<()> {
    std::fs::write(path, canonical::format_detections(dets)).map_err(|e| Error::io(path, e))
}

pub(crate) fn collect_files(path: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<()> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_dir() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<_> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if matches!(
            p.extension().and_then(|e| e.to_str()),
            Some("txt" | "csv" | "det")
        ) {
            out.push(p);
        }
    }
    Ok(())
}
