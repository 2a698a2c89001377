//! Compatibility with the Caltech toolbox text exports.
//!
//! Annotations use the 12-field `bbGt` row
//! `label x y w h occluded vx vy vw vh ignore angle`, either one file per
//! frame named `<video>_I<index>.txt`, or one file per video where each
//! frame block starts with a `% frame <index>` line. Detections are CSV rows
//! `frame,x,y,w,h,score` with a 1-based frame number, one file per video.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{collect_files, Annotation, Dataset, Detection, FrameId, Label, Source};
use crate::error::{Error, Result};
use crate::geometry::BBox;

const HEADER: &str = "% bbGt version=3";

/// Maps the 1-based CSV frame number `n` to the frame index
/// `(n - 1) * stride + offset`. The default is the identity.
///
/// The Caltech test protocol evaluates every 30th frame starting at 29, so
/// `stride = 30, offset = 29` lines detections up with `I00029`-style
/// annotation files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvFrameMap {
    pub stride: u32,
    pub offset: u32,
}

impl Default for CsvFrameMap {
    fn default() -> Self {
        CsvFrameMap {
            stride: 1,
            offset: 1,
        }
    }
}

impl CsvFrameMap {
    fn map(&self, n: u32) -> Option<u32> {
        (n - 1).checked_mul(self.stride)?.checked_add(self.offset)
    }
}

/// Video id for a per-video file: `set06/V000.txt` becomes `set06_V000`,
/// anything else uses the file stem.
fn video_from_path(path: &Path) -> String {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("video")
        .to_string();
    match path
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|p| p.to_str())
    {
        Some(parent) if parent.starts_with("set") => format!("{parent}_{stem}"),
        _ => stem,
    }
}

/// `set00_V000_I00029` → (`set00_V000`, 29).
fn frame_from_stem(stem: &str) -> Option<(String, u32)> {
    let (video, idx) = stem.rsplit_once("_I")?;
    if video.is_empty() || idx.is_empty() || !idx.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((video.to_string(), idx.parse().ok()?))
}

struct Reader {
    frames: Vec<FrameId>,
    annotations: Vec<Annotation>,
    warnings: Vec<String>,
    next_id: u64,
}

impl Reader {
    fn row(&mut self, origin: &str, line_no: usize, line: &str, frame: &FrameId) -> Result<()> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |field: usize, reason: String| {
            // 1-based column of the offending field
            let col = line
                .split_whitespace()
                .take(field)
                .last()
                .map(|f| f.as_ptr() as usize - line.as_ptr() as usize + 1)
                .unwrap_or(1);
            Error::parse(origin, line_no, col, reason)
        };
        if fields.len() != 12 {
            return Err(err(
                fields.len().min(12),
                format!("expected 12 fields, found {}", fields.len()),
            ));
        }
        let mut nums = [0.0f64; 11];
        for (i, f) in fields[1..].iter().enumerate() {
            nums[i] = match f.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => return Err(err(i + 2, format!("expected a number, got {f:?}"))),
            };
        }
        let label = Label::parse_known(fields[0]).unwrap_or_else(|| {
            self.warnings.push(format!(
                "{origin}:{line_no}: unknown label {:?} kept as \"other\"",
                fields[0]
            ));
            Label::Other
        });
        let bbox = BBox::new(nums[0], nums[1], nums[2], nums[3]).map_err(|e| err(2, e.to_string()))?;
        let occluded = nums[4] != 0.0;
        let visible = if occluded {
            if nums[7] > 0.0 && nums[8] > 0.0 {
                Some(BBox::new(nums[5], nums[6], nums[7], nums[8]).map_err(|e| err(7, e.to_string()))?)
            } else {
                self.warnings.push(format!(
                    "{origin}:{line_no}: occluded flag set without a visible box; treated as unoccluded"
                ));
                None
            }
        } else {
            None
        };
        let ignore = match nums[9] {
            0.0 => false,
            1.0 => true,
            v => return Err(err(11, format!("ignore flag must be 0 or 1, got {v}"))),
        };
        // nums[10] is the angle: validated above, not used.
        self.annotations.push(Annotation {
            id: self.next_id,
            frame: frame.clone(),
            label,
            bbox,
            visible,
            ignore,
            source: Source::Original,
        });
        self.next_id += 1;
        Ok(())
    }

    fn file(&mut self, path: &Path) -> Result<()> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let per_frame = frame_from_stem(stem);
        let video = video_from_path(path);
        let mut current = match &per_frame {
            Some((v, i)) => {
                let f = FrameId::new(v.clone(), *i)
                    .map_err(|e| Error::parse(&origin, 1, 1, e.to_string()))?;
                self.frames.push(f.clone());
                Some(f)
            }
            None => None,
        };
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('%') {
                let mut words = rest.split_whitespace();
                if words.next() == Some("frame") {
                    if per_frame.is_some() {
                        return Err(Error::parse(&origin, i + 1, 1, "frame block in a per-frame file"));
                    }
                    let idx = words
                        .next()
                        .and_then(|w| w.parse::<u32>().ok())
                        .ok_or_else(|| Error::parse(&origin, i + 1, 1, "bad frame block header"))?;
                    let f = FrameId::new(video.clone(), idx)
                        .map_err(|e| Error::parse(&origin, i + 1, 1, e.to_string()))?;
                    self.frames.push(f.clone());
                    current = Some(f);
                }
                continue;
            }
            let frame = current.clone().ok_or_else(|| {
                Error::parse(
                    &origin,
                    i + 1,
                    1,
                    "row outside a frame block (name files <video>_I<index>.txt or add '% frame <n>')",
                )
            })?;
            self.row(&origin, i + 1, line, &frame)?;
        }
        Ok(())
    }
}

pub(super) fn read(path: &Path) -> Result<(Dataset, Vec<String>)> {
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    let mut reader = Reader {
        frames: Vec::new(),
        annotations: Vec::new(),
        warnings: Vec::new(),
        next_id: 0,
    };
    for f in files {
        reader.file(&f)?;
    }
    let (ds, mut more) = Dataset::new_with_warnings(
        reader.frames,
        reader.annotations,
        vec![format!("caltech-text import of {}", path.display())],
    )?;
    reader.warnings.append(&mut more);
    Ok((ds, reader.warnings))
}

fn format_row(a: &Annotation) -> String {
    let b = &a.bbox;
    let (occ, v) = match &a.visible {
        Some(v) => (1, [v.x(), v.y(), v.w(), v.h()]),
        None => (0, [0.0; 4]),
    };
    format!(
        "{} {} {} {} {} {} {} {} {} {} {} 0",
        a.label,
        b.x(),
        b.y(),
        b.w(),
        b.h(),
        occ,
        v[0],
        v[1],
        v[2],
        v[3],
        u8::from(a.ignore)
    )
}

/// Writes one `<video>_I<index:05>.txt` file per frame into directory `dir`.
pub(super) fn write(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (frame, anns) in ds.frame_groups() {
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        for a in anns {
            let _ = writeln!(s, "{}", format_row(a));
        }
        let path: PathBuf = dir.join(format!("{}_I{:05}.txt", frame.video, frame.index));
        std::fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub(super) fn parse_csv(text: &str, path: &Path, map: CsvFrameMap) -> Result<Vec<Detection>> {
    let origin = path.display().to_string();
    let video = video_from_path(path);
    parse_csv_rows(text, &origin, &video, map)
}

fn parse_csv_rows(text: &str, origin: &str, video: &str, map: CsvFrameMap) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                origin,
                line_no,
                1,
                format!("row {line_no}: expected 6 comma-separated fields, found {}", fields.len()),
            ));
        }
        let col_of = |k: usize| fields[..k].iter().map(|f| f.len() + 1).sum::<usize>() + 1;
        let frame_no: u32 = fields[0]
            .parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0 && *v >= 1.0 && *v <= u32::MAX as f64)
            .map(|v| v as u32)
            .ok_or_else(|| {
                Error::parse(
                    origin,
                    line_no,
                    1,
                    format!("row {line_no}: frame must be a positive integer, got {:?}", fields[0]),
                )
            })?;
        let mut nums = [0.0f64; 5];
        let names = ["x", "y", "w", "h", "score"];
        for k in 0..5 {
            nums[k] = match fields[k + 1].parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    return Err(Error::parse(
                        origin,
                        line_no,
                        col_of(k + 1),
                        format!(
                            "row {line_no}: {} is not a number: {:?}",
                            names[k],
                            fields[k + 1]
                        ),
                    ))
                }
            };
        }
        let index = map.map(frame_no).ok_or_else(|| {
            Error::parse(origin, line_no, 1, format!("row {line_no}: frame index overflows"))
        })?;
        let frame = FrameId::new(video, index).map_err(|e| Error::parse(origin, line_no, 1, e.to_string()))?;
        let bbox = BBox::new(nums[0], nums[1], nums[2], nums[3])
            .map_err(|e| Error::parse(origin, line_no, col_of(1), format!("row {line_no}: {e}")))?;
        out.push(Detection {
            frame,
            bbox,
            score: nums[4],
        });
    }
    Ok(out)
}

/// Parses CSV detection rows for an explicit video id.
pub fn read_caltech_csv(text: &str, video: &str, map: CsvFrameMap) -> Result<Vec<Detection>> {
    parse_csv_rows(text, video, video, map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{read_annotations_with_warnings, write_annotations, AnnotationFormat};

    #[test]
    fn csv_row_maps_fields() {
        let dets = read_caltech_csv("1,29.5,10,41,100,0.87\n", "v", CsvFrameMap::default()).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].frame, FrameId::new("v", 1).unwrap());
        assert_eq!(dets[0].bbox, BBox::new(29.5, 10.0, 41.0, 100.0).unwrap());
        assert_eq!(dets[0].score, 0.87);

        let strided = read_caltech_csv(
            "2,1,1,1,1,0\n",
            "v",
            CsvFrameMap {
                stride: 30,
                offset: 29,
            },
        )
        .unwrap();
        assert_eq!(strided[0].frame.index, 59);
    }

    #[test]
    fn csv_errors_name_the_row() {
        assert!(read_caltech_csv("", "v", CsvFrameMap::default()).unwrap().is_empty());
        let err = read_caltech_csv("1,0,0,1,1,0.5\n2,0,0,1,1,high\n", "v", CsvFrameMap::default())
            .unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        assert!(read_caltech_csv("0,0,0,1,1,1\n", "v", CsvFrameMap::default()).is_err());
        assert!(read_caltech_csv("1,0,0,1,1\n", "v", CsvFrameMap::default()).is_err());
    }

    #[test]
    fn video_ids_from_paths() {
        assert_eq!(video_from_path(Path::new("res/set06/V000.txt")), "set06_V000");
        assert_eq!(video_from_path(Path::new("dets/clipA.csv")), "clipA");
        assert_eq!(
            frame_from_stem("set00_V000_I00029"),
            Some(("set00_V000".into(), 29))
        );
        assert_eq!(frame_from_stem("set00_V000"), None);
    }

    #[test]
    fn per_frame_directory() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..10 {
            std::fs::write(dir.path().join(format!("clip_I{i:05}.txt")), format!("{HEADER}\n")).unwrap();
        }
        std::fs::write(
            dir.path().join("clip_I00003.txt"),
            format!("{HEADER}\nperson 29 10 41 100 0 0 0 0 0 0 0\n"),
        )
        .unwrap();
        let (ds, warnings) = read_annotations_with_warnings(dir.path(), AnnotationFormat::CaltechText).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(ds.frame_count(), 10);
        assert_eq!(ds.annotations().len(), 1);
        let a = &ds.annotations()[0];
        assert_eq!(a.frame, FrameId::new("clip", 3).unwrap());
        assert_eq!(a.label, Label::Person);
        assert!(!a.ignore);
        assert_eq!(a.visible, None);
    }

    #[test]
    fn per_video_blocks_and_occlusion_warning() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("V007.txt");
        std::fs::write(
            &path,
            "% bbGt version=3\n% frame 29\nperson 0 0 10 20 1 0 0 10 10 0 0\n% frame 59\n\
             person 0 0 10 20 1 0 0 0 0 0 0\npeople 5 5 30 30 0 0 0 0 0 1 0\nwalker 1 1 2 2 0 0 0 0 0 0 0\n",
        )
        .unwrap();
        let (ds, warnings) = read_annotations_with_warnings(&path, AnnotationFormat::CaltechText).unwrap();
        assert_eq!(ds.frame_count(), 2);
        assert_eq!(ds.annotations().len(), 4);
        assert_eq!(warnings.len(), 2, "{warnings:?}");
        let anns = ds.annotations();
        assert_eq!(anns[0].visible, Some(BBox::new(0.0, 0.0, 10.0, 10.0).unwrap()));
        assert_eq!(anns[1].visible, None);
        assert!(anns[2].ignore && anns[2].label == Label::People);
        assert_eq!(anns[3].label, Label::Other);
    }

    #[test]
    fn export_sets_ignore_field() {
        let f = FrameId::new("v", 4).unwrap();
        let mut crowd = Annotation::person(0, f.clone(), BBox::new(1.0, 2.0, 30.0, 40.0).unwrap());
        crowd.label = Label::People;
        crowd.ignore = true;
        let ds = Dataset::new([f], vec![crowd], vec![]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_annotations(&ds, dir.path(), AnnotationFormat::CaltechText).unwrap();
        let text = std::fs::read_to_string(dir.path().join("v_I00004.txt")).unwrap();
        assert_eq!(text, "% bbGt version=3\npeople 1 2 30 40 0 0 0 0 0 1 0\n");
        let fields: Vec<&str> = text.lines().nth(1).unwrap().split(' ').collect();
        assert_eq!(fields[10], "1");
    }

    #[test]
    fn malformed_row_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v_I00001.txt");
        std::fs::write(&path, "person 1 2 3 x 0 0 0 0 0 0 0\n").unwrap();
        match read_annotations_with_warnings(&path, AnnotationFormat::CaltechText) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 1);
                assert_eq!(column, 14);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
