//! Line-delimited canonical text format.
//!
//! ```text
//! M <free text>
//! F <video>/<frame>
//! A <video>/<frame> <id> <label> <x> <y> <w> <h> [V <vx> <vy> <vw> <vh>] <ignore:0|1> <source>
//! D <video>/<frame> <x> <y> <w> <h> <score>
//! ```
//!
//! Numbers are written in shortest round-trip decimal form. `F` records
//! declare the frame universe so that empty frames survive a round trip.

use std::fmt::Write as _;

use super::{Annotation, Dataset, Detection, DetectionSet, FrameId, Label, Source};
use crate::error::{Error, Result};
use crate::geometry::BBox;

struct Tokens<'a> {
    origin: &'a str,
    line: usize,
    items: Vec<(usize, &'a str)>,
}

impl<'a> Tokens<'a> {
    fn split(origin: &'a str, line: usize, text: &'a str) -> Self {
        let mut items = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (false, None) => start = Some(i),
                (true, Some(s)) => {
                    items.push((s + 1, &text[s..i]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            items.push((s + 1, &text[s..]));
        }
        Tokens {
            origin,
            line,
            items,
        }
    }

    fn err(&self, idx: usize, reason: impl Into<String>) -> Error {
        let col = self
            .items
            .get(idx)
            .map(|t| t.0)
            .or_else(|| self.items.last().map(|t| t.0 + t.1.len()))
            .unwrap_or(1);
        Error::parse(self.origin, self.line, col, reason)
    }

    fn str(&self, idx: usize, what: &str) -> Result<&'a str> {
        self.items
            .get(idx)
            .map(|t| t.1)
            .ok_or_else(|| self.err(idx, format!("missing {what}")))
    }

    fn num(&self, idx: usize, what: &str) -> Result<f64> {
        let s = self.str(idx, what)?;
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(idx, format!("{what}: expected a finite number, got {s:?}"))),
        }
    }

    fn frame(&self, idx: usize) -> Result<FrameId> {
        let s = self.str(idx, "frame id")?;
        s.parse().map_err(|e: Error| self.err(idx, e.to_string()))
    }

    fn bbox(&self, idx: usize) -> Result<BBox> {
        let x = self.num(idx, "x")?;
        let y = self.num(idx + 1, "y")?;
        let w = self.num(idx + 2, "w")?;
        let h = self.num(idx + 3, "h")?;
        BBox::new(x, y, w, h).map_err(|e| self.err(idx, e.to_string()))
    }
}

fn parse_annotation(t: &Tokens<'_>, warnings: &mut Vec<String>) -> Result<Annotation> {
    let frame = t.frame(1)?;
    let id_str = t.str(2, "id")?;
    let id = id_str
        .parse::<u64>()
        .map_err(|_| t.err(2, format!("id: expected an unsigned integer, got {id_str:?}")))?;
    let label_str = t.str(3, "label")?;
    let label = Label::parse_known(label_str).unwrap_or_else(|| {
        warnings.push(format!(
            "{}:{}: unknown label {label_str:?} kept as \"other\"",
            t.origin, t.line
        ));
        Label::Other
    });
    let bbox = t.bbox(4)?;
    let (visible, next) = if t.str(8, "ignore flag")? == "V" {
        (Some(t.bbox(9)?), 13)
    } else {
        (None, 8)
    };
    let ignore = match t.str(next, "ignore flag")? {
        "0" => false,
        "1" => true,
        other => return Err(t.err(next, format!("ignore flag must be 0 or 1, got {other:?}"))),
    };
    let source = t
        .str(next + 1, "source")?
        .parse::<Source>()
        .map_err(|e| t.err(next + 1, e.to_string()))?;
    if t.items.len() > next + 2 {
        return Err(t.err(next + 2, "trailing fields"));
    }
    Ok(Annotation {
        id,
        frame,
        label,
        bbox,
        visible,
        ignore,
        source,
    })
}

/// Parses `A` records only (other record kinds are rejected). Used for
/// per-frame payloads.
pub fn parse_annotation_records(text: &str, origin: &str) -> Result<(Vec<Annotation>, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = Tokens::split(origin, i + 1, line);
        match t.items.first().map(|x| x.1) {
            None => {}
            Some(s) if s.starts_with('#') => {}
            Some("A") => out.push(parse_annotation(&t, &mut warnings)?),
            Some(other) => return Err(t.err(0, format!("expected an A record, got {other:?}"))),
        }
    }
    Ok((out, warnings))
}

pub fn parse_annotations(text: &str, origin: &str) -> Result<(Dataset, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut frames = Vec::new();
    let mut annotations = Vec::new();
    let mut meta = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = Tokens::split(origin, i + 1, line);
        match t.items.first().map(|x| x.1) {
            None => {}
            Some(s) if s.starts_with('#') => {}
            Some("M") => {
                let rest = line.trim_start();
                meta.push(rest[1..].strip_prefix(' ').unwrap_or(&rest[1..]).to_string());
            }
            Some("F") => {
                frames.push(t.frame(1)?);
                if t.items.len() > 2 {
                    return Err(t.err(2, "trailing fields"));
                }
            }
            Some("A") => {
                let a = parse_annotation(&t, &mut warnings)?;
                frames.push(a.frame.clone());
                annotations.push(a);
            }
            Some(other) => return Err(t.err(0, format!("unknown record type {other:?}"))),
        }
    }
    let (ds, mut more) = Dataset::new_with_warnings(frames, annotations, meta)?;
    warnings.append(&mut more);
    Ok((ds, warnings))
}

pub fn format_annotation_line(a: &Annotation) -> String {
    let mut s = String::new();
    let b = &a.bbox;
    let _ = write!(
        s,
        "A {} {} {} {} {} {} {}",
        a.frame,
        a.id,
        a.label,
        b.x(),
        b.y(),
        b.w(),
        b.h()
    );
    if let Some(v) = &a.visible {
        let _ = write!(s, " V {} {} {} {}", v.x(), v.y(), v.w(), v.h());
    }
    let _ = write!(s, " {} {}", u8::from(a.ignore), a.source);
    s
}

pub fn format_annotations(ds: &Dataset) -> String {
    let mut s = String::new();
    for m in ds.meta() {
        let _ = writeln!(s, "M {m}");
    }
    for f in ds.frames() {
        let _ = writeln!(s, "F {f}");
    }
    for a in ds.annotations() {
        s.push_str(&format_annotation_line(a));
        s.push('\n');
    }
    s
}

pub fn parse_detections(text: &str, origin: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = Tokens::split(origin, i + 1, line);
        match t.items.first().map(|x| x.1) {
            None => {}
            Some(s) if s.starts_with('#') => {}
            Some("D") => {
                let frame = t.frame(1)?;
                let bbox = t.bbox(2)?;
                let score = t.num(6, "score")?;
                if t.items.len() > 7 {
                    return Err(t.err(7, "trailing fields"));
                }
                out.push(Detection { frame, bbox, score });
            }
            Some(other) => return Err(t.err(0, format!("expected a D record, got {other:?}"))),
        }
    }
    Ok(out)
}

pub fn format_detections(dets: &DetectionSet) -> String {
    let mut s = String::new();
    for d in dets.iter() {
        let b = &d.bbox;
        let _ = writeln!(
            s,
            "D {} {} {} {} {} {}",
            d.frame,
            b.x(),
            b.y(),
            b.w(),
            b.h(),
            d.score
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
M from a test
F v/0
F v/1
F v/2
A v/0 3 person 29.5 10 41 100 0 original
A v/0 4 people 100 20 80 60 1 new
A v/2 7 person 1.25 2 3 4 V 1.25 2 3 2 0 pruned
";

    #[test]
    fn parses_and_reformats_byte_identical() {
        let (ds, warnings) = parse_annotations(SAMPLE, "sample").unwrap();
        assert!(warnings.is_empty());
        assert_eq!(ds.frame_count(), 3);
        assert_eq!(ds.annotations().len(), 3);
        assert_eq!(ds.meta(), &["from a test".to_string()]);
        let a = &ds.annotations()[2];
        assert_eq!(a.visible, Some(BBox::new(1.25, 2.0, 3.0, 2.0).unwrap()));
        assert_eq!(format_annotations(&ds), SAMPLE);
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let shuffled = "F v/2\nA v/2 7 person 1.25 2 3 4 V 1.25 2 3 2 0 pruned\nM from a test\nF v/1\nA v/0 4 people 100 20 80 60 1 new\nA v/0 3 person 29.5 10 41 100 0 original\n";
        let (a, _) = parse_annotations(SAMPLE, "a").unwrap();
        let (b, _) = parse_annotations(shuffled, "b").unwrap();
        assert_eq!(a, b);
        assert_eq!(format_annotations(&a), format_annotations(&b));
    }

    #[test]
    fn unknown_label_becomes_other() {
        let (ds, warnings) = parse_annotations("A v/0 1 cyclist 0 0 1 2 0 original\n", "x").unwrap();
        assert_eq!(ds.annotations()[0].label, Label::Other);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn reports_line_and_column() {
        let err = parse_annotations("F v/0\nA v/0 1 person 0 0 abc 2 0 original\n", "f.txt")
            .unwrap_err();
        match err {
            Error::Parse {
                path, line, column, ..
            } => {
                assert_eq!(path, "f.txt");
                assert_eq!(line, 2);
                assert_eq!(column, 20);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_annotations("A v/0 1 person 0 0 1 2 2 original\n", "x").is_err());
        assert!(parse_annotations("A v/0 1 person 0 0 0 2 0 original\n", "x").is_err());
        assert!(parse_annotations("A v/0 1 person 0 0 1 2 0 somewhere\n", "x").is_err());
        assert!(parse_annotations("Q v/0\n", "x").is_err());
    }

    #[test]
    fn detections_roundtrip() {
        let text = "D v/1 29.5 10 41 100 0.87\nD v/0 1 2 3 4 -1.5\n";
        let dets: DetectionSet = parse_detections(text, "d").unwrap().into_iter().collect();
        assert_eq!(dets.len(), 2);
        // grouped by frame on output
        assert_eq!(
            format_detections(&dets),
            "D v/0 1 2 3 4 -1.5\nD v/1 29.5 10 41 100 0.87\n"
        );
        assert!(parse_detections("D v/0 1 2 3 4 nan\n", "d").is_err());
    }
}
