//! Sparse keyframe interpolation, the scheme behind the original per-frame
//! annotations, and a demonstration of the offset it introduces on walking
//! pedestrians.

use std::ops::RangeInclusive;

use serde::Serialize;

use super::{Annotation, FrameId, Label, Source};
use crate::error::{Error, Result};
use crate::geometry::{iou, AspectRatio, BBox};

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub index: u32,
    pub bbox: BBox,
    pub visible: Option<BBox>,
    pub ignore: bool,
}

/// One annotated object across a video.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub video: String,
    pub label: Label,
    pub keyframes: Vec<Keyframe>,
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

fn lerp_box(a: &BBox, b: &BBox, t: f64) -> Result<BBox> {
    BBox::new(
        lerp(a.x(), b.x(), t),
        lerp(a.y(), b.y(), t),
        lerp(a.w(), b.w(), t),
        lerp(a.h(), b.h(), t),
    )
}

fn check_track(keys: &[Keyframe]) -> Result<()> {
    if keys.is_empty() {
        return Err(Error::EmptyTrack);
    }
    if let Some(w) = keys.windows(2).find(|w| w[0].index >= w[1].index) {
        return Err(Error::Config(format!(
            "keyframes must be strictly increasing, found {} then {}",
            w[0].index, w[1].index
        )));
    }
    Ok(())
}

/// Box at a (possibly fractional) frame position. Outside the keyframe span
/// the nearest keyframe is held.
fn state_at(keys: &[Keyframe], pos: f64) -> Result<(BBox, Option<BBox>, bool)> {
    let first = &keys[0];
    let last = &keys[keys.len() - 1];
    if pos <= f64::from(first.index) {
        return Ok((first.bbox, first.visible, first.ignore));
    }
    if pos >= f64::from(last.index) {
        return Ok((last.bbox, last.visible, last.ignore));
    }
    // last keyframe with index <= pos
    let k = keys.partition_point(|k| f64::from(k.index) <= pos) - 1;
    let (a, b) = (&keys[k], &keys[k + 1]);
    let t = (pos - f64::from(a.index)) / f64::from(b.index - a.index);
    let bbox = lerp_box(&a.bbox, &b.bbox, t)?;
    let visible = match (&a.visible, &b.visible) {
        (Some(va), Some(vb)) => Some(lerp_box(va, vb, t)?),
        (va, _) => *va,
    };
    Ok((bbox, visible, a.ignore))
}

/// Per-frame annotations for `range`, each coordinate linearly interpolated
/// between the bracketing keyframes. Ignore flags and unmatched visible
/// boxes come from the earlier keyframe. Ids start at `first_id`.
pub fn interpolate_keyframes(
    track: &Track,
    range: RangeInclusive<u32>,
    first_id: u64,
) -> Result<Vec<Annotation>> {
    check_track(&track.keyframes)?;
    let mut out = Vec::new();
    for (n, f) in range.enumerate() {
        let (bbox, visible, ignore) = state_at(&track.keyframes, f64::from(f))?;
        out.push(Annotation {
            id: first_id + n as u64,
            frame: FrameId::new(track.video.clone(), f)?,
            label: track.label,
            bbox,
            visible,
            ignore,
            source: Source::Original,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct OffsetSample {
    pub frame: u32,
    pub true_y: f64,
    pub interpolated_y: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OffsetDemo {
    pub amplitude: f64,
    pub stride: u32,
    /// IoU between the true and the interpolated box a quarter period after
    /// a keyframe, where the vertical bob peaks.
    pub mid_phase_iou: f64,
    pub samples: Vec<OffsetSample>,
}

/// A pedestrian bobbing vertically as `y(f) = y0 + amplitude * sin(2πf / stride)`,
/// annotated only on keyframes every `stride` frames and linearly
/// interpolated in between. Keyframes land on zero phase, so the
/// interpolation is flat and misses the bob entirely.
pub fn sinusoid_offset_demo(
    amplitude: f64,
    stride: u32,
    box_height: f64,
    periods: u32,
    aspect: AspectRatio,
) -> Result<OffsetDemo> {
    if stride < 2 {
        return Err(Error::Config("keyframe stride must be at least 2".into()));
    }
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::Config(format!("amplitude must be >= 0, got {amplitude}")));
    }
    let periods = periods.max(1);
    let w = aspect.value() * box_height;
    let y0 = 2.0 * amplitude + 10.0;
    let true_box = |pos: f64| {
        let phase = 2.0 * std::f64::consts::PI * pos / f64::from(stride);
        BBox::new(100.0, y0 + amplitude * phase.sin(), w, box_height)
    };
    let keyframes = (0..=periods)
        .map(|k| {
            let index = k * stride;
            Ok(Keyframe {
                index,
                bbox: true_box(f64::from(index))?,
                visible: None,
                ignore: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    check_track(&keyframes)?;

    let mid = f64::from(stride) / 4.0;
    let mid_phase_iou = iou(&true_box(mid)?, &state_at(&keyframes, mid)?.0);

    let mut samples = Vec::new();
    for f in 0..=periods * stride {
        let truth = true_box(f64::from(f))?;
        let interp = state_at(&keyframes, f64::from(f))?.0;
        samples.push(OffsetSample {
            frame: f,
            true_y: truth.y(),
            interpolated_y: interp.y(),
            iou: iou(&truth, &interp),
        });
    }
    Ok(OffsetDemo {
        amplitude,
        stride,
        mid_phase_iou,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(index: u32, x: f64) -> Keyframe {
        Keyframe {
            index,
            bbox: BBox::new(x, 0.0, 10.0, 20.0).unwrap(),
            visible: None,
            ignore: false,
        }
    }

    fn track(keys: Vec<Keyframe>) -> Track {
        Track {
            video: "v".into(),
            label: Label::Person,
            keyframes: keys,
        }
    }

    #[test]
    fn constant_between_identical_keys() {
        let out = interpolate_keyframes(&track(vec![key(0, 3.0), key(10, 3.0)]), 0..=10, 0).unwrap();
        assert_eq!(out.len(), 11);
        assert!(out.iter().all(|a| a.bbox == key(0, 3.0).bbox));
        assert_eq!(out[10].id, 10);
    }

    #[test]
    fn linear_midpoint_and_exact_keys() {
        let t = track(vec![key(0, 0.0), key(10, 10.0), key(20, 4.0)]);
        let out = interpolate_keyframes(&t, 0..=20, 0).unwrap();
        assert_eq!(out[5].bbox.x(), 5.0);
        assert_eq!(out[0].bbox.x(), 0.0);
        assert_eq!(out[10].bbox.x(), 10.0);
        assert_eq!(out[20].bbox.x(), 4.0);
    }

    #[test]
    fn holds_outside_span() {
        let t = track(vec![key(5, 1.0), key(10, 2.0)]);
        let out = interpolate_keyframes(&t, 0..=15, 0).unwrap();
        assert_eq!(out[0].bbox.x(), 1.0);
        assert_eq!(out[15].bbox.x(), 2.0);
    }

    #[test]
    fn rejects_bad_tracks() {
        assert!(matches!(
            interpolate_keyframes(&track(vec![]), 0..=1, 0),
            Err(Error::EmptyTrack)
        ));
        assert!(interpolate_keyframes(&track(vec![key(3, 0.0), key(3, 1.0)]), 0..=1, 0).is_err());
    }

    #[test]
    fn visible_interpolates_when_both_ends_have_one() {
        let mut a = key(0, 0.0);
        let mut b = key(10, 10.0);
        a.visible = Some(BBox::new(0.0, 0.0, 10.0, 10.0).unwrap());
        b.visible = Some(BBox::new(10.0, 0.0, 10.0, 10.0).unwrap());
        a.ignore = true;
        let out = interpolate_keyframes(&track(vec![a, b]), 5..=5, 0).unwrap();
        assert_eq!(out[0].visible.unwrap().x(), 5.0);
        assert!(out[0].ignore);
    }

    #[test]
    fn flat_walk_has_perfect_overlap() {
        let demo = sinusoid_offset_demo(0.0, 30, 100.0, 2, AspectRatio::default()).unwrap();
        assert_eq!(demo.mid_phase_iou, 1.0);
        assert!(demo.samples.iter().all(|s| s.iou == 1.0));
        assert_eq!(demo.samples.len(), 61);
    }
}
