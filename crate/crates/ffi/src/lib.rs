//! C ABI over the `pedbench` core.
//!
//! Every fallible call returns a [`PbStatus`]. On failure the message is
//! kept per thread and can be read with [`pb_last_error`]. Datasets and
//! detection sets are opaque handles released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pedbench::dataio::{parse_annotations, parse_detections, Dataset, DetectionSet};
use pedbench::evaluator::{EvalSummary, SubsetSpec, Variant};
use pedbench::geometry::{iou, line_to_bbox, AspectRatio, BBox, HeadFeetLine, Point};
use pedbench::oracle::{blur_score, contrast_score, oracle_evaluate, ContrastLevels, OracleConfig, OracleMode, Patch};
use pedbench::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbStatus {
    Ok = 0,
    NullArgument,
    InvalidUtf8,
    Geometry,
    Parse,
    Io,
    Config,
    EmptyDataset,
    EmptyPositiveSet,
    FrameMismatch,
    PatchTooSmall,
    Other,
    Panic,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PbBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Log-average miss rates (fractions, not percent) and counts at FPPI 1.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PbSummary {
    pub mr2: f64,
    pub mr4: f64,
    pub tp: usize,
    pub fp: usize,
    pub missed: usize,
    pub frames: usize,
    pub positives: usize,
}

/// Opaque ground-truth dataset.
pub struct PbDataset(Dataset);

/// Opaque detection set.
pub struct PbDetections(DetectionSet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PbStatus {
    match e {
        Error::Geometry(_) => PbStatus::Geometry,
        Error::Parse { .. } => PbStatus::Parse,
        Error::Io { .. } | Error::Image { .. } => PbStatus::Io,
        Error::Config(_) => PbStatus::Config,
        Error::EmptyDataset => PbStatus::EmptyDataset,
        Error::EmptyPositiveSet => PbStatus::EmptyPositiveSet,
        Error::FrameMismatch(_) => PbStatus::FrameMismatch,
        Error::PatchTooSmall { .. } => PbStatus::PatchTooSmall,
        _ => PbStatus::Other,
    }
}

enum Fail {
    Null(&'static str),
    Utf8(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PbStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            PbStatus::NullArgument
        }
        Ok(Err(Fail::Utf8(what))) => {
            set_error(format!("{what} is not valid UTF-8"));
            PbStatus::InvalidUtf8
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PbStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

fn to_box(b: BBox) -> PbBox {
    PbBox {
        x: b.x(),
        y: b.y(),
        w: b.w(),
        h: b.h(),
    }
}

fn from_box(b: PbBox) -> Result<BBox, Fail> {
    Ok(BBox::new(b.x, b.y, b.w, b.h)?)
}

fn summary(s: &EvalSummary) -> PbSummary {
    PbSummary {
        mr2: s.mr2,
        mr4: s.mr4,
        tp: s.counts_at_fppi1.tp,
        fp: s.counts_at_fppi1.fp,
        missed: s.counts_at_fppi1.fn_,
        frames: s.curve.frames(),
        positives: s.curve.positives(),
    }
}

fn subset(name: &str, iou_threshold: f64) -> Result<SubsetSpec, Fail> {
    let mut spec = SubsetSpec::by_name(name)?;
    if iou_threshold > 0.0 {
        spec.iou_threshold = iou_threshold;
    }
    spec.validate()?;
    Ok(spec)
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Box of the given aspect ratio spanned by a head-to-feet line. Pass
/// `aspect <= 0` for the default 0.41.
///
/// # Safety
/// `out_box` must be null or point to writable memory for one `PbBox`.
#[no_mangle]
pub unsafe extern "C" fn pb_line_to_bbox(
    head_x: f64,
    head_y: f64,
    feet_x: f64,
    feet_y: f64,
    aspect: f64,
    out_box: *mut PbBox,
) -> PbStatus {
    guard(|| {
        let dst = out(out_box, "out_box")?;
        let aspect = if aspect > 0.0 { AspectRatio::new(aspect)? } else { AspectRatio::default() };
        let line = HeadFeetLine::new(Point::new(head_x, head_y), Point::new(feet_x, feet_y))?;
        *dst = to_box(line_to_bbox(&line, aspect)?);
        Ok(())
    })
}

/// # Safety
/// `out_iou` must be null or point to a writable `double`.
#[no_mangle]
pub unsafe extern "C" fn pb_iou(a: PbBox, b: PbBox, out_iou: *mut f64) -> PbStatus {
    guard(|| {
        let dst = out(out_iou, "out_iou")?;
        *dst = iou(&from_box(a)?, &from_box(b)?);
        Ok(())
    })
}

/// Parses canonical annotation text (`F`/`A`/`M` records).
///
/// # Safety
/// `text_ptr` must be null or a NUL-terminated string; `out_dataset` must be null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pb_dataset_parse(text_ptr: *const c_char, out_dataset: *mut *mut PbDataset) -> PbStatus {
    guard(|| {
        let dst = out(out_dataset, "out_dataset")?;
        let (ds, _) = parse_annotations(text(text_ptr, "text")?, "<ffi>")?;
        *dst = Box::into_raw(Box::new(PbDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from `pb_dataset_parse` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pb_dataset_free(ds: *mut PbDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of frames, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pb_dataset_frame_count(ds: *const PbDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.frame_count())
}

/// Number of annotations, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pb_dataset_annotation_count(ds: *const PbDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.annotations().len())
}

/// Parses canonical detection text (`D` records).
///
/// # Safety
/// As for `pb_dataset_parse`.
#[no_mangle]
pub unsafe extern "C" fn pb_detections_parse(
    text_ptr: *const c_char,
    out_detections: *mut *mut PbDetections,
) -> PbStatus {
    guard(|| {
        let dst = out(out_detections, "out_detections")?;
        let dets = parse_detections(text(text_ptr, "text")?, "<ffi>")?;
        *dst = Box::into_raw(Box::new(PbDetections(dets.into_iter().collect())));
        Ok(())
    })
}

/// # Safety
/// `dets` must be null or a handle from `pb_detections_parse` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pb_detections_free(dets: *mut PbDetections) {
    if !dets.is_null() {
        drop(Box::from_raw(dets));
    }
}

/// Evaluates detections against a subset (`"reasonable"`, `"all"` or
/// `"everything"`). `iou <= 0` keeps the subset's default threshold.
///
/// # Safety
/// Handles must be live, `subset_name` NUL-terminated, `out_summary` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_evaluate(
    ds: *const PbDataset,
    dets: *const PbDetections,
    subset_name: *const c_char,
    iou_threshold: f64,
    out_summary: *mut PbSummary,
) -> PbStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        let dets = handle(dets, "detections")?;
        let dst = out(out_summary, "out_summary")?;
        let spec = subset(text(subset_name, "subset")?, iou_threshold)?;
        *dst = summary(&pedbench::evaluator::evaluate(&ds.0, &dets.0, &spec, Variant::O)?);
        Ok(())
    })
}

/// Baseline and oracle summaries; `mode` is `"loc"`, `"bg"` or `"both"`.
///
/// # Safety
/// As for `pb_evaluate`; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_oracle(
    ds: *const PbDataset,
    dets: *const PbDetections,
    subset_name: *const c_char,
    mode: *const c_char,
    out_baseline: *mut PbSummary,
    out_oracle: *mut PbSummary,
) -> PbStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        let dets = handle(dets, "detections")?;
        let base = out(out_baseline, "out_baseline")?;
        let orc = out(out_oracle, "out_oracle")?;
        let spec = subset(text(subset_name, "subset")?, 0.0)?;
        let mode: OracleMode = text(mode, "mode")?.parse()?;
        let r = oracle_evaluate(&ds.0, &dets.0, &spec, Variant::O, mode, OracleConfig::default())?;
        *base = summary(&r.baseline);
        *orc = summary(&r.oracle);
        Ok(())
    })
}

unsafe fn patch(pixels: *const u8, width: usize, height: usize) -> Result<Patch, Fail> {
    if pixels.is_null() {
        return Err(Fail::Null("pixels"));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Fail::Core(Error::Config("patch size overflows".into())))?;
    Ok(Patch::from_u8(width, height, std::slice::from_raw_parts(pixels, n))?)
}

/// Blur of an 8-bit grayscale patch, row major: 0 sharp, 1 flat.
///
/// # Safety
/// `pixels` must point to `width * height` bytes; `out_score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_blur_score(pixels: *const u8, width: usize, height: usize, out_score: *mut f64) -> PbStatus {
    guard(|| {
        let dst = out(out_score, "out_score")?;
        *dst = blur_score(&patch(pixels, width, height)?)?;
        Ok(())
    })
}

/// Spread between the 5th and 95th intensity percentiles, in [0, 1].
///
/// # Safety
/// As for `pb_blur_score`.
#[no_mangle]
pub unsafe extern "C" fn pb_contrast_score(
    pixels: *const u8,
    width: usize,
    height: usize,
    out_score: *mut f64,
) -> PbStatus {
    guard(|| {
        let dst = out(out_score, "out_score")?;
        *dst = contrast_score(&patch(pixels, width, height)?, ContrastLevels::default());
        Ok(())
    })
}
