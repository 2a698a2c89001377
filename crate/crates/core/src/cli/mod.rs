//! `pedbench` command line: argument parsing, command dispatch and
//! artifact output.

pub mod manifest;
pub mod plot;
pub mod serve;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dataio::{
    format_annotations, format_detections, generate_synthetic_scene, read_annotations, read_detections,
    sinusoid_offset_demo, AnnotationFormat, CsvFrameMap, Dataset, DetectionSet, SceneParams, ScoreModel,
};
use crate::error::{Error, Result};
use crate::evaluator::{
    curve_csv, log_average_miss_rate, median_tp_iou, mr_vs_iou_sweep, sweep_csv, EvalSummary, Evaluation,
    SubsetSpec, Variant,
};
use crate::geometry::AspectRatio;
use crate::oracle::{
    classify_false_positives, correlates_csv, export_correlates, fp_breakdown, oracle_from_evaluation,
    ContrastLevels, CorrelateConfig, ImageSource, OracleConfig, OracleMode, ANALYSIS_FPPI,
};
use crate::sanitizer::{align, consolidate_flags, diff, prune, review_csv, AlignConfig};
use manifest::Artifacts;
use plot::{render_plot, PlotEntry, DEFAULT_RANGE};

#[derive(Debug, Parser)]
#[command(name = "pedbench", version, about = "Pedestrian detection evaluation and annotation tools")]
pub struct Cli {
    /// Worker threads for batch commands (outputs do not depend on it).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Miss rate versus FPPI curves and log-average miss rates.
    Eval(EvalArgs),
    /// Re-score with localisation and/or background false positives forgiven.
    Oracle(OracleArgs),
    /// MR-2 as a function of the matching IoU threshold.
    Sweep(SweepArgs),
    /// Prune original annotations against a new set.
    Prune(PruneArgs),
    /// Re-align annotations to matching detections.
    Align(AlignArgs),
    /// Agreement between two annotation sets.
    Diff(DiffArgs),
    /// Size, blur and contrast of true and false positives.
    Correlates(CorrelatesArgs),
    /// Keyframe interpolation offset on a bobbing pedestrian.
    Interp(InterpArgs),
    /// Generate a synthetic scene with known detection roles.
    Synth(SynthArgs),
    /// Serve the annotation review API.
    Serve(ServeArgs),
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> std::result::Result<(T, T), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected two comma separated values, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<T>().map_err(|_| format!("bad value {v:?} in {s:?}"));
    Ok((p(a)?, p(b)?))
}

fn parse_f64_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    parse_pair(s)
}

fn parse_u32_pair(s: &str) -> std::result::Result<(u32, u32), String> {
    parse_pair(s)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnnotationArgs {
    /// Ground truth: a canonical file, or a Caltech text file or directory.
    #[arg(long)]
    pub annotations: PathBuf,
    /// canonical | caltech-text
    #[arg(long, default_value = "canonical")]
    pub format: String,
}

impl AnnotationArgs {
    fn format(&self) -> Result<AnnotationFormat> {
        self.format.parse()
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SubsetArgs {
    /// reasonable | all | everything | custom (custom starts from `all`)
    #[arg(long, default_value = "reasonable")]
    pub subset: String,
    #[arg(long)]
    pub height_min: Option<f64>,
    /// Exclusive upper bound on ground-truth height.
    #[arg(long)]
    pub height_max: Option<f64>,
    #[arg(long)]
    pub occ_min: Option<f64>,
    #[arg(long)]
    pub occ_max: Option<f64>,
    /// Matching IoU threshold.
    #[arg(long)]
    pub iou: Option<f64>,
    /// Match raw boxes instead of aspect-normalized ones.
    #[arg(long)]
    pub no_aspect_normalize: bool,
    /// Annotation variant tag for reports: O (original) or N (new).
    #[arg(long, default_value = "O")]
    pub variant: String,
}

impl SubsetArgs {
    pub fn spec(&self) -> Result<SubsetSpec> {
        let mut s = match self.subset.as_str() {
            "custom" => SubsetSpec::all(),
            name => SubsetSpec::by_name(name)?,
        };
        if let Some(v) = self.height_min {
            s.height_min = v;
        }
        if self.height_max.is_some() {
            s.height_max = self.height_max;
        }
        if let Some(v) = self.occ_min {
            s.occlusion_min = v;
        }
        if let Some(v) = self.occ_max {
            s.occlusion_max = v;
        }
        if let Some(v) = self.iou {
            s.iou_threshold = v;
        }
        if self.no_aspect_normalize {
            s.aspect_normalize = false;
        }
        s.validate()?;
        Ok(s)
    }

    fn variant(&self) -> Result<Variant> {
        self.variant.parse()
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetectionArgs {
    /// Detections: canonical `D` file, Caltech CSV file, or a directory.
    #[arg(long)]
    pub detections: PathBuf,
    /// Frame mapping for Caltech CSV rows, `stride,offset`.
    #[arg(long, value_parser = parse_u32_pair, default_value = "1,1")]
    pub det_frame_map: (u32, u32),
}

fn frame_map((stride, offset): (u32, u32)) -> Result<CsvFrameMap> {
    if stride == 0 {
        return Err(Error::Config("frame map stride must be > 0".into()));
    }
    Ok(CsvFrameMap { stride, offset })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub gt: AnnotationArgs,
    /// One or more detection sources, each becoming a curve.
    #[arg(long, required = true)]
    pub detections: Vec<PathBuf>,
    /// Legend labels, one per `--detections` (default: file stem).
    #[arg(long)]
    pub label: Vec<String>,
    #[arg(long, value_parser = parse_u32_pair, default_value = "1,1")]
    pub det_frame_map: (u32, u32),
    #[command(flatten)]
    pub subset: SubsetArgs,
    /// Plot range; also reported as an extra log-average miss rate.
    #[arg(long, value_parser = parse_f64_pair)]
    pub fppi_range: Option<(f64, f64)>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub gt: AnnotationArgs,
    #[command(flatten)]
    pub det: DetectionArgs,
    #[command(flatten)]
    pub subset: SubsetArgs,
    /// loc | bg | both
    #[arg(long, default_value = "both")]
    pub mode: String,
    /// Let overlap with ignore regions make a false positive a localisation error.
    #[arg(long)]
    pub include_ignore: bool,
    #[arg(long, value_parser = parse_f64_pair)]
    pub fppi_range: Option<(f64, f64)>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub gt: AnnotationArgs,
    #[command(flatten)]
    pub det: DetectionArgs,
    #[command(flatten)]
    pub subset: SubsetArgs,
    /// Comma separated IoU thresholds (default 0.30 to 0.90 in steps of 0.05).
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<f64>,
    /// Score cut for the median true-positive IoU.
    #[arg(long, allow_negative_numbers = true)]
    pub min_score: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PruneArgs {
    #[command(flatten)]
    pub gt: AnnotationArgs,
    /// The new annotation set, same format as `--annotations`.
    #[arg(long)]
    pub new: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AlignArgs {
    #[command(flatten)]
    pub gt: AnnotationArgs,
    #[command(flatten)]
    pub det: DetectionArgs,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub min_score: Option<f64>,
    #[arg(long, default_value_t = 0.41)]
    pub aspect: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiffArgs {
    #[command(flatten)]
    pub gt: AnnotationArgs,
    /// Second annotation set, same format as `--annotations`.
    #[arg(long)]
    pub other: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorrelatesArgs {
    #[command(flatten)]
    pub gt: AnnotationArgs,
    #[command(flatten)]
    pub det: DetectionArgs,
    #[command(flatten)]
    pub subset: SubsetArgs,
    /// Directory of frame images (`<video>/I00029.png` or `<video>_I00029.pgm`).
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long, default_value_t = ANALYSIS_FPPI)]
    pub operating_fppi: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InterpArgs {
    /// Vertical bob amplitude in pixels.
    #[arg(long, default_value_t = 8.0)]
    pub amplitude: f64,
    /// Keyframe stride in frames (one bob period).
    #[arg(long, default_value_t = 30)]
    pub stride: u32,
    #[arg(long, default_value_t = 100.0)]
    pub height: f64,
    #[arg(long, default_value_t = 1)]
    pub periods: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub frames: u32,
    #[arg(long, default_value_t = 1)]
    pub gt_per_frame: u32,
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0)]
    pub missed: u32,
    #[arg(long, default_value_t = 0)]
    pub background: u32,
    #[arg(long, default_value_t = 0)]
    pub localisation: u32,
    #[arg(long, default_value_t = 0)]
    pub doubles: u32,
    #[arg(long, default_value_t = 0)]
    pub ignore_regions: u32,
    #[arg(long, default_value_t = 0)]
    pub in_ignore: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ServeArgs {
    #[command(flatten)]
    pub gt: AnnotationArgs,
    /// Working set to review (default: a copy of `--annotations`).
    #[arg(long)]
    pub new: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory holding the write journal.
    #[arg(long)]
    pub out: PathBuf,
}

fn load_dataset(path: &Path, format: AnnotationFormat, arts: &mut Artifacts) -> Result<Dataset> {
    let ds = read_annotations(path, format)?;
    arts.input(path)?;
    Ok(ds)
}

fn load_detections(path: &Path, map: (u32, u32), arts: &mut Artifacts) -> Result<DetectionSet> {
    let dets = read_detections(path, frame_map(map)?)?;
    arts.input(path)?;
    Ok(dets)
}

fn check_range(range: Option<(f64, f64)>) -> Result<(f64, f64)> {
    let (lo, hi) = range.unwrap_or(DEFAULT_RANGE);
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Config(format!("FPPI range must satisfy 0 < lo < hi, got {lo},{hi}")));
    }
    Ok((lo, hi))
}

fn check_iou(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("IoU threshold {t} outside (0, 1)")))
    }
}

fn file_label(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("detector")
        .to_string()
}

fn safe_name(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn run_eval(a: &EvalArgs) -> Result<(Artifacts, String)> {
    let mut arts = Artifacts::new("eval", a)?;
    let spec = a.subset.spec()?;
    let variant = a.subset.variant()?;
    let range = check_range(a.fppi_range)?;
    if !a.label.is_empty() && a.label.len() != a.detections.len() {
        return Err(Error::Config(format!(
            "{} labels for {} detection sources",
            a.label.len(),
            a.detections.len()
        )));
    }
    let labels: Vec<String> = if a.label.is_empty() {
        a.detections.iter().map(|p| file_label(p)).collect()
    } else {
        a.label.clone()
    };
    let files: BTreeSet<String> = labels.iter().map(|l| safe_name(l)).collect();
    if files.len() != labels.len() {
        return Err(Error::Config("detector labels must be distinct".into()));
    }
    let ds = load_dataset(&a.gt.annotations, a.gt.format()?, &mut arts)?;
    let mut summaries = Vec::new();
    for (path, label) in a.detections.iter().zip(&labels) {
        let dets = load_detections(path, a.det_frame_map, &mut arts)?;
        let ev = Evaluation::run(&ds, &dets, &spec)?;
        summaries.push((label.clone(), EvalSummary::from_curve(ev.curve()?, variant)?));
    }

    let mut summary = String::new();
    let mut stdout = String::new();
    for (label, s) in &summaries {
        summary.push_str(&s.block(label));
        let _ = writeln!(summary, "headline = {}", s.headline());
        if let Some((lo, hi)) = a.fppi_range {
            let _ = writeln!(summary, "mr_custom = {}", log_average_miss_rate(&s.curve, lo, hi)?);
        }
        summary.push('\n');
        let _ = writeln!(stdout, "{label}: {}", s.headline());
        arts.add(format!("curve_{}.csv", safe_name(label)), curve_csv(&s.curve));
    }
    let entries: Vec<PlotEntry<'_>> = summaries
        .iter()
        .map(|(label, s)| PlotEntry { label, summary: s })
        .collect();
    let svg = render_plot(&entries, range)?;
    arts.add("summary.txt", summary);
    arts.add("roc.svg", svg);
    Ok((arts, stdout))
}

fn run_oracle(a: &OracleArgs) -> Result<(Artifacts, String)> {
    let mut arts = Artifacts::new("oracle", a)?;
    let spec = a.subset.spec()?;
    let variant = a.subset.variant()?;
    let mode: OracleMode = a.mode.parse()?;
    let range = check_range(a.fppi_range)?;
    let ds = load_dataset(&a.gt.annotations, a.gt.format()?, &mut arts)?;
    let dets = load_detections(&a.det.detections, a.det.det_frame_map, &mut arts)?;
    let cfg = OracleConfig {
        include_ignore: a.include_ignore,
    };
    let ev = Evaluation::run(&ds, &dets, &spec)?;
    let report = oracle_from_evaluation(&ev, variant, mode, cfg)?;
    let at = ev.operating_threshold(ANALYSIS_FPPI)?;
    let breakdown = fp_breakdown(&classify_false_positives(&ev, at, cfg));
    let remaining = report.oracle.curve.points().last().map_or(0, |p| p.fp);

    let mut text = report.block();
    let _ = writeln!(text, "oracle_fp_total = {remaining}");
    let _ = writeln!(text, "analysis_fppi = {ANALYSIS_FPPI}");
    let _ = writeln!(text, "analysis_threshold = {at}");
    let _ = writeln!(text, "fp_localisation_at_analysis = {}", breakdown.localisation);
    let _ = writeln!(text, "fp_background_at_analysis = {}", breakdown.background);
    let stdout = format!(
        "baseline: {}\noracle ({}): {}\nfalse positives left: {remaining}\n",
        report.baseline.headline(),
        mode.as_str(),
        report.oracle.headline()
    );
    let oracle_label = format!("{} oracle", mode.as_str());
    let entries = [
        PlotEntry {
            label: "baseline",
            summary: &report.baseline,
        },
        PlotEntry {
            label: &oracle_label,
            summary: &report.oracle,
        },
    ];
    let svg = render_plot(&entries, range)?;
    arts.add("oracle.txt", text);
    arts.add("curve_baseline.csv", report.baseline_csv());
    arts.add("curve_oracle.csv", report.oracle_csv());
    arts.add("roc.svg", svg);
    Ok((arts, stdout))
}

fn default_thresholds() -> Vec<f64> {
    (30..=90).step_by(5).map(|k| f64::from(k) / 100.0).collect()
}

fn run_sweep(a: &SweepArgs) -> Result<(Artifacts, String)> {
    let mut arts = Artifacts::new("sweep", a)?;
    let spec = a.subset.spec()?;
    let thresholds = if a.thresholds.is_empty() {
        default_thresholds()
    } else {
        a.thresholds.clone()
    };
    for &t in &thresholds {
        check_iou(t)?;
    }
    let ds = load_dataset(&a.gt.annotations, a.gt.format()?, &mut arts)?;
    let dets = load_detections(&a.det.detections, a.det.det_frame_map, &mut arts)?;
    let rows = mr_vs_iou_sweep(&ds, &dets, &spec, &thresholds)?;
    let median = match median_tp_iou(&ds, &dets, &spec, a.min_score.unwrap_or(f64::NEG_INFINITY)) {
        Ok(m) => m.to_string(),
        Err(Error::NoTruePositives) => "none".into(),
        Err(e) => return Err(e),
    };
    let mut text = String::from("[sweep]\n");
    let _ = writeln!(text, "thresholds = {}", rows.len());
    let _ = writeln!(text, "median_tp_iou = {median}");
    let mut stdout = String::new();
    for (t, m) in &rows {
        let _ = writeln!(stdout, "iou {t:.2}: MR-2 {:.2}", m * 100.0);
    }
    arts.add("sweep.csv", sweep_csv(&rows));
    arts.add("sweep.txt", text);
    Ok((arts, stdout))
}

fn run_prune(a: &PruneArgs) -> Result<(Artifacts, String)> {
    let mut arts = Artifacts::new("prune", a)?;
    check_iou(a.iou)?;
    let format = a.gt.format()?;
    let original = load_dataset(&a.gt.annotations, format, &mut arts)?;
    let new = load_dataset(&a.new, format, &mut arts)?;
    let pruned = prune(&original, &new, a.iou)?;
    let review = consolidate_flags(&new, &original, a.iou)?;
    let added = pruned.annotations().len() - original.annotations().len();
    let newly_ignored = original
        .annotations()
        .iter()
        .zip(pruned.annotations())
        .filter(|(o, p)| !o.ignore && p.ignore)
        .count();
    let text = format!(
        "[prune]\noriginal = {}\nnew = {}\npruned = {}\nadded = {added}\nnewly_ignored = {newly_ignored}\nreview_items = {}\n",
        original.annotations().len(),
        new.annotations().len(),
        pruned.annotations().len(),
        review.len()
    );
    arts.add("pruned.txt", format_annotations(&pruned));
    arts.add("review.csv", review_csv(&review));
    arts.add("prune.txt", text.clone());
    Ok((arts, text))
}

fn run_align(a: &AlignArgs) -> Result<(Artifacts, String)> {
    let mut arts = Artifacts::new("align", a)?;
    check_iou(a.iou)?;
    let cfg = AlignConfig {
        iou_min: a.iou,
        score_min: a.min_score.unwrap_or(f64::NEG_INFINITY),
        aspect: AspectRatio::new(a.aspect)?,
        ..AlignConfig::default()
    };
    let ds = load_dataset(&a.gt.annotations, a.gt.format()?, &mut arts)?;
    let dets = load_detections(&a.det.detections, a.det.det_frame_map, &mut arts)?;
    let aligned = align(&ds, &dets, &cfg)?;
    let moved = ds
        .annotations()
        .iter()
        .zip(aligned.annotations())
        .filter(|(x, y)| x.bbox != y.bbox)
        .count();
    let text = format!(
        "[align]\nannotations = {}\naligned = {moved}\n",
        ds.annotations().len()
    );
    arts.add("aligned.txt", format_annotations(&aligned));
    arts.add("align.txt", text.clone());
    Ok((arts, text))
}

fn run_diff(a: &DiffArgs) -> Result<(Artifacts, String)> {
    let mut arts = Artifacts::new("diff", a)?;
    check_iou(a.iou)?;
    let format = a.gt.format()?;
    let x = load_dataset(&a.gt.annotations, format, &mut arts)?;
    let y = load_dataset(&a.other, format, &mut arts)?;
    let text = diff(&x, &y, a.iou)?.block();
    arts.add("diff.txt", text.clone());
    Ok((arts, text))
}

fn run_correlates(a: &CorrelatesArgs) -> Result<(Artifacts, String)> {
    let mut arts = Artifacts::new("correlates", a)?;
    let spec = a.subset.spec()?;
    if !(a.operating_fppi > 0.0) {
        return Err(Error::Config(format!("operating FPPI must be > 0, got {}", a.operating_fppi)));
    }
    if !a.images.is_dir() {
        return Err(Error::Config(format!("image directory {} not found", a.images.display())));
    }
    let ds = load_dataset(&a.gt.annotations, a.gt.format()?, &mut arts)?;
    let dets = load_detections(&a.det.detections, a.det.det_frame_map, &mut arts)?;
    let ev = Evaluation::run(&ds, &dets, &spec)?;
    let cfg = CorrelateConfig {
        operating_fppi: a.operating_fppi,
        levels: ContrastLevels::default(),
    };
    let (rows, warnings) = export_correlates(&ev, &ImageSource::new(&a.images), cfg)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    let tps = rows.iter().filter(|r| r.outcome == crate::oracle::Outcome::Tp).count();
    let text = format!(
        "[correlates]\nrows = {}\ntp = {tps}\nfp = {}\nwarnings = {}\n",
        rows.len(),
        rows.len() - tps,
        warnings.len()
    );
    arts.add("correlates.csv", correlates_csv(&rows));
    arts.add("correlates.txt", text.clone());
    Ok((arts, text))
}

fn run_interp(a: &InterpArgs) -> Result<(Artifacts, String)> {
    let mut arts = Artifacts::new("interp", a)?;
    if !(a.height > 0.0 && a.height.is_finite()) {
        return Err(Error::Config(format!("box height must be > 0, got {}", a.height)));
    }
    let demo = sinusoid_offset_demo(a.amplitude, a.stride, a.height, a.periods, AspectRatio::default())?;
    let closed = (a.height - a.amplitude) / (a.height + a.amplitude);
    let mut csv = String::from("frame,true_y,interpolated_y,iou\n");
    for s in &demo.samples {
        let _ = writeln!(csv, "{},{},{},{}", s.frame, s.true_y, s.interpolated_y, s.iou);
    }
    let text = format!(
        "[interp]\namplitude = {}\nstride = {}\nheight = {}\nmid_phase_iou = {}\nvertical_offset_iou = {closed}\n",
        a.amplitude, a.stride, a.height, demo.mid_phase_iou
    );
    arts.add("interp.csv", csv);
    arts.add("interp.txt", text.clone());
    Ok((arts, text))
}

fn run_synth(a: &SynthArgs) -> Result<(Artifacts, String)> {
    let mut arts = Artifacts::new("synth", a)?;
    let p = SceneParams {
        frames: a.frames,
        gt_per_frame: a.gt_per_frame,
        jitter: a.jitter,
        missed_per_frame: a.missed,
        background_per_frame: a.background,
        localisation_per_frame: a.localisation,
        doubles_per_frame: a.doubles,
        ignore_regions_per_frame: a.ignore_regions,
        dets_in_ignore_per_frame: a.in_ignore,
        scores: ScoreModel::default(),
        ..SceneParams::default()
    };
    let scene = generate_synthetic_scene(a.seed, &p)?;
    let text = format!(
        "[synth]\nseed = {}\nframes = {}\nannotations = {}\ndetections = {}\n",
        a.seed,
        scene.dataset.frame_count(),
        scene.dataset.annotations().len(),
        scene.detections.len()
    );
    arts.add("annotations.txt", format_annotations(&scene.dataset));
    arts.add("detections.txt", format_detections(&scene.detection_set()));
    arts.add("synth.txt", text.clone());
    Ok((arts, text))
}

/// Loads everything `serve` needs and opens the journal.
pub fn serve_state(a: &ServeArgs) -> Result<serve::AppState> {
    let format = a.gt.format()?;
    let original = read_annotations(&a.gt.annotations, format)?;
    let working = match &a.new {
        Some(p) => read_annotations(p, format)?,
        None => original.clone(),
    };
    let images = match &a.images {
        Some(dir) if !dir.is_dir() => {
            return Err(Error::Config(format!("image directory {} not found", dir.display())))
        }
        Some(dir) => Some(ImageSource::new(dir)),
        None => None,
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let store = serve::Store::open(original, working, Some(a.out.join(serve::JOURNAL_FILE)))?;
    Ok(serve::AppState {
        store: RwLock::new(store),
        images,
        aspect: AspectRatio::default(),
    })
}

/// Runs a batch command and writes its artifacts; returns what to print.
pub fn execute(command: &Command) -> Result<String> {
    let (arts, stdout, out) = match command {
        Command::Eval(a) => tuple(run_eval(a)?, &a.out),
        Command::Oracle(a) => tuple(run_oracle(a)?, &a.out),
        Command::Sweep(a) => tuple(run_sweep(a)?, &a.out),
        Command::Prune(a) => tuple(run_prune(a)?, &a.out),
        Command::Align(a) => tuple(run_align(a)?, &a.out),
        Command::Diff(a) => tuple(run_diff(a)?, &a.out),
        Command::Correlates(a) => tuple(run_correlates(a)?, &a.out),
        Command::Interp(a) => tuple(run_interp(a)?, &a.out),
        Command::Synth(a) => tuple(run_synth(a)?, &a.out),
        Command::Serve(a) => {
            let state = serve_state(a)?;
            serve::run_server(Arc::new(state), a.port)?;
            return Ok(String::new());
        }
    };
    arts.commit(out)?;
    Ok(stdout)
}

fn tuple((arts, stdout): (Artifacts, String), out: &Path) -> (Artifacts, String, &Path) {
    (arts, stdout, out)
}

/// Entry point for the binary. Errors become one `error[category]: detail`
/// line on stderr.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let detail: Vec<&str> = msg
                .lines()
                .take_while(|l| !l.trim().is_empty() && !l.starts_with("Usage:"))
                .map(str::trim)
                .collect();
            eprintln!("error[usage]: {}", detail.join(" ").trim_start_matches("error: "));
            return 2;
        }
    };
    let result = match cli.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))
            .and_then(|pool| pool.install(|| execute(&cli.command))),
        None => execute(&cli.command),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            1
        }
    }
}
