use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Grayscale intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Patch {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Config(format!(
                "patch of {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Patch {
            width,
            height,
            data,
        })
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Patch::new(width, height, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Pixels covered by `b`, clipped to the image. Partially covered pixels
    /// are included. `None` when nothing remains.
    pub fn crop(&self, b: &BBox) -> Option<Patch> {
        let clamp = |v: f64, hi: usize| v.clamp(0.0, hi as f64) as usize;
        let x0 = clamp(b.x().floor(), self.width);
        let y0 = clamp(b.y().floor(), self.height);
        let x1 = clamp(b.right().ceil(), self.width);
        let y1 = clamp(b.bottom().ceil(), self.height);
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        let mut data = Vec::with_capacity((x1 - x0) * (y1 - y0));
        for y in y0..y1 {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x1]);
        }
        Some(Patch {
            width: x1 - x0,
            height: y1 - y0,
            data,
        })
    }
}

/// Width of the re-blur box filter.
const BLUR_TAPS: isize = 9;

/// Sum of neighbour differences and of the part of them that survives
/// re-blurring, along one axis.
fn directional(p: &Patch, horizontal: bool) -> (f64, f64) {
    let (w, h) = (p.width as isize, p.height as isize);
    let at = |x: isize, y: isize| p.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize);
    let half = BLUR_TAPS / 2;
    let blurred = |x: isize, y: isize| {
        let mut acc = 0.0;
        for k in -half..=half {
            acc += if horizontal { at(x + k, y) } else { at(x, y + k) };
        }
        acc / BLUR_TAPS as f64
    };
    let (mut s_f, mut s_v) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let (px, py) = if horizontal { (x - 1, y) } else { (x, y - 1) };
            if px < 0 || py < 0 {
                continue;
            }
            let d_f = (at(x, y) - at(px, py)).abs();
            let d_b = (blurred(x, y) - blurred(px, py)).abs();
            s_f += d_f;
            s_v += (d_f - d_b).max(0.0);
        }
    }
    (s_f, s_v)
}

/// No-reference blur estimate in `[0, 1]`, higher meaning blurrier.
///
/// The patch is re-blurred with a 9-tap box filter along each axis; a sharp
/// patch loses much of its neighbour-difference variation in the process, a
/// blurred one hardly any. The blurrier of the two directions is reported.
/// A direction without any variation carries no evidence and is skipped; a
/// constant patch scores 1.
pub fn blur_score(p: &Patch) -> Result<f64> {
    if p.width < 3 || p.height < 3 {
        return Err(Error::PatchTooSmall {
            width: p.width,
            height: p.height,
        });
    }
    let score = [true, false]
        .into_iter()
        .map(|horizontal| directional(p, horizontal))
        .filter(|&(s_f, _)| s_f > 0.0)
        .map(|(s_f, s_v)| (s_f - s_v) / s_f)
        .fold(None, |acc: Option<f64>, b| Some(acc.map_or(b, |a| a.max(b))));
    Ok(score.unwrap_or(1.0).clamp(0.0, 1.0))
}

/// Quantile levels for [`contrast_score`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastLevels {
    pub low: f64,
    pub high: f64,
}

impl Default for ContrastLevels {
    fn default() -> Self {
        ContrastLevels {
            low: 0.05,
            high: 0.95,
        }
    }
}

impl ContrastLevels {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(0.0 <= low && low < high && high <= 1.0) {
            return Err(Error::Config(format!(
                "contrast quantiles must satisfy 0 <= low < high <= 1, got {low}, {high}"
            )));
        }
        Ok(ContrastLevels { low, high })
    }
}

/// Linear-interpolation quantile of sorted data (the common "type 7").
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Spread between the high and low intensity quantiles. Depends only on the
/// histogram.
pub fn contrast_score(p: &Patch, levels: ContrastLevels) -> f64 {
    let mut v = p.data.clone();
    v.sort_by(f64::total_cmp);
    (quantile(&v, levels.high) - quantile(&v, levels.low)).clamp(0.0, 1.0)
}
