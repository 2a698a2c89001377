use std::fmt::Write as _;

use serde::Serialize;

use super::DetOutcome;
use crate::error::{Error, Result};

/// Spacing of log-average reference points in decades.
pub const LAMR_STEP_DECADES: f64 = 0.25;
/// Floor applied to miss rates before taking logs.
pub const LAMR_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    /// Detections scoring at least this much are kept.
    pub threshold: f64,
    pub fppi: f64,
    pub miss_rate: f64,
    pub tp: usize,
    pub fp: usize,
}

/// Miss rate against false positives per image, one point per distinct
/// score, ordered by descending threshold (so FPPI never decreases).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    points: Vec<CurvePoint>,
    frames: usize,
    positives: usize,
}

impl Curve {
    /// Builds the curve from `(score, outcome)` pairs over `frames` images
    /// with `positives` countable annotations.
    pub fn from_outcomes(mut scored: Vec<(f64, DetOutcome)>, frames: usize, positives: usize) -> Self {
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let n = frames as f64;
        let p = positives as f64;
        let mut points = Vec::new();
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut i = 0;
        while i < scored.len() {
            let s = scored[i].0;
            while i < scored.len() && scored[i].0 == s {
                match scored[i].1 {
                    DetOutcome::TruePositive { .. } => tp += 1,
                    DetOutcome::FalsePositive => fp += 1,
                    DetOutcome::Ignored => {}
                }
                i += 1;
            }
            points.push(CurvePoint {
                threshold: s,
                fppi: fp as f64 / n,
                miss_rate: (positives - tp) as f64 / p,
                tp,
                fp,
            });
        }
        if points.first().is_none_or(|q| q.fppi > 0.0) {
            points.insert(
                0,
                CurvePoint {
                    threshold: f64::INFINITY,
                    fppi: 0.0,
                    miss_rate: 1.0,
                    tp: 0,
                    fp: 0,
                },
            );
        }
        Curve {
            points,
            frames,
            positives,
        }
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn positives(&self) -> usize {
        self.positives
    }

    /// Last point with FPPI at most `fppi`. The first point always has
    /// FPPI 0, so this is defined for any non-negative `fppi`.
    pub fn point_at(&self, fppi: f64) -> &CurvePoint {
        let k = self.points.partition_point(|p| p.fppi <= fppi);
        &self.points[k.saturating_sub(1)]
    }

    pub fn miss_rate_at(&self, fppi: f64) -> f64 {
        self.point_at(fppi).miss_rate
    }
}

fn pow10(e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() < 300.0 {
        10f64.powi(e as i32)
    } else {
        10f64.powf(e)
    }
}

/// Reference FPPI values from `lo` to `hi`, evenly spaced in log10 by
/// `step` decades. Integral exponents are computed exactly so that
/// 0.1 and 0.01 land on the values a dataset with 10 or 100 frames can hit.
pub fn reference_points(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Config(format!("FPPI range [{lo}, {hi}] must satisfy 0 < lo < hi")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("reference step {step} must be positive")));
    }
    let (a, b) = (lo.log10(), hi.log10());
    let n = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| {
            let e = a + i as f64 * step;
            // snap exponents that are integral up to rounding noise
            let r = e.round();
            pow10(if (e - r).abs() < 1e-9 { r } else { e })
        })
        .collect())
}

/// Geometric mean of the miss rate sampled at the reference points, each
/// sample taken from the last curve point whose FPPI does not exceed it.
pub fn log_average_miss_rate_with_step(curve: &Curve, lo: f64, hi: f64, step: f64) -> Result<f64> {
    let refs = reference_points(lo, hi, step)?;
    let sum: f64 = refs
        .iter()
        .map(|&r| curve.miss_rate_at(r).max(LAMR_EPSILON).ln())
        .sum();
    Ok((sum / refs.len() as f64).exp())
}

pub fn log_average_miss_rate(curve: &Curve, lo: f64, hi: f64) -> Result<f64> {
    log_average_miss_rate_with_step(curve, lo, hi, LAMR_STEP_DECADES)
}

/// Smallest FPPI at which the miss rate drops to `1 - recall`.
pub fn fppi_at_recall(curve: &Curve, recall: f64) -> Result<f64> {
    if !(recall > 0.0 && recall < 1.0) {
        return Err(Error::Config(format!("recall {recall} outside (0, 1)")));
    }
    let target = 1.0 - recall;
    curve
        .points()
        .iter()
        .find(|p| p.miss_rate <= target)
        .map(|p| p.fppi)
        .ok_or_else(|| Error::RecallUnreachable {
            requested: recall,
            max_recall: 1.0 - curve.points().last().map_or(1.0, |p| p.miss_rate),
        })
}

pub fn curve_csv(curve: &Curve) -> String {
    let mut s = String::from("threshold,fppi,missrate\n");
    for p in curve.points() {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.fppi, p.miss_rate);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tp() -> DetOutcome {
        DetOutcome::TruePositive { annotation: 0, iou: 1.0 }
    }

    fn flat(miss: f64) -> Curve {
        Curve {
            points: vec![CurvePoint {
                threshold: 1.0,
                fppi: 0.0,
                miss_rate: miss,
                tp: 0,
                fp: 0,
            }],
            frames: 1,
            positives: 1,
        }
    }

    #[test]
    fn reference_grids() {
        let r2 = reference_points(1e-2, 1.0, 0.25).unwrap();
        assert_eq!(r2.len(), 9);
        assert_eq!((r2[0], r2[4], r2[8]), (0.01, 0.1, 1.0));
        let r4 = reference_points(1e-4, 1.0, 0.25).unwrap();
        assert_eq!(r4.len(), 17);
        assert_eq!(r4[0], 1e-4);
        assert!(reference_points(1.0, 0.1, 0.25).is_err());
        assert!(reference_points(0.0, 1.0, 0.25).is_err());
    }

    #[test]
    fn constant_curve_averages_to_itself() {
        for m in [0.05, 0.3, 1.0] {
            let v = log_average_miss_rate(&flat(m), 1e-2, 1.0).unwrap();
            assert!((v - m).abs() < 1e-12);
        }
        let floor = log_average_miss_rate(&flat(0.0), 1e-4, 1.0).unwrap();
        assert!((floor / LAMR_EPSILON - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anchor_only_when_first_point_has_fps() {
        let c = Curve::from_outcomes(vec![(0.9, tp()), (0.5, DetOutcome::FalsePositive)], 2, 2);
        assert_eq!(c.points().len(), 2);
        assert_eq!(c.points()[0].miss_rate, 0.5);

        let c = Curve::from_outcomes(vec![(0.9, DetOutcome::FalsePositive), (0.5, tp())], 2, 2);
        assert_eq!(c.points().len(), 3);
        assert_eq!(c.points()[0].threshold, f64::INFINITY);
        assert_eq!((c.points()[0].fppi, c.points()[0].miss_rate), (0.0, 1.0));
        assert_eq!(c.points()[1].fppi, 0.5);
    }

    #[test]
    fn equal_scores_form_one_point() {
        let c = Curve::from_outcomes(
            vec![(0.5, tp()), (0.5, DetOutcome::FalsePositive), (0.5, DetOutcome::Ignored)],
            1,
            1,
        );
        assert_eq!(c.points().len(), 2);
        assert_eq!((c.points()[1].tp, c.points()[1].fp), (1, 1));
    }

    #[test]
    fn recall_lookup() {
        let c = Curve::from_outcomes(
            vec![(0.9, tp()), (0.8, DetOutcome::FalsePositive), (0.7, tp())],
            10,
            4,
        );
        assert_eq!(fppi_at_recall(&c, 0.25).unwrap(), 0.0);
        assert_eq!(fppi_at_recall(&c, 0.5).unwrap(), 0.1);
        match fppi_at_recall(&c, 0.9) {
            Err(Error::RecallUnreachable { max_recall, .. }) => assert_eq!(max_recall, 0.5),
            other => panic!("{other:?}"),
        }
        assert!(fppi_at_recall(&c, 1.0).is_err());
    }

    #[test]
    fn csv_layout() {
        let c = Curve::from_outcomes(vec![(0.5, DetOutcome::FalsePositive)], 2, 1);
        assert_eq!(curve_csv(&c), "threshold,fppi,missrate\ninf,0,1\n0.5,0.5,1\n");
    }
}
