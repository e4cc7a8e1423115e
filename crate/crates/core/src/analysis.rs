//! Agreement statistics between an acquired series and a reference.
//!
//! Alignment is grid-asymmetric: `a` supplies the sample times and `b` is
//! linearly interpolated at each of them, so `compare(a, b)` and
//! `compare(b, a)` only coincide when both share a time grid.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch;
use crate::persistence::{read_log, LogError, TruthLedger};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("series is empty")]
    Empty,
    #[error("point {index}: times must be finite and strictly increasing")]
    NotIncreasing { index: usize },
    #[error("point {index}: value is not finite")]
    NonFinite { index: usize },
    #[error("series do not overlap in time")]
    NoOverlap,
    #[error("channel {0} is not in the file")]
    NoSuchChannel(u8),
    #[error("channel {0} has no calibrated values")]
    Unmapped(u8),
    #[error("file format not recognised: {0}")]
    UnknownFormat(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Time-ordered values of one quantity. Times are seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    unit: String,
    points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(unit: impl Into<String>, points: Vec<(f64, f64)>) -> Result<Self, AnalysisError> {
        if points.is_empty() {
            return Err(AnalysisError::Empty);
        }
        for (i, &(t, v)) in points.iter().enumerate() {
            if !t.is_finite() || (i > 0 && t <= points[i - 1].0) {
                return Err(AnalysisError::NotIncreasing { index: i });
            }
            if !v.is_finite() {
                return Err(AnalysisError::NonFinite { index: i });
            }
        }
        Ok(Series {
            unit: unit.into(),
            points,
        })
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    /// Same times, every value shifted by `c`.
    pub fn offset(&self, c: f64) -> Series {
        Series {
            unit: self.unit.clone(),
            points: self.points.iter().map(|&(t, v)| (t, v + c)).collect(),
        }
    }

    /// Linear interpolation at `t`; `None` outside the series' time span.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let (lo, hi) = self.span();
        if t < lo || t > hi {
            return None;
        }
        let i = self.points.partition_point(|p| p.0 <= t);
        if i == 0 {
            return Some(self.points[0].1);
        }
        let (t0, v0) = self.points[i - 1];
        if t == t0 || i == self.points.len() {
            return Some(v0);
        }
        let (t1, v1) = self.points[i];
        Some(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }

    /// One channel of a record log. Times are seconds since the first row.
    pub fn from_log<R: io::Read>(input: R, channel: u8) -> Result<Self, AnalysisError> {
        let log = read_log(input)?;
        let unit = log
            .schema
            .channels
            .iter()
            .find(|c| c.channel == channel)
            .ok_or(AnalysisError::NoSuchChannel(channel))?
            .unit
            .clone()
            .ok_or(AnalysisError::Unmapped(channel))?;
        let t0 = log.rows.first().ok_or(AnalysisError::Empty)?.host_time;
        let points = log
            .rows
            .iter()
            .map(|r| {
                let v = r.cell(channel).and_then(|c| c.value).map(|(v, _)| v);
                (r.host_time.seconds_since(t0), v.unwrap_or(f64::NAN))
            })
            .collect();
        Series::new(unit, points)
    }

    pub fn from_log_file(path: impl AsRef<Path>, channel: u8) -> Result<Self, AnalysisError> {
        Self::from_log(fs::File::open(path)?, channel)
    }

    pub fn from_truth(ledger: &TruthLedger, channel: u8) -> Result<Self, AnalysisError> {
        let unit = ledger
            .unit(channel)
            .ok_or(AnalysisError::NoSuchChannel(channel))?;
        let points = ledger.channel_points(channel).unwrap_or_default();
        Series::new(unit, points)
    }

    /// Loads a record log or a ground-truth export, told apart by header.
    pub fn from_file(path: impl AsRef<Path>, channel: u8) -> Result<Self, AnalysisError> {
        let path = path.as_ref();
        let data = fs::read(path)?;
        if data.starts_with(b"timestamp,") {
            Self::from_log(data.as_slice(), channel)
        } else if data.starts_with(b"t_s,") {
            Self::from_truth(&TruthLedger::read_csv(data.as_slice())?, channel)
        } else {
            Err(AnalysisError::UnknownFormat(path.display().to_string()))
        }
    }
}

/// One aligned sample: `a`'s time and value, and `b` interpolated there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub t: f64,
    pub a: f64,
    pub b: f64,
}

/// Pairs every point of `a` inside `b`'s time span with `b` at that time.
pub fn align(a: &Series, b: &Series) -> Result<Vec<Pair>, AnalysisError> {
    let pairs: Vec<Pair> = a
        .points
        .iter()
        .filter_map(|&(t, va)| b.interpolate(t).map(|vb| Pair { t, a: va, b: vb }))
        .collect();
    if pairs.is_empty() {
        return Err(AnalysisError::NoOverlap);
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub max_abs_diff: f64,
    pub mean_abs_diff: f64,
    pub rmse: f64,
    pub n_points: usize,
}

impl AgreementStats {
    pub fn from_pairs(pairs: &[Pair]) -> Self {
        let flat: Vec<(f64, f64)> = pairs.iter().map(|p| (p.a, p.b)).collect();
        let acc = batch::diff_accum(&flat);
        let n = acc.n.max(1) as f64;
        AgreementStats {
            max_abs_diff: acc.max_abs,
            mean_abs_diff: acc.sum_abs / n,
            rmse: (acc.sum_sq / n).sqrt(),
            n_points: acc.n,
        }
    }
}

pub fn compare(a: &Series, b: &Series) -> Result<AgreementStats, AnalysisError> {
    Ok(AgreementStats::from_pairs(&align(a, b)?))
}

/// JSON report of one comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub unit: String,
    #[serde(flatten)]
    pub stats: AgreementStats,
}

/// Writes `t,a,b,diff` rows for external plotting.
pub fn write_plot_csv<W: Write>(out: W, pairs: &[Pair]) -> Result<(), LogError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["t", "a", "b", "diff"])?;
    for p in pairs {
        w.write_record(&[
            p.t.to_string(),
            p.a.to_string(),
            p.b.to_string(),
            (p.a - p.b).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(points: &[(f64, f64)]) -> Series {
        Series::new("%RH", points.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_series() {
        assert!(matches!(Series::new("x", vec![]), Err(AnalysisError::Empty)));
        assert!(matches!(
            Series::new("x", vec![(0.0, 1.0), (0.0, 2.0)]),
            Err(AnalysisError::NotIncreasing { index: 1 })
        ));
        assert!(matches!(
            Series::new("x", vec![(0.0, f64::NAN)]),
            Err(AnalysisError::NonFinite { index: 0 })
        ));
    }

    #[test]
    fn identical_grids_pair_pointwise() {
        let a = s(&[(0.0, 1.0), (1.0, 2.0), (2.0, 5.0)]);
        let p = align(&a, &a).unwrap();
        assert!(p.iter().all(|p| p.a == p.b));
        assert_eq!(compare(&a, &a).unwrap(), AgreementStats {
            max_abs_diff: 0.0,
            mean_abs_diff: 0.0,
            rmse: 0.0,
            n_points: 3
        });
    }

    #[test]
    fn half_step_shift_is_exact_for_linear_b() {
        let b = s(&(0..11).map(|i| (i as f64, 3.0 * i as f64 + 1.0)).collect::<Vec<_>>());
        let a = s(&(0..10).map(|i| (i as f64 + 0.5, 0.0)).collect::<Vec<_>>());
        for p in align(&a, &b).unwrap() {
            assert!((p.b - (3.0 * p.t + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_span_points_are_excluded() {
        let a = s(&[(-1.0, 0.0), (0.0, 0.0), (1.0, 0.0), (5.0, 0.0)]);
        let b = s(&[(0.0, 0.0), (2.0, 0.0)]);
        let p = align(&a, &b).unwrap();
        assert_eq!(p.iter().map(|p| p.t).collect::<Vec<_>>(), vec![0.0, 1.0]);
        let c = s(&[(10.0, 0.0), (11.0, 0.0)]);
        assert!(matches!(align(&b, &c), Err(AnalysisError::NoOverlap)));
    }

    #[test]
    fn constant_offset() {
        let a = s(&[(0.0, 40.0), (1.0, 41.5), (2.0, 39.0)]);
        let st = compare(&a, &a.offset(2.0)).unwrap();
        assert_eq!((st.max_abs_diff, st.mean_abs_diff, st.rmse), (2.0, 2.0, 2.0));
    }

    #[test]
    fn plot_csv_and_report_shape() {
        let a = s(&[(0.0, 1.0), (1.0, 2.0)]);
        let mut out = Vec::new();
        write_plot_csv(&mut out, &align(&a, &a.offset(0.5)).unwrap()).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t,a,b,diff\n0,1,1.5,-0.5\n1,2,2.5,-0.5\n");
        let r = Report {
            unit: "%RH".into(),
            stats: compare(&a, &a).unwrap(),
        };
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["n_points"], 2);
        assert_eq!(v["unit"], "%RH");
    }
}
