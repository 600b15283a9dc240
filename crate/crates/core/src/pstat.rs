//! The age-windowed citation probability
//! `P(t, t0, dt) = citations(t, t0, dt) / (N(t) * N(t, t0, dt))`
//! and its monthly series.
//!
//! Counts stay exact integers; the quotient is only formed when a point is
//! emitted, and is undefined (`None`) whenever either denominator factor is
//! zero.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AgeWindow, Corpus, MonthIndex};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PStatQuery {
    pub window: AgeWindow,
    pub from: MonthIndex,
    pub to: MonthIndex,
}

impl PStatQuery {
    pub fn new(window: AgeWindow, from: MonthIndex, to: MonthIndex) -> Result<Self> {
        if from > to {
            return Err(Error::Config(format!("empty month range {from}..={to}")));
        }
        Ok(PStatQuery { window, from, to })
    }

    pub fn months(&self) -> impl Iterator<Item = MonthIndex> + Clone {
        (self.from.value()..=self.to.value()).map(MonthIndex::new)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PStatPoint {
    pub t: MonthIndex,
    pub n_t: u64,
    pub n_window: u64,
    pub cites: u64,
    pub p: Option<f64>,
}

impl PStatPoint {
    pub fn from_counts(t: MonthIndex, n_t: u64, n_window: u64, cites: u64) -> Self {
        let denom = u128::from(n_t) * u128::from(n_window);
        let p = if denom == 0 {
            None
        } else {
            assert!(
                u128::from(cites) <= denom,
                "citation count {cites} exceeds pair count {denom} at {t}"
            );
            Some(cites as f64 / denom as f64)
        };
        PStatPoint {
            t,
            n_t,
            n_window,
            cites,
            p,
        }
    }

    /// Exact `(numerator, denominator)` of the probability, when defined.
    pub fn fraction(&self) -> Option<(u64, u128)> {
        let denom = u128::from(self.n_t) * u128::from(self.n_window);
        (denom > 0).then_some((self.cites, denom))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PStatSeries {
    pub query: PStatQuery,
    /// Half-width of the moving average applied, 0 for raw values.
    pub smoothing: u32,
    pub points: Vec<PStatPoint>,
}

pub fn pstat_point(corpus: &Corpus, t: MonthIndex, window: AgeWindow) -> PStatPoint {
    PStatPoint::from_counts(
        t,
        corpus.articles_at(t),
        corpus.articles_in_window(t, window),
        corpus.citations_into_window(t, window),
    )
}

pub fn pstat_series(corpus: &Corpus, query: PStatQuery) -> PStatSeries {
    let months: Vec<MonthIndex> = query.months().collect();
    let points = months
        .into_par_iter()
        .map(|t| pstat_point(corpus, t, query.window))
        .collect();
    PStatSeries {
        query,
        smoothing: 0,
        points,
    }
}

/// Centered moving average over the defined points within `half_width`
/// months of each defined point. Undefined points stay undefined.
pub fn smooth_series(series: &PStatSeries, half_width: u32) -> PStatSeries {
    if half_width == 0 {
        return series.clone();
    }
    let h = half_width as usize;
    let n = series.points.len();
    let points = series
        .points
        .iter()
        .enumerate()
        .map(|(i, point)| {
            if point.p.is_none() {
                return *point;
            }
            let lo = i.saturating_sub(h);
            let hi = (i + h).min(n - 1);
            let (sum, count) = series.points[lo..=hi]
                .iter()
                .filter_map(|q| q.p)
                .fold((0.0, 0u32), |(s, c), p| (s + p, c + 1));
            PStatPoint {
                p: Some(sum / f64::from(count)),
                ..*point
            }
        })
        .collect();
    PStatSeries {
        query: series.query,
        smoothing: series.smoothing + half_width,
        points,
    }
}

pub const SERIES_CSV_HEADER: &str = "t,yyyy_mm,n_t,n_window,cites,p";

impl PStatSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.points.len() + 1));
        out.push_str(SERIES_CSV_HEADER);
        out.push('\n');
        for pt in &self.points {
            let _ = write!(out, "{},{},{},{},{},", pt.t.value(), pt.t, pt.n_t, pt.n_window, pt.cites);
            if let Some(p) = pt.p {
                let _ = write!(out, "{p}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let points: Vec<serde_json::Value> = self
            .points
            .iter()
            .map(|pt| {
                serde_json::json!({
                    "t": pt.t.value(),
                    "yyyy_mm": pt.t.to_string(),
                    "n_t": pt.n_t,
                    "n_window": pt.n_window,
                    "cites": pt.cites,
                    "p": pt.p,
                })
            })
            .collect();
        serde_json::json!({
            "t0_months": self.query.window.start(),
            "dt_months": self.query.window.span(),
            "from": self.query.from.to_string(),
            "to": self.query.to.to_string(),
            "smoothing": self.smoothing,
            "points": points,
        })
    }
}
