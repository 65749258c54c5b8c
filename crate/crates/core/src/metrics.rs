//! Cross-county Spearman correlations and the per-day correlation improvement
//! `ci = rho_mobility − rho_baseline`.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::backtest::{ModelKind, PredictionRecord};
use crate::error::{Error, Result};
use crate::panel::Fips;

/// A rank correlation, with `degenerate` set when either input has no rank
/// variance (the correlation is then reported as 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spearman {
    pub rho: f64,
    pub degenerate: bool,
}

/// 1-based ranks; tied values share the mean of the positions they occupy.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) -> mean 1-based rank
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Spearman> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!("spearman inputs differ in length: {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs at least two observations".into()));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::NonFinite);
    }
    Ok(match pearson(&average_ranks(xs), &average_ranks(ys)) {
        Some(rho) => Spearman { rho, degenerate: false },
        None => Spearman { rho: 0.0, degenerate: true },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiPoint {
    pub date: NaiveDate,
    pub lookahead: u32,
    pub rho_mobility: f64,
    pub rho_baseline: f64,
    pub ci: f64,
    pub n_counties: usize,
    /// Either correlation hit a zero-variance rank vector.
    #[serde(default, skip_serializing)]
    pub degenerate: bool,
}

#[derive(Default)]
struct Pair {
    baseline: Option<(f64, f64)>,
    mobility: Option<(f64, f64)>,
}

/// One point per `(date, lookahead)`, sorted by date then lookahead.
///
/// Groups with fewer than two counties are skipped.
pub fn ci_series(records: &[PredictionRecord]) -> Result<Vec<CiPoint>> {
    let mut groups: BTreeMap<(NaiveDate, u32), BTreeMap<Fips, Pair>> = BTreeMap::new();
    for r in records {
        let slot = groups.entry((r.date, r.lookahead)).or_default().entry(r.county).or_default();
        let cell = match r.model_kind {
            ModelKind::Baseline => &mut slot.baseline,
            ModelKind::Mobility => &mut slot.mobility,
        };
        if cell.replace((r.predicted, r.actual)).is_some() {
            return Err(Error::DuplicateRecord { date: r.date, lookahead: r.lookahead, county: r.county });
        }
    }

    let mut out = Vec::with_capacity(groups.len());
    for ((date, lookahead), counties) in groups {
        let mut base = (Vec::new(), Vec::new());
        let mut mob = (Vec::new(), Vec::new());
        for pair in counties.values() {
            let (Some(b), Some(m)) = (pair.baseline, pair.mobility) else {
                return Err(Error::CountyMismatch { date, lookahead });
            };
            base.0.push(b.0);
            base.1.push(b.1);
            mob.0.push(m.0);
            mob.1.push(m.1);
        }
        let n = counties.len();
        if n < 2 {
            log::warn!("{date} lookahead {lookahead}: only {n} county, skipped");
            continue;
        }
        let rb = spearman(&base.0, &base.1)?;
        let rm = spearman(&mob.0, &mob.1)?;
        out.push(CiPoint {
            date,
            lookahead,
            rho_mobility: rm.rho,
            rho_baseline: rb.rho,
            ci: rm.rho - rb.rho,
            n_counties: n,
            degenerate: rb.degenerate || rm.degenerate,
        });
    }
    Ok(out)
}

/// Inclusive run of consecutive calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateSpan {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadSummary {
    pub n_points: usize,
    pub mean_ci: f64,
    pub max_ci: f64,
    pub max_ci_date: NaiveDate,
    pub min_ci: f64,
    pub min_ci_date: NaiveDate,
    pub positive_spans: Vec<DateSpan>,
    pub negative_spans: Vec<DateSpan>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CiSummary {
    pub lookaheads: BTreeMap<u32, LookaheadSummary>,
}

impl CiSummary {
    /// Longest span with positive ci for a lookahead.
    pub fn longest_positive(&self, lookahead: u32) -> Option<DateSpan> {
        self.lookaheads.get(&lookahead)?.positive_spans.iter().copied().max_by_key(|s| s.days)
    }
}

fn spans(points: &[&CiPoint], keep: impl Fn(f64) -> bool) -> Vec<DateSpan> {
    let mut out: Vec<DateSpan> = Vec::new();
    for p in points.iter().filter(|p| keep(p.ci)) {
        match out.last_mut() {
            Some(s) if s.end.checked_add_days(Days::new(1)) == Some(p.date) => {
                s.end = p.date;
                s.days += 1;
            }
            _ => out.push(DateSpan { start: p.date, end: p.date, days: 1 }),
        }
    }
    out
}

/// Per-lookahead extremes, mean and maximal same-sign spans of ci.
pub fn summarize(cis: &[CiPoint]) -> CiSummary {
    let mut by_l: BTreeMap<u32, Vec<&CiPoint>> = BTreeMap::new();
    for p in cis {
        by_l.entry(p.lookahead).or_default().push(p);
    }
    let lookaheads = by_l
        .into_iter()
        .map(|(l, mut pts)| {
            pts.sort_by_key(|p| p.date);
            let max = pts.iter().copied().fold(pts[0], |a, b| if b.ci > a.ci { b } else { a });
            let min = pts.iter().copied().fold(pts[0], |a, b| if b.ci < a.ci { b } else { a });
            let summary = LookaheadSummary {
                n_points: pts.len(),
                mean_ci: pts.iter().map(|p| p.ci).sum::<f64>() / pts.len() as f64,
                max_ci: max.ci,
                max_ci_date: max.date,
                min_ci: min.ci,
                min_ci_date: min.date,
                positive_spans: spans(&pts, |c| c > 0.0),
                negative_spans: spans(&pts, |c| c < 0.0),
            };
            (l, summary)
        })
        .collect();
    CiSummary { lookaheads }
}
