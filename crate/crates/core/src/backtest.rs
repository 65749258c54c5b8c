//! Sliding-window backtests of per-county lag regressions.
//!
//! Every window trains on `train_len` consecutive days and predicts the single
//! day `train_end + l` for each lookahead `l`. The baseline model regresses
//! `cases(t)` on `cases(t − l)`; the mobility model adds `mobility(t − lag)`.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elasticnet::{predict_row, Design, HyperGrid};
use crate::error::{Error, Result};
use crate::panel::{CountySeries, Fips, Panel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub train_len: usize,
    pub lookaheads: Vec<u32>,
    pub mobility_lag: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub const DEFAULT_LOOKAHEADS: [u32; 5] = [1, 7, 14, 21, 28];

    pub fn validate(&self) -> Result<()> {
        if self.train_len < 2 {
            return Err(Error::Config(format!("train_len must be >= 2, got {}", self.train_len)));
        }
        if self.lookaheads.is_empty() || self.lookaheads.contains(&0) {
            return Err(Error::Config("lookaheads must be a non-empty set of positive day offsets".into()));
        }
        let mut sorted = self.lookaheads.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.lookaheads.len() {
            return Err(Error::Config("lookaheads contain duplicates".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Test horizon: the largest lookahead.
    pub fn max_lookahead(&self) -> usize {
        self.lookaheads.iter().copied().max().unwrap_or(0) as usize
    }

    /// Shortest index that still holds one window.
    pub fn min_index_len(&self) -> usize {
        self.train_len + self.max_lookahead()
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { train_len: 60, lookaheads: Self::DEFAULT_LOOKAHEADS.to_vec(), mobility_lag: 10, stride: 1 }
    }
}

/// One train placement; day indices are inclusive positions in the panel index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window {
    pub train_start: usize,
    pub train_end: usize,
}

impl Window {
    pub fn train_len(&self) -> usize {
        self.train_end - self.train_start + 1
    }

    pub fn prediction_day(&self, lookahead: u32) -> usize {
        self.train_end + lookahead as usize
    }
}

/// Lay windows at offsets `0, stride, 2·stride, …` while every prediction day fits.
///
/// The window count is `floor((index_len − train_len − max_lookahead) / stride) + 1`.
/// A 256-day index with the default 60-day training span and 28-day horizon
/// therefore yields 169 train/test pairs, not 170: a 170th window would need
/// its 28-day horizon to end one day past the index.
///
/// ```
/// use mobcast::backtest::{enumerate_windows, WindowSpec};
///
/// let spec = WindowSpec::default();
/// let windows = enumerate_windows(256, &spec).unwrap();
/// assert_eq!(windows.len(), 169);
/// assert_ne!(windows.len(), 170);
/// assert_eq!(windows.last().unwrap().prediction_day(28), 255);
/// assert_eq!(enumerate_windows(88, &spec).unwrap().len(), 1);
/// assert!(enumerate_windows(87, &spec).is_err());
/// ```
pub fn enumerate_windows(index_len: usize, spec: &WindowSpec) -> Result<Vec<Window>> {
    spec.validate()?;
    let needed = spec.min_index_len();
    if index_len < needed {
        return Err(Error::SeriesTooShort { len: index_len, needed });
    }
    let count = (index_len - needed) / spec.stride + 1;
    Ok((0..count)
        .map(|k| {
            let train_start = k * spec.stride;
            Window { train_start, train_end: train_start + spec.train_len - 1 }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisedRow {
    pub target_day: usize,
    pub y: f64,
    pub x_case: f64,
    pub x_mob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    pub rows: Vec<SupervisedRow>,
    pub with_mobility: bool,
}

impl SupervisedSet {
    pub fn n_features(&self) -> usize {
        1 + usize::from(self.with_mobility)
    }

    pub fn design(&self) -> Design {
        let mut data = Vec::with_capacity(self.rows.len() * self.n_features());
        for r in &self.rows {
            data.push(r.x_case);
            if let Some(m) = r.x_mob {
                data.push(m);
            }
        }
        Design::new(self.rows.len(), self.n_features(), data).expect("row widths are uniform")
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y).collect()
    }
}

/// Training rows for one window: `y = cases(t)`, `x_case = cases(t − lookahead)`
/// and, with mobility, `x_mob = mobility(t − mobility_lag)`.
///
/// Days whose lagged features fall before the data start are dropped.
pub fn build_supervised(
    cases: &CountySeries,
    mobility: Option<&CountySeries>,
    window: Window,
    lookahead: u32,
    mobility_lag: usize,
) -> Result<SupervisedSet> {
    let l = lookahead as usize;
    if window.train_end >= cases.len() || window.train_start > window.train_end {
        return Err(Error::InvalidArgument(format!(
            "window {}..={} does not fit a {}-day series",
            window.train_start,
            window.train_end,
            cases.len()
        )));
    }
    if let Some(m) = mobility {
        if m.len() != cases.len() {
            return Err(Error::InvalidArgument("case and mobility series lengths differ".into()));
        }
    }
    let rows: Vec<SupervisedRow> = (window.train_start..=window.train_end)
        .filter(|&t| t >= l && mobility.is_none_or(|_| t >= mobility_lag))
        .filter_map(|t| {
            let y = cases.get(t)?;
            let x_case = cases.get(t - l)?;
            let x_mob = match mobility {
                Some(m) => Some(m.get(t - mobility_lag)?),
                None => None,
            };
            Some(SupervisedRow { target_day: t, y, x_case, x_mob })
        })
        .collect();
    if rows.len() < 2 {
        return Err(Error::TooFewRows { rows: rows.len() });
    }
    Ok(SupervisedSet { rows, with_mobility: mobility.is_some() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Baseline,
    Mobility,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Baseline => "baseline",
            Self::Mobility => "mobility",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "mobility" => Ok(Self::Mobility),
            other => Err(Error::InvalidArgument(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    /// Mobility dataset the run compares against; `None` for baseline-only runs.
    pub mobility_dataset: Option<String>,
    pub date: NaiveDate,
    pub county: Fips,
    pub lookahead: u32,
    pub model_kind: ModelKind,
    pub predicted: f64,
    pub actual: f64,
    /// Last training day of the producing window.
    pub train_end: NaiveDate,
    /// Latest day any input feature of this prediction was read from.
    pub latest_feature: NaiveDate,
}

impl PredictionRecord {
    pub fn dataset_label(&self) -> &str {
        self.mobility_dataset.as_deref().unwrap_or("")
    }

    /// Canonical order: dataset, date, lookahead, county, kind.
    pub fn sort_key(&self) -> (&str, NaiveDate, u32, Fips, ModelKind) {
        (self.dataset_label(), self.date, self.lookahead, self.county, self.model_kind)
    }
}

pub fn sort_records(records: &mut [PredictionRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

fn check_aligned(cases: &Panel, mobility: &Panel) -> Result<()> {
    if cases.index() != mobility.index() || !cases.counties().eq(mobility.counties()) {
        return Err(Error::InvalidArgument(format!(
            "panels `{}` and `{}` are not aligned",
            cases.name(),
            mobility.name()
        )));
    }
    Ok(())
}

fn county_records(
    cases: &CountySeries,
    mobility: Option<&CountySeries>,
    panel: &Panel,
    dataset: Option<&str>,
    windows: &[Window],
    spec: &WindowSpec,
    grid: &HyperGrid,
) -> Result<Vec<PredictionRecord>> {
    let index = panel.index();
    let kinds: &[ModelKind] =
        if mobility.is_some() { &[ModelKind::Baseline, ModelKind::Mobility] } else { &[ModelKind::Baseline] };
    let mut out = Vec::with_capacity(windows.len() * spec.lookaheads.len() * kinds.len());
    for w in windows {
        for &l in &spec.lookaheads {
            let day = w.prediction_day(l);
            for &kind in kinds {
                let mob = if kind == ModelKind::Mobility { mobility } else { None };
                let ctx = |e: Error| Error::Fit {
                    county: cases.county,
                    train_end: index.date(w.train_end),
                    lookahead: l,
                    source: Box::new(e),
                };
                let set = build_supervised(cases, mob, *w, l, spec.mobility_lag).map_err(ctx)?;
                let model = grid.fit_selected(&set.design(), &set.targets()).map_err(ctx)?;

                let case_day = day - l as usize;
                let mut features = vec![cases.get(case_day).ok_or_else(|| ctx(Error::NonFinite))?];
                let mut latest = case_day;
                if let Some(m) = mob {
                    let mob_day =
                        day.checked_sub(spec.mobility_lag).ok_or_else(|| ctx(Error::TooFewRows { rows: 0 }))?;
                    features.push(m.get(mob_day).ok_or_else(|| ctx(Error::NonFinite))?);
                    latest = latest.max(mob_day);
                }
                let predicted = predict_row(&model, &features).map_err(ctx)?;
                let actual = cases.get(day).ok_or_else(|| ctx(Error::NonFinite))?;
                out.push(PredictionRecord {
                    mobility_dataset: dataset.map(str::to_string),
                    date: index.date(day),
                    county: cases.county,
                    lookahead: l,
                    model_kind: kind,
                    predicted,
                    actual,
                    train_end: index.date(w.train_end),
                    latest_feature: index.date(latest),
                });
            }
        }
    }
    Ok(out)
}

/// Fit baseline (and, given a mobility panel, mobility) models for every
/// county, window and lookahead, returning canonically sorted records.
///
/// Fits run on the current rayon pool; output does not depend on scheduling.
pub fn run_backtest(
    cases: &Panel,
    mobility: Option<&Panel>,
    spec: &WindowSpec,
    grid: &HyperGrid,
) -> Result<Vec<PredictionRecord>> {
    spec.validate()?;
    if let Some(m) = mobility {
        check_aligned(cases, m)?;
    }
    let windows = enumerate_windows(cases.index().len(), spec)?;
    let dataset = mobility.map(|m| m.name());
    let series: Vec<&CountySeries> = cases.series().collect();

    let per_county: Vec<Vec<PredictionRecord>> = series
        .par_iter()
        .map(|s| {
            let mob = mobility.map(|m| m.get(&s.county).expect("aligned panels share counties"));
            county_records(s, mob, cases, dataset, &windows, spec, grid)
        })
        .collect::<Result<_>>()?;

    let mut records: Vec<PredictionRecord> = per_county.into_iter().flatten().collect();
    sort_records(&mut records);
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::DateIndex;

    fn series(vals: Vec<f64>) -> CountySeries {
        CountySeries::complete("01001".parse().unwrap(), vals)
    }

    fn panel(name: &str, len: usize, f: impl Fn(usize, usize) -> f64) -> Panel {
        let idx = DateIndex::new("2020-03-18".parse().unwrap(), len).unwrap();
        Panel::new(
            name,
            idx,
            (0..3).map(|c| {
                CountySeries::complete(
                    Fips::from_u32(1001 + 2 * c as u32).unwrap(),
                    (0..len).map(|t| f(c, t)).collect(),
                )
            }),
        )
        .unwrap()
    }

    #[test]
    fn window_counts() {
        let spec = WindowSpec::default();
        assert_eq!(enumerate_windows(256, &spec).unwrap().len(), 169);
        assert_eq!(enumerate_windows(88, &spec).unwrap().len(), 1);
        assert!(matches!(enumerate_windows(87, &spec), Err(Error::SeriesTooShort { len: 87, needed: 88 })));
        assert_eq!(enumerate_windows(100, &spec).unwrap().len(), 13);
        let strided = WindowSpec { stride: 7, ..spec };
        let w = enumerate_windows(256, &strided).unwrap();
        assert_eq!(w.len(), (256 - 88) / 7 + 1);
        assert_eq!(w[1].train_start, 7);
        assert!(w.iter().all(|w| w.train_len() == 60));
    }

    #[test]
    fn invalid_specs() {
        assert!(WindowSpec { train_len: 1, ..Default::default() }.validate().is_err());
        assert!(WindowSpec { lookaheads: vec![], ..Default::default() }.validate().is_err());
        assert!(WindowSpec { lookaheads: vec![0, 1], ..Default::default() }.validate().is_err());
        assert!(WindowSpec { lookaheads: vec![1, 1], ..Default::default() }.validate().is_err());
        assert!(WindowSpec { stride: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn supervised_row_counts() {
        let cases = series((0..100).map(|t| t as f64).collect());
        let mob = series((0..100).map(|t| 1000.0 + t as f64).collect());

        let s = build_supervised(&cases, None, Window { train_start: 10, train_end: 69 }, 1, 10).unwrap();
        assert_eq!(s.rows.len(), 60);
        assert!(s.rows.iter().all(|r| r.x_case == r.y - 1.0 && r.x_mob.is_none()));
        assert_eq!(s.n_features(), 1);

        let s = build_supervised(&cases, Some(&mob), Window { train_start: 0, train_end: 59 }, 1, 10).unwrap();
        assert_eq!(s.rows.len(), 50);
        assert_eq!(s.rows[0].target_day, 10);
        assert_eq!(s.rows[0].x_mob, Some(1000.0));
        assert_eq!(s.design().cols(), 2);

        let s = build_supervised(&cases, None, Window { train_start: 0, train_end: 59 }, 28, 10).unwrap();
        assert_eq!(s.rows.len(), 32);
        let s = build_supervised(&cases, Some(&mob), Window { train_start: 0, train_end: 59 }, 28, 10).unwrap();
        assert_eq!(s.rows.len(), 32);

        let short = build_supervised(&cases, None, Window { train_start: 0, train_end: 28 }, 28, 10);
        assert!(matches!(short, Err(Error::TooFewRows { rows: 1 })));
        assert!(build_supervised(&cases, None, Window { train_start: 50, train_end: 100 }, 1, 10).is_err());
    }

    #[test]
    fn record_counts() {
        let cases = panel("cases", 100, |c, t| (c * 50) as f64 + (t as f64 * 0.3).sin() * 5.0 + t as f64 * 0.1);
        let mob = panel("mob", 100, |c, t| 1.0 + c as f64 * 0.2 + (t as f64 * 0.17).cos());
        let grid = HyperGrid::default();
        let base = run_backtest(&cases, None, &WindowSpec::default(), &grid).unwrap();
        assert_eq!(base.len(), 3 * 13 * 5);
        assert!(base.iter().all(|r| r.mobility_dataset.is_none()));
        let both = run_backtest(&cases, Some(&mob), &WindowSpec::default(), &grid).unwrap();
        assert_eq!(both.len(), 390);
        assert!(both.windows(2).all(|w| w[0].sort_key() < w[1].sort_key()));
    }

    #[test]
    fn constant_county_predicts_its_constant() {
        let cases = panel("cases", 95, |c, _| 10.0 * (c + 1) as f64);
        let recs = run_backtest(&cases, None, &WindowSpec::default(), &HyperGrid::default()).unwrap();
        for r in recs {
            let level = 10.0 * (r.county.as_u32() - 1001) as f64 / 2.0 + 10.0;
            assert_eq!(r.predicted, level);
            assert_eq!(r.actual, level);
        }
    }

    #[test]
    fn misaligned_panels_are_rejected() {
        let cases = panel("cases", 100, |_, t| t as f64);
        let mob = panel("mob", 99, |_, t| t as f64);
        assert!(run_backtest(&cases, Some(&mob), &WindowSpec::default(), &HyperGrid::default()).is_err());
    }
}
