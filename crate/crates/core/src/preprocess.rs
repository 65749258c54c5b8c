//! Baselining, trailing rolling means and lags.

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::panel::{CountySeries, DateIndex, Panel};

/// Baseline means with magnitude below this are treated as zero.
pub const BASELINE_EPS: f64 = 1e-12;

/// Inclusive reference period whose mean becomes a mobility series' unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineWindow {
    start: NaiveDate,
    end: NaiveDate,
}

impl BaselineWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::Config(format!("baseline window {start}:{end} is empty")));
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.end
    }

    pub fn as_index(&self) -> DateIndex {
        DateIndex::from_range(self.start, self.end).expect("start <= end")
    }
}

impl Default for BaselineWindow {
    /// 2020-02-17 through 2020-03-07.
    fn default() -> Self {
        Self { start: NaiveDate::from_ymd_opt(2020, 2, 17).unwrap(), end: NaiveDate::from_ymd_opt(2020, 3, 7).unwrap() }
    }
}

/// Mean of the raw, present values of `series` inside `window`.
///
/// `index` is the date index the series is aligned to.
pub fn baseline_mean(series: &CountySeries, index: DateIndex, window: BaselineWindow) -> Result<f64> {
    let w = window.as_index();
    if !index.contains(&w) {
        return Err(Error::IndexOutOfRange { panel: series.county.to_string(), start: w.start(), end: w.end() });
    }
    let off = index.position(w.start()).expect("contained");
    let present: Vec<f64> = series.values()[off..off + w.len()].iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::EmptyBaseline(series.county));
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

/// Divide every value by `baseline_mean`.
pub fn baseline_normalize(series: &CountySeries, baseline_mean: f64) -> Result<CountySeries> {
    if !baseline_mean.is_finite() || baseline_mean.abs() < BASELINE_EPS {
        return Err(Error::DegenerateBaseline { county: series.county, mean: baseline_mean });
    }
    Ok(CountySeries::new(series.county, series.values().iter().map(|v| v.map(|x| x / baseline_mean)).collect()))
}

/// Trailing mean over days `max(0, t-window+1)..=t`.
///
/// The head uses the available prefix. A day whose window touches a missing
/// value is itself missing.
pub fn rolling_mean(series: &CountySeries, window: usize) -> Result<CountySeries> {
    if window == 0 {
        return Err(Error::InvalidArgument("rolling window must be at least 1".into()));
    }
    let vals = series.values();
    let out = (0..vals.len())
        .map(|t| {
            let span = &vals[(t + 1).saturating_sub(window)..=t];
            let mut sum = 0.0;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in span {
                let v = (*v)?;
                sum += v;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            // clamp away rounding so the mean never leaves the window's range
            Some((sum / span.len() as f64).clamp(lo, hi))
        })
        .collect();
    Ok(CountySeries::new(series.county, out))
}

/// Shift by `k` days: output day `t` carries input day `t-k`; days `t < k` are invalid.
pub fn lag(series: &CountySeries, k: usize) -> Result<CountySeries> {
    if k >= series.len() {
        return Err(Error::InvalidArgument(format!("lag {k} is not shorter than the series ({} days)", series.len())));
    }
    let vals = series.values();
    let out = (0..vals.len()).map(|t| if t < k { None } else { vals[t - k] }).collect();
    Ok(CountySeries::new(series.county, out))
}

/// Baseline every county of a mobility panel.
///
/// Counties with no value inside the window cannot be baselined and are dropped.
pub fn baseline_panel(panel: &Panel, window: BaselineWindow) -> Result<Panel> {
    let w = window.as_index();
    if !panel.index().contains(&w) {
        return Err(Error::IndexOutOfRange { panel: panel.name().to_string(), start: w.start(), end: w.end() });
    }
    let mut kept = Vec::with_capacity(panel.county_count());
    for s in panel.series() {
        match baseline_mean(s, panel.index(), window) {
            Ok(mean) => kept.push(baseline_normalize(s, mean)?),
            Err(Error::EmptyBaseline(c)) => {
                log::warn!("{}: county {c} has no baseline data, dropped", panel.name());
            }
            Err(e) => return Err(e),
        }
    }
    Panel::new(panel.name(), panel.index(), kept)
}

pub fn rolling_mean_panel(panel: &Panel, window: usize) -> Result<Panel> {
    panel.try_map_series(|s| rolling_mean(s, window))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::Fips;
    use proptest::prelude::*;

    fn series(vals: &[f64]) -> CountySeries {
        CountySeries::complete("01001".parse::<Fips>().unwrap(), vals.to_vec())
    }

    fn dense(s: &CountySeries) -> Vec<f64> {
        s.dense().unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(dense(&baseline_normalize(&series(&[100.0; 4]), 100.0).unwrap()), vec![1.0; 4]);
        assert_eq!(dense(&baseline_normalize(&series(&[50.0]), 100.0).unwrap()), vec![0.5]);
        let err = baseline_normalize(&series(&[1.0]), 0.0).unwrap_err();
        assert!(err.to_string().contains("01001"));
        assert!(baseline_normalize(&series(&[1.0]), 1e-13).is_err());
    }

    #[test]
    fn rolling_mean_examples() {
        assert_eq!(dense(&rolling_mean(&series(&[5.0; 10]), 7).unwrap()), vec![5.0; 10]);
        let r = dense(&rolling_mean(&series(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]), 7).unwrap());
        assert_eq!(r[6], 4.0);
        assert_eq!(r[0], 1.0);
        assert_eq!(r[1], 1.5);
        assert!(rolling_mean(&series(&[1.0]), 0).is_err());
    }

    #[test]
    fn rolling_mean_propagates_missing() {
        let s = CountySeries::new("01001".parse().unwrap(), vec![Some(1.0), None, Some(3.0), Some(4.0), Some(5.0)]);
        let r = rolling_mean(&s, 2).unwrap();
        assert_eq!(r.values(), &[Some(1.0), None, None, Some(3.5), Some(4.5)]);
    }

    #[test]
    fn lag_examples() {
        let s = series(&[10.0, 20.0, 30.0]);
        assert_eq!(lag(&s, 0).unwrap(), s);
        assert_eq!(lag(&s, 1).unwrap().values(), &[None, Some(10.0), Some(20.0)]);
        assert!(lag(&s, 3).is_err());
    }

    #[test]
    fn baseline_mean_uses_raw_window_values() {
        let idx = DateIndex::new("2020-02-15".parse().unwrap(), 30).unwrap();
        let vals: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let w = BaselineWindow::default(); // 02-17..03-07 -> positions 2..=21
        let m = baseline_mean(&series(&vals), idx, w).unwrap();
        assert!((m - 11.5).abs() < 1e-12);

        let late = DateIndex::new("2020-03-01".parse().unwrap(), 30).unwrap();
        assert!(matches!(baseline_mean(&series(&vals), late, w), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn baseline_panel_drops_counties_without_reference_data() {
        let idx = DateIndex::new("2020-03-01".parse().unwrap(), 4).unwrap();
        let w = BaselineWindow::new("2020-03-01".parse().unwrap(), "2020-03-02".parse().unwrap()).unwrap();
        let p = Panel::new(
            "m",
            idx,
            vec![
                CountySeries::complete("01001".parse().unwrap(), vec![2.0, 4.0, 6.0, 9.0]),
                CountySeries::new("01003".parse().unwrap(), vec![None, None, Some(1.0), Some(1.0)]),
            ],
        )
        .unwrap();
        let out = baseline_panel(&p, w).unwrap();
        assert_eq!(out.county_count(), 1);
        assert_eq!(out.series().next().unwrap().dense().unwrap(), vec![2.0 / 3.0, 4.0 / 3.0, 2.0, 3.0]);
        assert!(BaselineWindow::new("2020-03-02".parse().unwrap(), "2020-03-01".parse().unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn rolling_mean_bounded_by_input_range(
            vals in prop::collection::vec(-1e6f64..1e6, 1..60),
            window in 1usize..10,
        ) {
            let out = dense(&rolling_mean(&series(&vals), window).unwrap());
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(out.len(), vals.len());
            for v in out {
                prop_assert!(v >= lo && v <= hi);
            }
        }

        #[test]
        fn rolling_mean_preserves_constants(c in -1e6f64..1e6, n in 1usize..40, window in 1usize..10) {
            let out = dense(&rolling_mean(&series(&vec![c; n]), window).unwrap());
            prop_assert!(out.iter().all(|&v| v == c));
        }

        #[test]
        fn normalize_preserves_rank_order(
            vals in prop::collection::vec(-1e3f64..1e3, 2..30),
            mean in 1e-3f64..1e4,
        ) {
            let out = dense(&baseline_normalize(&series(&vals), mean).unwrap());
            for i in 0..vals.len() {
                for j in 0..vals.len() {
                    prop_assert_eq!(vals[i] < vals[j], out[i] < out[j]);
                }
            }
        }

        #[test]
        fn lags_compose(vals in prop::collection::vec(-1e3f64..1e3, 3..40), a in 0usize..10, b in 0usize..10) {
            prop_assume!(a + b < vals.len());
            let s = series(&vals);
            let twice = lag(&lag(&s, a).unwrap(), b).unwrap();
            let once = lag(&s, a + b).unwrap();
            for (x, y) in twice.values().iter().zip(once.values()) {
                if let (Some(x), Some(y)) = (x, y) {
                    prop_assert_eq!(x, y);
                }
            }
            prop_assert_eq!(twice.values(), once.values());
        }
    }
}
