//! Run configuration for the `backtest` subcommand.
//!
//! A config file is flat UTF-8 text, one `key = value` per line:
//!
//! ```text
//! # comments start with '#'; blank lines are ignored
//! cases = data/cases.csv
//! mobility = apple=data/apple.csv     # repeatable, label=path
//! mobility = google=data/google.csv
//! train_len = 60
//! lookaheads = 1,7,14,21,28
//! baseline_window = 2020-02-17:2020-03-07   # or `none`
//! ```
//!
//! Keys: `cases`, `mobility`, `out`, `start`, `end`, `train_len`, `lookaheads`,
//! `mobility_lag`, `stride`, `baseline_window`, `smooth`, `estimator`,
//! `lambdas`, `alphas`, `val_len`, `jobs`. Every key except `mobility` may
//! appear once. Relative paths are resolved against the config file's directory.
//! Command-line flags override file values; any `--mobility` flag replaces the
//! file's whole mobility list.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;

use crate::backtest::WindowSpec;
use crate::elasticnet::{Estimator, HyperGrid};
use crate::error::{Error, Result};
use crate::panel::{parse_iso_date, DateIndex};
use crate::preprocess::BaselineWindow;

pub const DEFAULT_SMOOTH: usize = 7;

/// Partially specified settings from one source (file or flags).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub cases: Option<PathBuf>,
    pub mobility: Vec<(String, PathBuf)>,
    pub out: Option<PathBuf>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub train_len: Option<usize>,
    pub lookaheads: Option<Vec<u32>>,
    pub mobility_lag: Option<usize>,
    pub stride: Option<usize>,
    /// `Some(None)` disables baselining.
    pub baseline_window: Option<Option<BaselineWindow>>,
    pub smooth: Option<usize>,
    pub estimator: Option<Estimator>,
    pub lambdas: Option<Vec<f64>>,
    pub alphas: Option<Vec<f64>>,
    pub val_len: Option<usize>,
    pub jobs: Option<usize>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| cfg_err(format!("{key}: cannot parse `{v}`")))
}

pub fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse_num(key, s)).collect()
}

pub fn parse_date(key: &str, v: &str) -> Result<NaiveDate> {
    parse_iso_date(v.trim()).ok_or_else(|| cfg_err(format!("{key}: `{v}` is not a YYYY-MM-DD date")))
}

/// `START:END` or `none`.
pub fn parse_baseline_window(v: &str) -> Result<Option<BaselineWindow>> {
    let v = v.trim();
    if v.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let (a, b) =
        v.split_once(':').ok_or_else(|| cfg_err(format!("baseline_window: expected START:END or none, got `{v}`")))?;
    BaselineWindow::new(parse_date("baseline_window", a)?, parse_date("baseline_window", b)?).map(Some)
}

/// `label=path`; labels are restricted to characters safe in file names.
pub fn parse_mobility(v: &str) -> Result<(String, PathBuf)> {
    let (label, path) =
        v.split_once('=').ok_or_else(|| cfg_err(format!("mobility: expected label=path, got `{v}`")))?;
    let label = label.trim();
    if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')) {
        return Err(cfg_err(format!("mobility: label `{label}` must be non-empty [A-Za-z0-9_.-]")));
    }
    let path = path.trim();
    if path.is_empty() {
        return Err(cfg_err(format!("mobility: empty path for `{label}`")));
    }
    Ok((label.to_string(), PathBuf::from(path)))
}

impl Settings {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse_str(&text, base)
    }

    pub fn parse_str(text: &str, base: &Path) -> Result<Self> {
        let mut s = Settings::default();
        let mut seen = BTreeSet::new();
        let resolve = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| cfg_err(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if key != "mobility" && !seen.insert(key.to_string()) {
                return Err(cfg_err(format!("line {}: `{key}` set twice", n + 1)));
            }
            match key {
                "cases" => s.cases = Some(resolve(value.into())),
                "mobility" => {
                    let (label, p) = parse_mobility(value)?;
                    s.mobility.push((label, resolve(p)));
                }
                "out" => s.out = Some(resolve(value.into())),
                "start" => s.start = Some(parse_date(key, value)?),
                "end" => s.end = Some(parse_date(key, value)?),
                "train_len" => s.train_len = Some(parse_num(key, value)?),
                "lookaheads" => s.lookaheads = Some(parse_list(key, value)?),
                "mobility_lag" => s.mobility_lag = Some(parse_num(key, value)?),
                "stride" => s.stride = Some(parse_num(key, value)?),
                "baseline_window" => s.baseline_window = Some(parse_baseline_window(value)?),
                "smooth" => s.smooth = Some(parse_num(key, value)?),
                "estimator" => s.estimator = Some(value.parse()?),
                "lambdas" => s.lambdas = Some(parse_list(key, value)?),
                "alphas" => s.alphas = Some(parse_list(key, value)?),
                "val_len" => s.val_len = Some(parse_num(key, value)?),
                "jobs" => s.jobs = Some(parse_num(key, value)?),
                other => return Err(cfg_err(format!("line {}: unknown key `{other}`", n + 1))),
            }
        }
        Ok(s)
    }

    /// `self` wins wherever it is set.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            cases: self.cases.or(base.cases),
            mobility: if self.mobility.is_empty() { base.mobility } else { self.mobility },
            out: self.out.or(base.out),
            start: self.start.or(base.start),
            end: self.end.or(base.end),
            train_len: self.train_len.or(base.train_len),
            lookaheads: self.lookaheads.or(base.lookaheads),
            mobility_lag: self.mobility_lag.or(base.mobility_lag),
            stride: self.stride.or(base.stride),
            baseline_window: self.baseline_window.or(base.baseline_window),
            smooth: self.smooth.or(base.smooth),
            estimator: self.estimator.or(base.estimator),
            lambdas: self.lambdas.or(base.lambdas),
            alphas: self.alphas.or(base.alphas),
            val_len: self.val_len.or(base.val_len),
            jobs: self.jobs.or(base.jobs),
        }
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let spec = WindowSpec {
            train_len: self.train_len.unwrap_or(60),
            lookaheads: self.lookaheads.unwrap_or_else(|| WindowSpec::DEFAULT_LOOKAHEADS.to_vec()),
            mobility_lag: self.mobility_lag.unwrap_or(10),
            stride: self.stride.unwrap_or(1),
        };
        let estimator = self.estimator.unwrap_or(Estimator::ElasticNet);
        let grid = HyperGrid::build(
            estimator,
            self.lambdas.as_deref().unwrap_or(&HyperGrid::DEFAULT_LAMBDAS),
            self.alphas.as_deref().unwrap_or(&HyperGrid::DEFAULT_ALPHAS),
        )?
        .with_val_len(self.val_len.unwrap_or(HyperGrid::DEFAULT_VAL_LEN));
        let cfg = RunConfig {
            case_csv: self.cases.ok_or_else(|| cfg_err("no case CSV given (--cases)"))?,
            mobility_csvs: self.mobility,
            start: self.start,
            end: self.end,
            baseline_window: self.baseline_window.unwrap_or(Some(BaselineWindow::default())),
            window_spec: spec,
            output_dir: self.out.unwrap_or_else(|| PathBuf::from("out")),
            estimator,
            grid,
            smooth: self.smooth.unwrap_or(DEFAULT_SMOOTH),
            jobs: self.jobs.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Fully resolved `backtest` parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case_csv: PathBuf,
    pub mobility_csvs: Vec<(String, PathBuf)>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub baseline_window: Option<BaselineWindow>,
    pub window_spec: WindowSpec,
    pub output_dir: PathBuf,
    pub estimator: Estimator,
    pub grid: HyperGrid,
    /// Trailing rolling-mean width; 1 disables smoothing.
    pub smooth: usize,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.window_spec.validate()?;
        if self.mobility_csvs.is_empty() {
            return Err(cfg_err("at least one --mobility label=path is required"));
        }
        let mut labels = BTreeSet::new();
        let mut paths = BTreeSet::from([self.case_csv.clone()]);
        for (label, path) in &self.mobility_csvs {
            if !labels.insert(label) {
                return Err(cfg_err(format!("mobility label `{label}` used twice")));
            }
            if !paths.insert(path.clone()) {
                return Err(cfg_err(format!("input path {} used twice", path.display())));
            }
        }
        if paths.contains(&self.output_dir) {
            return Err(cfg_err("output directory coincides with an input path"));
        }
        if self.smooth == 0 {
            return Err(cfg_err("smooth must be >= 1"));
        }
        if let (Some(a), Some(b)) = (self.start, self.end) {
            let idx = DateIndex::from_range(a, b).map_err(|_| cfg_err(format!("start {a} is after end {b}")))?;
            if idx.len() < self.window_spec.min_index_len() {
                return Err(Error::SeriesTooShort { len: idx.len(), needed: self.window_spec.min_index_len() });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_grammar() {
        let text = "# run\ncases = c.csv\nmobility = apple=/abs/a.csv\nmobility=google = g.csv # trailing\n\
                    lookaheads = 1, 7\nbaseline_window = none\nestimator = ridge\nlambdas = 0.1,1\n";
        let s = Settings::parse_str(text, Path::new("cfg")).unwrap();
        assert_eq!(s.cases, Some(PathBuf::from("cfg/c.csv")));
        assert_eq!(
            s.mobility,
            vec![("apple".into(), PathBuf::from("/abs/a.csv")), ("google".into(), PathBuf::from("cfg/g.csv"))]
        );
        assert_eq!(s.lookaheads, Some(vec![1, 7]));
        assert_eq!(s.baseline_window, Some(None));
        let cfg = s.resolve().unwrap();
        assert_eq!(cfg.estimator, Estimator::Ridge);
        assert_eq!(cfg.grid.configs.len(), 2);
        assert!(cfg.grid.configs.iter().all(|c| c.alpha == 0.0));
        assert_eq!(cfg.window_spec.train_len, 60);
    }

    #[test]
    fn file_errors() {
        for bad in
            ["nokey\n", "train_len = 5\ntrain_len = 6\n", "colour = red\n", "train_len = x\n", "start = 2020-3-1\n"]
        {
            assert!(matches!(Settings::parse_str(bad, Path::new("")), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn flags_win() {
        let file = Settings {
            cases: Some("a.csv".into()),
            mobility: vec![("m".into(), "m.csv".into())],
            train_len: Some(30),
            smooth: Some(3),
            ..Default::default()
        };
        let flags =
            Settings { train_len: Some(45), mobility: vec![("n".into(), "n.csv".into())], ..Default::default() };
        let cfg = flags.over(file).resolve().unwrap();
        assert_eq!(cfg.window_spec.train_len, 45);
        assert_eq!(cfg.smooth, 3);
        assert_eq!(cfg.mobility_csvs, vec![("n".to_string(), PathBuf::from("n.csv"))]);
        assert_eq!(cfg.baseline_window, Some(BaselineWindow::default()));
    }

    #[test]
    fn invariants() {
        let base = || Settings {
            cases: Some("c.csv".into()),
            mobility: vec![("m".into(), "m.csv".into())],
            ..Default::default()
        };
        assert!(base().resolve().is_ok());
        let dup = Settings { mobility: vec![("m".into(), "c.csv".into())], ..base() };
        assert!(dup.resolve().is_err());
        let labels = Settings { mobility: vec![("m".into(), "a.csv".into()), ("m".into(), "b.csv".into())], ..base() };
        assert!(labels.resolve().is_err());
        let short = Settings {
            start: Some(parse_date("s", "2020-03-01").unwrap()),
            end: Some(parse_date("e", "2020-05-26").unwrap()),
            ..base()
        };
        assert!(matches!(short.resolve(), Err(Error::SeriesTooShort { len: 87, needed: 88 })));
        assert!(Settings { mobility: vec![], ..base() }.resolve().is_err());
        assert!(parse_mobility("=x.csv").is_err());
        assert!(parse_mobility("a/b=x.csv").is_err());
        assert!(parse_baseline_window("2020-03-07:2020-02-17").is_err());
    }
}
