//! File emission: panels, prediction records, ci tables, summaries and SVG charts.
//!
//! All writes go through [`write_atomic`] (temp file in the target directory,
//! then rename). Floats are written in Rust's shortest round-trip form so that
//! re-reading a file reproduces the exact values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;

use crate::backtest::{sort_records, ModelKind, PredictionRecord};
use crate::error::{Error, Result};
use crate::metrics::{CiPoint, CiSummary};
use crate::panel::{parse_iso_date, Panel};

pub const PREDICTIONS_HEADER: &str = "dataset,date,lookahead,fips,model_kind,predicted,actual";
pub const CI_HEADER: &str = "date,lookahead,rho_mobility,rho_baseline,ci,n_counties";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Write `contents` to `path` via a sibling temp file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(contents).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Long-format `date,fips,value` rows, dates then counties ascending.
pub fn panel_to_csv(panel: &Panel) -> String {
    let mut out = String::from("date,fips,value\n");
    let index = panel.index();
    for day in 0..index.len() {
        let date = index.date(day);
        for s in panel.series() {
            if let Some(v) = s.get(day) {
                let _ = writeln!(out, "{date},{},{v}", s.county);
            }
        }
    }
    out
}

pub fn predictions_to_csv(records: &[PredictionRecord]) -> String {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(PREDICTIONS_HEADER);
    out.push('\n');
    for r in &sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.dataset_label(),
            r.date,
            r.lookahead,
            r.county,
            r.model_kind,
            r.predicted,
            r.actual
        );
    }
    out
}

/// Parse a predictions CSV back into records.
///
/// The training-window fields are not part of the file; they are set to the
/// record date.
pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == PREDICTIONS_HEADER => {}
        _ => {
            return Err(Error::MissingColumn { path: path.to_path_buf(), column: PREDICTIONS_HEADER.into() });
        }
    }
    let bad = |line: usize, value: &str| Error::BadValue {
        path: path.to_path_buf(),
        line: line as u64 + 1,
        value: value.to_string(),
    };
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(i, line));
        }
        let date = parse_iso_date(f[1]).ok_or_else(|| Error::BadDate {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            value: f[1].to_string(),
        })?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i, s));
        out.push(PredictionRecord {
            mobility_dataset: (!f[0].is_empty()).then(|| f[0].to_string()),
            date,
            county: f[3].parse()?,
            lookahead: f[2].parse().map_err(|_| bad(i, f[2]))?,
            model_kind: f[4].parse::<ModelKind>().map_err(|_| bad(i, f[4]))?,
            predicted: num(f[5])?,
            actual: num(f[6])?,
            train_end: date,
            latest_feature: date,
        });
    }
    Ok(out)
}

pub fn ci_to_csv(points: &[CiPoint]) -> String {
    let mut out = String::from(CI_HEADER);
    out.push('\n');
    for p in points {
        let _ =
            writeln!(out, "{},{},{},{},{},{}", p.date, p.lookahead, p.rho_mobility, p.rho_baseline, p.ci, p.n_counties);
    }
    out
}

pub fn read_ci_csv(path: &Path) -> Result<Vec<CiPoint>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::BadValue { path: path.to_path_buf(), line: i as u64 + 1, value: line.to_string() };
        if f.len() != 6 {
            return Err(bad());
        }
        out.push(CiPoint {
            date: parse_iso_date(f[0]).ok_or_else(bad)?,
            lookahead: f[1].parse().map_err(|_| bad())?,
            rho_mobility: f[2].parse().map_err(|_| bad())?,
            rho_baseline: f[3].parse().map_err(|_| bad())?,
            ci: f[4].parse().map_err(|_| bad())?,
            n_counties: f[5].parse().map_err(|_| bad())?,
            degenerate: false,
        });
    }
    Ok(out)
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunSummary {
    pub estimator: String,
    pub train_len: usize,
    pub lookaheads: Vec<u32>,
    pub mobility_lag: usize,
    pub datasets: BTreeMap<String, DatasetSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub n_counties: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    #[serde(flatten)]
    pub ci: CiSummary,
}

impl DatasetSummary {
    pub fn new(points: &[CiPoint], ci: CiSummary) -> Self {
        Self {
            n_counties: points.iter().map(|p| p.n_counties).max().unwrap_or(0),
            first_date: points.iter().map(|p| p.date).min(),
            last_date: points.iter().map(|p| p.date).max(),
            ci,
        }
    }
}

pub fn summary_to_json(summary: &RunSummary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

const SVG_WIDTH: f64 = 960.0;
const SVG_HEIGHT: f64 = 540.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 130.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#ff7f0e", "#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round a positive span to a 1/2/5 × 10ᵏ step giving roughly `target` ticks.
fn nice_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    step * mag
}

/// One ci-vs-date line per lookahead on a fixed 960×540 canvas, with a zero line and legend.
pub fn ci_chart_svg(title: &str, points: &[CiPoint]) -> String {
    let mut by_l: BTreeMap<u32, Vec<&CiPoint>> = BTreeMap::new();
    for p in points {
        by_l.entry(p.lookahead).or_default().push(p);
    }
    for v in by_l.values_mut() {
        v.sort_by_key(|p| p.date);
    }
    let first = points.iter().map(|p| p.date).min();
    let last = points.iter().map(|p| p.date).max();

    let lo = points.iter().map(|p| p.ci).fold(-0.1f64, f64::min);
    let hi = points.iter().map(|p| p.ci).fold(0.1f64, f64::max);
    let step = nice_step(hi - lo, 8.0);
    let (y_lo, y_hi) = ((lo / step).floor() * step, (hi / step).ceil() * step);

    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let n_days = match (first, last) {
        (Some(a), Some(b)) => (b - a).num_days().max(1) as f64,
        _ => 1.0,
    };
    let x_of = |d: NaiveDate| MARGIN_LEFT + plot_w * (d - first.unwrap()).num_days() as f64 / n_days;
    let y_of = |v: f64| MARGIN_TOP + plot_h * (y_hi - v) / (y_hi - y_lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    );

    // y grid and labels
    let mut tick = y_lo;
    while tick <= y_hi + step * 1e-9 {
        let y = y_of(tick);
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##,
            MARGIN_LEFT + plot_w
        );
        let label = if tick.abs() < step * 1e-6 { 0.0 } else { tick };
        let _ =
            writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label:.2}</text>"#, MARGIN_LEFT - 8.0, y + 4.0);
        tick += step;
    }

    // x labels on the first of each month
    if let (Some(a), Some(b)) = (first, last) {
        for d in a.iter_days().take_while(|d| *d <= b).filter(|d| d.format("%d").to_string() == "01") {
            let x = x_of(d);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{MARGIN_TOP}" x2="{x:.2}" y2="{:.2}" stroke="#f0f0f0"/>"##,
                MARGIN_TOP + plot_h
            );
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{d}</text>"#,
                MARGIN_TOP + plot_h + 18.0
            );
        }
    }
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>"##
    );
    let zero = y_of(0.0);
    let _ = writeln!(
        s,
        r##"<line x1="{MARGIN_LEFT}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="#000" stroke-dasharray="6,4"/>"##,
        MARGIN_LEFT + plot_w
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" transform="rotate(-90 18 {:.2})" text-anchor="middle">ci</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">date</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        SVG_HEIGHT - 16.0
    );

    for (k, (l, pts)) in by_l.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        // break the line wherever consecutive points are not consecutive days
        let mut segment: Vec<String> = Vec::new();
        let mut prev: Option<NaiveDate> = None;
        let flush = |seg: &mut Vec<String>, s: &mut String| {
            if !seg.is_empty() {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    seg.join(" ")
                );
                seg.clear();
            }
        };
        for p in pts {
            if prev.is_some_and(|d| (p.date - d).num_days() != 1) {
                flush(&mut segment, &mut s);
            }
            segment.push(format!("{:.2},{:.2}", x_of(p.date), y_of(p.ci)));
            prev = Some(p.date);
        }
        flush(&mut segment, &mut s);

        let ly = MARGIN_TOP + 20.0 + 20.0 * k as f64;
        let lx = MARGIN_LEFT + plot_w + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"#,
            lx + 24.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">l = {l}</text>"#, lx + 30.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Output paths for one dataset label inside `dir`.
pub struct DatasetPaths {
    pub predictions: PathBuf,
    pub ci: PathBuf,
    pub chart: PathBuf,
}

impl DatasetPaths {
    pub fn new(dir: &Path, label: &str) -> Self {
        Self {
            predictions: dir.join(format!("predictions_{label}.csv")),
            ci: dir.join(format!("ci_{label}.csv")),
            chart: dir.join(format!("ci_{label}.svg")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::summarize;
    use crate::panel::{CountySeries, DateIndex, Fips};
    use chrono::Days;

    fn day(i: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 5, 28).unwrap() + Days::new(i)
    }

    fn record(i: u64, county: u32, kind: ModelKind, predicted: f64) -> PredictionRecord {
        PredictionRecord {
            mobility_dataset: Some("apple".into()),
            date: day(i),
            county: Fips::from_u32(county).unwrap(),
            lookahead: 7,
            model_kind: kind,
            predicted,
            actual: 0.1 + county as f64 / 3.0,
            train_end: day(i),
            latest_feature: day(i),
        }
    }

    #[test]
    fn predictions_round_trip_exactly() {
        let recs = vec![
            record(1, 1003, ModelKind::Mobility, 1.0 / 3.0),
            record(0, 1001, ModelKind::Baseline, -2.5e-17),
            record(0, 1001, ModelKind::Mobility, 123456.789),
        ];
        let text = predictions_to_csv(&recs);
        assert!(text.starts_with(PREDICTIONS_HEADER));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_atomic(&path, text.as_bytes()).unwrap();
        let back = read_predictions_csv(&path).unwrap();
        let mut want = recs.clone();
        sort_records(&mut want);
        assert_eq!(back, want);
        assert!(!dir.path().join(".p.csv.tmp").exists());
    }

    #[test]
    fn ci_round_trip() {
        let pts = vec![CiPoint {
            date: day(0),
            lookahead: 14,
            rho_mobility: 0.7,
            rho_baseline: 0.6,
            ci: 0.7 - 0.6,
            n_counties: 12,
            degenerate: false,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ci.csv");
        write_atomic(&path, ci_to_csv(&pts).as_bytes()).unwrap();
        assert_eq!(read_ci_csv(&path).unwrap(), pts);
    }

    #[test]
    fn panel_csv_layout() {
        let idx = DateIndex::new(day(0), 2).unwrap();
        let p = Panel::new(
            "x",
            idx,
            vec![
                CountySeries::complete(Fips::from_u32(1001).unwrap(), vec![1.0, 2.5]),
                CountySeries::new(Fips::from_u32(1003).unwrap(), vec![None, Some(4.0)]),
            ],
        )
        .unwrap();
        assert_eq!(panel_to_csv(&p), "date,fips,value\n2020-05-28,01001,1\n2020-05-29,01001,2.5\n2020-05-29,01003,4\n");
    }

    #[test]
    fn chart_has_one_line_per_lookahead_and_zero_line() {
        let pts: Vec<CiPoint> = [1u32, 7, 14, 21, 28]
            .iter()
            .flat_map(|&l| {
                (0..40).map(move |i| CiPoint {
                    date: day(i),
                    lookahead: l,
                    rho_mobility: 0.5,
                    rho_baseline: 0.4,
                    ci: (i as f64 / 10.0).sin() * 0.01 * l as f64,
                    n_counties: 5,
                    degenerate: false,
                })
            })
            .collect();
        let svg = ci_chart_svg("apple <drive>", &pts);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 5);
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("l = 28"));
        assert!(svg.contains("apple &lt;drive&gt;"));
        assert!(svg.contains("2020-06-01"));
        assert_eq!(svg, ci_chart_svg("apple <drive>", &pts));

        let json = summary_to_json(&RunSummary {
            datasets: [("apple".to_string(), DatasetSummary::new(&pts, summarize(&pts)))].into(),
            ..Default::default()
        });
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v["datasets"]["apple"]["lookaheads"]["28"]["max_ci"].is_number());
    }

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(0.8, 8.0), 0.1);
        assert_eq!(nice_step(2.0, 8.0), 0.5);
        assert!((nice_step(0.3, 8.0) - 0.05).abs() < 1e-15);
    }
}
