//! Per-county daily panels: loading, completeness filtering and alignment.
//!
//! A [`Panel`] owns one [`CountySeries`] per county, all sharing a single
//! contiguous [`DateIndex`]. Cells absent from the source file are kept as
//! `None` until [`filter_complete`] drops the counties that carry them; values
//! are never imputed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Five-digit, zero-padded county identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fips([u8; 5]);

impl Fips {
    pub fn as_str(&self) -> &str {
        // only ASCII digits are ever stored
        std::str::from_utf8(&self.0).expect("fips is ascii")
    }

    pub fn as_u32(&self) -> u32 {
        self.0.iter().fold(0, |acc, d| acc * 10 + u32::from(d - b'0'))
    }

    pub fn from_u32(code: u32) -> Result<Self> {
        if code > 99_999 {
            return Err(Error::BadFips(code.to_string()));
        }
        format!("{code:05}").parse()
    }
}

impl FromStr for Fips {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.is_empty() || t.len() > 5 || !t.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::BadFips(s.to_string()));
        }
        let mut out = [b'0'; 5];
        out[5 - t.len()..].copy_from_slice(t.as_bytes());
        Ok(Fips(out))
    }
}

impl fmt::Display for Fips {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Fips {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fips({})", self.as_str())
    }
}

impl Serialize for Fips {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Fips {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A run of `len` consecutive calendar days starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DateIndex {
    start: NaiveDate,
    len: usize,
}

impl DateIndex {
    pub fn new(start: NaiveDate, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidArgument("date index must span at least one day".into()));
        }
        start
            .checked_add_days(Days::new(len as u64 - 1))
            .ok_or_else(|| Error::InvalidArgument("date index overflows the calendar".into()))?;
        Ok(Self { start, len })
    }

    /// Inclusive `start..=end`.
    pub fn from_range(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidArgument(format!("empty date range {start}..={end}")));
        }
        Self::new(start, (end - start).num_days() as usize + 1)
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn end(&self) -> NaiveDate {
        self.date(self.len - 1)
    }

    pub fn date(&self, i: usize) -> NaiveDate {
        self.start + Days::new(i as u64)
    }

    pub fn position(&self, date: NaiveDate) -> Option<usize> {
        let off = (date - self.start).num_days();
        (off >= 0 && (off as usize) < self.len).then_some(off as usize)
    }

    pub fn contains(&self, other: &DateIndex) -> bool {
        other.start >= self.start && other.end() <= self.end()
    }

    pub fn intersect(&self, other: &DateIndex) -> Option<DateIndex> {
        let start = self.start.max(other.start);
        let end = self.end().min(other.end());
        DateIndex::from_range(start, end).ok()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.len).map(|i| self.date(i))
    }
}

/// One county's daily values; `None` marks a missing (or, after lagging, invalid) day.
#[derive(Debug, Clone, PartialEq)]
pub struct CountySeries {
    pub county: Fips,
    values: Vec<Option<f64>>,
}

impl CountySeries {
    pub fn new(county: Fips, values: Vec<Option<f64>>) -> Self {
        Self { county, values }
    }

    pub fn complete(county: Fips, values: Vec<f64>) -> Self {
        Self::new(county, values.into_iter().map(Some).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, day: usize) -> Option<f64> {
        self.values.get(day).copied().flatten()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_count() == 0
    }

    /// Dense copy of the values, or `None` if any day is missing.
    pub fn dense(&self) -> Option<Vec<f64>> {
        self.values.iter().copied().collect()
    }

    fn slice(&self, from: usize, len: usize) -> Self {
        Self::new(self.county, self.values[from..from + len].to_vec())
    }
}

/// A named set of county series sharing one date index.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    name: String,
    index: DateIndex,
    series: BTreeMap<Fips, CountySeries>,
}

impl Panel {
    pub fn new(
        name: impl Into<String>,
        index: DateIndex,
        series: impl IntoIterator<Item = CountySeries>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for s in series {
            if s.len() != index.len() {
                return Err(Error::InvalidArgument(format!(
                    "series for {} has {} values, index has {}",
                    s.county,
                    s.len(),
                    index.len()
                )));
            }
            if map.insert(s.county, s).is_some() {
                return Err(Error::InvalidArgument("duplicate county in panel".into()));
            }
        }
        Ok(Self { name: name.into(), index, series: map })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn index(&self) -> DateIndex {
        self.index
    }

    pub fn county_count(&self) -> usize {
        self.series.len()
    }

    pub fn counties(&self) -> impl Iterator<Item = Fips> + '_ {
        self.series.keys().copied()
    }

    pub fn get(&self, county: &Fips) -> Option<&CountySeries> {
        self.series.get(county)
    }

    pub fn series(&self) -> impl Iterator<Item = &CountySeries> {
        self.series.values()
    }

    pub fn complete_county_count(&self) -> usize {
        self.series.values().filter(|s| s.is_complete()).count()
    }

    /// Apply `f` to every series, keeping the index.
    pub fn try_map_series<F>(&self, mut f: F) -> Result<Panel>
    where
        F: FnMut(&CountySeries) -> Result<CountySeries>,
    {
        let series = self.series.values().map(&mut f).collect::<Result<Vec<_>>>()?;
        Panel::new(self.name.clone(), self.index, series)
    }

    /// Slice every series to `index` (no completeness filtering).
    pub fn restrict(&self, index: DateIndex) -> Result<Panel> {
        if !self.index.contains(&index) {
            return Err(Error::IndexOutOfRange { panel: self.name.clone(), start: index.start(), end: index.end() });
        }
        let off = self.index.position(index.start()).expect("contained");
        Ok(Panel {
            name: self.name.clone(),
            index,
            series: self.series.iter().map(|(k, s)| (*k, s.slice(off, index.len()))).collect(),
        })
    }

    fn retain_counties(&self, keep: &BTreeSet<Fips>) -> Panel {
        Panel {
            name: self.name.clone(),
            index: self.index,
            series: self.series.iter().filter(|(k, _)| keep.contains(k)).map(|(k, s)| (*k, s.clone())).collect(),
        }
    }
}

/// Strict `YYYY-MM-DD`.
pub fn parse_iso_date(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// Column names selecting date, county and value from a CSV header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub date: String,
    pub county: String,
    pub value: String,
}

impl CsvSchema {
    /// `date,fips,value`
    pub fn long() -> Self {
        Self { date: "date".into(), county: "fips".into(), value: "value".into() }
    }

    /// NYT county export: `date,county,state,fips,cases,deaths`, selecting `cases`.
    pub fn nyt() -> Self {
        Self { date: "date".into(), county: "fips".into(), value: "cases".into() }
    }

    /// Pick [`CsvSchema::long`] when a `value` column exists, otherwise [`CsvSchema::nyt`].
    pub fn infer(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let headers = rdr.headers().map_err(|e| csv_err(path, e))?;
        if headers.iter().any(|h| h.trim() == "value") {
            Ok(Self::long())
        } else {
            Ok(Self::nyt())
        }
    }
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self::long()
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
            _ => unreachable!(),
        }
    } else {
        Error::Csv { path: path.to_path_buf(), source: e }
    }
}

/// Load a long-format CSV into a panel named after the file stem.
///
/// Rows with a blank county cell are skipped (NYT uses them for unallocated
/// cases); blank value cells are treated as missing days.
pub fn load_panel_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Panel> {
    let path = path.as_ref();
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "panel".into());
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn { path: path.to_path_buf(), column: name.to_string() })
    };
    let (date_col, county_col, value_col) = (col(&schema.date)?, col(&schema.county)?, col(&schema.value)?);

    let mut cells: HashMap<(NaiveDate, Fips), f64> = HashMap::new();
    let mut seen_counties = BTreeSet::new();
    let mut range: Option<(NaiveDate, NaiveDate)> = None;

    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");

        let county_raw = field(county_col);
        if county_raw.is_empty() {
            log::debug!("{}:{line}: skipping row without county id", path.display());
            continue;
        }
        let county: Fips = county_raw.parse()?;
        let date_raw = field(date_col);
        let date = parse_iso_date(date_raw).ok_or_else(|| Error::BadDate {
            path: path.to_path_buf(),
            line,
            value: date_raw.to_string(),
        })?;
        range = Some(match range {
            None => (date, date),
            Some((lo, hi)) => (lo.min(date), hi.max(date)),
        });
        seen_counties.insert(county);

        let value_raw = field(value_col);
        if value_raw.is_empty() {
            continue;
        }
        let value: f64 = value_raw.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::BadValue {
            path: path.to_path_buf(),
            line,
            value: value_raw.to_string(),
        })?;
        match cells.insert((date, county), value) {
            Some(prev) if prev != value => {
                return Err(Error::ConflictingDuplicate {
                    path: path.to_path_buf(),
                    date,
                    county,
                    first: prev,
                    second: value,
                });
            }
            _ => {}
        }
    }

    let (lo, hi) = range.ok_or_else(|| Error::EmptyInput(path.display().to_string()))?;
    let index = DateIndex::from_range(lo, hi)?;
    let mut grid: BTreeMap<Fips, Vec<Option<f64>>> =
        seen_counties.into_iter().map(|c| (c, vec![None; index.len()])).collect();
    for ((date, county), v) in cells {
        let day = index.position(date).expect("date within observed range");
        grid.get_mut(&county).expect("county seen")[day] = Some(v);
    }
    Panel::new(name, index, grid.into_iter().map(|(c, v)| CountySeries::new(c, v)))
}

/// Restrict `panel` to `index`, keeping only counties with no missing day there.
pub fn filter_complete(panel: &Panel, index: DateIndex) -> Result<Panel> {
    let sliced = panel.restrict(index)?;
    let keep: BTreeSet<Fips> = sliced.series().filter(|s| s.is_complete()).map(|s| s.county).collect();
    if keep.is_empty() {
        return Err(Error::NoCompleteCounties(panel.name().to_string()));
    }
    Ok(sliced.retain_counties(&keep))
}

/// Restrict all panels to their common dates and common counties, preserving order.
pub fn align(panels: &[Panel]) -> Result<Vec<Panel>> {
    if panels.len() < 2 {
        return Err(Error::InvalidArgument("align needs at least two panels".into()));
    }
    let mut index = panels[0].index();
    for p in &panels[1..] {
        index = index.intersect(&p.index()).ok_or(Error::EmptyDateIntersection)?;
    }
    let mut counties: BTreeSet<Fips> = panels[0].counties().collect();
    for p in &panels[1..] {
        counties.retain(|c| p.get(c).is_some());
    }
    if counties.is_empty() {
        return Err(Error::EmptyCountyIntersection);
    }
    panels.iter().map(|p| Ok(p.restrict(index)?.retain_counties(&counties))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn fips(s: &str) -> Fips {
        s.parse().unwrap()
    }

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn complete_panel(name: &str, start: &str, counties: &[&str], len: usize) -> Panel {
        let idx = DateIndex::new(d(start), len).unwrap();
        Panel::new(
            name,
            idx,
            counties
                .iter()
                .enumerate()
                .map(|(k, c)| CountySeries::complete(fips(c), (0..len).map(|i| (k * 100 + i) as f64).collect())),
        )
        .unwrap()
    }

    #[test]
    fn fips_zero_pads_and_rejects_garbage() {
        assert_eq!(fips("1001").as_str(), "01001");
        assert_eq!(fips("36061").as_u32(), 36061);
        assert_eq!(Fips::from_u32(1001).unwrap(), fips("01001"));
        assert!("".parse::<Fips>().is_err());
        assert!("123456".parse::<Fips>().is_err());
        assert!("12a45".parse::<Fips>().is_err());
    }

    #[test]
    fn date_index_positions() {
        let idx = DateIndex::from_range(d("2020-03-18"), d("2020-03-22")).unwrap();
        assert_eq!(idx.len(), 5);
        assert_eq!(idx.position(d("2020-03-20")), Some(2));
        assert_eq!(idx.position(d("2020-03-23")), None);
        assert_eq!(idx.position(d("2020-03-17")), None);
        assert!(DateIndex::new(d("2020-01-01"), 0).is_err());
        let other = DateIndex::from_range(d("2020-03-20"), d("2020-04-01")).unwrap();
        assert_eq!(idx.intersect(&other), Some(DateIndex::from_range(d("2020-03-20"), d("2020-03-22")).unwrap()));
    }

    #[test]
    fn loads_well_formed_long_csv() {
        let mut body = String::from("date,fips,value\n");
        for day in 18..23 {
            for c in ["01001", "01003", "01005"] {
                body.push_str(&format!("2020-03-{day},{c},{day}.5\n"));
            }
        }
        let f = write_csv(&body);
        let p = load_panel_csv(f.path(), &CsvSchema::long()).unwrap();
        assert_eq!(p.county_count(), 3);
        assert_eq!(p.index().len(), 5);
        assert_eq!(p.get(&fips("01003")).unwrap().get(2), Some(20.5));
        assert_eq!(p.complete_county_count(), 3);
    }

    #[test]
    fn conflicting_duplicate_is_an_error() {
        let f = write_csv("date,fips,value\n2020-03-20,01001,5\n2020-03-20,01001,6\n");
        let err = load_panel_csv(f.path(), &CsvSchema::long()).unwrap_err();
        assert!(matches!(err, Error::ConflictingDuplicate { .. }), "{err}");
        assert!(err.to_string().contains("conflicting duplicate"));
    }

    #[test]
    fn identical_duplicate_is_merged() {
        let f = write_csv("date,fips,value\n2020-03-20,01001,5\n2020-03-20,01001,5\n2020-03-21,01001,7\n");
        let p = load_panel_csv(f.path(), &CsvSchema::long()).unwrap();
        assert_eq!(p.get(&fips("01001")).unwrap().values(), &[Some(5.0), Some(7.0)]);
    }

    #[test]
    fn absent_days_are_marked_missing() {
        let mut body = String::from("date,fips,value\n");
        for day in 18..23 {
            body.push_str(&format!("2020-03-{day},01001,1\n"));
            if day != 19 && day != 21 {
                body.push_str(&format!("2020-03-{day},01003,2\n"));
            }
        }
        let f = write_csv(&body);
        let p = load_panel_csv(f.path(), &CsvSchema::long()).unwrap();
        let s = p.get(&fips("01003")).unwrap();
        assert_eq!(s.missing_count(), 2);
        assert_eq!(s.get(1), None);
        assert_eq!(s.get(3), None);
    }

    #[test]
    fn bad_cells_are_reported() {
        let f = write_csv("date,fips,value\n2020-3-20,01001,5\n");
        assert!(matches!(load_panel_csv(f.path(), &CsvSchema::long()), Err(Error::BadDate { .. })));
        let f = write_csv("date,fips,value\n2020-03-20,01001,abc\n");
        assert!(matches!(load_panel_csv(f.path(), &CsvSchema::long()), Err(Error::BadValue { .. })));
        let f = write_csv("date,fips,amount\n2020-03-20,01001,5\n");
        assert!(matches!(load_panel_csv(f.path(), &CsvSchema::long()), Err(Error::MissingColumn { .. })));
        assert!(matches!(load_panel_csv("/nonexistent/cases.csv", &CsvSchema::long()), Err(Error::Io { .. })));
    }

    #[test]
    fn nyt_schema_selects_cases_and_skips_unknown_counties() {
        let f = write_csv(
            "date,county,state,fips,cases,deaths\n\
             2020-03-20,Autauga,Alabama,01001,3,0\n\
             2020-03-20,Unknown,Alabama,,9,0\n\
             2020-03-21,Autauga,Alabama,01001,4,0\n",
        );
        assert_eq!(CsvSchema::infer(f.path()).unwrap(), CsvSchema::nyt());
        let p = load_panel_csv(f.path(), &CsvSchema::nyt()).unwrap();
        assert_eq!(p.county_count(), 1);
        assert_eq!(p.get(&fips("01001")).unwrap().values(), &[Some(3.0), Some(4.0)]);
    }

    #[test]
    fn filter_complete_drops_incomplete_counties() {
        let idx = DateIndex::new(d("2020-03-18"), 5).unwrap();
        let p = Panel::new(
            "x",
            idx,
            vec![
                CountySeries::complete(fips("01001"), vec![1.0; 5]),
                CountySeries::new(fips("01003"), vec![Some(1.0), None, Some(1.0), Some(1.0), Some(1.0)]),
                CountySeries::complete(fips("01005"), vec![2.0; 5]),
            ],
        )
        .unwrap();
        let out = filter_complete(&p, idx).unwrap();
        assert_eq!(out.counties().collect::<Vec<_>>(), vec![fips("01001"), fips("01005")]);

        // missing day outside the requested range does not matter
        let tail = DateIndex::new(d("2020-03-20"), 3).unwrap();
        assert_eq!(filter_complete(&p, tail).unwrap().county_count(), 3);
    }

    #[test]
    fn filter_complete_identity_and_range_errors() {
        let p = complete_panel("x", "2020-03-18", &["01001", "01003"], 10);
        assert_eq!(filter_complete(&p, p.index()).unwrap(), p);
        let outside = DateIndex::new(d("2020-03-25"), 10).unwrap();
        assert!(matches!(filter_complete(&p, outside), Err(Error::IndexOutOfRange { .. })));

        let idx = DateIndex::new(d("2020-03-18"), 2).unwrap();
        let empty = Panel::new("e", idx, vec![CountySeries::new(fips("01001"), vec![None, Some(1.0)])]).unwrap();
        assert!(matches!(filter_complete(&empty, idx), Err(Error::NoCompleteCounties(_))));
    }

    #[test]
    fn align_intersects_dates_and_counties() {
        let cases = complete_panel("cases", "2020-03-01", &["01001", "01003", "01005"], 30);
        let mob = complete_panel("mob", "2020-03-10", &["01003", "01005", "02000"], 40);
        let out = align(&[cases.clone(), mob]).unwrap();
        assert_eq!(out[0].name(), "cases");
        for p in &out {
            assert_eq!(p.index(), DateIndex::from_range(d("2020-03-10"), d("2020-03-30")).unwrap());
            assert_eq!(p.counties().collect::<Vec<_>>(), vec![fips("01003"), fips("01005")]);
        }
        // values are slices of the source
        assert_eq!(out[0].get(&fips("01003")).unwrap().get(0), cases.get(&fips("01003")).unwrap().get(9));
        assert_eq!(align(&out).unwrap(), out);
    }

    #[test]
    fn align_identity_and_errors() {
        let a = complete_panel("a", "2020-03-01", &["01001", "01003"], 10);
        assert_eq!(align(&[a.clone(), a.clone()]).unwrap(), vec![a.clone(), a.clone()]);
        let b = complete_panel("b", "2020-03-01", &["02001"], 10);
        assert!(matches!(align(&[a.clone(), b]), Err(Error::EmptyCountyIntersection)));
        let c = complete_panel("c", "2020-05-01", &["01001"], 10);
        assert!(matches!(align(&[a.clone(), c]), Err(Error::EmptyDateIntersection)));
        assert!(align(&[a]).is_err());
    }
}
