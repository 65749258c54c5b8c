//! C ABI over the `mobcast` engine.
//!
//! Objects cross the boundary as opaque pointers created by `*_load`, `*_run`,
//! `*_compute` or `*_fit` and released with the matching `*_free`. Every
//! fallible call returns a [`MobcastStatus`]; on failure the message is
//! available from [`mobcast_last_error`] on the same thread until the next
//! failing call. Dates are encoded as `yyyymmdd` integers.
//!
//! Handles are immutable once built and may be read from several threads.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use chrono::{Datelike, NaiveDate};
use mobcast::backtest::{run_backtest, ModelKind, PredictionRecord, WindowSpec};
use mobcast::elasticnet::{fit, predict_row, Design, Estimator, FitConfig, FitResult, HyperGrid};
use mobcast::metrics::{ci_series, spearman, CiPoint};
use mobcast::panel::{load_panel_csv, CsvSchema, Panel};
use mobcast::synth::{generate, CouplingSchedule, SynthConfig};
use mobcast::{Error, ErrorKind};

/// Result of every fallible call. Input, config and runtime codes match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobcastStatus {
    Ok = 0,
    InputError = 2,
    ConfigError = 3,
    RuntimeError = 4,
    NullPointer = 5,
    Panic = 6,
}

pub const MOBCAST_ESTIMATOR_ELASTICNET: u32 = 0;
pub const MOBCAST_ESTIMATOR_OLS: u32 = 1;
pub const MOBCAST_ESTIMATOR_RIDGE: u32 = 2;
pub const MOBCAST_ESTIMATOR_LASSO: u32 = 3;

pub const MOBCAST_MODEL_BASELINE: u32 = 0;
pub const MOBCAST_MODEL_MOBILITY: u32 = 1;

/// Opaque per-county daily panel.
pub struct MobcastPanel(Panel);
/// Opaque, canonically sorted backtest output.
pub struct MobcastRecords(Vec<PredictionRecord>);
/// Opaque per-(date, lookahead) ci table.
pub struct MobcastCiSeries(Vec<CiPoint>);
/// Opaque fitted elastic-net model.
pub struct MobcastModel(FitResult);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobcastRecord {
    pub date: i32,
    pub fips: u32,
    pub lookahead: u32,
    /// `MOBCAST_MODEL_BASELINE` or `MOBCAST_MODEL_MOBILITY`.
    pub model_kind: u32,
    pub predicted: f64,
    pub actual: f64,
    pub train_end: i32,
    pub latest_feature: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobcastCiPoint {
    pub date: i32,
    pub lookahead: u32,
    pub rho_mobility: f64,
    pub rho_baseline: f64,
    pub ci: f64,
    pub n_counties: usize,
}

/// Synthetic generator settings; coupling `gamma` applies on days `[0, coupled_days)`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobcastSynthParams {
    pub n_counties: usize,
    pub n_days: usize,
    pub seed: u64,
    pub ar_coeff: f64,
    pub gamma: f64,
    pub coupled_days: usize,
    pub mobility_lag: usize,
    pub noise_sd: f64,
}

/// Backtest settings. `lookaheads` points at `n_lookaheads` values; `jobs` 0 uses all cores.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MobcastBacktestParams {
    pub train_len: usize,
    pub lookaheads: *const u32,
    pub n_lookaheads: usize,
    pub mobility_lag: usize,
    pub stride: usize,
    pub estimator: u32,
    pub jobs: usize,
}

static DEFAULT_LOOKAHEADS: [u32; 5] = WindowSpec::DEFAULT_LOOKAHEADS;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> MobcastStatus {
    match err.kind() {
        ErrorKind::Input => MobcastStatus::InputError,
        ErrorKind::Config => MobcastStatus::ConfigError,
        ErrorKind::Runtime => MobcastStatus::RuntimeError,
    }
}

enum Failure {
    Null(&'static str),
    Engine(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MobcastStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MobcastStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for `{what}`"));
            MobcastStatus::NullPointer
        }
        Ok(Err(Failure::Engine(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            MobcastStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn as_slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

fn ymd(d: NaiveDate) -> i32 {
    d.year() * 10_000 + d.month() as i32 * 100 + d.day() as i32
}

fn into_handle<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the next failure.
#[no_mangle]
pub extern "C" fn mobcast_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mobcast_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Free a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn mobcast_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a long-format (`date,fips,value`) or NYT-style (`date,...,fips,cases`) CSV.
#[no_mangle]
pub unsafe extern "C" fn mobcast_panel_load(path: *const c_char, out: *mut *mut MobcastPanel) -> MobcastStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let path = CStr::from_ptr(as_ref(path, "path")?)
            .to_str()
            .map_err(|e| Error::InvalidArgument(format!("path is not UTF-8: {e}")))?;
        let schema = CsvSchema::infer(path.as_ref())?;
        *out = into_handle(MobcastPanel(load_panel_csv(path, &schema)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobcast_panel_free(panel: *mut MobcastPanel) {
    free_handle(panel)
}

/// Number of counties, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn mobcast_panel_county_count(panel: *const MobcastPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.0.county_count())
}

/// Length of the date index, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn mobcast_panel_day_count(panel: *const MobcastPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.0.index().len())
}

/// First date of the index as `yyyymmdd`, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn mobcast_panel_start_date(panel: *const MobcastPanel) -> i32 {
    panel.as_ref().map_or(0, |p| ymd(p.0.index().start()))
}

/// Panel name; free with `mobcast_string_free`.
#[no_mangle]
pub unsafe extern "C" fn mobcast_panel_name(panel: *const MobcastPanel) -> *mut c_char {
    match panel.as_ref() {
        Some(p) => CString::new(p.0.name().replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// Rename a panel; the name becomes the dataset label of backtest records.
#[no_mangle]
pub unsafe extern "C" fn mobcast_panel_set_name(panel: *mut MobcastPanel, name: *const c_char) -> MobcastStatus {
    guard(|| {
        let p = out_ptr(panel, "panel")?;
        let name = CStr::from_ptr(as_ref(name, "name")?).to_string_lossy().into_owned();
        p.0 = p.0.clone().with_name(name);
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn mobcast_synth_default_params() -> MobcastSynthParams {
    let d = SynthConfig::default();
    MobcastSynthParams {
        n_counties: d.n_counties,
        n_days: d.n_days,
        seed: d.seed,
        ar_coeff: d.ar_coeff,
        gamma: 0.5,
        coupled_days: 150,
        mobility_lag: d.mobility_lag,
        noise_sd: d.noise_sd,
    }
}

/// Generate a seeded synthetic (cases, mobility) pair.
#[no_mangle]
pub unsafe extern "C" fn mobcast_synth_generate(
    params: *const MobcastSynthParams,
    out_cases: *mut *mut MobcastPanel,
    out_mobility: *mut *mut MobcastPanel,
) -> MobcastStatus {
    guard(|| {
        let p = as_ref(params, "params")?;
        let oc = out_ptr(out_cases, "out_cases")?;
        let om = out_ptr(out_mobility, "out_mobility")?;
        *oc = ptr::null_mut();
        *om = ptr::null_mut();
        let cfg = SynthConfig {
            n_counties: p.n_counties,
            n_days: p.n_days,
            seed: p.seed,
            ar_coeff: p.ar_coeff,
            coupling: CouplingSchedule::on(0..p.coupled_days, p.gamma),
            mobility_lag: p.mobility_lag,
            noise_sd: p.noise_sd,
            ..SynthConfig::default()
        };
        let (cases, mobility) = generate(&cfg)?;
        *oc = into_handle(MobcastPanel(cases));
        *om = into_handle(MobcastPanel(mobility));
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn mobcast_backtest_default_params() -> MobcastBacktestParams {
    let d = WindowSpec::default();
    MobcastBacktestParams {
        train_len: d.train_len,
        lookaheads: DEFAULT_LOOKAHEADS.as_ptr(),
        n_lookaheads: DEFAULT_LOOKAHEADS.len(),
        mobility_lag: d.mobility_lag,
        stride: d.stride,
        estimator: MOBCAST_ESTIMATOR_ELASTICNET,
        jobs: 0,
    }
}

fn estimator(code: u32) -> Result<Estimator, Error> {
    Ok(match code {
        MOBCAST_ESTIMATOR_ELASTICNET => Estimator::ElasticNet,
        MOBCAST_ESTIMATOR_OLS => Estimator::Ols,
        MOBCAST_ESTIMATOR_RIDGE => Estimator::Ridge,
        MOBCAST_ESTIMATOR_LASSO => Estimator::Lasso,
        other => return Err(Error::Config(format!("unknown estimator code {other}"))),
    })
}

/// Backtest `cases` (and `mobility`, which may be NULL for baseline-only) on aligned panels.
#[no_mangle]
pub unsafe extern "C" fn mobcast_backtest_run(
    cases: *const MobcastPanel,
    mobility: *const MobcastPanel,
    params: *const MobcastBacktestParams,
    out: *mut *mut MobcastRecords,
) -> MobcastStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let cases = &as_ref(cases, "cases")?.0;
        let mobility = mobility.as_ref().map(|m| &m.0);
        let p = as_ref(params, "params")?;
        let spec = WindowSpec {
            train_len: p.train_len,
            lookaheads: as_slice(p.lookaheads, p.n_lookaheads, "lookaheads")?.to_vec(),
            mobility_lag: p.mobility_lag,
            stride: p.stride,
        };
        let grid = HyperGrid::for_estimator(estimator(p.estimator)?);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(p.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
        let records = pool.install(|| run_backtest(cases, mobility, &spec, &grid))?;
        *out = into_handle(MobcastRecords(records));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobcast_records_len(records: *const MobcastRecords) -> usize {
    records.as_ref().map_or(0, |r| r.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn mobcast_records_get(
    records: *const MobcastRecords,
    i: usize,
    out: *mut MobcastRecord,
) -> MobcastStatus {
    guard(|| {
        let r = as_ref(records, "records")?;
        let out = out_ptr(out, "out")?;
        let rec =
            r.0.get(i).ok_or_else(|| Error::InvalidArgument(format!("record {i} out of range (len {})", r.0.len())))?;
        *out = MobcastRecord {
            date: ymd(rec.date),
            fips: rec.county.as_u32(),
            lookahead: rec.lookahead,
            model_kind: match rec.model_kind {
                ModelKind::Baseline => MOBCAST_MODEL_BASELINE,
                ModelKind::Mobility => MOBCAST_MODEL_MOBILITY,
            },
            predicted: rec.predicted,
            actual: rec.actual,
            train_end: ymd(rec.train_end),
            latest_feature: ymd(rec.latest_feature),
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobcast_records_free(records: *mut MobcastRecords) {
    free_handle(records)
}

/// Per-(date, lookahead) correlation improvement from a backtest with mobility.
#[no_mangle]
pub unsafe extern "C" fn mobcast_ci_compute(
    records: *const MobcastRecords,
    out: *mut *mut MobcastCiSeries,
) -> MobcastStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let r = as_ref(records, "records")?;
        *out = into_handle(MobcastCiSeries(ci_series(&r.0)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobcast_ci_len(ci: *const MobcastCiSeries) -> usize {
    ci.as_ref().map_or(0, |c| c.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn mobcast_ci_get(
    ci: *const MobcastCiSeries,
    i: usize,
    out: *mut MobcastCiPoint,
) -> MobcastStatus {
    guard(|| {
        let c = as_ref(ci, "ci")?;
        let out = out_ptr(out, "out")?;
        let p =
            c.0.get(i)
                .ok_or_else(|| Error::InvalidArgument(format!("ci point {i} out of range (len {})", c.0.len())))?;
        *out = MobcastCiPoint {
            date: ymd(p.date),
            lookahead: p.lookahead,
            rho_mobility: p.rho_mobility,
            rho_baseline: p.rho_baseline,
            ci: p.ci,
            n_counties: p.n_counties,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobcast_ci_free(ci: *mut MobcastCiSeries) {
    free_handle(ci)
}

/// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
#[no_mangle]
pub unsafe extern "C" fn mobcast_spearman(
    xs: *const f64,
    ys: *const f64,
    n: usize,
    out_rho: *mut f64,
) -> MobcastStatus {
    guard(|| {
        let xs = as_slice(xs, n, "xs")?;
        let ys = as_slice(ys, n, "ys")?;
        let out = out_ptr(out_rho, "out_rho")?;
        *out = spearman(xs, ys)?.rho;
        Ok(())
    })
}

/// Fit an elastic net on a row-major `rows × cols` design.
#[no_mangle]
pub unsafe extern "C" fn mobcast_enet_fit(
    x: *const f64,
    rows: usize,
    cols: usize,
    y: *const f64,
    lambda: f64,
    alpha: f64,
    out: *mut *mut MobcastModel,
) -> MobcastStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let len = rows.checked_mul(cols).ok_or_else(|| Error::InvalidArgument("rows * cols overflows".into()))?;
        let design = Design::new(rows, cols, as_slice(x, len, "x")?.to_vec())?;
        let y = as_slice(y, rows, "y")?;
        let model = fit(&design, y, &FitConfig::new(lambda, alpha)?)?;
        *out = into_handle(MobcastModel(model));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobcast_model_n_features(model: *const MobcastModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.n_features())
}

#[no_mangle]
pub unsafe extern "C" fn mobcast_model_intercept(model: *const MobcastModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.intercept)
}

/// Copy the original-scale coefficients into `out[0..len]`; `len` must equal the feature count.
#[no_mangle]
pub unsafe extern "C" fn mobcast_model_coefficients(
    model: *const MobcastModel,
    out: *mut f64,
    len: usize,
) -> MobcastStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        if len != m.0.coefficients.len() {
            return Err(Error::DimensionMismatch { expected: m.0.coefficients.len(), got: len }.into());
        }
        if len > 0 {
            if out.is_null() {
                return Err(Failure::Null("out"));
            }
            slice::from_raw_parts_mut(out, len).copy_from_slice(&m.0.coefficients);
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobcast_model_predict(
    model: *const MobcastModel,
    row: *const f64,
    cols: usize,
    out: *mut f64,
) -> MobcastStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let row = as_slice(row, cols, "row")?;
        *out_ptr(out, "out")? = predict_row(&m.0, row)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobcast_model_free(model: *mut MobcastModel) {
    free_handle(model)
}
