//! `mobcast` command line: `validate`, `synth`, `backtest` and `report`.
//!
//! Exit codes: 0 success, 2 input error, 3 config error, 4 runtime failure.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::backtest::{run_backtest, PredictionRecord};
use crate::config::{parse_baseline_window, parse_date, parse_list, parse_mobility, RunConfig, Settings};
use crate::elasticnet::Estimator;
use crate::error::{Error, ErrorKind, Result};
use crate::metrics::{ci_series, summarize, CiPoint};
use crate::panel::{align, filter_complete, load_panel_csv, CsvSchema, DateIndex, Panel};
use crate::preprocess::{baseline_panel, rolling_mean_panel};
use crate::report::{
    ci_chart_svg, ci_to_csv, panel_to_csv, predictions_to_csv, read_predictions_csv, summary_to_json, write_atomic,
    DatasetPaths, DatasetSummary, RunSummary,
};
use crate::synth::{generate, CouplingSchedule, SynthConfig, GENERATOR_ID};

#[derive(Debug, Parser)]
#[command(name = "mobcast", version, about = "Sliding-window backtests of mobility-augmented case forecasts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Report per-dataset county counts, date coverage and the usable intersection.
    Validate(ValidateArgs),
    /// Write a seeded synthetic case/mobility pair as long-format CSVs.
    Synth(SynthArgs),
    /// Run the full backtest and write predictions, ci tables, charts and a summary.
    Backtest(BacktestArgs),
    /// Recompute ci tables, charts and summary from a predictions CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub cases: PathBuf,
    /// Mobility dataset as label=path; repeatable.
    #[arg(long, value_name = "LABEL=PATH")]
    pub mobility: Vec<String>,
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub start: Option<String>,
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub end: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "synth")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub counties: usize,
    #[arg(long, default_value_t = 256)]
    pub days: usize,
    #[arg(long, default_value_t = 0.8)]
    pub ar: f64,
    /// Coupling strength on the coupled days.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Coupling applies on reported days [0, N).
    #[arg(long, default_value_t = 150)]
    pub coupled_days: usize,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub mobility_lag: usize,
    /// Couple at lag 5 instead of --mobility-lag.
    #[arg(long)]
    pub off_lag: bool,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Flat key = value file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub cases: Option<PathBuf>,
    /// Mobility dataset as label=path; repeatable.
    #[arg(long, value_name = "LABEL=PATH")]
    pub mobility: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub start: Option<String>,
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub end: Option<String>,
    /// [default: 60]
    #[arg(long)]
    pub train_len: Option<usize>,
    /// Comma-separated [default: 1,7,14,21,28]
    #[arg(long)]
    pub lookaheads: Option<String>,
    /// [default: 10]
    #[arg(long)]
    pub mobility_lag: Option<usize>,
    /// [default: 1]
    #[arg(long)]
    pub stride: Option<usize>,
    /// START:END or `none` [default: 2020-02-17:2020-03-07]
    #[arg(long)]
    pub baseline_window: Option<String>,
    /// Trailing rolling-mean width, 1 disables [default: 7]
    #[arg(long)]
    pub smooth: Option<usize>,
    /// elasticnet, ols, ridge or lasso [default: elasticnet]
    #[arg(long)]
    pub estimator: Option<String>,
    /// Comma-separated lambda grid [default: 0,0.001,0.01,0.1,1]
    #[arg(long)]
    pub lambdas: Option<String>,
    /// Comma-separated alpha grid [default: 0.5]
    #[arg(long)]
    pub alphas: Option<String>,
    /// Validation tail length for grid selection [default: 14]
    #[arg(long)]
    pub val_len: Option<usize>,
    /// Worker threads for fitting; 0 uses all cores [default: 0]
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// predictions CSV written by `backtest`
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
}

impl BacktestArgs {
    fn settings(&self) -> Result<Settings> {
        Ok(Settings {
            cases: self.cases.clone(),
            mobility: self.mobility.iter().map(|m| parse_mobility(m)).collect::<Result<_>>()?,
            out: self.out.clone(),
            start: self.start.as_deref().map(|v| parse_date("--start", v)).transpose()?,
            end: self.end.as_deref().map(|v| parse_date("--end", v)).transpose()?,
            train_len: self.train_len,
            lookaheads: self.lookaheads.as_deref().map(|v| parse_list("--lookaheads", v)).transpose()?,
            mobility_lag: self.mobility_lag,
            stride: self.stride,
            baseline_window: self.baseline_window.as_deref().map(parse_baseline_window).transpose()?,
            smooth: self.smooth,
            estimator: self.estimator.as_deref().map(str::parse::<Estimator>).transpose()?,
            lambdas: self.lambdas.as_deref().map(|v| parse_list("--lambdas", v)).transpose()?,
            alphas: self.alphas.as_deref().map(|v| parse_list("--alphas", v)).transpose()?,
            val_len: self.val_len,
            jobs: self.jobs,
        })
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let flags = self.settings()?;
        let file = match &self.config {
            Some(p) => Settings::parse_file(p).map_err(|e| match e {
                Error::Io { path, source } => Error::Config(format!("{}: {source}", path.display())),
                other => other,
            })?,
            None => Settings::default(),
        };
        flags.over(file).resolve()
    }
}

fn load(path: &Path) -> Result<Panel> {
    let schema = CsvSchema::infer(path)?;
    load_panel_csv(path, &schema)
}

fn common_index(panels: &[&Panel]) -> Option<DateIndex> {
    let mut idx = panels.first()?.index();
    for p in &panels[1..] {
        idx = idx.intersect(&p.index())?;
    }
    Some(idx)
}

pub fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<()> {
    let mut panels = vec![load(&args.cases)?.with_name("cases")];
    for m in &args.mobility {
        let (label, path) = parse_mobility(m)?;
        panels.push(load(&path)?.with_name(label));
    }
    let start = args.start.as_deref().map(|v| parse_date("--start", v)).transpose()?;
    let end = args.end.as_deref().map(|v| parse_date("--end", v)).transpose()?;

    let refs: Vec<&Panel> = panels.iter().collect();
    let common = common_index(&refs).map(|idx| {
        let a = start.unwrap_or(idx.start()).max(idx.start());
        let b = end.unwrap_or(idx.end()).min(idx.end());
        DateIndex::from_range(a, b).ok()
    });
    let w = |e: std::io::Error| Error::Io { path: PathBuf::from("<stdout>"), source: e };

    let mut usable_sets: Vec<BTreeSet<_>> = Vec::new();
    for p in &panels {
        let idx = p.index();
        let usable = match common.flatten() {
            Some(c) => p.restrict(c).map(|r| r.series().filter(|s| s.is_complete()).map(|s| s.county).collect()),
            None => Ok(BTreeSet::new()),
        }?;
        let own_complete = p.complete_county_count();
        writeln!(
            out,
            "{}: counties={} dates={}..{} days={} complete={} usable={}",
            p.name(),
            p.county_count(),
            idx.start(),
            idx.end(),
            idx.len(),
            own_complete,
            usable.len()
        )
        .map_err(w)?;
        usable_sets.push(usable);
    }
    let intersection =
        usable_sets.iter().skip(1).fold(usable_sets[0].clone(), |acc, s| acc.intersection(s).copied().collect());
    match common.flatten() {
        Some(c) => writeln!(
            out,
            "intersection: dates={}..{} days={} counties={}",
            c.start(),
            c.end(),
            c.len(),
            intersection.len()
        ),
        None => writeln!(out, "intersection: dates=none days=0 counties=0"),
    }
    .map_err(w)?;
    if intersection.is_empty() {
        writeln!(out, "WARNING: no county is usable in every dataset over the common date range").map_err(w)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SynthMeta<'a> {
    generator: &'a str,
    config: &'a SynthConfig,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig {
        n_counties: args.counties,
        n_days: args.days,
        seed: args.seed,
        ar_coeff: args.ar,
        coupling: CouplingSchedule::on(0..args.coupled_days, args.gamma),
        mobility_lag: args.mobility_lag,
        ..SynthConfig::default()
    };
    if let Some(sd) = args.noise_sd {
        cfg.noise_sd = sd;
    }
    if args.off_lag {
        cfg = cfg.off_lag();
    }
    let (cases, mobility) = generate(&cfg)?;
    let meta = serde_json::to_string_pretty(&SynthMeta { generator: GENERATOR_ID, config: &cfg })
        .map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&args.out.join("cases.csv"), panel_to_csv(&cases).as_bytes())?;
    write_atomic(&args.out.join("mobility.csv"), panel_to_csv(&mobility).as_bytes())?;
    write_atomic(&args.out.join("synth_meta.json"), format!("{meta}\n").as_bytes())?;
    info!("wrote synthetic panels to {}", args.out.display());
    Ok(())
}

/// Everything `backtest` writes, computed before any file is touched.
pub struct BacktestOutput {
    pub datasets: Vec<(String, Vec<PredictionRecord>, Vec<CiPoint>)>,
    pub summary: RunSummary,
}

/// Load, preprocess, align and backtest every mobility dataset against the cases.
pub fn compute_backtest(cfg: &RunConfig) -> Result<BacktestOutput> {
    let cases = load(&cfg.case_csv)?.with_name("cases");
    let mut mobility = Vec::with_capacity(cfg.mobility_csvs.len());
    for (label, path) in &cfg.mobility_csvs {
        mobility.push(load(path)?.with_name(label.clone()));
    }

    if let Some(window) = cfg.baseline_window {
        mobility = mobility.iter().map(|m| baseline_panel(m, window)).collect::<Result<_>>()?;
    }

    let refs: Vec<&Panel> = std::iter::once(&cases).chain(&mobility).collect();
    let study = match (cfg.start, cfg.end) {
        (None, None) => common_index(&refs).ok_or(Error::EmptyDateIntersection)?,
        (a, b) => {
            let c = common_index(&refs).ok_or(Error::EmptyDateIntersection)?;
            DateIndex::from_range(a.unwrap_or(c.start()), b.unwrap_or(c.end()))
                .map_err(|_| Error::Config("start is after end".into()))?
        }
    };
    if study.len() < cfg.window_spec.min_index_len() {
        return Err(Error::SeriesTooShort { len: study.len(), needed: cfg.window_spec.min_index_len() });
    }
    info!("study range {}..{} ({} days)", study.start(), study.end(), study.len());

    let prep = |p: &Panel| -> Result<Panel> {
        let f = filter_complete(p, study)?;
        if cfg.smooth > 1 {
            rolling_mean_panel(&f, cfg.smooth)
        } else {
            Ok(f)
        }
    };
    let cases = prep(&cases)?;
    let mobility: Vec<Panel> = mobility.iter().map(prep).collect::<Result<_>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;

    let mut summary = RunSummary {
        estimator: cfg.estimator.to_string(),
        train_len: cfg.window_spec.train_len,
        lookaheads: cfg.window_spec.lookaheads.clone(),
        mobility_lag: cfg.window_spec.mobility_lag,
        datasets: BTreeMap::new(),
    };
    let mut datasets = Vec::new();
    for m in &mobility {
        let aligned = align(&[cases.clone(), m.clone()])?;
        info!("{}: {} counties after alignment", m.name(), aligned[0].county_count());
        let records = pool.install(|| run_backtest(&aligned[0], Some(&aligned[1]), &cfg.window_spec, &cfg.grid))?;
        let cis = ci_series(&records)?;
        summary.datasets.insert(m.name().to_string(), DatasetSummary::new(&cis, summarize(&cis)));
        datasets.push((m.name().to_string(), records, cis));
    }
    Ok(BacktestOutput { datasets, summary })
}

fn write_dataset(dir: &Path, label: &str, records: Option<&[PredictionRecord]>, cis: &[CiPoint]) -> Result<()> {
    let paths = DatasetPaths::new(dir, label);
    if let Some(r) = records {
        write_atomic(&paths.predictions, predictions_to_csv(r).as_bytes())?;
    }
    write_atomic(&paths.ci, ci_to_csv(cis).as_bytes())?;
    write_atomic(&paths.chart, ci_chart_svg(&format!("correlation improvement: {label}"), cis).as_bytes())
}

pub fn cmd_backtest(cfg: &RunConfig) -> Result<()> {
    let output = compute_backtest(cfg)?;
    for (label, records, cis) in &output.datasets {
        write_dataset(&cfg.output_dir, label, Some(records), cis)?;
    }
    write_atomic(&cfg.output_dir.join("summary.json"), summary_to_json(&output.summary).as_bytes())?;
    info!("wrote {} dataset(s) to {}", output.datasets.len(), cfg.output_dir.display());
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let records = read_predictions_csv(&args.predictions)?;
    let mut by_label: BTreeMap<String, Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        by_label.entry(r.dataset_label().to_string()).or_default().push(r);
    }
    if by_label.is_empty() {
        return Err(Error::EmptyInput(args.predictions.display().to_string()));
    }
    let mut summary = RunSummary::default();
    let mut outputs = Vec::new();
    for (label, recs) in &by_label {
        let cis = ci_series(recs)?;
        let mut lookaheads: Vec<u32> = recs.iter().map(|r| r.lookahead).collect();
        lookaheads.sort_unstable();
        lookaheads.dedup();
        summary.lookaheads = lookaheads;
        summary.datasets.insert(label.clone(), DatasetSummary::new(&cis, summarize(&cis)));
        outputs.push((label, cis));
    }
    for (label, cis) in &outputs {
        write_dataset(&args.out, label, None, cis)?;
    }
    write_atomic(&args.out.join("summary.json"), summary_to_json(&summary).as_bytes())
}

pub fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Input => 2,
        ErrorKind::Config => 3,
        ErrorKind::Runtime => 4,
    }
}

fn stage(cmd: &Command) -> &'static str {
    match cmd {
        Command::Validate(_) => "validate",
        Command::Synth(_) => "synth",
        Command::Backtest(_) => "backtest",
        Command::Report(_) => "report",
    }
}

pub fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Validate(a) => cmd_validate(a, &mut std::io::stdout().lock()),
        Command::Synth(a) => cmd_synth(a),
        Command::Backtest(a) => cmd_backtest(&a.run_config()?),
        Command::Report(a) => cmd_report(a),
    }
}

/// Parse `args`, run the command and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mobcast {}: {e}", stage(&cli.command));
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
