//! Seeded synthetic case/mobility panels with a controllable coupling schedule.
//!
//! Per county `i` and day `t`:
//!
//! ```text
//! mobility(t) = level_i · exp(w(t)),   w(t) = w(t−1) + v(t),   v(t) = 0.9·v(t−1) + N(0, volatility²)
//! cases(t)    = clamp(ar·cases(t−1) + drive_i + γ(t)·mobility(t − lag) + N(0, noise_sd²), 0, CASE_CAP)
//! ```
//!
//! `level_i`, `drive_i` and the starting case count are drawn uniformly from
//! their configured ranges. Both recursions run through a burn-in before the
//! first reported day, so every reported day has a lagged mobility value and
//! the starting transient has decayed. Setting `drive_range` to `(0, 0)`
//! recovers the plain `ar·cases(t−1) + γ·mobility(t−lag) + ε` recursion.
//!
//! The random stream is [`ChaCha8Rng`] seeded with [`SeedableRng::seed_from_u64`];
//! counties are generated in order from that single stream.

use std::ops::Range;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{CountySeries, DateIndex, Fips, Panel};

/// Identifier recorded next to synthetic outputs.
pub const GENERATOR_ID: &str = "rand_chacha::ChaCha8Rng (seed_from_u64)";

/// Upper clamp for case counts; keeps explosive `ar` settings finite.
pub const CASE_CAP: f64 = 1e9;

const BURN_IN: usize = 60;
const VELOCITY_PERSISTENCE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSegment {
    pub start: usize,
    pub end: usize,
    pub gamma: f64,
}

/// Piecewise-constant coupling strength over reported days; zero outside every segment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CouplingSchedule {
    pub segments: Vec<CouplingSegment>,
}

impl CouplingSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn constant(gamma: f64) -> Self {
        Self::on(0..usize::MAX, gamma)
    }

    pub fn on(days: Range<usize>, gamma: f64) -> Self {
        Self { segments: vec![CouplingSegment { start: days.start, end: days.end, gamma }] }
    }

    pub fn then(mut self, days: Range<usize>, gamma: f64) -> Self {
        self.segments.push(CouplingSegment { start: days.start, end: days.end, gamma });
        self
    }

    /// Coupling on reported day `t`; burn-in days use the day-0 value.
    pub fn gamma_at(&self, t: usize) -> f64 {
        self.segments.iter().find(|s| (s.start..s.end).contains(&t)).map(|s| s.gamma).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_counties: usize,
    pub n_days: usize,
    pub seed: u64,
    pub ar_coeff: f64,
    pub coupling: CouplingSchedule,
    /// Lag at which mobility drives cases.
    pub mobility_lag: usize,
    pub noise_sd: f64,
    pub start: NaiveDate,
    pub drive_range: (f64, f64),
    pub mobility_level_range: (f64, f64),
    pub mobility_volatility: f64,
    pub initial_cases_range: (f64, f64),
}

impl SynthConfig {
    /// Lag used by [`SynthConfig::off_lag`].
    pub const OFF_LAG: usize = 5;

    /// Same configuration with coupling entering at lag 5 instead of the pipeline's lag.
    pub fn off_lag(mut self) -> Self {
        self.mobility_lag = Self::OFF_LAG;
        self
    }

    /// Rejects configurations that cannot hold one default backtest window.
    pub fn validate(&self) -> Result<()> {
        if self.n_counties < 2 {
            return Err(Error::Config("synthetic panels need at least 2 counties".into()));
        }
        if self.n_counties > 99_999 {
            return Err(Error::Config("too many counties for 5-digit identifiers".into()));
        }
        if self.n_days <= 88 {
            return Err(Error::Config(format!(
                "n_days must exceed train_len + max lookahead (88), got {}",
                self.n_days
            )));
        }
        if self.ar_coeff.is_nan() || self.ar_coeff.abs() >= 1.5 {
            return Err(Error::Config(format!("|ar_coeff| must be < 1.5, got {}", self.ar_coeff)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config("noise_sd must be finite and >= 0".into()));
        }
        if !(self.mobility_volatility >= 0.0 && self.mobility_volatility.is_finite()) {
            return Err(Error::Config("mobility_volatility must be finite and >= 0".into()));
        }
        for (name, (lo, hi)) in [
            ("drive_range", self.drive_range),
            ("mobility_level_range", self.mobility_level_range),
            ("initial_cases_range", self.initial_cases_range),
        ] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::Config(format!("{name} must be an ordered finite pair")));
            }
        }
        if self.mobility_level_range.0 <= 0.0 {
            return Err(Error::Config("mobility levels must be positive".into()));
        }
        if self.coupling.segments.iter().any(|s| !s.gamma.is_finite()) {
            return Err(Error::Config("coupling strengths must be finite".into()));
        }
        DateIndex::new(self.start, self.n_days)?;
        Ok(())
    }
}

impl Default for SynthConfig {
    /// 200 counties × 256 days, γ = 0.5 on days `[0, 150)` then 0.
    ///
    /// `noise_sd` is set so the within-county standard deviation of the
    /// coupling input `γ·mobility` over the coupled days roughly equals the
    /// innovation noise (signal-to-noise ≈ 1).
    fn default() -> Self {
        Self {
            n_counties: 200,
            n_days: 256,
            seed: 0,
            ar_coeff: 0.8,
            coupling: CouplingSchedule::on(0..150, 0.5),
            mobility_lag: 10,
            noise_sd: 4.4,
            start: NaiveDate::from_ymd_opt(2020, 2, 17).unwrap(),
            drive_range: (0.5, 1.5),
            mobility_level_range: (0.5, 1.5),
            mobility_volatility: 0.02,
            initial_cases_range: (0.0, 10.0),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Generate `(cases, mobility)` panels named `synth_cases` and `synth_mobility`.
pub fn generate(cfg: &SynthConfig) -> Result<(Panel, Panel)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let step = Normal::new(0.0, cfg.mobility_volatility).map_err(|e| Error::Config(e.to_string()))?;
    let index = DateIndex::new(cfg.start, cfg.n_days)?;

    let lead = BURN_IN + cfg.mobility_lag;
    let total = lead + cfg.n_days;
    let mut case_series = Vec::with_capacity(cfg.n_counties);
    let mut mob_series = Vec::with_capacity(cfg.n_counties);

    for i in 0..cfg.n_counties {
        let county = Fips::from_u32(i as u32 + 1)?;
        let level = uniform(&mut rng, cfg.mobility_level_range);
        let drive = uniform(&mut rng, cfg.drive_range);
        let mut cases = uniform(&mut rng, cfg.initial_cases_range);

        // mobility(k) is reported day k - lead
        let mut mobility = Vec::with_capacity(total);
        let (mut w, mut v) = (0.0f64, 0.0f64);
        for _ in 0..total {
            v = VELOCITY_PERSISTENCE * v + step.sample(&mut rng);
            w += v;
            mobility.push(level * w.exp());
        }

        let mut reported = Vec::with_capacity(cfg.n_days);
        for k in cfg.mobility_lag + 1..total {
            let day = k.saturating_sub(lead);
            let gamma = cfg.coupling.gamma_at(day);
            let next = cfg.ar_coeff * cases + drive + gamma * mobility[k - cfg.mobility_lag] + noise.sample(&mut rng);
            cases = if next.is_nan() { CASE_CAP } else { next.clamp(0.0, CASE_CAP) };
            if k >= lead {
                reported.push(cases);
            }
        }
        debug_assert_eq!(reported.len(), cfg.n_days);
        case_series.push(CountySeries::complete(county, reported));
        mob_series.push(CountySeries::complete(county, mobility[lead..].to_vec()));
    }

    Ok((Panel::new("synth_cases", index, case_series)?, Panel::new("synth_mobility", index, mob_series)?))
}
