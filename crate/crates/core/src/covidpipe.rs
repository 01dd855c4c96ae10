//! Weekly fitting of the SEIR-COVID model to cumulative epidemic counts.
//!
//! For each start day `t0` the pipeline reads the smoothed observations,
//! builds a candidate-specific initial state, calibrates the tolerance
//! `r(t0)` from a pre-sample, runs rejection estimation over the week
//! `[t0, t0 + 6]`, and reports when each accepted scenario peaks in daily
//! deaths.
//!
//! Days are row offsets into the observed series: day 0 is the first row.

use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateGrid, Sampler};
use crate::dynsys::{
    rates_from_params, seir, Dynamics, PeakTarget, SeirCovidParams, StateVector, Trajectory,
    SEIR_LABELS,
};
use crate::error::{Error, Result};
use crate::estimator::{
    minimum_discrepancy, rejection_estimate, write_accepted_csv, CandidateEvaluator, Evaluation,
    GoodSet, TrajectorySummary, WorkerPool,
};
use crate::fitness::{DayWindow, FitnessRule, FitnessSpec};
use crate::report::{self, fmt_f64, quantile_sorted};

pub const DEFAULT_HORIZON: i64 = 730;
pub const DEFAULT_INFLATION: f64 = 1.1;
pub const DEFAULT_PRESAMPLE: u64 = 100_000;
pub const DEFAULT_SAMPLE: u64 = 500_000;

const COLUMNS: [&str; 4] = ["date", "confirmed", "deaths", "recovered"];

/// Raw cumulative counts, one row per calendar day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSeries {
    pub dates: Vec<NaiveDate>,
    pub confirmed: Vec<f64>,
    pub deaths: Vec<f64>,
    pub recovered: Vec<f64>,
}

impl ObservedSeries {
    pub fn new(dates: Vec<NaiveDate>, confirmed: Vec<f64>, deaths: Vec<f64>, recovered: Vec<f64>) -> Result<Self> {
        let n = dates.len();
        if n == 0 {
            return Err(Error::InsufficientData("series has no rows".into()));
        }
        if confirmed.len() != n || deaths.len() != n || recovered.len() != n {
            return Err(Error::InsufficientData("columns have different lengths".into()));
        }
        for w in dates.windows(2) {
            if w[0].succ_opt() != Some(w[1]) {
                return Err(Error::NonContiguousDates {
                    previous: w[0].to_string(),
                    next: w[1].to_string(),
                });
            }
        }
        for (name, col) in [("confirmed", &confirmed), ("deaths", &deaths), ("recovered", &recovered)] {
            for (i, &v) in col.iter().enumerate() {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::MalformedRecord {
                        line: i as u64 + 2,
                        reason: format!("{name} must be a non-negative number, got {v}"),
                    });
                }
                if i > 0 && v < col[i - 1] {
                    return Err(Error::DecreasingCumulative {
                        column: name.into(),
                        date: dates[i].to_string(),
                    });
                }
            }
        }
        Ok(ObservedSeries {
            dates,
            confirmed,
            deaths,
            recovered,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn day_of(&self, date: NaiveDate) -> Option<i64> {
        let offset = (date - self.dates[0]).num_days();
        (0..self.len() as i64).contains(&offset).then_some(offset)
    }

    pub fn date_of(&self, day: i64) -> Option<NaiveDate> {
        usize::try_from(day).ok().and_then(|d| self.dates.get(d).copied())
    }

    pub fn smoothed(&self) -> SmoothedSeries {
        let (confirmed, confirmed_incidence) = smooth_cumulative(&self.confirmed);
        let (deaths, death_incidence) = smooth_cumulative(&self.deaths);
        let (recovered, _) = smooth_cumulative(&self.recovered);
        let active = (0..self.len())
            .map(|t| confirmed[t] - recovered[t] - deaths[t])
            .collect();
        SmoothedSeries {
            confirmed,
            deaths,
            recovered,
            active,
            confirmed_incidence,
            death_incidence,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header: Vec<String> = COLUMNS.iter().map(|s| s.to_string()).collect();
        let rows = (0..self.len()).map(|t| {
            vec![
                self.dates[t].to_string(),
                fmt_f64(self.confirmed[t]),
                fmt_f64(self.deaths[t]),
                fmt_f64(self.recovered[t]),
            ]
        });
        report::write_csv(path, &header, rows)
    }
}

/// Reads a `date,confirmed,deaths,recovered` file with ISO dates.
pub fn load_series(path: &Path) -> Result<ObservedSeries> {
    read_series(std::fs::File::open(path)?)
}

pub fn read_series<R: Read>(reader: R) -> Result<ObservedSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.into()))?;
    }
    let (mut dates, mut confirmed, mut deaths, mut recovered) = (vec![], vec![], vec![], vec![]);
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i as u64 + 2;
        let field = |k: usize| {
            record.get(idx[k]).ok_or_else(|| Error::MalformedRecord {
                line,
                reason: format!("missing {}", COLUMNS[k]),
            })
        };
        let date = NaiveDate::parse_from_str(field(0)?, "%Y-%m-%d").map_err(|e| Error::MalformedRecord {
            line,
            reason: format!("bad date: {e}"),
        })?;
        let number = |k: usize| -> Result<f64> {
            let raw = field(k)?;
            raw.parse::<f64>().map_err(|_| Error::MalformedRecord {
                line,
                reason: format!("bad {} value {raw:?}", COLUMNS[k]),
            })
        };
        dates.push(date);
        confirmed.push(number(1)?);
        deaths.push(number(2)?);
        recovered.push(number(3)?);
    }
    ObservedSeries::new(dates, confirmed, deaths, recovered)
}

/// Centred seven-day mean; the window shrinks at both ends of the series.
pub fn smooth7(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(3);
            let hi = (t + 4).min(n);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Smooths the daily increments of a cumulative series and sums them back
/// onto the first value. Returns `(prevalence, incidence)`, with the
/// incidence of day 0 set to zero.
fn smooth_cumulative(cum: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let increments: Vec<f64> = cum.windows(2).map(|w| w[1] - w[0]).collect();
    let mut incidence = vec![0.0];
    incidence.extend(smooth7(&increments));
    let mut prevalence = Vec::with_capacity(cum.len());
    let mut acc = cum[0];
    for (t, inc) in incidence.iter().enumerate() {
        if t > 0 {
            acc += inc;
        }
        prevalence.push(acc);
    }
    (prevalence, incidence)
}

/// Smoothed observations used by the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedSeries {
    pub confirmed: Vec<f64>,
    pub deaths: Vec<f64>,
    pub recovered: Vec<f64>,
    /// Active recorded infections: confirmed minus recovered minus deaths.
    pub active: Vec<f64>,
    pub confirmed_incidence: Vec<f64>,
    pub death_incidence: Vec<f64>,
}

impl SmoothedSeries {
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Whether `t0` has full smoothing windows on its fitting week and one
    /// extra day for the exposed-compartment inversion.
    pub fn observable(&self, t0: i64) -> bool {
        t0 >= 3 && t0 + 9 < self.len() as i64
    }

    fn at(&self, series: &[f64], day: i64) -> Result<f64> {
        usize::try_from(day)
            .ok()
            .and_then(|d| series.get(d).copied())
            .ok_or(Error::MissingDay(day))
    }

    /// Observed `I_s` and `D` over `window` as a six-compartment trajectory
    /// with the other compartments left at zero.
    pub fn observed_week(&self, window: DayWindow) -> Result<Trajectory> {
        let states = window
            .days()
            .map(|day| {
                let mut s = vec![0.0; SEIR_LABELS.len()];
                s[seir::IS] = self.at(&self.active, day)?;
                s[seir::D] = self.at(&self.deaths, day)?;
                Ok(StateVector(s))
            })
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(window.first, states)
    }
}

/// Source of the death proportion `p_d` for a week.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PdSource {
    /// Smoothed deaths over smoothed confirmed cases in `[t0 - 6, t0]`.
    #[default]
    WeeklyIncidence,
    /// Cumulative smoothed deaths over cumulative smoothed confirmed at `t0`.
    Cumulative,
    Fixed { value: f64 },
}

pub fn moving_death_rate(obs: &SmoothedSeries, t0: i64, source: PdSource) -> Result<f64> {
    let (deaths, confirmed) = match source {
        PdSource::Fixed { value } => {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidParams(format!("p_d must be in [0, 1], got {value}")));
            }
            return Ok(value);
        }
        PdSource::Cumulative => (obs.at(&obs.deaths, t0)?, obs.at(&obs.confirmed, t0)?),
        PdSource::WeeklyIncidence => {
            if t0 < 6 {
                return Err(Error::InsufficientData(format!(
                    "death rate needs seven days ending at day {t0}"
                )));
            }
            let mut d = 0.0;
            let mut c = 0.0;
            for day in t0 - 6..=t0 {
                d += obs.at(&obs.death_incidence, day)?;
                c += obs.at(&obs.confirmed_incidence, day)?;
            }
            (d, c)
        }
    };
    if confirmed <= 0.0 {
        return Err(Error::InsufficientData(format!("no confirmed cases for the death rate at day {t0}")));
    }
    Ok((deaths / confirmed).clamp(0.0, 1.0))
}

/// Initial state at `t0` for one candidate. The flag is set when the
/// exposed-compartment inversion went negative and was clamped to zero.
pub fn initial_conditions(
    obs: &SmoothedSeries,
    t0: i64,
    params: &SeirCovidParams,
    population: f64,
) -> Result<(StateVector, bool)> {
    if params.p_s <= 0.0 {
        return Err(Error::InvalidParams("p_s must be positive".into()));
    }
    let rates = rates_from_params(params, population);
    let k = (1.0 - params.p_s) / params.p_s;
    let is0 = obs.at(&obs.active, t0)?;
    let i0 = k * is0;
    let i1 = k * obs.at(&obs.active, t0 + 1)?;
    let raw_e = (i1 + (rates.nu_r + rates.gamma_s - 1.0) * i0) / rates.gamma_i;
    let e = raw_e.max(0.0);
    let r = (k + 1.0) * obs.at(&obs.recovered, t0)?;
    let d = obs.at(&obs.deaths, t0)?;
    let s = population - e - i0 - is0 - r - d;
    if s < 0.0 {
        return Err(Error::InvalidState {
            day: t0,
            reason: format!("population {population} too small for the scaled compartments"),
        });
    }
    let mut state = vec![0.0; SEIR_LABELS.len()];
    state[seir::S] = s;
    state[seir::E] = e;
    state[seir::I] = i0;
    state[seir::IS] = is0;
    state[seir::R] = r;
    state[seir::D] = d;
    Ok((StateVector(state), raw_e < 0.0))
}

/// Fits one week. Candidates whose initial state or simulation is invalid
/// are rejected with an infinite discrepancy rather than aborting the run.
pub struct WeeklyEvaluator<'a> {
    obs: &'a SmoothedSeries,
    t0: i64,
    p_d: f64,
    population: f64,
    horizon: i64,
    fitness: FitnessSpec,
    observed: Trajectory,
    clamped: AtomicU64,
}

impl<'a> WeeklyEvaluator<'a> {
    pub fn new(obs: &'a SmoothedSeries, t0: i64, p_d: f64, population: f64, r: f64, horizon: i64) -> Result<Self> {
        if !obs.observable(t0) {
            return Err(Error::InsufficientData(format!(
                "day {t0} needs three earlier days and nine later ones"
            )));
        }
        let window = DayWindow::week(t0);
        for day in window.days() {
            if obs.at(&obs.active, day)? <= 0.0 || obs.at(&obs.deaths, day)? <= 0.0 {
                return Err(Error::InsufficientData(format!(
                    "recorded infections and deaths must be positive on day {day}"
                )));
            }
        }
        Ok(WeeklyEvaluator {
            obs,
            t0,
            p_d,
            population,
            horizon,
            fitness: FitnessSpec {
                rule: FitnessRule::SupRelativeWindow { r },
                window,
                components: vec![seir::IS, seir::D],
            },
            observed: obs.observed_week(window)?,
            clamped: AtomicU64::new(0),
        })
    }

    /// Draws whose exposed-compartment inversion was clamped to zero.
    pub fn clamped_draws(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    /// Simulation of a candidate from `t0` through `through_day`.
    pub fn simulate(&self, params: &[f64], through_day: i64) -> Result<Trajectory> {
        let p = SeirCovidParams::from_slice(params, self.p_d)?;
        let (x0, _) = initial_conditions(self.obs, self.t0, &p, self.population)?;
        let dynamics = Dynamics::SeirCovid(rates_from_params(&p, self.population));
        dynamics.simulate(x0, self.t0, (through_day - self.t0).max(0) as usize)
    }
}

fn is_candidate_failure(e: &Error) -> bool {
    matches!(e, Error::InvalidState { .. } | Error::PopulationExhausted { .. })
}

impl CandidateEvaluator for WeeklyEvaluator<'_> {
    fn evaluate(&self, params: &[f64], summarize: bool) -> Result<Evaluation> {
        let p = SeirCovidParams::from_slice(params, self.p_d)?;
        let (x0, clamped) = match initial_conditions(self.obs, self.t0, &p, self.population) {
            Ok(v) => v,
            Err(e) if is_candidate_failure(&e) => return Ok(Evaluation::rejected(f64::INFINITY)),
            Err(e) => return Err(e),
        };
        if clamped {
            self.clamped.fetch_add(1, Ordering::Relaxed);
        }
        let dynamics = Dynamics::SeirCovid(rates_from_params(&p, self.population));
        let run = dynamics.simulate(x0, self.t0, 6).and_then(|mut traj| {
            let assessment = self.fitness.assess(&traj, &self.observed)?;
            let summary = if assessment.fit && summarize {
                let end = self.t0 + self.horizon;
                dynamics.extend(&mut traj, end)?;
                TrajectorySummary::of(&traj, PeakTarget::DailyIncrement(seir::D), self.t0, end)
            } else {
                None
            };
            Ok(Evaluation {
                fit: assessment.fit,
                discrepancy: assessment.discrepancy,
                summary,
            })
        });
        match run {
            Err(e) if is_candidate_failure(&e) => Ok(Evaluation::rejected(f64::INFINITY)),
            other => other,
        }
    }

    fn fitness(&self) -> Option<&FitnessSpec> {
        Some(&self.fitness)
    }

    fn compartments(&self) -> Vec<String> {
        SEIR_LABELS.iter().map(|s| s.to_string()).collect()
    }
}

/// Independent seed for one purpose of one week.
pub fn derive_seed(master: u64, t0: i64, purpose: u64) -> u64 {
    let mut z = master
        ^ (t0 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ purpose.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const CALIBRATION: u64 = 1;
const ESTIMATION: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub r: f64,
    pub min_discrepancy: f64,
    pub argmin_index: u64,
}

/// `inflation` times the smallest worst-case relative error over `n_pre`
/// draws.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_r(
    grid: &CandidateGrid,
    sampler: &Sampler,
    obs: &SmoothedSeries,
    t0: i64,
    p_d: f64,
    population: f64,
    n_pre: u64,
    inflation: f64,
    seed: u64,
    pool: &WorkerPool,
) -> Result<Calibration> {
    if n_pre == 0 {
        return Err(Error::InvalidParams("pre-sample size must be at least 1".into()));
    }
    let evaluator = WeeklyEvaluator::new(obs, t0, p_d, population, 0.0, 0)?;
    match minimum_discrepancy(grid, sampler, n_pre, seed, &evaluator, pool)? {
        Some((argmin_index, min)) => Ok(Calibration {
            r: inflation * min,
            min_discrepancy: min,
            argmin_index,
        }),
        None => Err(Error::CalibrationFailed(format!(
            "none of {n_pre} sampled candidates could be simulated over the week of day {t0}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakPercentiles {
    pub p2_5: f64,
    pub median: f64,
    pub p97_5: f64,
}

impl PeakPercentiles {
    pub fn of(days: &[i64]) -> Option<Self> {
        if days.is_empty() {
            return None;
        }
        let mut sorted: Vec<f64> = days.iter().map(|&d| d as f64).collect();
        sorted.sort_by(f64::total_cmp);
        Some(PeakPercentiles {
            p2_5: quantile_sorted(&sorted, 0.025),
            median: quantile_sorted(&sorted, 0.5),
            p97_5: quantile_sorted(&sorted, 0.975),
        })
    }
}

/// Settings shared by every week of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeeklySettings {
    pub population: f64,
    #[serde(default = "default_sample")]
    pub n: u64,
    #[serde(default = "default_presample")]
    pub n_pre: u64,
    #[serde(default = "default_inflation")]
    pub inflation: f64,
    #[serde(default = "default_horizon")]
    pub horizon: i64,
    #[serde(default)]
    pub pd_source: PdSource,
}

fn default_sample() -> u64 {
    DEFAULT_SAMPLE
}
fn default_presample() -> u64 {
    DEFAULT_PRESAMPLE
}
fn default_inflation() -> f64 {
    DEFAULT_INFLATION
}
fn default_horizon() -> i64 {
    DEFAULT_HORIZON
}

impl WeeklySettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.population > 0.0 && self.population.is_finite()) {
            return Err(Error::InvalidParams(format!("population must be positive, got {}", self.population)));
        }
        if self.n == 0 || self.n_pre == 0 {
            return Err(Error::InvalidParams("sample sizes must be at least 1".into()));
        }
        if !(self.inflation >= 1.0 && self.inflation.is_finite()) {
            return Err(Error::InvalidParams(format!("inflation must be >= 1, got {}", self.inflation)));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidParams(format!("horizon must be >= 1, got {}", self.horizon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyFitResult {
    pub t0: i64,
    pub date: Option<NaiveDate>,
    pub r_t0: f64,
    pub min_discrepancy: f64,
    pub p_d: f64,
    pub pd_source: PdSource,
    /// Draws whose exposed-compartment inversion was clamped to zero.
    pub clamped_exposed_draws: u64,
    pub good_set: GoodSet,
    /// Per distinct accepted parameter, in the order of `good_set.accepted`.
    pub peak_days: Vec<i64>,
    /// `None` when the good set is empty.
    pub percentiles: Option<PeakPercentiles>,
}

/// Calibrates `r(t0)` and runs rejection estimation for one week.
pub fn weekly_fit(
    grid: &CandidateGrid,
    sampler: &Sampler,
    series: &ObservedSeries,
    obs: &SmoothedSeries,
    t0: i64,
    settings: &WeeklySettings,
    seed: u64,
    pool: &WorkerPool,
) -> Result<WeeklyFitResult> {
    settings.validate()?;
    if grid.arity() != 7 {
        return Err(Error::InvalidGrid(format!(
            "SEIR-COVID grids need 7 dimensions, got {}",
            grid.arity()
        )));
    }
    let p_d = moving_death_rate(obs, t0, settings.pd_source)?;
    let cal = calibrate_r(
        grid,
        sampler,
        obs,
        t0,
        p_d,
        settings.population,
        settings.n_pre,
        settings.inflation,
        derive_seed(seed, t0, CALIBRATION),
        pool,
    )?;
    log::info!("day {t0}: p_d = {p_d:.6}, r = {:.6}", cal.r);
    let evaluator = WeeklyEvaluator::new(obs, t0, p_d, settings.population, cal.r, settings.horizon)?;
    let good_set = rejection_estimate(grid, sampler, settings.n, derive_seed(seed, t0, ESTIMATION), &evaluator, pool)?;
    if good_set.is_empty() {
        log::warn!("day {t0}: empty good set");
    }
    let clamped = evaluator.clamped_draws();
    if clamped > 0 {
        log::warn!("day {t0}: exposed compartment clamped to zero for {clamped} draws");
    }
    let peak_days: Vec<i64> = good_set
        .accepted
        .iter()
        .filter_map(|a| a.summary.as_ref().map(|s| s.peak_day))
        .collect();
    Ok(WeeklyFitResult {
        t0,
        date: series.date_of(t0),
        r_t0: cal.r,
        min_discrepancy: cal.min_discrepancy,
        p_d,
        pd_source: settings.pd_source,
        clamped_exposed_draws: clamped,
        percentiles: PeakPercentiles::of(&peak_days),
        peak_days,
        good_set,
    })
}

/// Outcome of one week of a sequence; failures do not stop the sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyOutcome {
    pub t0: i64,
    pub date: Option<NaiveDate>,
    pub result: Option<WeeklyFitResult>,
    pub error: Option<String>,
}

/// Runs [`weekly_fit`] for `first, first + stride, ...` up to `last`.
#[allow(clippy::too_many_arguments)]
pub fn weekly_sequence(
    grid: &CandidateGrid,
    sampler: &Sampler,
    series: &ObservedSeries,
    first: i64,
    last: i64,
    stride: i64,
    settings: &WeeklySettings,
    seed: u64,
    pool: &WorkerPool,
) -> Result<Vec<WeeklyOutcome>> {
    if stride < 1 {
        return Err(Error::InvalidParams(format!("stride must be >= 1, got {stride}")));
    }
    if last < first {
        return Err(Error::InvalidParams(format!("last t0 {last} precedes first t0 {first}")));
    }
    settings.validate()?;
    let obs = series.smoothed();
    let mut out = Vec::new();
    let mut t0 = first;
    while t0 <= last {
        let outcome = match weekly_fit(grid, sampler, series, &obs, t0, settings, seed, pool) {
            Ok(r) => WeeklyOutcome {
                t0,
                date: r.date,
                result: Some(r),
                error: None,
            },
            Err(e) => {
                log::warn!("day {t0}: {e}");
                WeeklyOutcome {
                    t0,
                    date: series.date_of(t0),
                    result: None,
                    error: Some(e.to_string()),
                }
            }
        };
        out.push(outcome);
        t0 += stride;
    }
    Ok(out)
}

/// Writes `peaks.csv`, `params_summary.csv` and `accepted.csv` into `dir`.
pub fn write_weekly_tables(dir: &Path, outcomes: &[WeeklyOutcome], parameter_names: &[String]) -> Result<()> {
    let header: Vec<String> = ["t0", "date", "r_t0", "p_d", "n_good", "p2_5", "median", "p97_5", "status"]
        .map(String::from)
        .to_vec();
    let rows = outcomes.iter().map(|o| {
        let date = o.date.map(|d| d.to_string()).unwrap_or_default();
        match &o.result {
            Some(r) => {
                let pct = |f: fn(&PeakPercentiles) -> f64| r.percentiles.as_ref().map(|p| fmt_f64(f(p))).unwrap_or_default();
                vec![
                    o.t0.to_string(),
                    date,
                    fmt_f64(r.r_t0),
                    fmt_f64(r.p_d),
                    r.good_set.n_distinct_good.to_string(),
                    pct(|p| p.p2_5),
                    pct(|p| p.median),
                    pct(|p| p.p97_5),
                    if r.good_set.is_empty() { "empty" } else { "ok" }.into(),
                ]
            }
            None => {
                let mut row = vec![o.t0.to_string(), date];
                row.extend(std::iter::repeat(String::new()).take(6));
                row.push("failed".into());
                row
            }
        }
    });
    report::write_csv(&dir.join("peaks.csv"), &header, rows)?;

    let header: Vec<String> = ["t0", "parameter", "min", "q1", "median", "q3", "max"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for o in outcomes {
        let Some(r) = &o.result else { continue };
        if r.good_set.is_empty() {
            continue;
        }
        for (k, name) in parameter_names.iter().enumerate() {
            let mut v: Vec<f64> = r.good_set.accepted.iter().map(|a| a.params[k]).collect();
            v.sort_by(f64::total_cmp);
            let mut row = vec![o.t0.to_string(), name.clone()];
            row.extend([0.0, 0.25, 0.5, 0.75, 1.0].map(|q| fmt_f64(quantile_sorted(&v, q))));
            rows.push(row);
        }
    }
    report::write_csv(&dir.join("params_summary.csv"), &header, rows)?;

    let compartments: Vec<String> = SEIR_LABELS.iter().map(|s| s.to_string()).collect();
    for o in outcomes {
        if let Some(r) = &o.result {
            let path = dir.join(format!("accepted_t0_{}.csv", o.t0));
            write_accepted_csv(&path, parameter_names, &compartments, &r.good_set.accepted)?;
        }
    }
    Ok(())
}

/// Noise-free data generated by simulating one parameter from a state on
/// its exponential-growth solution, so the smoothed observations follow the
/// model from the first week on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEpidemic {
    /// `(beta, tau_e, tau_r, tau_s, tau_rs, tau_d, p_s)`.
    pub params: Vec<f64>,
    /// Death proportion; `None` picks the value that keeps the recorded
    /// compartment growing at the same rate as the infectious one.
    #[serde(default)]
    pub p_d: Option<f64>,
    pub population: f64,
    pub initial_infected: f64,
    pub days: usize,
    pub start_date: NaiveDate,
}

/// Dominant eigenvalue of the linearised `(E, I)` block at `S = N`.
pub fn dominant_growth(params: &SeirCovidParams) -> f64 {
    let gamma_i = 1.0 / params.tau_e;
    let a = (1.0 - params.p_s) / params.tau_r + params.p_s / params.tau_s;
    let trace = (1.0 - gamma_i) + (1.0 - a);
    let det = (1.0 - gamma_i) * (1.0 - a) - params.beta * gamma_i;
    (trace + (trace * trace - 4.0 * det).sqrt()) / 2.0
}

/// `p_d` for which recorded infections leave `I_s` at rate
/// `1 + (1 - p_s)/tau_s - rho`.
pub fn balanced_death_rate(params: &SeirCovidParams) -> f64 {
    let rho = dominant_growth(params);
    let target = 1.0 + (1.0 - params.p_s) / params.tau_s - rho;
    (target - 1.0 / params.tau_rs) / (1.0 / params.tau_d - 1.0 / params.tau_rs)
}

impl SyntheticEpidemic {
    pub fn resolved_params(&self) -> Result<SeirCovidParams> {
        let p = SeirCovidParams::from_slice(&self.params, 0.0)?;
        let p_d = self.p_d.unwrap_or_else(|| balanced_death_rate(&p));
        SeirCovidParams::from_slice(&self.params, p_d)
    }

    /// Cumulative series plus the true trajectory (day 0 = first row).
    pub fn generate(&self) -> Result<(ObservedSeries, Trajectory)> {
        let p = self.resolved_params()?;
        let rates = rates_from_params(&p, self.population);
        let rho = dominant_growth(&p);
        if rho <= 1.0 {
            return Err(Error::InvalidParams(format!("epidemic does not grow (rho = {rho})")));
        }
        let i0 = self.initial_infected;
        let e0 = p.beta * i0 / (rho - (1.0 - rates.gamma_i));
        let is0 = rates.gamma_s * i0 / (rho - 1.0 + rates.nu_rs + rates.delta_death);
        let d0 = rates.delta_death * is0 / (rho - 1.0);
        let rs0 = rates.nu_rs * is0 / (rho - 1.0);
        let r0 = (rates.nu_r * i0 + rates.nu_rs * is0) / (rho - 1.0);
        let s0 = self.population - e0 - i0 - is0 - r0 - d0;
        let mut x = vec![0.0; SEIR_LABELS.len()];
        x[seir::S] = s0;
        x[seir::E] = e0;
        x[seir::I] = i0;
        x[seir::IS] = is0;
        x[seir::R] = r0;
        x[seir::D] = d0;
        let traj = Dynamics::SeirCovid(rates).simulate(StateVector(x), 0, self.days.saturating_sub(1))?;

        let mut confirmed = vec![is0 + rs0 + d0];
        let mut recovered = vec![rs0];
        for prev in traj.states().iter().take(traj.len() - 1) {
            let v = prev.values();
            confirmed.push(confirmed.last().unwrap() + rates.gamma_s * v[seir::I]);
            recovered.push(recovered.last().unwrap() + rates.nu_rs * v[seir::IS]);
        }
        let deaths = traj.states().iter().map(|s| s.values()[seir::D]).collect();
        let dates = (0..traj.len())
            .map(|k| self.start_date + chrono::Days::new(k as u64))
            .collect();
        Ok((ObservedSeries::new(dates, confirmed, deaths, recovered)?, traj))
    }
}
