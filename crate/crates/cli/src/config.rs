//! The JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use goodset::bounds::BinomialIndex;
use goodset::candidates::{build_explicit_grid, build_range_grid, CandidateGrid, DiscreteDist, RangeConvention};
use goodset::covidpipe::{ObservedSeries, SyntheticEpidemic, WeeklySettings};
use goodset::dynsys::{dynamics_for, ModelKind, StateVector, Trajectory};
use goodset::estimator::SummarySpec;
use goodset::fitness::FitnessSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    /// Parameters and horizon for `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<ObservedSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub distribution: DiscreteDist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitness: Option<FitnessSpec>,
    /// Appended to every grid point before simulation (SEIR: `p_d`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed_params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<SummarySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_limit: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covid: Option<CovidSection>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default = "unit_population")]
    pub population: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default = "first_day")]
    pub start_time: i64,
}

fn unit_population() -> f64 {
    1.0
}

fn first_day() -> i64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub params: Vec<f64>,
    pub horizon: usize,
}

/// Where the observed trajectory comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservedSection {
    /// Simulate the model itself from its initial state.
    Simulated { params: Vec<f64>, through_day: i64 },
    /// Explicit states, one per day from `start_time`.
    States { start_time: i64, states: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dimensions: Vec<DimensionSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<RangeSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub convention: RangeConvention,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub n: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    #[serde(default)]
    pub binomial_index: BinomialIndex,
    #[serde(default)]
    pub queries: Vec<BoundQuery>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveSpec>,
}

/// A single bound evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundQuery {
    Theorem1 { n: u64, epsilon: f64, p: u64 },
    Corollary { epsilon: f64, delta: f64, p: u64 },
    Eq9 { c: f64, delta: f64, g: f64, p: u64 },
    Eq10 { c: f64, delta: f64, g: f64, p: u64 },
    Prop2 { c: f64, g: f64, p: u64, n: u64 },
    PrefixBound { n: u64, p: u64 },
    MinMeaningfulC { delta: f64, p: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub delta: f64,
    pub g: f64,
    pub p: u64,
    pub c_from: f64,
    pub c_to: f64,
    pub c_step: f64,
}

impl CurveSpec {
    pub fn c_values(&self) -> anyhow::Result<Vec<f64>> {
        let values = build_range_grid(self.c_from, self.c_to, self.c_step, RangeConvention::Closed)
            .context("curve range")?;
        Ok(values)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// CSV path, relative to the configuration file.
    File(PathBuf),
    Synthetic(SyntheticEpidemic),
}

/// A day given either as a row offset or as a calendar date.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DayRef {
    Index(i64),
    Date(chrono::NaiveDate),
}

impl DayRef {
    pub fn resolve(&self, series: &ObservedSeries) -> anyhow::Result<i64> {
        match self {
            DayRef::Index(i) => Ok(*i),
            DayRef::Date(d) => series
                .day_of(*d)
                .with_context(|| format!("date {d} is outside the data")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovidSection {
    pub data: DataSource,
    pub settings: WeeklySettings,
    pub first_t0: DayRef,
    pub last_t0: DayRef,
    #[serde(default = "weekly")]
    pub stride: i64,
}

fn weekly() -> i64 {
    7
}

/// Reads and parses a configuration file; relative data paths are resolved
/// against its directory.
pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut config: RunConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    if let Some(CovidSection {
        data: DataSource::File(file),
        ..
    }) = config.covid.as_mut()
    {
        if file.is_relative() {
            if let Some(dir) = path.parent() {
                *file = dir.join(&*file);
            }
        }
    }
    Ok(config)
}

impl RunConfig {
    pub fn model(&self) -> anyhow::Result<&ModelSection> {
        self.model.as_ref().context("config has no `model` section")
    }

    pub fn initial_state(&self) -> anyhow::Result<StateVector> {
        let model = self.model()?;
        let values = model.initial.clone().context("model has no `initial` state")?;
        if values.len() != model.kind.labels().len() {
            bail!(
                "initial state has {} components, a {:?} model needs {}",
                values.len(),
                model.kind,
                model.kind.labels().len()
            );
        }
        Ok(StateVector(values))
    }

    pub fn grid(&self) -> anyhow::Result<CandidateGrid> {
        let section = self.grid.as_ref().context("config has no `grid` section")?;
        let mut dims = Vec::new();
        for d in &section.dimensions {
            let values = match (&d.values, &d.range) {
                (Some(v), None) => v.clone(),
                (None, Some(r)) => build_range_grid(r.lo, r.hi, r.step, r.convention)?,
                _ => bail!("dimension `{}` needs exactly one of `values` or `range`", d.name),
            };
            dims.push((d.name.clone(), values));
        }
        let grid = build_explicit_grid(dims)?;
        if let Some(model) = &self.model {
            let expected = model.kind.arity();
            if grid.arity() + self.fixed_params.len() != expected + usize::from(model.kind == ModelKind::SeirCovid) {
                bail!(
                    "grid has {} dimensions and {} fixed values; a {:?} model takes {} parameters",
                    grid.arity(),
                    self.fixed_params.len(),
                    model.kind,
                    expected
                );
            }
        }
        Ok(grid)
    }

    pub fn fitness(&self) -> anyhow::Result<FitnessSpec> {
        let spec = self.fitness.clone().context("config has no `fitness` section")?;
        spec.validate(self.model()?.kind)?;
        Ok(spec)
    }

    pub fn observed(&self) -> anyhow::Result<Trajectory> {
        match self.observed.as_ref().context("config has no `observed` section")? {
            ObservedSection::Simulated { params, through_day } => {
                let model = self.model()?;
                let mut full = params.clone();
                if full.len() < model.kind.arity() + usize::from(model.kind == ModelKind::SeirCovid) {
                    full.extend_from_slice(&self.fixed_params);
                }
                let dynamics = dynamics_for(model.kind, &full, model.population)?;
                let horizon = usize::try_from(through_day - model.start_time).context("through_day precedes start_time")?;
                Ok(dynamics.simulate(self.initial_state()?, model.start_time, horizon)?)
            }
            ObservedSection::States { start_time, states } => Ok(Trajectory::new(
                *start_time,
                states.iter().cloned().map(StateVector).collect(),
            )?),
        }
    }
}
