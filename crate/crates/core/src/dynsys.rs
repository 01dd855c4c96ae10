//! Discrete-time compartmental dynamics.
//!
//! Two families are provided:
//!
//! * SIR on population proportions, state `(S, I, R)` summing to one;
//! * SEIR-COVID on absolute counts, state `(S, E, I, I_s, R, D)` summing to
//!   the population `N`, where `I_s` are the infected recorded by official
//!   statistics and `D` the deaths.
//!
//! Both step maps are applied literally, without noise or rounding. A
//! [`Trajectory`] stores one state per day starting at an arbitrary day label,
//! so observed series can be indexed by calendar offset or by the 1-based day
//! numbering used for the SIR reproductions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on SIR component bounds and on the unit sum.
pub const SIR_TOLERANCE: f64 = 1e-9;
/// Relative tolerance on the SEIR population sum.
pub const SEIR_RELATIVE_TOLERANCE: f64 = 1e-6;

pub const SIR_LABELS: [&str; 3] = ["S", "I", "R"];
pub const SEIR_LABELS: [&str; 6] = ["S", "E", "I", "Is", "R", "D"];

/// Compartment indices of the SEIR-COVID state vector.
pub mod seir {
    pub const S: usize = 0;
    pub const E: usize = 1;
    pub const I: usize = 2;
    pub const IS: usize = 3;
    pub const R: usize = 4;
    pub const D: usize = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Sir,
    SeirCovid,
}

impl ModelKind {
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            ModelKind::Sir => &SIR_LABELS,
            ModelKind::SeirCovid => &SEIR_LABELS,
        }
    }

    /// Number of free parameters searched over by the estimator.
    pub fn arity(self) -> usize {
        match self {
            ModelKind::Sir => 2,
            ModelKind::SeirCovid => 7,
        }
    }

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Sir => &["beta", "gamma"],
            ModelKind::SeirCovid => &["beta", "tau_e", "tau_r", "tau_s", "tau_rs", "tau_d", "p_s"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Self {
        StateVector(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn get(&self, component: usize) -> Option<f64> {
        self.0.get(component).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirParams {
    pub beta: f64,
    pub gamma: f64,
}

impl SirParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        let params = SirParams { beta, gamma };
        params.validate()?;
        Ok(params)
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        match values {
            [beta, gamma] => SirParams::new(*beta, *gamma),
            _ => Err(Error::InvalidParams(format!(
                "SIR expects 2 parameters (beta, gamma), got {}",
                values.len()
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParams(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParams(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Free parameters of the SEIR-COVID model plus the externally supplied
/// death proportion `p_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeirCovidParams {
    pub beta: f64,
    pub tau_e: f64,
    pub tau_r: f64,
    pub tau_s: f64,
    pub tau_rs: f64,
    pub tau_d: f64,
    pub p_s: f64,
    pub p_d: f64,
}

impl SeirCovidParams {
    /// Builds the parameters from a grid point `(beta, tau_e, tau_r, tau_s,
    /// tau_rs, tau_d, p_s)` and a death proportion.
    pub fn from_slice(values: &[f64], p_d: f64) -> Result<Self> {
        match values {
            [beta, tau_e, tau_r, tau_s, tau_rs, tau_d, p_s] => {
                let params = SeirCovidParams {
                    beta: *beta,
                    tau_e: *tau_e,
                    tau_r: *tau_r,
                    tau_s: *tau_s,
                    tau_rs: *tau_rs,
                    tau_d: *tau_d,
                    p_s: *p_s,
                    p_d,
                };
                params.validate()?;
                Ok(params)
            }
            _ => Err(Error::InvalidParams(format!(
                "SEIR-COVID expects 7 parameters, got {}",
                values.len()
            ))),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.beta,
            self.tau_e,
            self.tau_r,
            self.tau_s,
            self.tau_rs,
            self.tau_d,
            self.p_s,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("tau_e", self.tau_e),
            ("tau_r", self.tau_r),
            ("tau_s", self.tau_s),
            ("tau_rs", self.tau_rs),
            ("tau_d", self.tau_d),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.p_s > 0.0 && self.p_s <= 1.0) {
            return Err(Error::InvalidParams(format!("p_s must be in (0, 1], got {}", self.p_s)));
        }
        if !(0.0..=1.0).contains(&self.p_d) {
            return Err(Error::InvalidParams(format!("p_d must be in [0, 1], got {}", self.p_d)));
        }
        Ok(())
    }
}

/// Per-day transition rates of the SEIR-COVID difference system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeirCovidRates {
    pub beta: f64,
    pub gamma_i: f64,
    pub gamma_s: f64,
    pub nu_r: f64,
    pub nu_rs: f64,
    pub delta_death: f64,
    pub population: f64,
}

pub fn rates_from_params(params: &SeirCovidParams, population: f64) -> SeirCovidRates {
    SeirCovidRates {
        beta: params.beta,
        gamma_i: 1.0 / params.tau_e,
        gamma_s: params.p_s / params.tau_s,
        nu_r: (1.0 - params.p_s) / params.tau_r,
        nu_rs: (1.0 - params.p_d) / params.tau_rs,
        delta_death: params.p_d / params.tau_d,
        population,
    }
}

pub fn validate_sir_state(state: &StateVector, day: i64) -> Result<()> {
    let invalid = |reason: String| Err(Error::InvalidState { day, reason });
    if state.len() != 3 {
        return invalid(format!("SIR state needs 3 components, got {}", state.len()));
    }
    for (label, &v) in SIR_LABELS.iter().zip(state.values()) {
        if !(-SIR_TOLERANCE..=1.0 + SIR_TOLERANCE).contains(&v) {
            return invalid(format!("{label} = {v} outside [0, 1]"));
        }
    }
    let sum = state.sum();
    if (sum - 1.0).abs() > SIR_TOLERANCE {
        return invalid(format!("components sum to {sum}, expected 1"));
    }
    Ok(())
}

pub fn validate_seir_state(state: &StateVector, population: f64, day: i64) -> Result<()> {
    let invalid = |reason: String| Err(Error::InvalidState { day, reason });
    if state.len() != 6 {
        return invalid(format!("SEIR state needs 6 components, got {}", state.len()));
    }
    if !(population > 0.0 && population.is_finite()) {
        return invalid(format!("population must be > 0, got {population}"));
    }
    let floor = -SIR_TOLERANCE * population;
    for (label, &v) in SEIR_LABELS.iter().zip(state.values()) {
        if !v.is_finite() || v < floor {
            return invalid(format!("{label} = {v} is negative or not finite"));
        }
    }
    let sum = state.sum();
    if ((sum - population) / population).abs() > SEIR_RELATIVE_TOLERANCE {
        return invalid(format!("components sum to {sum}, expected N = {population}"));
    }
    Ok(())
}

/// One day of the SIR difference system.
pub fn sir_step(state: &StateVector, params: &SirParams) -> Result<StateVector> {
    sir_step_at(state, params, 0)
}

fn sir_step_at(state: &StateVector, params: &SirParams, day: i64) -> Result<StateVector> {
    validate_sir_state(state, day)?;
    let [s, i, r] = [state.0[0], state.0[1], state.0[2]];
    let infections = params.beta * i * s;
    let recoveries = params.gamma * i;
    Ok(StateVector(vec![
        s - infections,
        i + infections - recoveries,
        r + recoveries,
    ]))
}

/// One day of the SEIR-COVID difference system. The force of infection uses
/// the living population `N - D(t)`.
pub fn seir_step(state: &StateVector, rates: &SeirCovidRates) -> Result<StateVector> {
    seir_step_at(state, rates, 0)
}

fn seir_step_at(state: &StateVector, rates: &SeirCovidRates, day: i64) -> Result<StateVector> {
    validate_seir_state(state, rates.population, day)?;
    let x = &state.0;
    let (s, e, i, is, r, d) = (x[0], x[1], x[2], x[3], x[4], x[5]);
    let alive = rates.population - d;
    if alive <= 0.0 {
        return Err(Error::PopulationExhausted { day });
    }
    let infections = rates.beta * s / alive * i;
    let onset = rates.gamma_i * e;
    let unrecorded_recovery = rates.nu_r * i;
    let recorded = rates.gamma_s * i;
    let recorded_recovery = rates.nu_rs * is;
    let deaths = rates.delta_death * is;
    Ok(StateVector(vec![
        s - infections,
        e - onset + infections,
        i - unrecorded_recovery - recorded + onset,
        is - recorded_recovery - deaths + recorded,
        r + unrecorded_recovery + recorded_recovery,
        d + deaths,
    ]))
}

/// A parameterised step map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dynamics {
    Sir(SirParams),
    SeirCovid(SeirCovidRates),
}

impl Dynamics {
    pub fn kind(&self) -> ModelKind {
        match self {
            Dynamics::Sir(_) => ModelKind::Sir,
            Dynamics::SeirCovid(_) => ModelKind::SeirCovid,
        }
    }

    pub fn validate(&self, state: &StateVector, day: i64) -> Result<()> {
        match self {
            Dynamics::Sir(_) => validate_sir_state(state, day),
            Dynamics::SeirCovid(rates) => validate_seir_state(state, rates.population, day),
        }
    }

    /// Advances `state`, labelled `day`, by one day.
    pub fn step(&self, state: &StateVector, day: i64) -> Result<StateVector> {
        match self {
            Dynamics::Sir(params) => sir_step_at(state, params, day),
            Dynamics::SeirCovid(rates) => seir_step_at(state, rates, day),
        }
    }

    /// Simulates `horizon` days from `initial`, which is labelled `start_time`.
    pub fn simulate(&self, initial: StateVector, start_time: i64, horizon: usize) -> Result<Trajectory> {
        self.validate(&initial, start_time)?;
        let mut trajectory = Trajectory {
            start_time,
            states: Vec::with_capacity(horizon + 1),
        };
        trajectory.states.push(initial);
        self.extend(&mut trajectory, start_time + horizon as i64)?;
        Ok(trajectory)
    }

    /// Continues `trajectory` until it covers `through_day`.
    pub fn extend(&self, trajectory: &mut Trajectory, through_day: i64) -> Result<()> {
        let mut day = trajectory.end_time();
        while day < through_day {
            let last = trajectory.states.last().expect("trajectory is never empty");
            let next = self.step(last, day)?;
            trajectory.states.push(next);
            day += 1;
        }
        // The last state is only validated when it is stepped from.
        self.validate(trajectory.states.last().expect("non-empty"), day)
    }
}

/// Simulates `horizon` days of `kind` with the given parameter vector.
/// SEIR-COVID expects `(beta, tau_e, tau_r, tau_s, tau_rs, tau_d, p_s, p_d)`
/// and takes the population from `population`.
pub fn simulate(
    kind: ModelKind,
    params: &[f64],
    population: f64,
    initial: StateVector,
    start_time: i64,
    horizon: usize,
) -> Result<Trajectory> {
    dynamics_for(kind, params, population)?.simulate(initial, start_time, horizon)
}

pub fn dynamics_for(kind: ModelKind, params: &[f64], population: f64) -> Result<Dynamics> {
    match kind {
        ModelKind::Sir => Ok(Dynamics::Sir(SirParams::from_slice(params)?)),
        ModelKind::SeirCovid => {
            let (grid, p_d) = match params.split_last() {
                Some((p_d, grid)) if params.len() == 8 => (grid, *p_d),
                _ => {
                    return Err(Error::InvalidParams(format!(
                        "SEIR-COVID simulation expects 8 values (7 parameters and p_d), got {}",
                        params.len()
                    )))
                }
            };
            let p = SeirCovidParams::from_slice(grid, p_d)?;
            Ok(Dynamics::SeirCovid(rates_from_params(&p, population)))
        }
    }
}

/// Daily states of a simulation; the state at index `k` belongs to day
/// `start_time + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    start_time: i64,
    states: Vec<StateVector>,
}

impl Trajectory {
    pub fn new(start_time: i64, states: Vec<StateVector>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidState {
                day: start_time,
                reason: "a trajectory needs at least one state".into(),
            });
        }
        Ok(Trajectory { start_time, states })
    }

    pub fn start_time(&self) -> i64 {
        self.start_time
    }

    pub fn end_time(&self) -> i64 {
        self.start_time + self.states.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn days(&self) -> impl Iterator<Item = (i64, &StateVector)> {
        self.states
            .iter()
            .enumerate()
            .map(move |(k, s)| (self.start_time + k as i64, s))
    }

    pub fn covers(&self, day: i64) -> bool {
        day >= self.start_time && day <= self.end_time()
    }

    pub fn state_at(&self, day: i64) -> Option<&StateVector> {
        if day < self.start_time {
            return None;
        }
        self.states.get((day - self.start_time) as usize)
    }

    pub fn value(&self, day: i64, component: usize) -> Result<f64> {
        let state = self.state_at(day).ok_or(Error::MissingDay(day))?;
        state.get(component).ok_or_else(|| Error::InvalidState {
            day,
            reason: format!("no component {component}"),
        })
    }

    /// Earliest day in `(from, to]` (for increments) or `[from, to]` (for
    /// levels) that maximises the target. Days outside the trajectory are
    /// ignored; returns `None` if nothing is left.
    pub fn peak(&self, target: PeakTarget, from: i64, to: i64) -> Option<(i64, f64)> {
        let mut best: Option<(i64, f64)> = None;
        let lo = match target {
            PeakTarget::Level(_) => from.max(self.start_time),
            PeakTarget::DailyIncrement(_) => (from + 1).max(self.start_time + 1),
        };
        for day in lo..=to.min(self.end_time()) {
            let v = match target {
                PeakTarget::Level(c) => self.value(day, c).ok()?,
                PeakTarget::DailyIncrement(c) => self.value(day, c).ok()? - self.value(day - 1, c).ok()?,
            };
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((day, v));
            }
        }
        best
    }
}

/// Quantity whose maximum over time defines a trajectory's peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "component", rename_all = "kebab-case")]
pub enum PeakTarget {
    /// Maximum level of one compartment (e.g. simultaneously infected).
    Level(usize),
    /// Maximum daily increment of one compartment (e.g. daily deaths).
    DailyIncrement(usize),
}
