//! Rejection estimation of the good-parameter set.
//!
//! Candidates are drawn from the grid under `q`, simulated, and kept when the
//! fitness map accepts them. Work is split into contiguous draw-index ranges
//! and merged in draw order, so the result depends only on the seed and
//! never on the number of workers.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateGrid, Sampler};
use crate::dynsys::{dynamics_for, ModelKind, PeakTarget, StateVector, Trajectory};
use crate::error::{Error, Result};
use crate::fitness::FitnessSpec;
use crate::report::{self, fmt_f64};

/// Refuse exhaustive scans above this many grid points unless raised.
pub const DEFAULT_SCAN_LIMIT: u64 = 100_000_000;

const CHUNK: u64 = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub peak_day: i64,
    pub peak_value: f64,
    pub final_day: i64,
    pub final_state: Vec<f64>,
}

impl TrajectorySummary {
    pub fn of(trajectory: &Trajectory, target: PeakTarget, from: i64, to: i64) -> Option<Self> {
        let (peak_day, peak_value) = trajectory.peak(target, from, to)?;
        let final_day = trajectory.end_time().min(to);
        Some(TrajectorySummary {
            peak_day,
            peak_value,
            final_day,
            final_state: trajectory.state_at(final_day)?.values().to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fit: bool,
    /// Continuous quantity thresholded by the fitness map; infinite when the
    /// candidate could not be simulated.
    pub discrepancy: f64,
    pub summary: Option<TrajectorySummary>,
}

impl Evaluation {
    pub fn rejected(discrepancy: f64) -> Self {
        Evaluation {
            fit: false,
            discrepancy,
            summary: None,
        }
    }
}

/// Simulates one candidate and applies the fitness map.
pub trait CandidateEvaluator: Sync {
    /// `summarize` asks for a [`TrajectorySummary`] when the candidate fits.
    fn evaluate(&self, params: &[f64], summarize: bool) -> Result<Evaluation>;

    fn fitness(&self) -> Option<&FitnessSpec> {
        None
    }

    fn compartments(&self) -> Vec<String> {
        Vec::new()
    }
}

/// How far to continue accepted simulations and what peak to record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummarySpec {
    pub peak: PeakTarget,
    pub through_day: i64,
}

/// A model simulated from one fixed initial state, compared against a fixed
/// observed trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryFit {
    pub kind: ModelKind,
    /// Population `N` (SEIR only).
    pub population: f64,
    /// Appended to every grid point before simulation (e.g. `p_d`).
    pub fixed_params: Vec<f64>,
    pub initial: StateVector,
    pub start_time: i64,
    pub observed: Trajectory,
    pub fitness: FitnessSpec,
    pub summary: Option<SummarySpec>,
}

impl TrajectoryFit {
    pub fn simulate(&self, params: &[f64], through_day: i64) -> Result<Trajectory> {
        let mut full = params.to_vec();
        full.extend_from_slice(&self.fixed_params);
        let dynamics = dynamics_for(self.kind, &full, self.population)?;
        let horizon = (through_day - self.start_time).max(0) as usize;
        dynamics.simulate(self.initial.clone(), self.start_time, horizon)
    }
}

impl CandidateEvaluator for TrajectoryFit {
    fn evaluate(&self, params: &[f64], summarize: bool) -> Result<Evaluation> {
        let mut full = params.to_vec();
        full.extend_from_slice(&self.fixed_params);
        let dynamics = dynamics_for(self.kind, &full, self.population)?;
        let window_end = self.fitness.window.last;
        let mut traj = dynamics.simulate(
            self.initial.clone(),
            self.start_time,
            (window_end - self.start_time).max(0) as usize,
        )?;
        let assessment = self.fitness.assess(&traj, &self.observed)?;
        let summary = match (assessment.fit && summarize, self.summary) {
            (true, Some(spec)) => {
                dynamics.extend(&mut traj, spec.through_day)?;
                TrajectorySummary::of(&traj, spec.peak, self.start_time, spec.through_day)
            }
            _ => None,
        };
        Ok(Evaluation {
            fit: assessment.fit,
            discrepancy: assessment.discrepancy,
            summary,
        })
    }

    fn fitness(&self) -> Option<&FitnessSpec> {
        Some(&self.fitness)
    }

    fn compartments(&self) -> Vec<String> {
        self.kind.labels().iter().map(|s| s.to_string()).collect()
    }
}

/// Fixed-size rayon pool. The number of workers never changes results.
pub struct WorkerPool {
    pool: rayon::ThreadPool,
}

impl WorkerPool {
    /// `workers == 0` uses one worker per available core.
    pub fn new(workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(WorkerPool { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Applies `f` to consecutive ranges covering `0..total`, returning the
    /// results in range order. The first error in range order wins.
    pub fn map_ranges<T, F>(&self, total: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(Range<u64>) -> Result<T> + Sync,
    {
        let chunks = total.div_ceil(CHUNK);
        let results: Vec<Result<T>> = self.pool.install(|| {
            (0..chunks)
                .into_par_iter()
                .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(total)))
                .collect()
        });
        results.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedParam {
    pub index: u64,
    pub params: Vec<f64>,
    pub multiplicity: u64,
    pub discrepancy: f64,
    pub summary: Option<TrajectorySummary>,
}

/// Exact counts from evaluating every grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub cardinality: u64,
    /// Number of good parameters in the grid.
    pub p: u64,
    /// `q`-mass of the good parameters.
    #[serde(rename = "G")]
    pub g: f64,
    pub parameter_names: Vec<String>,
    pub good: Vec<AcceptedParam>,
}

impl ScanResult {
    pub fn good_indices(&self) -> Vec<u64> {
        self.good.iter().map(|a| a.index).collect()
    }
}

/// Distinct accepted parameters of one rejection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodSet {
    pub fitness: Option<FitnessSpec>,
    pub seed: u64,
    pub n_sampled: u64,
    /// Accepted draws counting repeats.
    pub n_accepted_draws: u64,
    pub n_distinct_good: u64,
    pub parameter_names: Vec<String>,
    pub compartments: Vec<String>,
    /// In order of first acceptance.
    pub accepted: Vec<AcceptedParam>,
}

impl GoodSet {
    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        report::write_json(path, self)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_accepted_csv(path, &self.parameter_names, &self.compartments, &self.accepted)
    }
}

/// One row per accepted parameter: index, multiplicity, parameter values,
/// discrepancy and trajectory summary.
pub fn write_accepted_csv(
    path: &Path,
    parameter_names: &[String],
    compartments: &[String],
    accepted: &[AcceptedParam],
) -> Result<()> {
    let mut header: Vec<String> = vec!["index".into(), "multiplicity".into()];
    header.extend(parameter_names.iter().cloned());
    header.extend(["discrepancy", "peak_day", "peak_value", "final_day"].map(String::from));
    header.extend(compartments.iter().map(|c| format!("final_{c}")));
    let rows = accepted.iter().map(|a| {
        let mut row = vec![a.index.to_string(), a.multiplicity.to_string()];
        row.extend(a.params.iter().map(|&v| fmt_f64(v)));
        row.push(fmt_f64(a.discrepancy));
        match &a.summary {
            Some(s) => {
                row.push(s.peak_day.to_string());
                row.push(fmt_f64(s.peak_value));
                row.push(s.final_day.to_string());
                row.extend(s.final_state.iter().map(|&v| fmt_f64(v)));
            }
            None => {
                row.extend(std::iter::repeat(String::new()).take(3 + compartments.len()));
            }
        }
        row
    });
    report::write_csv(path, &header, rows)
}

fn names(grid: &CandidateGrid) -> Vec<String> {
    grid.names().into_iter().map(String::from).collect()
}

/// Evaluates every grid point.
pub fn exhaustive_scan<E: CandidateEvaluator>(
    grid: &CandidateGrid,
    sampler: &Sampler,
    evaluator: &E,
    limit: u64,
    pool: &WorkerPool,
) -> Result<ScanResult> {
    let cardinality = grid.cardinality();
    if cardinality > limit {
        return Err(Error::GuardExceeded { cardinality, limit });
    }
    let chunks = pool.map_ranges(cardinality, |range| {
        let mut good = Vec::new();
        for index in range {
            let params = grid.index_to_param(index)?;
            let eval = evaluator
                .evaluate(&params, true)
                .map_err(|e| e.at_candidate(index))?;
            if eval.fit {
                good.push(AcceptedParam {
                    index,
                    params,
                    multiplicity: 1,
                    discrepancy: eval.discrepancy,
                    summary: eval.summary,
                });
            }
        }
        Ok(good)
    })?;
    let good: Vec<AcceptedParam> = chunks.into_iter().flatten().collect();
    let indices: Vec<u64> = good.iter().map(|a| a.index).collect();
    Ok(ScanResult {
        cardinality,
        p: good.len() as u64,
        g: sampler.total_mass(&indices),
        parameter_names: names(grid),
        good,
    })
}

struct Hit {
    index: u64,
    eval: Evaluation,
}

fn sample_and_evaluate<E: CandidateEvaluator>(
    grid: &CandidateGrid,
    sampler: &Sampler,
    n: u64,
    seed: u64,
    evaluator: &E,
    pool: &WorkerPool,
    summarize: bool,
) -> Result<Vec<Vec<Hit>>> {
    pool.map_ranges(n, |range| {
        let mut stream = sampler.stream(seed);
        let mut hits = Vec::new();
        for i in range {
            let index = stream.draw(i);
            let params = grid.index_to_param(index)?;
            let eval = evaluator
                .evaluate(&params, summarize)
                .map_err(|e| e.at_candidate(index))?;
            if eval.fit {
                hits.push(Hit { index, eval });
            }
        }
        Ok(hits)
    })
}

/// Draws `n` candidates from `q` and keeps the distinct ones that fit.
pub fn rejection_estimate<E: CandidateEvaluator>(
    grid: &CandidateGrid,
    sampler: &Sampler,
    n: u64,
    seed: u64,
    evaluator: &E,
    pool: &WorkerPool,
) -> Result<GoodSet> {
    if n == 0 {
        return Err(Error::InvalidParams("sample size must be at least 1".into()));
    }
    let chunks = sample_and_evaluate(grid, sampler, n, seed, evaluator, pool, true)?;
    let mut accepted: Vec<AcceptedParam> = Vec::new();
    let mut position: HashMap<u64, usize> = HashMap::new();
    let mut n_accepted_draws = 0;
    for hit in chunks.into_iter().flatten() {
        n_accepted_draws += 1;
        match position.get(&hit.index) {
            Some(&k) => accepted[k].multiplicity += 1,
            None => {
                position.insert(hit.index, accepted.len());
                accepted.push(AcceptedParam {
                    index: hit.index,
                    params: grid.index_to_param(hit.index)?,
                    multiplicity: 1,
                    discrepancy: hit.eval.discrepancy,
                    summary: hit.eval.summary,
                });
            }
        }
    }
    log::debug!(
        "rejection estimate: {n} draws, {n_accepted_draws} accepted, {} distinct",
        accepted.len()
    );
    Ok(GoodSet {
        fitness: evaluator.fitness().cloned(),
        seed,
        n_sampled: n,
        n_accepted_draws,
        n_distinct_good: accepted.len() as u64,
        parameter_names: names(grid),
        compartments: evaluator.compartments(),
        accepted,
    })
}

/// Proportion of accepted draws (repeats counted) in a pre-sample of size
/// `n_pre`: an estimate of `G`.
pub fn estimate_g_presample<E: CandidateEvaluator>(
    grid: &CandidateGrid,
    sampler: &Sampler,
    n_pre: u64,
    seed: u64,
    evaluator: &E,
    pool: &WorkerPool,
) -> Result<f64> {
    if n_pre == 0 {
        return Err(Error::InvalidParams("pre-sample size must be at least 1".into()));
    }
    let chunks = sample_and_evaluate(grid, sampler, n_pre, seed, evaluator, pool, false)?;
    let accepted: usize = chunks.iter().map(Vec::len).sum();
    Ok(accepted as f64 / n_pre as f64)
}

/// Smallest finite discrepancy over `n` draws, with the grid index that
/// attains it (earliest draw on ties). `None` if no draw was finite.
pub fn minimum_discrepancy<E: CandidateEvaluator>(
    grid: &CandidateGrid,
    sampler: &Sampler,
    n: u64,
    seed: u64,
    evaluator: &E,
    pool: &WorkerPool,
) -> Result<Option<(u64, f64)>> {
    let chunks = pool.map_ranges(n, |range| {
        let mut stream = sampler.stream(seed);
        let mut best: Option<(u64, f64)> = None;
        for i in range {
            let index = stream.draw(i);
            let params = grid.index_to_param(index)?;
            let eval = evaluator
                .evaluate(&params, false)
                .map_err(|e| e.at_candidate(index))?;
            if eval.discrepancy.is_finite() && best.map_or(true, |(_, b)| eval.discrepancy < b) {
                best = Some((index, eval.discrepancy));
            }
        }
        Ok(best)
    })?;
    Ok(chunks.into_iter().flatten().fold(None, |acc, cur| match acc {
        Some((_, b)) if b <= cur.1 => acc,
        _ => Some(cur),
    }))
}
