//! Binary fitness maps deciding whether a simulated trajectory well fits an
//! observed one over a window of days.
//!
//! All thresholds accept at equality.

use serde::{Deserialize, Serialize};

use crate::dynsys::{ModelKind, Trajectory};
use crate::error::{Error, Result};

/// Inclusive range of day labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayWindow {
    pub first: i64,
    pub last: i64,
}

impl DayWindow {
    pub fn new(first: i64, last: i64) -> Result<Self> {
        if last < first {
            return Err(Error::InvalidFitness(format!("empty window [{first}, {last}]")));
        }
        Ok(DayWindow { first, last })
    }

    /// The week `[t0, t0 + 6]`.
    pub fn week(t0: i64) -> Self {
        DayWindow { first: t0, last: t0 + 6 }
    }

    pub fn len(&self) -> usize {
        (self.last - self.first + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.last < self.first
    }

    pub fn days(&self) -> impl Iterator<Item = i64> {
        self.first..=self.last
    }
}

/// Which trajectory scales the tolerance of a pointwise relative band.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandReference {
    /// `|sim - obs| <= r * obs`.
    #[default]
    Observed,
    /// `|sim - obs| <= r * sim`, the band drawn around the candidate's own
    /// trajectory. This is the form that reproduces the published SIR counts.
    Candidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FitnessRule {
    PointwiseRelativeBand {
        r: f64,
        #[serde(default)]
        reference: BandReference,
    },
    MeanDistance {
        delta_tolerance: f64,
    },
    SupRelativeWindow {
        r: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessSpec {
    pub rule: FitnessRule,
    pub window: DayWindow,
    pub components: Vec<usize>,
}

/// Verdict plus the continuous quantity it thresholds: the worst relative
/// error for band rules, the mean distance for [`FitnessRule::MeanDistance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub fit: bool,
    pub discrepancy: f64,
}

impl FitnessSpec {
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if self.window.is_empty() {
            return Err(Error::InvalidFitness("window is empty".into()));
        }
        if self.components.is_empty() {
            return Err(Error::InvalidFitness("no compared components".into()));
        }
        let n = kind.labels().len();
        if let Some(&c) = self.components.iter().find(|&&c| c >= n) {
            return Err(Error::InvalidFitness(format!(
                "component {c} does not exist in a {n}-compartment model"
            )));
        }
        match self.rule {
            FitnessRule::PointwiseRelativeBand { r, .. } | FitnessRule::SupRelativeWindow { r } => {
                if !(r > 0.0 && r < 1.0) {
                    return Err(Error::InvalidFitness(format!("r must be in (0, 1), got {r}")));
                }
            }
            FitnessRule::MeanDistance { delta_tolerance } => {
                if !(delta_tolerance > 0.0 && delta_tolerance.is_finite()) {
                    return Err(Error::InvalidFitness(format!(
                        "delta_tolerance must be > 0, got {delta_tolerance}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, sim: &Trajectory, obs: &Trajectory) -> Result<bool> {
        match self.rule {
            FitnessRule::PointwiseRelativeBand { .. } => pointwise_relative_band(sim, obs, self),
            FitnessRule::MeanDistance { .. } => mean_distance(sim, obs, self),
            FitnessRule::SupRelativeWindow { .. } => sup_relative_window(sim, obs, self),
        }
    }

    pub fn assess(&self, sim: &Trajectory, obs: &Trajectory) -> Result<Assessment> {
        let fit = self.evaluate(sim, obs)?;
        let discrepancy = match self.rule {
            FitnessRule::PointwiseRelativeBand { reference, .. } => {
                worst_band_error(sim, obs, self.window, &self.components, reference)?
            }
            FitnessRule::MeanDistance { .. } => mean_euclidean(sim, obs, self.window, &self.components)?,
            FitnessRule::SupRelativeWindow { .. } => {
                worst_relative_error(sim, obs, self.window, &self.components)?
            }
        };
        Ok(Assessment { fit, discrepancy })
    }
}

fn pair(sim: &Trajectory, obs: &Trajectory, day: i64, c: usize) -> Result<(f64, f64)> {
    Ok((sim.value(day, c)?, obs.value(day, c)?))
}

/// 1 iff every compared component stays within `r` times the reference
/// value on every day of the window.
pub fn pointwise_relative_band(sim: &Trajectory, obs: &Trajectory, spec: &FitnessSpec) -> Result<bool> {
    let FitnessRule::PointwiseRelativeBand { r, reference } = spec.rule else {
        return Err(Error::InvalidFitness("expected a pointwise-relative-band rule".into()));
    };
    let mut fit = true;
    for day in spec.window.days() {
        for &c in &spec.components {
            let (s, o) = pair(sim, obs, day, c)?;
            let scale = match reference {
                BandReference::Observed => {
                    if o == 0.0 {
                        return Err(Error::ZeroReference { day, component: c });
                    }
                    o
                }
                BandReference::Candidate => s,
            };
            if !((s - o).abs() <= r * scale) {
                fit = false;
            }
        }
    }
    Ok(fit)
}

/// 1 iff the mean Euclidean distance over the window is at most
/// `delta_tolerance`.
pub fn mean_distance(sim: &Trajectory, obs: &Trajectory, spec: &FitnessSpec) -> Result<bool> {
    let FitnessRule::MeanDistance { delta_tolerance } = spec.rule else {
        return Err(Error::InvalidFitness("expected a mean-distance rule".into()));
    };
    Ok(mean_euclidean(sim, obs, spec.window, &spec.components)? <= delta_tolerance)
}

fn mean_euclidean(sim: &Trajectory, obs: &Trajectory, window: DayWindow, components: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for day in window.days() {
        let mut sq = 0.0;
        for &c in components {
            let (s, o) = pair(sim, obs, day, c)?;
            sq += (s - o) * (s - o);
        }
        total += sq.sqrt();
    }
    Ok(total / window.len() as f64)
}

/// 1 iff the component-wise relative error sup-norm stays within `r` on
/// every day of the window.
pub fn sup_relative_window(sim: &Trajectory, obs: &Trajectory, spec: &FitnessSpec) -> Result<bool> {
    let FitnessRule::SupRelativeWindow { r } = spec.rule else {
        return Err(Error::InvalidFitness("expected a sup-relative-window rule".into()));
    };
    Ok(worst_relative_error(sim, obs, spec.window, &spec.components)? <= r)
}

/// Maximum over the window of `||(sim - obs) / obs||_inf` over the compared
/// components: the smallest tolerance at which the simulation would pass.
pub fn worst_relative_error(
    sim: &Trajectory,
    obs: &Trajectory,
    window: DayWindow,
    components: &[usize],
) -> Result<f64> {
    worst_band_error(sim, obs, window, components, BandReference::Observed)
}

fn worst_band_error(
    sim: &Trajectory,
    obs: &Trajectory,
    window: DayWindow,
    components: &[usize],
    reference: BandReference,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for day in window.days() {
        for &c in components {
            let (s, o) = pair(sim, obs, day, c)?;
            let scale = match reference {
                BandReference::Observed => o,
                BandReference::Candidate => s,
            };
            let err = if s == o {
                0.0
            } else if scale == 0.0 {
                if reference == BandReference::Observed {
                    return Err(Error::ZeroReference { day, component: c });
                }
                f64::INFINITY
            } else {
                (s - o).abs() / scale.abs()
            };
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
