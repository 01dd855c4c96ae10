//! Finite candidate grids and the discrete sampling distribution over them.
//!
//! Grid points are addressed by a mixed-radix index with the last dimension
//! varying fastest, so index `k` of a `(3, 2)` grid is
//! `(dim0[k / 2], dim1[k % 2])`. Persisted indices stay valid as long as the
//! dimension order and value lists are unchanged.
//!
//! Sampling is counter based: draw `i` under seed `s` reads a fixed block of
//! the ChaCha8 keystream keyed by `s`, so it is a pure function of `(s, i)`
//! and any partition of the draws across workers gives the same sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `(hi - lo) / step` being an integer.
const STEP_TOLERANCE: f64 = 1e-9;
/// Keystream words reserved for each draw.
const WORDS_PER_DRAW: u128 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RangeConvention {
    /// `(lo, hi]`: `lo + step, ..., hi`.
    HalfOpen,
    /// `[lo, hi]`: `lo, lo + step, ..., hi`.
    Closed,
}

/// Number of decimals needed to write `x` exactly (up to 12).
fn decimals(x: f64) -> i32 {
    (0..=12)
        .find(|&d| {
            let scaled = x * 10f64.powi(d);
            (scaled - scaled.round()).abs() < 1e-7
        })
        .unwrap_or(12)
}

fn round_to(x: f64, d: i32) -> f64 {
    let scale = 10f64.powi(d);
    (x * scale).round() / scale
}

/// Evenly spaced values between `lo` and `hi`, rounded to the decimal
/// precision of `step` and `lo` so that e.g. `0.25` is hit exactly.
pub fn build_range_grid(lo: f64, hi: f64, step: f64, convention: RangeConvention) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidGrid(format!("need lo < hi, got [{lo}, {hi}]")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidGrid(format!("step must be > 0, got {step}")));
    }
    let steps = (hi - lo) / step;
    let n = steps.round();
    if (steps - n).abs() > STEP_TOLERANCE * n.max(1.0) {
        return Err(Error::InvalidGrid(format!(
            "range [{lo}, {hi}] is not a whole number of steps of {step}"
        )));
    }
    let n = n as u64;
    let d = decimals(step).max(decimals(lo));
    let first = match convention {
        RangeConvention::HalfOpen => 1,
        RangeConvention::Closed => 0,
    };
    Ok((first..=n).map(|k| round_to(lo + k as f64 * step, d)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub values: Vec<f64>,
}

/// Cartesian product of per-dimension candidate values.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    dims: Vec<Dimension>,
    cardinality: u64,
}

impl CandidateGrid {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidGrid("grid has no dimensions".into()));
        }
        let mut cardinality: u64 = 1;
        for dim in &dims {
            if dim.values.is_empty() {
                return Err(Error::InvalidGrid(format!("dimension `{}` is empty", dim.name)));
            }
            if let Some(v) = dim.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidGrid(format!("dimension `{}` has value {v}", dim.name)));
            }
            for w in dim.values.windows(2) {
                if w[1] == w[0] {
                    return Err(Error::InvalidGrid(format!(
                        "dimension `{}` repeats value {}",
                        dim.name, w[0]
                    )));
                }
                if w[1] < w[0] {
                    return Err(Error::InvalidGrid(format!(
                        "dimension `{}` is not strictly increasing at {}",
                        dim.name, w[1]
                    )));
                }
            }
            cardinality = cardinality
                .checked_mul(dim.values.len() as u64)
                .ok_or_else(|| Error::InvalidGrid("cardinality overflows u64".into()))?;
        }
        Ok(CandidateGrid { dims, cardinality })
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn arity(&self) -> usize {
        self.dims.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.dims.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn cardinality(&self) -> u64 {
        self.cardinality
    }

    pub fn index_to_param(&self, index: u64) -> Result<Vec<f64>> {
        if index >= self.cardinality {
            return Err(Error::IndexOutOfRange {
                index,
                cardinality: self.cardinality,
            });
        }
        let mut params = vec![0.0; self.dims.len()];
        let mut rest = index;
        for (slot, dim) in params.iter_mut().zip(&self.dims).rev() {
            let radix = dim.values.len() as u64;
            *slot = dim.values[(rest % radix) as usize];
            rest /= radix;
        }
        Ok(params)
    }

    /// Inverse of [`index_to_param`](Self::index_to_param); values must match
    /// grid values to within 1e-12 relative.
    pub fn param_to_index(&self, params: &[f64]) -> Result<u64> {
        if params.len() != self.dims.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} parameter values, got {}",
                self.dims.len(),
                params.len()
            )));
        }
        let mut index = 0u64;
        for (dim, &p) in self.dims.iter().zip(params) {
            let pos = dim.values.partition_point(|&v| v < p);
            let hit = [pos.checked_sub(1), Some(pos)]
                .into_iter()
                .flatten()
                .filter(|&k| k < dim.values.len())
                .find(|&k| (dim.values[k] - p).abs() <= 1e-12 * p.abs().max(1.0))
                .ok_or_else(|| {
                    Error::InvalidGrid(format!("{p} is not a value of dimension `{}`", dim.name))
                })?;
            index = index * dim.values.len() as u64 + hit as u64;
        }
        Ok(index)
    }
}

/// Build a grid from explicit per-dimension value lists.
pub fn build_explicit_grid(dims: Vec<(String, Vec<f64>)>) -> Result<CandidateGrid> {
    CandidateGrid::new(
        dims.into_iter()
            .map(|(name, values)| Dimension { name, values })
            .collect(),
    )
}

/// Discrete distribution `q` over grid indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DiscreteDist {
    #[default]
    Uniform,
    /// One strictly positive weight per grid index, summing to one.
    Explicit { weights: Vec<f64> },
}

/// A distribution validated against a grid and ready to draw from.
#[derive(Debug, Clone)]
pub struct Sampler {
    cardinality: u64,
    cumulative: Option<Vec<f64>>,
    weights: Option<Vec<f64>>,
}

impl Sampler {
    pub fn new(grid: &CandidateGrid, dist: &DiscreteDist) -> Result<Self> {
        match dist {
            DiscreteDist::Uniform => Ok(Sampler {
                cardinality: grid.cardinality(),
                cumulative: None,
                weights: None,
            }),
            DiscreteDist::Explicit { weights } => {
                if weights.len() as u64 != grid.cardinality() {
                    return Err(Error::InvalidDistribution(format!(
                        "{} weights for a grid of {} points",
                        weights.len(),
                        grid.cardinality()
                    )));
                }
                if let Some(w) = weights.iter().find(|&&w| !(w > 0.0 && w.is_finite())) {
                    return Err(Error::InvalidDistribution(format!("weight {w} is not positive")));
                }
                let mut acc = 0.0;
                let cumulative: Vec<f64> = weights
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                if (acc - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidDistribution(format!("weights sum to {acc}")));
                }
                Ok(Sampler {
                    cardinality: grid.cardinality(),
                    cumulative: Some(cumulative),
                    weights: Some(weights.clone()),
                })
            }
        }
    }

    pub fn cardinality(&self) -> u64 {
        self.cardinality
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.is_none()
    }

    /// `q(index)`.
    pub fn mass(&self, index: u64) -> f64 {
        match &self.weights {
            None => 1.0 / self.cardinality as f64,
            Some(w) => w[index as usize],
        }
    }

    /// Total mass of a set of distinct indices. For uniform `q` this is
    /// exactly `count / |Z|`.
    pub fn total_mass(&self, indices: &[u64]) -> f64 {
        match &self.weights {
            None => indices.len() as f64 / self.cardinality as f64,
            Some(w) => indices.iter().map(|&i| w[i as usize]).sum(),
        }
    }

    pub fn stream(&self, seed: u64) -> DrawStream<'_> {
        DrawStream {
            sampler: self,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// `n` draws with replacement.
    pub fn sample(&self, n: u64, seed: u64) -> Vec<u64> {
        let mut stream = self.stream(seed);
        (0..n).map(|i| stream.draw(i)).collect()
    }
}

/// Random access into the draw sequence of one seed.
pub struct DrawStream<'a> {
    sampler: &'a Sampler,
    rng: ChaCha8Rng,
}

impl DrawStream<'_> {
    /// Grid index of draw number `i`.
    pub fn draw(&mut self, i: u64) -> u64 {
        self.rng.set_word_pos(i as u128 * WORDS_PER_DRAW);
        match &self.sampler.cumulative {
            None => self.rng.gen_range(0..self.sampler.cardinality),
            Some(cum) => {
                let u: f64 = self.rng.gen();
                (cum.partition_point(|&c| c <= u) as u64).min(self.sampler.cardinality - 1)
            }
        }
    }
}

/// Convenience wrapper over [`Sampler::sample`].
pub fn sample(grid: &CandidateGrid, dist: &DiscreteDist, n: u64, seed: u64) -> Result<Vec<u64>> {
    Ok(Sampler::new(grid, dist)?.sample(n, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sir_grid(beta: (f64, f64, RangeConvention), gamma_hi: f64) -> CandidateGrid {
        let b = build_range_grid(beta.0, beta.1, 0.001, beta.2).unwrap();
        let g = build_range_grid(0.0, gamma_hi, 0.001, RangeConvention::HalfOpen).unwrap();
        build_explicit_grid(vec![("beta".into(), b), ("gamma".into(), g)]).unwrap()
    }

    #[test]
    fn sir_grid_cardinalities() {
        use RangeConvention::*;
        assert_eq!(sir_grid((0.0, 1.0, HalfOpen), 0.5).cardinality(), 500_000);
        assert_eq!(sir_grid((0.0, 1.0, HalfOpen), 0.2).cardinality(), 200_000);
        assert_eq!(sir_grid((0.1, 0.5, Closed), 0.2).cardinality(), 80_200);
    }

    #[test]
    fn range_grid_hits_decimal_values_exactly() {
        let b = build_range_grid(0.0, 1.0, 0.001, RangeConvention::HalfOpen).unwrap();
        assert_eq!(b.len(), 1000);
        assert_eq!(b[0], 0.001);
        assert_eq!(b[249], 0.25);
        assert_eq!(b[999], 1.0);
        let z3 = build_range_grid(0.1, 0.5, 0.001, RangeConvention::Closed).unwrap();
        assert_eq!(z3.len(), 401);
        assert_eq!(z3[150], 0.25);
        assert_eq!(
            build_range_grid(0.0, 0.2, 0.1, RangeConvention::HalfOpen).unwrap(),
            vec![0.1, 0.2]
        );
    }

    #[test]
    fn range_grid_rejects_bad_ranges() {
        use RangeConvention::*;
        assert!(build_range_grid(0.0, 1.0, 0.3, HalfOpen).is_err());
        assert!(build_range_grid(1.0, 1.0, 0.1, Closed).is_err());
        assert!(build_range_grid(0.0, 1.0, 0.0, Closed).is_err());
    }

    #[test]
    fn table3_grid_cardinality() {
        let dims = vec![
            ("beta", vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5]),
            ("tau_e", (4..=7).map(f64::from).collect()),
            ("tau_r", (5..=14).map(f64::from).collect()),
            ("tau_s", (3..=14).map(f64::from).collect()),
            ("tau_rs", (5..=28).map(f64::from).collect()),
            ("tau_d", (1..=28).map(f64::from).collect()),
            ("p_s", vec![0.01, 0.025, 0.05, 0.075, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99]),
        ];
        let grid = build_explicit_grid(dims.into_iter().map(|(n, v)| (n.to_string(), v)).collect()).unwrap();
        assert_eq!(grid.cardinality(), 116_121_600);
    }

    #[test]
    fn explicit_grid_edge_cases() {
        let g = build_explicit_grid(vec![("a".into(), vec![1.0])]).unwrap();
        assert_eq!(g.cardinality(), 1);
        let g = build_explicit_grid(vec![("a".into(), vec![1.0, 2.0]), ("b".into(), vec![1.0, 2.0, 3.0])]).unwrap();
        assert_eq!(g.cardinality(), 6);
        assert!(build_explicit_grid(vec![("a".into(), vec![1.0, 1.0])]).is_err());
        assert!(build_explicit_grid(vec![("a".into(), vec![2.0, 1.0])]).is_err());
        assert!(build_explicit_grid(vec![("a".into(), vec![])]).is_err());
        assert!(build_explicit_grid(vec![]).is_err());
    }

    #[test]
    fn mixed_radix_decoding() {
        let g = build_explicit_grid(vec![
            ("a".into(), vec![10.0, 20.0, 30.0]),
            ("b".into(), vec![1.0, 2.0]),
        ])
        .unwrap();
        assert_eq!(g.index_to_param(0).unwrap(), vec![10.0, 1.0]);
        assert_eq!(g.index_to_param(3).unwrap(), vec![20.0, 2.0]);
        assert_eq!(g.index_to_param(5).unwrap(), vec![30.0, 2.0]);
        assert!(matches!(
            g.index_to_param(6),
            Err(Error::IndexOutOfRange { index: 6, cardinality: 6 })
        ));
        assert!(g.param_to_index(&[20.0, 1.5]).is_err());
    }

    #[test]
    fn roundtrip_is_exhaustive_on_z3() {
        let g = sir_grid((0.1, 0.5, RangeConvention::Closed), 0.2);
        for i in 0..g.cardinality() {
            assert_eq!(g.param_to_index(&g.index_to_param(i).unwrap()).unwrap(), i);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_empty_for_zero() {
        let g = sir_grid((0.1, 0.5, RangeConvention::Closed), 0.2);
        assert!(sample(&g, &DiscreteDist::Uniform, 0, 7).unwrap().is_empty());
        let a = sample(&g, &DiscreteDist::Uniform, 1000, 7).unwrap();
        let b = sample(&g, &DiscreteDist::Uniform, 1000, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample(&g, &DiscreteDist::Uniform, 1000, 8).unwrap());
        assert!(a.iter().all(|&i| i < g.cardinality()));
    }

    #[test]
    fn draws_are_random_access() {
        let g = sir_grid((0.1, 0.5, RangeConvention::Closed), 0.2);
        let s = Sampler::new(&g, &DiscreteDist::Uniform).unwrap();
        let all = s.sample(200, 42);
        let mut stream = s.stream(42);
        for i in (0..200).rev() {
            assert_eq!(stream.draw(i), all[i as usize]);
        }
    }

    #[test]
    fn uniform_frequencies_within_five_sigma() {
        let g = build_explicit_grid(vec![("a".into(), (0..10).map(f64::from).collect())]).unwrap();
        let draws = sample(&g, &DiscreteDist::Uniform, 1_000_000, 2024).unwrap();
        let mut counts = [0u64; 10];
        for d in draws {
            counts[d as usize] += 1;
        }
        let sigma = (1e6f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - 1e5).abs() < 5.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn explicit_weights_follow_their_masses() {
        let g = build_explicit_grid(vec![("a".into(), vec![1.0, 2.0, 3.0, 4.0])]).unwrap();
        let weights = vec![0.1, 0.2, 0.3, 0.4];
        let draws = sample(&g, &DiscreteDist::Explicit { weights: weights.clone() }, 400_000, 3).unwrap();
        let mut counts = [0f64; 4];
        for d in draws {
            counts[d as usize] += 1.0;
        }
        for (c, w) in counts.iter().zip(&weights) {
            let sigma = (4e5 * w * (1.0 - w)).sqrt();
            assert!((c - 4e5 * w).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn explicit_weights_are_validated() {
        let g = build_explicit_grid(vec![("a".into(), vec![1.0, 2.0])]).unwrap();
        let bad = |w: Vec<f64>| Sampler::new(&g, &DiscreteDist::Explicit { weights: w }).is_err();
        assert!(bad(vec![0.5]));
        assert!(bad(vec![1.0, 0.0]));
        assert!(bad(vec![0.5, 0.6]));
        assert!(!bad(vec![0.25, 0.75]));
    }

    proptest! {
        #[test]
        fn index_roundtrip_on_random_grids(
            sizes in prop::collection::vec(1usize..6, 1..5),
            pick in any::<u64>(),
        ) {
            let dims = sizes
                .iter()
                .enumerate()
                .map(|(k, &n)| (format!("d{k}"), (0..n).map(|v| v as f64 * 0.5 + k as f64).collect()))
                .collect();
            let g = build_explicit_grid(dims).unwrap();
            let i = pick % g.cardinality();
            let p = g.index_to_param(i).unwrap();
            prop_assert_eq!(g.param_to_index(&p).unwrap(), i);
        }
    }
}
