//! Sample-complexity bounds for rejection estimation over a finite grid.
//!
//! All logarithms are natural. Sample sizes are returned as reals; callers
//! take the ceiling when they need an integer draw count.

use std::cmp::Ordering;
use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a non-integer binomial lower index `(1 - c) p` is turned into `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinomialIndex {
    /// Round half away from zero.
    #[default]
    Nearest,
    Ceiling,
    /// Keep the real index and use the log-gamma continuation of `C(p, x)`.
    Continuous,
}

impl BinomialIndex {
    fn resolve(self, x: f64) -> f64 {
        match self {
            BinomialIndex::Nearest => x.round(),
            BinomialIndex::Ceiling => x.ceil(),
            BinomialIndex::Continuous => x,
        }
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidBoundQuery(format!("{name} must be in (0, 1), got {v}")))
    }
}

/// `ln C(n, k)` for real `0 <= k <= n`.
pub fn ln_binomial(n: f64, k: f64) -> f64 {
    libm::lgamma(n + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(n - k + 1.0)
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `ln sum_{k=0}^{K} C(p, k)` for integer `K`.
fn ln_binomial_prefix(p: u64, k_max: u64) -> f64 {
    log_sum_exp((0..=k_max.min(p)).map(|k| ln_binomial(p as f64, k as f64)))
}

/// `min(1, |H| exp(-n eps))`, with `|H|` given by its logarithm.
pub fn theorem1_bound(n: u64, epsilon: f64, ln_h_cardinality: f64) -> Result<f64> {
    open_unit("epsilon", epsilon)?;
    Ok((ln_h_cardinality - n as f64 * epsilon).exp().min(1.0))
}

/// `(1/eps) ln(|H| / delta)`.
pub fn corollary_sample_size(epsilon: f64, delta: f64, ln_h_cardinality: f64) -> Result<f64> {
    open_unit("epsilon", epsilon)?;
    open_unit("delta", delta)?;
    Ok((ln_h_cardinality - delta.ln()) / epsilon)
}

/// General bound for missing at most a fraction `c` of the good mass `G`:
/// `(p ln 2 - ln delta) / (c G)`.
pub fn eq9_sample_size(c: f64, delta: f64, g: f64, p: u64) -> Result<f64> {
    open_unit("c", c)?;
    open_unit("delta", delta)?;
    open_unit("G", g)?;
    if p == 0 {
        return Err(Error::InvalidBoundQuery("p must be at least 1".into()));
    }
    Ok((p as f64 * LN_2 - delta.ln()) / (c * g))
}

/// Probability bound when `q` is uniform on the good parameters:
/// `min(1, sum_{k=0}^{K} C(p, k) exp(-c G n))`.
///
/// The sum runs over integer `k`, so [`BinomialIndex::Continuous`] sums up to
/// `floor((1 - c) p)`.
pub fn prop2_probability_bound(c: f64, g: f64, p: u64, n: u64, index: BinomialIndex) -> Result<f64> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::InvalidBoundQuery(format!("c must be in (0, 1], got {c}")));
    }
    open_unit("G", g)?;
    let x = (1.0 - c) * p as f64;
    let k = match index {
        BinomialIndex::Continuous => x.floor(),
        other => other.resolve(x),
    };
    let ln_sum = ln_binomial_prefix(p, k.max(0.0) as u64);
    Ok((ln_sum - c * g * n as f64).exp().min(1.0))
}

/// Improved sample size, valid for `c > 1/2`:
/// `(1/(cG)) [ln C(p, K) + ln(1 + (1-c)^2 p^2 / (c p + 1)) - ln delta]`.
pub fn eq10_sample_size(c: f64, delta: f64, g: f64, p: u64, index: BinomialIndex) -> Result<f64> {
    open_unit("c", c)?;
    open_unit("delta", delta)?;
    open_unit("G", g)?;
    if c <= 0.5 {
        return Err(Error::InvalidBoundQuery(format!("bound requires c > 1/2, got {c}")));
    }
    if p == 0 {
        return Err(Error::InvalidBoundQuery("p must be at least 1".into()));
    }
    let pf = p as f64;
    let k = index.resolve((1.0 - c) * pf);
    let tail = ((1.0 - c).powi(2) * pf * pf / (c * pf + 1.0)).ln_1p();
    Ok((ln_binomial(pf, k) + tail - delta.ln()) / (c * g))
}

fn exact_binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Both sides of `ln sum_{k=0}^{p} C(n, k) <= ln C(n, p) + ln(1 + p^2/(n-p+1))`.
///
/// Exact integer prefix sums up to `n = 60`, log-gamma beyond.
pub fn log_binomial_prefix_bound(n: u64, p: u64) -> Result<(f64, f64)> {
    if n < 2 * p {
        return Err(Error::InvalidBoundQuery(format!("requires n >= 2p, got n={n}, p={p}")));
    }
    let slack = (p as f64 * p as f64 / (n - p + 1) as f64).ln_1p();
    if n <= 60 {
        let sum: u128 = (0..=p).map(|k| exact_binomial(n, k)).sum();
        Ok(((sum as f64).ln(), (exact_binomial(n, p) as f64).ln() + slack))
    } else {
        let lhs = ln_binomial_prefix(n, p);
        Ok((lhs, ln_binomial(n as f64, p as f64) + slack))
    }
}

/// Exact comparison of the two sides before taking logarithms, for
/// `n <= 60`: `sum (n-p+1)` against `C(n,p) (n-p+1+p^2)`.
pub fn prefix_bound_ordering(n: u64, p: u64) -> Result<Ordering> {
    if n < 2 * p || n > 60 {
        return Err(Error::InvalidBoundQuery(format!(
            "exact comparison needs 2p <= n <= 60, got n={n}, p={p}"
        )));
    }
    let sum: u128 = (0..=p).map(|k| exact_binomial(n, k)).sum();
    let d = (n - p + 1) as u128;
    Ok((sum * d).cmp(&(exact_binomial(n, p) * (d + (p * p) as u128))))
}

/// Smallest `c` for which the general bound stays below the grid size when
/// `p ~ G |Z|`: `ln 2 - ln(delta) / p`.
pub fn min_meaningful_c(delta: f64, p: u64) -> Result<f64> {
    open_unit("delta", delta)?;
    if p == 0 {
        return Err(Error::InvalidBoundQuery("p must be at least 1".into()));
    }
    Ok(LN_2 - delta.ln() / p as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub c: f64,
    pub general: f64,
    /// `None` where the improved bound does not apply (`c <= 1/2`).
    pub improved: Option<f64>,
}

/// Both sample-size bounds at each `c`.
pub fn sample_size_curve(
    delta: f64,
    g: f64,
    p: u64,
    c_values: &[f64],
    index: BinomialIndex,
) -> Result<Vec<CurvePoint>> {
    c_values
        .iter()
        .map(|&c| {
            Ok(CurvePoint {
                c,
                general: eq9_sample_size(c, delta, g, p)?,
                improved: if c > 0.5 {
                    Some(eq10_sample_size(c, delta, g, p, index)?)
                } else {
                    None
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOutcome {
    pub trials: u64,
    /// Trials whose missed good mass exceeded `epsilon`.
    pub violations: u64,
    pub violation_rate: f64,
    pub mean_missed_mass: f64,
    pub theorem1_bound: f64,
}

/// Repeats rejection estimation on a synthetic grid of `cardinality` points
/// with uniform `q`, `p` good parameters and exact loss
/// `(unseen good) / cardinality`.
pub fn montecarlo_verify_theorem1(
    cardinality: u64,
    p: u64,
    n: u64,
    epsilon: f64,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloOutcome> {
    if cardinality == 0 || p == 0 || p > cardinality || trials == 0 {
        return Err(Error::InvalidBoundQuery(format!(
            "need 1 <= p <= |Z| and trials >= 1, got |Z|={cardinality}, p={p}, trials={trials}"
        )));
    }
    let losses: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            let mut seen = vec![false; p as usize];
            for _ in 0..n {
                let z = rng.gen_range(0..cardinality);
                if z < p {
                    seen[z as usize] = true;
                }
            }
            seen.iter().filter(|s| !**s).count() as f64 / cardinality as f64
        })
        .collect();
    let violations = losses.iter().filter(|&&l| l > epsilon).count() as u64;
    Ok(MonteCarloOutcome {
        trials,
        violations,
        violation_rate: violations as f64 / trials as f64,
        mean_missed_mass: losses.iter().sum::<f64>() / trials as f64,
        theorem1_bound: theorem1_bound(n, epsilon, p as f64 * LN_2)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn theorem1_values() {
        let b = theorem1_bound(1000, 0.01, 1024f64.ln()).unwrap();
        assert!(close(b, 1024.0 * (-10f64).exp(), 1e-12));
        assert!(close(b, 0.04649, 1e-5));
        assert_eq!(theorem1_bound(1, 0.01, 1024f64.ln()).unwrap(), 1.0);
    }

    #[test]
    fn doubling_n_squares_over_h() {
        let h = 50f64;
        let a = theorem1_bound(400, 0.02, h.ln()).unwrap();
        let b = theorem1_bound(800, 0.02, h.ln()).unwrap();
        assert!(close(b, a * a / h, 1e-15));
    }

    #[test]
    fn corollary_value() {
        let m = corollary_sample_size(0.1, 0.05, 1024f64.ln()).unwrap();
        assert!(close(m, 10.0 * 20480f64.ln(), 1e-9));
        assert!(close(m, 99.27, 0.01));
        let m = m.ceil() as u64;
        assert!(theorem1_bound(m, 0.1, 1024f64.ln()).unwrap() <= 0.05);
    }

    #[test]
    fn eq9_values() {
        let m = eq9_sample_size(0.9, 0.01, 0.000136, 68).unwrap();
        assert!(close(m, 422_705.7, 1.0), "{m}");
        let half = eq9_sample_size(0.9, 0.01, 0.000272, 68).unwrap();
        assert!(close(half * 2.0, m, 1e-6));
    }

    #[test]
    fn prop2_single_term_at_c_one() {
        let b = prop2_probability_bound(1.0, 0.01, 30, 200, BinomialIndex::Nearest).unwrap();
        assert!(close(b, (-2f64).exp(), 1e-12));
    }

    #[test]
    fn prop2_prefix_of_ten() {
        let b = prop2_probability_bound(0.5, 0.01, 10, 2000, BinomialIndex::Nearest).unwrap();
        assert!(close(b, 638.0 * (-10f64).exp(), 1e-12));
        let t1 = theorem1_bound(2000, 0.005, 10.0 * LN_2).unwrap();
        assert!(b <= t1);
    }

    #[test]
    fn eq10_table_rows() {
        let m = eq10_sample_size(0.9, 0.01, 0.000136, 68, BinomialIndex::Nearest).unwrap();
        assert!(close(m, 211_219.0, 1.0), "{m}");
        let m = eq10_sample_size(0.9, 0.01, 68.0 / 80_200.0, 68, BinomialIndex::Nearest).unwrap();
        assert!(close(m, 33_879.0, 1.0), "{m}");
        assert!(eq10_sample_size(0.5, 0.01, 0.001, 68, BinomialIndex::Nearest).is_err());
    }

    #[test]
    fn index_conventions_differ_when_fraction_is_low() {
        let near = eq10_sample_size(0.9, 0.01, 263.0 / 500_000.0, 263, BinomialIndex::Nearest).unwrap();
        let ceil = eq10_sample_size(0.9, 0.01, 263.0 / 500_000.0, 263, BinomialIndex::Ceiling).unwrap();
        let cont = eq10_sample_size(0.9, 0.01, 263.0 / 500_000.0, 263, BinomialIndex::Continuous).unwrap();
        assert!(near < cont && cont < ceil);
    }

    #[test]
    fn prefix_bound_examples() {
        let (l, r) = log_binomial_prefix_bound(10, 5).unwrap();
        assert!(close(l, 638f64.ln(), 1e-12));
        assert!(close(r, 252f64.ln() + (31.0f64 / 6.0).ln(), 1e-12));
        let (l, r) = log_binomial_prefix_bound(7, 0).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
        assert_eq!(prefix_bound_ordering(2, 1).unwrap(), Ordering::Equal);
        assert!(log_binomial_prefix_bound(5, 3).is_err());
    }

    #[test]
    fn prefix_bound_large_n_uses_log_gamma() {
        let (l, r) = log_binomial_prefix_bound(1000, 100).unwrap();
        assert!(l <= r);
        assert!(l.is_finite());
    }

    #[test]
    fn meaningful_c() {
        let c = min_meaningful_c(0.01, 68).unwrap();
        assert!(close(c, 0.76087, 1e-5));
        assert!(close(min_meaningful_c(0.01, u64::MAX).unwrap(), LN_2, 1e-12));
    }

    #[test]
    fn bounds_move_the_right_way() {
        let m = |c, d, g, p| eq10_sample_size(c, d, g, p, BinomialIndex::Nearest).unwrap();
        assert!(m(0.9, 0.01, 0.001, 68) > m(0.9, 0.01, 0.002, 68));
        assert!(m(0.9, 0.01, 0.001, 68) > m(0.9, 0.1, 0.001, 68));
        assert!(m(0.9, 0.01, 0.001, 68) < m(0.9, 0.01, 0.001, 300));
        assert!(m(0.7, 0.01, 0.001, 68) > m(0.9, 0.01, 0.001, 68));
    }

    #[test]
    fn montecarlo_trivial_cases() {
        let big_eps = montecarlo_verify_theorem1(1000, 10, 100, 0.02, 200, 1).unwrap();
        assert_eq!(big_eps.violations, 0);
        let many = montecarlo_verify_theorem1(1000, 10, 50_000, 0.0005, 50, 1).unwrap();
        assert_eq!(many.violations, 0);
        let again = montecarlo_verify_theorem1(1000, 10, 100, 0.0005, 100, 7).unwrap();
        assert_eq!(again, montecarlo_verify_theorem1(1000, 10, 100, 0.0005, 100, 7).unwrap());
    }
}
