//! Exogenous market environment.
//!
//! A finite set of economic states, an action-independent monthly transition
//! matrix (row = current state) and a per-state return distribution for the
//! risky asset. The risk-free asset pays a constant monthly rate. All rates are
//! monthly fractions, never percent.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on row sums of the transition matrix.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("invalid state index {index} (model has {states} states)")]
    InvalidState { index: usize, states: usize },
    #[error("state {0} is not in the subset K")]
    NotInSubset(usize),
    #[error("state {0} is absorbing; expected sojourn is infinite")]
    Absorbing(usize),
    #[error("invalid market model: {0}")]
    Invalid(#[from] MarketViolation),
}

/// First violated invariant of a [`MarketModel`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketViolation {
    #[error("model has no states")]
    Empty,
    #[error("{field} has length {found}, expected {expected}")]
    Shape {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("transition entry ({row}, {col}) = {value} is outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("row sum ≠ 1: row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },
    #[error("risky_std[{state}] = {value} must be > 0")]
    NonPositiveStd { state: usize, value: f64 },
    #[error("{field} is not finite")]
    NonFinite { field: &'static str },
}

/// Supported return families. Only Gaussian returns are built in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReturnFamily {
    #[default]
    Gaussian,
}

/// Distribution of a single-period fractional return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnDistribution {
    pub family: ReturnFamily,
    pub mean: f64,
    pub std: f64,
}

impl ReturnDistribution {
    pub fn gaussian(mean: f64, std: f64) -> Self {
        Self {
            family: ReturnFamily::Gaussian,
            mean,
            std,
        }
    }

    /// Distribution with no dispersion (e.g. the risk-free asset).
    pub fn degenerate(value: f64) -> Self {
        Self::gaussian(value, 0.0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.std == 0.0
    }
}

/// States, transitions and per-state return parameters.
///
/// Fields are public so that a model can be assembled freely and checked with
/// [`MarketModel::validate`]; [`MarketModel::new`] refuses invalid input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub state_names: Vec<String>,
    pub transition: Vec<Vec<f64>>,
    pub risk_free_rate: f64,
    pub risky_mean: Vec<f64>,
    pub risky_std: Vec<f64>,
}

impl MarketModel {
    pub fn new(
        state_names: Vec<String>,
        transition: Vec<Vec<f64>>,
        risk_free_rate: f64,
        risky_mean: Vec<f64>,
        risky_std: Vec<f64>,
    ) -> Result<Self, MarketError> {
        let model = Self {
            state_names,
            transition,
            risk_free_rate,
            risky_mean,
            risky_std,
        };
        model.validate()?;
        Ok(model)
    }

    /// Three-state low/medium/high volatility calibration with monthly
    /// parameters: stay probability 0.92, risk-free 0.2%, risky means
    /// 0.5% / 0.875% / 1.25% and volatilities 3% / 4% / 5%.
    pub fn calibrated() -> Self {
        Self {
            state_names: vec!["low".into(), "medium".into(), "high".into()],
            transition: vec![
                vec![0.92, 0.08, 0.0],
                vec![0.04, 0.92, 0.04],
                vec![0.0, 0.08, 0.92],
            ],
            risk_free_rate: 0.002,
            risky_mean: vec![0.005, 0.00875, 0.0125],
            risky_std: vec![0.03, 0.04, 0.05],
        }
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    /// Returns the first violated invariant, or `Ok(())`.
    pub fn validate(&self) -> Result<(), MarketViolation> {
        let n = self.state_names.len();
        if n == 0 {
            return Err(MarketViolation::Empty);
        }
        let shape = |field, found| {
            if found == n {
                Ok(())
            } else {
                Err(MarketViolation::Shape {
                    field,
                    expected: n,
                    found,
                })
            }
        };
        shape("transition", self.transition.len())?;
        shape("risky_mean", self.risky_mean.len())?;
        shape("risky_std", self.risky_std.len())?;
        if !self.risk_free_rate.is_finite() {
            return Err(MarketViolation::NonFinite {
                field: "risk_free_rate",
            });
        }
        for (row, probs) in self.transition.iter().enumerate() {
            if probs.len() != n {
                return Err(MarketViolation::Shape {
                    field: "transition row",
                    expected: n,
                    found: probs.len(),
                });
            }
            for (col, &value) in probs.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(MarketViolation::EntryOutOfRange { row, col, value });
                }
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(MarketViolation::RowSum { row, sum });
            }
        }
        if self.risky_mean.iter().any(|m| !m.is_finite()) {
            return Err(MarketViolation::NonFinite {
                field: "risky_mean",
            });
        }
        for (state, &value) in self.risky_std.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MarketViolation::NonPositiveStd { state, value });
            }
        }
        Ok(())
    }

    fn check_state(&self, s: usize) -> Result<(), MarketError> {
        if s < self.num_states() {
            Ok(())
        } else {
            Err(MarketError::InvalidState {
                index: s,
                states: self.num_states(),
            })
        }
    }

    /// Risky-asset return distribution in state `s`.
    pub fn risky_distribution(&self, s: usize) -> Result<ReturnDistribution, MarketError> {
        self.check_state(s)?;
        Ok(ReturnDistribution::gaussian(
            self.risky_mean[s],
            self.risky_std[s],
        ))
    }

    /// Draws the next state from row `s`. Consumes exactly one uniform draw.
    pub fn sample_next_state<R: Rng + ?Sized>(
        &self,
        s: usize,
        rng: &mut R,
    ) -> Result<usize, MarketError> {
        self.check_state(s)?;
        let u: f64 = rng.random();
        Ok(pick(&self.transition[s], u))
    }

    /// Probability that a state outside `subset` is visited within `steps`
    /// transitions starting from `s ∈ subset`.
    ///
    /// Backward recursion with the states outside `subset` made absorbing:
    /// `p_0 = 0`, `p_k(i) = Σ_{j∉K} P(i,j) + Σ_{j∈K} P(i,j) p_{k-1}(j)`.
    pub fn hitting_probability(
        &self,
        subset: &[usize],
        s: usize,
        steps: usize,
    ) -> Result<f64, MarketError> {
        self.check_state(s)?;
        let n = self.num_states();
        let mut inside = vec![false; n];
        for &k in subset {
            self.check_state(k)?;
            inside[k] = true;
        }
        if !inside[s] {
            return Err(MarketError::NotInSubset(s));
        }
        let escape: Vec<f64> = self
            .transition
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&inside)
                    .filter(|(_, &in_k)| !in_k)
                    .map(|(p, _)| p)
                    .sum()
            })
            .collect();
        let mut prob = vec![0.0; n];
        for _ in 0..steps {
            let next: Vec<f64> = (0..n)
                .map(|i| {
                    let stay: f64 = self.transition[i]
                        .iter()
                        .zip(&prob)
                        .zip(&inside)
                        .filter(|(_, &in_k)| in_k)
                        .map(|((p, q), _)| p * q)
                        .sum();
                    escape[i] + stay
                })
                .collect();
            prob = next;
        }
        Ok(prob[s])
    }

    /// Mean number of consecutive months spent in `s`: `1 / (1 - P(s|s))`.
    pub fn expected_sojourn(&self, s: usize) -> Result<f64, MarketError> {
        self.check_state(s)?;
        let stay = self.transition[s][s];
        if stay >= 1.0 {
            return Err(MarketError::Absorbing(s));
        }
        Ok(1.0 / (1.0 - stay))
    }

    /// Left Perron vector of the transition matrix, by power iteration from
    /// the uniform distribution. Intended for irreducible aperiodic chains.
    pub fn stationary_distribution(&self) -> Vec<f64> {
        let n = self.num_states();
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let next = self.propagate(&pi);
            let diff = next
                .iter()
                .zip(&pi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            pi = next;
            if diff < 1e-15 {
                break;
            }
        }
        pi
    }

    /// One step of the distribution row vector: `π ↦ πP`.
    pub fn propagate(&self, dist: &[f64]) -> Vec<f64> {
        let n = self.num_states();
        let mut out = vec![0.0; n];
        for (i, &mass) in dist.iter().enumerate() {
            for (j, &p) in self.transition[i].iter().enumerate() {
                out[j] += mass * p;
            }
        }
        out
    }

    /// Expectation of `values` one step ahead from every state: `v ↦ Pv`.
    pub fn expect_next(&self, values: &[f64]) -> Vec<f64> {
        self.transition
            .iter()
            .map(|row| row.iter().zip(values).map(|(p, v)| p * v).sum())
            .collect()
    }
}

/// Index selected by a uniform draw `u` against a probability row.
pub(crate) fn pick(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            last_positive = j;
            acc += p;
            if u < acc {
                return j;
            }
        }
    }
    // rounding left u above the accumulated mass
    last_positive
}

impl fmt::Display for MarketModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MarketModel({} states, rf={})", self.num_states(), self.risk_free_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity(n: usize) -> MarketModel {
        MarketModel {
            state_names: (0..n).map(|i| format!("s{i}")).collect(),
            transition: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            risk_free_rate: 0.001,
            risky_mean: vec![0.01; n],
            risky_std: vec![0.02; n],
        }
    }

    #[test]
    fn calibrated_model_is_valid() {
        assert_eq!(MarketModel::calibrated().validate(), Ok(()));
    }

    #[test]
    fn row_sum_violation_is_reported() {
        let mut m = MarketModel::calibrated();
        m.transition[0] = vec![0.5, 0.6, 0.0];
        let v = m.validate().unwrap_err();
        assert!(matches!(v, MarketViolation::RowSum { row: 0, .. }));
        assert!(v.to_string().contains("row sum ≠ 1"));
    }

    #[test]
    fn zero_std_violation_is_reported() {
        let mut m = MarketModel::calibrated();
        m.risky_std[1] = 0.0;
        assert_eq!(
            m.validate(),
            Err(MarketViolation::NonPositiveStd {
                state: 1,
                value: 0.0
            })
        );
    }

    #[test]
    fn shape_and_range_violations() {
        let mut m = MarketModel::calibrated();
        m.risky_mean.pop();
        assert!(matches!(m.validate(), Err(MarketViolation::Shape { .. })));
        let mut m = MarketModel::calibrated();
        m.transition[2] = vec![-0.1, 0.2, 0.9];
        assert!(matches!(
            m.validate(),
            Err(MarketViolation::EntryOutOfRange { row: 2, col: 0, .. })
        ));
        let empty = MarketModel {
            state_names: vec![],
            transition: vec![],
            risk_free_rate: 0.0,
            risky_mean: vec![],
            risky_std: vec![],
        };
        assert_eq!(empty.validate(), Err(MarketViolation::Empty));
    }

    #[test]
    fn identity_transitions_are_absorbing() {
        let m = identity(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in 0..3 {
            for _ in 0..100 {
                assert_eq!(m.sample_next_state(s, &mut rng).unwrap(), s);
            }
        }
    }

    #[test]
    fn medium_state_frequencies() {
        let m = MarketModel::calibrated();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 1_000_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            counts[m.sample_next_state(1, &mut rng).unwrap()] += 1;
        }
        let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
        for (f, expected) in freq.iter().zip([0.04, 0.92, 0.04]) {
            assert!((f - expected).abs() < 0.002, "{freq:?}");
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let m = MarketModel::calibrated();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = 0;
            (0..500)
                .map(|_| {
                    s = m.sample_next_state(s, &mut rng).unwrap();
                    s
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn invalid_state_index() {
        let m = MarketModel::calibrated();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            m.sample_next_state(3, &mut rng),
            Err(MarketError::InvalidState {
                index: 3,
                states: 3
            })
        );
    }

    #[test]
    fn hitting_probability_examples() {
        let m = MarketModel::calibrated();
        for s in 0..3 {
            for tau in [0, 1, 7, 50] {
                assert_eq!(m.hitting_probability(&[0, 1, 2], s, tau).unwrap(), 0.0);
            }
        }
        let p = m.hitting_probability(&[1], 1, 1).unwrap();
        assert!((p - 0.08).abs() < 1e-15);
        assert_eq!(m.hitting_probability(&[1], 1, 0).unwrap(), 0.0);
        assert_eq!(
            m.hitting_probability(&[0, 2], 1, 3),
            Err(MarketError::NotInSubset(1))
        );
    }

    #[test]
    fn sojourn_times() {
        let m = MarketModel::calibrated();
        for s in 0..3 {
            assert!((m.expected_sojourn(s).unwrap() - 12.5).abs() < 1e-12);
        }
        let mut two = identity(2);
        two.transition = vec![vec![0.0, 1.0], vec![0.5, 0.5]];
        assert_eq!(two.expected_sojourn(0).unwrap(), 1.0);
        assert_eq!(two.expected_sojourn(1).unwrap(), 2.0);
        assert_eq!(identity(2).expected_sojourn(0), Err(MarketError::Absorbing(0)));
    }

    #[test]
    fn calibrated_stationary_distribution() {
        let pi = MarketModel::calibrated().stationary_distribution();
        for (p, e) in pi.iter().zip([0.25, 0.5, 0.25]) {
            assert!((p - e).abs() < 1e-12);
        }
    }
}
