//! The explore-then-exploit robo-advisor.
//!
//! In each state the advisor asks the investor for a portfolio until it has
//! `C(s)` observations, inverting each choice into a risk aversion and keeping
//! a running mean. Afterwards it invests `g(θ̄, s)` where `θ̄` is the running
//! mean snapped to the grid.

use thiserror::Error;

use crate::choice::ChoiceTables;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdvisorError {
    #[error("solicitation budget for state {state} must be ≥ 1")]
    ZeroBudget { state: usize },
    #[error("advisor state has {found} entries for {expected} states")]
    Shape { expected: usize, found: usize },
    #[error("state {state}: {reason}")]
    Inconsistent { state: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdvisorAction {
    Ask,
    Invest(f64),
}

/// Per-state solicitation counts, running estimates and budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvisorState {
    counts: Vec<u32>,
    estimates: Vec<Option<f64>>,
    budgets: Vec<u32>,
}

impl AdvisorState {
    pub fn new(budgets: Vec<u32>) -> Result<Self, AdvisorError> {
        if let Some(state) = budgets.iter().position(|&c| c == 0) {
            return Err(AdvisorError::ZeroBudget { state });
        }
        let n = budgets.len();
        Ok(Self {
            counts: vec![0; n],
            estimates: vec![None; n],
            budgets,
        })
    }

    /// The same budget `c` in each of `num_states` states.
    pub fn uniform(num_states: usize, c: u32) -> Result<Self, AdvisorError> {
        Self::new(vec![c; num_states])
    }

    /// Rebuilds a mid-run state, e.g. to start from a chosen estimate.
    pub fn from_parts(
        budgets: Vec<u32>,
        counts: Vec<u32>,
        estimates: Vec<Option<f64>>,
    ) -> Result<Self, AdvisorError> {
        let mut state = Self::new(budgets)?;
        let n = state.budgets.len();
        for found in [counts.len(), estimates.len()] {
            if found != n {
                return Err(AdvisorError::Shape { expected: n, found });
            }
        }
        for s in 0..n {
            if counts[s] > 0 && estimates[s].is_none() {
                return Err(AdvisorError::Inconsistent {
                    state: s,
                    reason: format!("{} observations but no estimate", counts[s]),
                });
            }
            if counts[s] == 0 && estimates[s].is_some() {
                return Err(AdvisorError::Inconsistent {
                    state: s,
                    reason: "estimate without observations".into(),
                });
            }
        }
        state.counts = counts;
        state.estimates = estimates;
        Ok(state)
    }

    pub fn num_states(&self) -> usize {
        self.budgets.len()
    }

    pub fn count(&self, s: usize) -> u32 {
        self.counts[s]
    }

    pub fn estimate(&self, s: usize) -> Option<f64> {
        self.estimates[s]
    }

    pub fn budget(&self, s: usize) -> u32 {
        self.budgets[s]
    }

    pub fn exhausted(&self, s: usize) -> bool {
        self.counts[s] >= self.budgets[s]
    }

    pub fn all_exhausted(&self) -> bool {
        (0..self.num_states()).all(|s| self.exhausted(s))
    }

    pub fn decide(&self, s: usize, tables: &ChoiceTables) -> AdvisorAction {
        if !self.exhausted(s) {
            return AdvisorAction::Ask;
        }
        let theta_hat = self.estimates[s].expect("exploiting requires at least one observation");
        let theta_bar = tables.grid().snap(theta_hat);
        AdvisorAction::Invest(tables.g_index(theta_bar, s))
    }

    /// Records the investor's weight `a_h` chosen in state `s`; returns the
    /// inferred risk aversion.
    pub fn observe(&mut self, s: usize, a_h: f64, tables: &ChoiceTables) -> f64 {
        let inferred = tables.g_inverse(a_h, s);
        self.record(s, inferred);
        inferred
    }

    /// Incremental mean update with an already inferred risk aversion.
    pub fn record(&mut self, s: usize, inferred: f64) {
        self.counts[s] += 1;
        let n = self.counts[s] as f64;
        self.estimates[s] = Some(match self.estimates[s] {
            None => inferred,
            Some(prev) => prev + (inferred - prev) / n,
        });
    }
}
