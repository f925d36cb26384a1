//! Discrete portfolio choice `g(θ, s)`, its inverse, and the noisy investor.
//!
//! `g(θ, s)` is the exhaustive argmax of the mean-risk utility over the weight
//! grid. The robo-advisor can only learn from observed choices if `g(·, s)` is
//! injective on the risk-aversion grid; [`build_tables`] checks this and fails
//! loudly otherwise.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::MarketModel;
use crate::risk::{DispersionKind, MeanRiskEvaluator, RiskError};

/// Slack for lattice membership tests.
const LATTICE_TOLERANCE: f64 = 1e-9;
/// Utilities closer than this count as tied in the weight argmax.
pub const UTILITY_TIE_TOLERANCE: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChoiceError {
    #[error("invalid risk-aversion grid: {0}")]
    InvalidGrid(String),
    #[error("invalid weight step {0}: need 0 < step ≤ 1 with 1/step an integer")]
    InvalidWeightStep(f64),
    #[error("θ = {0} is not on the risk-aversion grid")]
    ThetaNotInGrid(f64),
    #[error("invalid state index {0}")]
    InvalidState(usize),
    #[error(
        "optimal portfolio map is not invertible in state {state}: θ = {theta_a} and θ = {theta_b} both choose w = {weight}"
    )]
    NotInvertible {
        state: usize,
        theta_a: f64,
        theta_b: f64,
        weight: f64,
    },
    #[error("investor profile has {found} risk aversions for {expected} states")]
    ProfileShape { expected: usize, found: usize },
    #[error("mistake radius {radius} must be a nonnegative multiple of ξ = {xi}")]
    InvalidMistakeRadius { radius: f64, xi: f64 },
    #[error("solicitation cost κ = {0} must be ≥ 0")]
    NegativeCost(f64),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Evenly spaced risk aversions `Θ = {θ_min, θ_min + ξ, …, θ_max}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridParams", into = "GridParams")]
pub struct RiskAversionGrid {
    theta_min: f64,
    theta_max: f64,
    xi: f64,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct GridParams {
    theta_min: f64,
    theta_max: f64,
    xi: f64,
}

impl TryFrom<GridParams> for RiskAversionGrid {
    type Error = ChoiceError;
    fn try_from(p: GridParams) -> Result<Self, Self::Error> {
        Self::new(p.theta_min, p.theta_max, p.xi)
    }
}

impl From<RiskAversionGrid> for GridParams {
    fn from(g: RiskAversionGrid) -> Self {
        Self {
            theta_min: g.theta_min,
            theta_max: g.theta_max,
            xi: g.xi,
        }
    }
}

impl RiskAversionGrid {
    pub fn new(theta_min: f64, theta_max: f64, xi: f64) -> Result<Self, ChoiceError> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(ChoiceError::InvalidGrid(format!("ξ = {xi} must be > 0")));
        }
        if !(theta_min > 0.0 && theta_max.is_finite() && theta_max > theta_min) {
            return Err(ChoiceError::InvalidGrid(format!(
                "need 0 < θ_min < θ_max, got [{theta_min}, {theta_max}]"
            )));
        }
        let steps = (theta_max - theta_min) / xi;
        if (steps - steps.round()).abs() > LATTICE_TOLERANCE {
            return Err(ChoiceError::InvalidGrid(format!(
                "ξ = {xi} does not divide the span {}",
                theta_max - theta_min
            )));
        }
        Ok(Self {
            theta_min,
            theta_max,
            xi,
            len: steps.round() as usize + 1,
        })
    }

    /// `Θ = {2.2, 2.3, …, 8.3}`.
    pub fn calibrated() -> Self {
        Self::new(2.2, 8.3, 0.1).expect("calibrated grid is valid")
    }

    pub fn theta_min(&self) -> f64 {
        self.theta_min
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    /// Resolution ξ.
    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, index: usize) -> f64 {
        debug_assert!(index < self.len);
        round12(self.theta_min + index as f64 * self.xi)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|k| self.value(k))
    }

    pub fn index_of(&self, theta: f64) -> Option<usize> {
        let k = ((theta - self.theta_min) / self.xi).round();
        if k < 0.0 || k >= self.len as f64 {
            return None;
        }
        let k = k as usize;
        ((self.value(k) - theta).abs() <= LATTICE_TOLERANCE).then_some(k)
    }

    /// `argmin_{x ∈ Θ} |x - theta|`, ties going to the larger grid point.
    pub fn snap(&self, theta: f64) -> usize {
        let pos = (theta - self.theta_min) / self.xi;
        if pos <= 0.0 {
            return 0;
        }
        let lo = (pos.floor() as usize).min(self.len - 1);
        if lo + 1 >= self.len {
            return self.len - 1;
        }
        let d_lo = theta - self.value(lo);
        let d_hi = self.value(lo + 1) - theta;
        if d_hi <= d_lo + LATTICE_TOLERANCE * self.xi {
            lo + 1
        } else {
            lo
        }
    }

    /// Index of the grid point nearest the middle of the range.
    pub fn center_index(&self) -> usize {
        (self.len - 1) / 2
    }
}

/// Risky-asset shares `{step, 2·step, …, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct WeightGrid {
    step: f64,
    len: usize,
}

impl TryFrom<f64> for WeightGrid {
    type Error = ChoiceError;
    fn try_from(step: f64) -> Result<Self, Self::Error> {
        Self::new(step)
    }
}

impl From<WeightGrid> for f64 {
    fn from(w: WeightGrid) -> f64 {
        w.step
    }
}

impl Default for WeightGrid {
    fn default() -> Self {
        Self::new(0.0001).expect("default weight step is valid")
    }
}

impl WeightGrid {
    pub fn new(step: f64) -> Result<Self, ChoiceError> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(ChoiceError::InvalidWeightStep(step));
        }
        let n = 1.0 / step;
        if (n - n.round()).abs() > LATTICE_TOLERANCE * n.max(1.0) {
            return Err(ChoiceError::InvalidWeightStep(step));
        }
        Ok(Self {
            step,
            len: n.round() as usize,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weight(&self, index: usize) -> f64 {
        debug_assert!(index < self.len);
        if index + 1 == self.len {
            1.0
        } else {
            round12((index + 1) as f64 * self.step)
        }
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|k| self.weight(k))
    }

    pub fn contains(&self, w: f64) -> bool {
        let k = (w / self.step).round();
        k >= 1.0 && k <= self.len as f64 && (self.weight(k as usize - 1) - w).abs() <= 1e-12
    }
}

/// Per-state lookup between grid risk aversions and optimal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceTables {
    grid: RiskAversionGrid,
    weights: WeightGrid,
    /// `[state][theta index]` → weight index
    forward: Vec<Vec<usize>>,
    /// `[state]` → `(weight, theta index)` sorted by weight
    inverse: Vec<Vec<(f64, usize)>>,
}

/// Tabulates `g` for every state and every `θ ∈ Θ`.
pub fn build_tables(
    model: &MarketModel,
    grid: &RiskAversionGrid,
    weights: &WeightGrid,
    kind: DispersionKind,
) -> Result<ChoiceTables, ChoiceError> {
    let evaluator = MeanRiskEvaluator::new(model, kind)?;
    build_tables_with(&evaluator, grid, weights)
}

/// [`build_tables`] with a prebuilt evaluator.
pub fn build_tables_with(
    evaluator: &MeanRiskEvaluator,
    grid: &RiskAversionGrid,
    weights: &WeightGrid,
) -> Result<ChoiceTables, ChoiceError> {
    let n = evaluator.num_states();
    let ws: Vec<f64> = weights.weights().collect();
    let mut forward = Vec::with_capacity(n);
    let mut inverse = Vec::with_capacity(n);
    for s in 0..n {
        let row: Vec<usize> = grid
            .values()
            .map(|theta| argmax_weight(evaluator, theta, s, &ws))
            .collect();
        let mut inv: Vec<(f64, usize)> = row
            .iter()
            .enumerate()
            .map(|(t, &wi)| (ws[wi], t))
            .collect();
        inv.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some(pair) = inv.windows(2).find(|p| p[0].0 == p[1].0) {
            return Err(ChoiceError::NotInvertible {
                state: s,
                theta_a: grid.value(pair[0].1),
                theta_b: grid.value(pair[1].1),
                weight: pair[0].0,
            });
        }
        forward.push(row);
        inverse.push(inv);
    }
    Ok(ChoiceTables {
        grid: *grid,
        weights: *weights,
        forward,
        inverse,
    })
}

/// Index of the utility-maximizing weight; ties go to the lower weight.
pub(crate) fn argmax_weight(evaluator: &MeanRiskEvaluator, theta: f64, s: usize, weights: &[f64]) -> usize {
    let mut best = 0;
    let mut best_u = f64::NEG_INFINITY;
    for (k, &w) in weights.iter().enumerate() {
        let u = evaluator.utility(theta, s, w);
        if u > best_u + UTILITY_TIE_TOLERANCE {
            best_u = u;
            best = k;
        }
    }
    best
}

impl ChoiceTables {
    pub fn grid(&self) -> &RiskAversionGrid {
        &self.grid
    }

    pub fn weights(&self) -> &WeightGrid {
        &self.weights
    }

    pub fn num_states(&self) -> usize {
        self.forward.len()
    }

    fn check_state(&self, s: usize) -> Result<(), ChoiceError> {
        if s < self.num_states() {
            Ok(())
        } else {
            Err(ChoiceError::InvalidState(s))
        }
    }

    /// Optimal weight for `θ ∈ Θ` in state `s`.
    pub fn g(&self, theta: f64, s: usize) -> Result<f64, ChoiceError> {
        self.check_state(s)?;
        let t = self
            .grid
            .index_of(theta)
            .ok_or(ChoiceError::ThetaNotInGrid(theta))?;
        Ok(self.g_index(t, s))
    }

    /// Optimal weight for the grid point with index `theta_index`.
    pub fn g_index(&self, theta_index: usize, s: usize) -> f64 {
        self.weights.weight(self.forward[s][theta_index])
    }

    /// Risk aversion implied by weight `w` in state `s`. Weights absent from
    /// the table map to the θ of the nearest tabulated weight, ties going to
    /// the larger θ.
    pub fn g_inverse(&self, w: f64, s: usize) -> f64 {
        self.grid.value(self.g_inverse_index(w, s))
    }

    pub fn g_inverse_index(&self, w: f64, s: usize) -> usize {
        let inv = &self.inverse[s];
        let pos = inv.partition_point(|&(tw, _)| tw < w);
        if pos == 0 {
            return inv[0].1;
        }
        if pos == inv.len() {
            return inv[pos - 1].1;
        }
        let (w_lo, t_lo) = inv[pos - 1];
        let (w_hi, t_hi) = inv[pos];
        if w_hi == w {
            return t_hi;
        }
        let d_lo = w - w_lo;
        let d_hi = w_hi - w;
        if (d_lo - d_hi).abs() <= 1e-12 {
            t_lo.max(t_hi)
        } else if d_lo < d_hi {
            t_lo
        } else {
            t_hi
        }
    }

    /// `(state, theta, weight)` rows in state-major order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (0..self.num_states()).flat_map(move |s| {
            (0..self.grid.len()).map(move |t| (s, self.grid.value(t), self.g_index(t, s)))
        })
    }
}

/// The investor's true preferences and behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestorProfile {
    /// True risk aversion per state, each on the grid.
    pub theta_true: Vec<f64>,
    /// Mistake radius `r`, in absolute risk-aversion units.
    pub mistake_radius: f64,
    /// Per-solicitation cost κ, in return units.
    pub cost: f64,
}

/// Support of the mistake distribution in state `s`, in grid steps: the
/// uniform distribution over `center - half_width ..= center + half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MistakeSupport {
    pub center: usize,
    pub half_width: usize,
}

impl MistakeSupport {
    pub fn len(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> {
        (self.center - self.half_width)..=(self.center + self.half_width)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.half_width == 0 {
            return self.center;
        }
        self.center - self.half_width + rng.random_range(0..self.len())
    }

    /// Variance of the discrete uniform on the support: `((n² - 1)/12) ξ²`.
    pub fn variance(&self, xi: f64) -> f64 {
        let n = self.len() as f64;
        (n * n - 1.0) / 12.0 * xi * xi
    }

    /// Max minus min of the support.
    pub fn range(&self, xi: f64) -> f64 {
        2.0 * self.half_width as f64 * xi
    }
}

impl InvestorProfile {
    pub fn validate(&self, grid: &RiskAversionGrid, num_states: usize) -> Result<(), ChoiceError> {
        if self.theta_true.len() != num_states {
            return Err(ChoiceError::ProfileShape {
                expected: num_states,
                found: self.theta_true.len(),
            });
        }
        for &theta in &self.theta_true {
            grid.index_of(theta).ok_or(ChoiceError::ThetaNotInGrid(theta))?;
        }
        radius_steps(self.mistake_radius, grid)?;
        if !(self.cost >= 0.0) {
            return Err(ChoiceError::NegativeCost(self.cost));
        }
        Ok(())
    }

    /// Truncated support in state `s`: the radius shrinks symmetrically to
    /// `min(r, θ_s - θ_min, θ_max - θ_s)`, which keeps the mean at `θ_s`.
    pub fn mistake_support(
        &self,
        grid: &RiskAversionGrid,
        s: usize,
    ) -> Result<MistakeSupport, ChoiceError> {
        let theta = *self
            .theta_true
            .get(s)
            .ok_or(ChoiceError::InvalidState(s))?;
        let center = grid
            .index_of(theta)
            .ok_or(ChoiceError::ThetaNotInGrid(theta))?;
        let m = radius_steps(self.mistake_radius, grid)?;
        let half_width = m.min(center).min(grid.len() - 1 - center);
        Ok(MistakeSupport { center, half_width })
    }
}

fn radius_steps(radius: f64, grid: &RiskAversionGrid) -> Result<usize, ChoiceError> {
    let steps = radius / grid.xi();
    if !(radius >= 0.0) || (steps - steps.round()).abs() > LATTICE_TOLERANCE {
        return Err(ChoiceError::InvalidMistakeRadius {
            radius,
            xi: grid.xi(),
        });
    }
    Ok(steps.round() as usize)
}

/// Risk aversion θ̃ the investor acts on when asked in state `s`.
pub fn draw_type<R: Rng + ?Sized>(
    profile: &InvestorProfile,
    grid: &RiskAversionGrid,
    s: usize,
    rng: &mut R,
) -> Result<f64, ChoiceError> {
    let support = profile.mistake_support(grid, s)?;
    Ok(grid.value(support.draw(rng)))
}

/// Weight the investor picks when asked: `g(θ̃, s)`.
pub fn investor_act<R: Rng + ?Sized>(
    profile: &InvestorProfile,
    tables: &ChoiceTables,
    s: usize,
    rng: &mut R,
) -> Result<f64, ChoiceError> {
    let support = profile.mistake_support(tables.grid(), s)?;
    Ok(tables.g_index(support.draw(rng), s))
}

/// Variance σ_s² of the mistake distribution.
pub fn mistake_variance(
    profile: &InvestorProfile,
    grid: &RiskAversionGrid,
    s: usize,
) -> Result<f64, ChoiceError> {
    Ok(profile.mistake_support(grid, s)?.variance(grid.xi()))
}

/// Range R_s of the mistake support.
pub fn mistake_range(
    profile: &InvestorProfile,
    grid: &RiskAversionGrid,
    s: usize,
) -> Result<f64, ChoiceError> {
    Ok(profile.mistake_support(grid, s)?.range(grid.xi()))
}
