//! Ground-truth values for a known investor: finite-horizon backward
//! recursion, discounted value iteration, the omniscient policy and `r_max`.

use thiserror::Error;

use crate::choice::{ChoiceError, ChoiceTables, RiskAversionGrid, WeightGrid};
use crate::market::MarketModel;
use crate::risk::MeanRiskEvaluator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("discount factor γ = {0} must lie in [0, 1)")]
    InvalidDiscount(f64),
    #[error("tolerance {0} must be > 0")]
    InvalidTolerance(f64),
    #[error("{found} risk aversions given for {expected} states")]
    Shape { expected: usize, found: usize },
    #[error(transparent)]
    Choice(#[from] ChoiceError),
}

/// Immediate rewards `r(s, a, θ_s)` for every state and action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionRewards {
    ask: Vec<f64>,
    /// `[state][weight index]`
    invest: Vec<Vec<f64>>,
}

impl ActionRewards {
    /// Ask earns `u(θ_s, s, g(θ_s, s)) - κ`; investing `w` earns `u(θ_s, s, w)`.
    pub fn new(
        evaluator: &MeanRiskEvaluator,
        tables: &ChoiceTables,
        theta: &[f64],
        kappa: f64,
    ) -> Result<Self, PlannerError> {
        let n = tables.num_states();
        if theta.len() != n {
            return Err(PlannerError::Shape {
                expected: n,
                found: theta.len(),
            });
        }
        let mut ask = Vec::with_capacity(n);
        let mut invest = Vec::with_capacity(n);
        for (s, &th) in theta.iter().enumerate() {
            let w_h = tables.g(th, s)?;
            ask.push(evaluator.utility(th, s, w_h) - kappa);
            invest.push(
                tables
                    .weights()
                    .weights()
                    .map(|w| evaluator.utility(th, s, w))
                    .collect(),
            );
        }
        Ok(Self { ask, invest })
    }

    pub fn num_states(&self) -> usize {
        self.ask.len()
    }

    pub fn ask(&self, s: usize) -> f64 {
        self.ask[s]
    }

    pub fn invest(&self, s: usize) -> &[f64] {
        &self.invest[s]
    }

    /// `max_a r(s, a) + continuation`, scanning every action.
    fn best_q(&self, s: usize, continuation: f64) -> f64 {
        self.invest[s]
            .iter()
            .map(|r| r + continuation)
            .fold(self.ask[s] + continuation, f64::max)
    }

    /// `ρ*(s) = max_w u(θ_s, s, w)`.
    pub fn myopic_optimal(&self) -> Vec<f64> {
        self.invest
            .iter()
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Finite(usize),
    Discounted(f64),
}

/// Optimal values. Finite horizons keep every stage `V*_0, …, V*_τ`; the
/// discounted case keeps only the converged iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub horizon: Horizon,
    stages: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl ValueTable {
    /// Values at the full horizon (or the discounted fixed point).
    pub fn values(&self) -> &[f64] {
        self.stages.last().expect("at least one stage")
    }

    /// `V*_t` for `t` steps to go. Finite horizons only.
    pub fn stage(&self, t: usize) -> &[f64] {
        &self.stages[t]
    }
}

/// Backward recursion `V_t(s) = max_a r(s, a) + Σ P(s'|s) V_{t-1}(s')`.
pub fn bellman_finite(model: &MarketModel, rewards: &ActionRewards, tau: usize) -> ValueTable {
    let n = model.num_states();
    let mut stages = Vec::with_capacity(tau + 1);
    stages.push(vec![0.0; n]);
    for _ in 0..tau {
        let cont = model.expect_next(stages.last().unwrap());
        stages.push((0..n).map(|s| rewards.best_q(s, cont[s])).collect());
    }
    ValueTable {
        horizon: Horizon::Finite(tau),
        stages,
        iterations: tau,
    }
}

/// Value iteration for `V(s) = max_a r(s, a) + γ Σ P(s'|s) V(s')`, stopped
/// once successive iterates differ by at most `tol (1 - γ) / (2γ)`, which
/// bounds the error of the returned iterate by `tol`.
pub fn bellman_discounted(
    model: &MarketModel,
    rewards: &ActionRewards,
    gamma: f64,
    tol: f64,
) -> Result<ValueTable, PlannerError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(PlannerError::InvalidDiscount(gamma));
    }
    if !(tol > 0.0) {
        return Err(PlannerError::InvalidTolerance(tol));
    }
    let n = model.num_states();
    let threshold = if gamma == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - gamma) / (2.0 * gamma)
    };
    let mut v = vec![0.0; n];
    let mut iterations = 0;
    loop {
        let cont = model.expect_next(&v);
        let next: Vec<f64> = (0..n).map(|s| rewards.best_q(s, gamma * cont[s])).collect();
        iterations += 1;
        let diff = sup_distance(&next, &v);
        v = next;
        if diff <= threshold {
            break;
        }
    }
    Ok(ValueTable {
        horizon: Horizon::Discounted(gamma),
        stages: vec![v],
        iterations,
    })
}

/// Exact `τ`-step value of a stationary policy earning `reward[s]` in `s`.
pub fn evaluate_policy(model: &MarketModel, reward: &[f64], tau: usize) -> Vec<f64> {
    let mut v = vec![0.0; model.num_states()];
    for _ in 0..tau {
        let cont = model.expect_next(&v);
        v = reward.iter().zip(&cont).map(|(r, c)| r + c).collect();
    }
    v
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// The omniscient advisor's portfolio: `g(θ_s, s)`.
pub fn omniscient_action(tables: &ChoiceTables, theta: &[f64], s: usize) -> Result<f64, PlannerError> {
    let th = *theta.get(s).ok_or(ChoiceError::InvalidState(s))?;
    Ok(tables.g(th, s)?)
}

/// `max |r(s, a, θ)|` over states, every action including ask, and `θ ∈ Θ`.
/// The ask branch uses the investor's optimal weight, found by the same scan.
pub fn r_max(
    evaluator: &MeanRiskEvaluator,
    grid: &RiskAversionGrid,
    weights: &WeightGrid,
    kappa: f64,
) -> f64 {
    let weights: Vec<f64> = weights.weights().collect();
    let mut best: f64 = 0.0;
    for s in 0..evaluator.num_states() {
        for theta in grid.values() {
            let mut top = f64::NEG_INFINITY;
            for &w in &weights {
                let u = evaluator.utility(theta, s, w);
                top = top.max(u);
                best = best.max(u.abs());
            }
            best = best.max((top - kappa).abs());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::build_tables;
    use crate::risk::DispersionKind;
    use approx::assert_abs_diff_eq;

    fn setup(model: &MarketModel) -> (MeanRiskEvaluator, ChoiceTables) {
        let ev = MeanRiskEvaluator::new(model, DispersionKind::Variance).unwrap();
        let t = build_tables(
            model,
            &RiskAversionGrid::calibrated(),
            &WeightGrid::default(),
            DispersionKind::Variance,
        )
        .unwrap();
        (ev, t)
    }

    #[test]
    fn short_horizons() {
        let m = MarketModel::calibrated();
        let (ev, t) = setup(&m);
        let r = ActionRewards::new(&ev, &t, &[4.0; 3], 0.0008).unwrap();
        let v = bellman_finite(&m, &r, 1);
        assert_eq!(v.stage(0), &[0.0; 3]);
        assert_eq!(v.values(), r.myopic_optimal().as_slice());
        let v0 = bellman_finite(&m, &r, 0);
        assert_eq!(v0.values(), &[0.0; 3]);
    }

    #[test]
    fn myopic_optimum_is_the_choice_table() {
        let m = MarketModel::calibrated();
        let (ev, t) = setup(&m);
        let theta = [4.0, 4.0, 4.0];
        let r = ActionRewards::new(&ev, &t, &theta, 0.0008).unwrap();
        let rho = r.myopic_optimal();
        for s in 0..3 {
            let w = omniscient_action(&t, &theta, s).unwrap();
            assert_eq!(w, t.g(4.0, s).unwrap());
            assert_eq!(rho[s], ev.utility(4.0, s, w));
            assert!(r.ask(s) < rho[s]);
        }
        assert_eq!(omniscient_action(&t, &theta, 1).unwrap(), 0.5273);
    }

    #[test]
    fn following_omniscient_attains_the_optimum() {
        let m = MarketModel::calibrated();
        let (ev, t) = setup(&m);
        let theta = [2.9, 5.0, 7.7];
        let r = ActionRewards::new(&ev, &t, &theta, 0.0008).unwrap();
        let reward: Vec<f64> = (0..3)
            .map(|s| ev.utility(theta[s], s, omniscient_action(&t, &theta, s).unwrap()))
            .collect();
        for tau in [1, 12, 60] {
            let exact = bellman_finite(&m, &r, tau);
            let v = evaluate_policy(&m, &reward, tau);
            assert!(sup_distance(&v, exact.values()) <= 1e-12);
        }
    }

    #[test]
    fn discounted_special_cases() {
        let m = MarketModel::calibrated();
        let (ev, t) = setup(&m);
        let r = ActionRewards::new(&ev, &t, &[3.0, 4.0, 5.0], 0.0008).unwrap();
        let rho = r.myopic_optimal();
        let v = bellman_discounted(&m, &r, 0.0, 1e-9).unwrap();
        assert_eq!(v.values(), rho.as_slice());

        let id = MarketModel::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            m.risk_free_rate,
            m.risky_mean.clone(),
            m.risky_std.clone(),
        )
        .unwrap();
        let tol = 1e-9;
        let v = bellman_discounted(&id, &r, 0.9, tol).unwrap();
        for s in 0..3 {
            assert_abs_diff_eq!(v.values()[s], rho[s] / 0.1, epsilon = tol);
        }
        assert_eq!(
            bellman_discounted(&m, &r, 1.0, tol),
            Err(PlannerError::InvalidDiscount(1.0))
        );
        assert!(bellman_discounted(&m, &r, 0.5, 0.0).is_err());
    }

    #[test]
    fn discounted_residual_is_within_tolerance() {
        let m = MarketModel::calibrated();
        let (ev, t) = setup(&m);
        let r = ActionRewards::new(&ev, &t, &[3.0, 4.0, 5.0], 0.0008).unwrap();
        let tol = 1e-8;
        let gamma = 0.99;
        let v = bellman_discounted(&m, &r, gamma, tol).unwrap();
        let cont = m.expect_next(v.values());
        let tv: Vec<f64> = (0..3).map(|s| r.best_q(s, gamma * cont[s])).collect();
        assert!(sup_distance(&tv, v.values()) <= tol);
    }

    #[test]
    fn calibrated_r_max() {
        let m = MarketModel::calibrated();
        let (ev, t) = setup(&m);
        let grid = RiskAversionGrid::calibrated();
        let rm = r_max(&ev, &grid, t.weights(), 0.0008);
        // the largest magnitude is the all-risky loss of the most risk-averse
        // investor in the high state: 0.0125 - 8.3 * 0.05²
        let peak = 8.3 * 0.0025 - 0.0125;
        let best_gain = 0.002 + 0.0105f64.powi(2) / (4.0 * 2.2 * 0.0025);
        assert!(best_gain < peak);
        assert!((rm - peak).abs() < 1e-12, "{rm} vs {peak}");
        assert!(rm > 0.0 && rm <= 0.0125);
        assert!(r_max(&ev, &grid, t.weights(), 0.1) >= rm);
    }

    #[test]
    fn riskless_single_state_r_max() {
        let m = MarketModel::new(vec!["only".into()], vec![vec![1.0]], 0.002, vec![0.002], vec![0.001])
            .unwrap();
        let ev = MeanRiskEvaluator::new(&m, DispersionKind::Variance).unwrap();
        let rm = r_max(&ev, &RiskAversionGrid::calibrated(), &WeightGrid::default(), 0.0);
        assert_abs_diff_eq!(rm, 0.002, epsilon = 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let m = MarketModel::calibrated();
        let (ev, t) = setup(&m);
        assert!(matches!(
            ActionRewards::new(&ev, &t, &[4.0; 2], 0.0),
            Err(PlannerError::Shape { .. })
        ));
        assert!(matches!(
            ActionRewards::new(&ev, &t, &[4.0, 4.05, 4.0], 0.0),
            Err(PlannerError::Choice(ChoiceError::ThetaNotInGrid(_)))
        ));
    }
}
