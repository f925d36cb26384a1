//! Monte Carlo experiments over the market chain.
//!
//! Every trial draws one scenario (true risk aversions, the state path and
//! the investor's mistake draw in each month) from its own stream
//! `seed ^ trial`. All policies in an experiment are played against the same
//! scenario, so comparisons between them share market paths and mistakes.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::advisor::{AdvisorAction, AdvisorError, AdvisorState};
use crate::choice::{
    build_tables_with, ChoiceError, ChoiceTables, InvestorProfile, MistakeSupport,
    RiskAversionGrid, WeightGrid,
};
use crate::market::MarketModel;
use crate::risk::{DispersionKind, MeanRiskEvaluator, RiskError};

/// Critical value of the two-sided 95% normal interval.
pub const Z95: f64 = 1.96;
/// Lattice the investor's types live on during a resolution sweep.
pub const XI_SWEEP_INVESTOR_STEP: f64 = 0.01;
/// Horizon of the solicitation-cost sweep.
pub const KAPPA_SWEEP_MONTHS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Choice(#[from] ChoiceError),
    #[error(transparent)]
    Advisor(#[from] AdvisorError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThetaMode {
    /// The same risk aversion per state in every trial.
    Fixed(Vec<f64>),
    /// Independently uniform over the grid per state and trial.
    UniformGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvestorTemplate {
    pub theta: ThetaMode,
    pub mistake_radius: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialState {
    #[default]
    Uniform,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum YearlyAggregation {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: MarketModel,
    /// Lattice of investor types and mistakes.
    pub grid: RiskAversionGrid,
    /// Lattice the advisor estimates on; `None` means `grid`.
    pub advisor_grid: Option<RiskAversionGrid>,
    pub weights: WeightGrid,
    pub kind: DispersionKind,
    pub investor: InvestorTemplate,
    pub budget: u32,
    pub months: usize,
    pub trials: usize,
    pub seed: u64,
    pub initial_state: InitialState,
    pub yearly: YearlyAggregation,
}

impl SimConfig {
    pub fn calibrated() -> Self {
        Self {
            model: MarketModel::calibrated(),
            grid: RiskAversionGrid::calibrated(),
            advisor_grid: None,
            weights: WeightGrid::default(),
            kind: DispersionKind::Variance,
            investor: InvestorTemplate {
                theta: ThetaMode::UniformGrid,
                mistake_radius: 3.0,
                cost: 0.0008,
            },
            budget: 5,
            months: 120,
            trials: 10_000,
            seed: 42,
            initial_state: InitialState::Uniform,
            yearly: YearlyAggregation::Sum,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.model
            .validate()
            .map_err(|v| SimError::Invalid(format!("market: {v}")))?;
        self.kind.validate()?;
        if self.months == 0 {
            return Err(SimError::Invalid("months must be ≥ 1".into()));
        }
        if self.trials == 0 {
            return Err(SimError::Invalid("trials must be ≥ 1".into()));
        }
        if self.budget == 0 {
            return Err(SimError::Advisor(AdvisorError::ZeroBudget { state: 0 }));
        }
        if let InitialState::Fixed(s) = self.initial_state {
            if s >= self.model.num_states() {
                return Err(SimError::Invalid(format!("initial state {s} out of range")));
            }
        }
        let n = self.model.num_states();
        let probe = match &self.investor.theta {
            ThetaMode::Fixed(theta) => theta.clone(),
            ThetaMode::UniformGrid => vec![self.grid.theta_min(); n],
        };
        InvestorProfile {
            theta_true: probe,
            mistake_radius: self.investor.mistake_radius,
            cost: self.investor.cost,
        }
        .validate(&self.grid, n)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Omniscient,
    Robo(u32),
    InvestorOnly { with_mistakes: bool },
}

impl PolicyKind {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::Omniscient => "omniscient",
            PolicyKind::Robo(_) => "robo",
            PolicyKind::InvestorOnly { with_mistakes: true } => "investor_only",
            PolicyKind::InvestorOnly { with_mistakes: false } => "investor_only_exact",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// The standard comparison: omniscient, robo with budget `c`, investor-only.
pub fn standard_policies(c: u32) -> Vec<PolicyKind> {
    vec![
        PolicyKind::Omniscient,
        PolicyKind::Robo(c),
        PolicyKind::InvestorOnly { with_mistakes: true },
    ]
}

/// Random inputs of one trial, shared by every policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// True risk aversion per state (investor grid index).
    pub theta_index: Vec<usize>,
    pub theta: Vec<f64>,
    /// State in each month.
    pub states: Vec<usize>,
    /// Investor grid index of the risk aversion the investor would act on
    /// if asked in that month.
    pub tilde: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    Ask,
    Invest,
    Investor,
}

impl ActionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::Ask => "ask",
            ActionKind::Invest => "invest",
            ActionKind::Investor => "investor",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonthRecord {
    pub t: usize,
    pub state: usize,
    pub action: ActionKind,
    /// Weight actually held this month.
    pub weight: f64,
    /// Risk aversion the investor acted on, when the investor chose.
    pub theta_tilde: Option<f64>,
    /// Advisor estimate after this month.
    pub theta_hat: Option<f64>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrace {
    pub policy: PolicyKind,
    pub theta_true: Vec<f64>,
    pub months: Vec<MonthRecord>,
    /// Advisor estimates at the end (robo only).
    pub final_estimates: Vec<Option<f64>>,
}

impl TrialTrace {
    pub fn total_reward(&self) -> f64 {
        self.months.iter().map(|m| m.reward).sum()
    }
}

/// Precomputed models and tables for a config.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    evaluator: MeanRiskEvaluator,
    tables: ChoiceTables,
    advisor_tables: Option<ChoiceTables>,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let evaluator = MeanRiskEvaluator::new(&config.model, config.kind)?;
        let tables = build_tables_with(&evaluator, &config.grid, &config.weights)?;
        let advisor_tables = match config.advisor_grid {
            Some(g) if g != config.grid => Some(build_tables_with(&evaluator, &g, &config.weights)?),
            _ => None,
        };
        Ok(Self {
            config,
            evaluator,
            tables,
            advisor_tables,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn evaluator(&self) -> &MeanRiskEvaluator {
        &self.evaluator
    }

    /// The investor's choice tables.
    pub fn tables(&self) -> &ChoiceTables {
        &self.tables
    }

    pub fn advisor_tables(&self) -> &ChoiceTables {
        self.advisor_tables.as_ref().unwrap_or(&self.tables)
    }

    pub fn trial_rng(&self, trial: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.config.seed ^ trial as u64)
    }

    pub fn scenario(&self, trial: usize) -> Scenario {
        self.draw_scenario(&mut self.trial_rng(trial))
    }

    pub fn draw_scenario<R: Rng + ?Sized>(&self, rng: &mut R) -> Scenario {
        let cfg = &self.config;
        let grid = &cfg.grid;
        let n = cfg.model.num_states();
        let theta_index: Vec<usize> = match &cfg.investor.theta {
            ThetaMode::Fixed(theta) => theta
                .iter()
                .map(|&t| grid.index_of(t).expect("validated"))
                .collect(),
            ThetaMode::UniformGrid => (0..n).map(|_| rng.random_range(0..grid.len())).collect(),
        };
        let theta: Vec<f64> = theta_index.iter().map(|&k| grid.value(k)).collect();
        let profile = InvestorProfile {
            theta_true: theta.clone(),
            mistake_radius: cfg.investor.mistake_radius,
            cost: cfg.investor.cost,
        };
        let supports: Vec<MistakeSupport> = (0..n)
            .map(|s| profile.mistake_support(grid, s).expect("validated"))
            .collect();
        let mut s = match cfg.initial_state {
            InitialState::Uniform => rng.random_range(0..n),
            InitialState::Fixed(s) => s,
        };
        let mut states = Vec::with_capacity(cfg.months);
        let mut tilde = Vec::with_capacity(cfg.months);
        for t in 0..cfg.months {
            if t > 0 {
                s = cfg.model.sample_next_state(s, rng).expect("valid state");
            }
            states.push(s);
            tilde.push(supports[s].draw(rng));
        }
        Scenario {
            theta_index,
            theta,
            states,
            tilde,
        }
    }

    /// Plays `policy` through `scenario`, reporting each month to `sink`.
    /// Returns the advisor's final estimates for the robo policy.
    pub fn play<F: FnMut(MonthRecord)>(
        &self,
        scenario: &Scenario,
        policy: PolicyKind,
        mut sink: F,
    ) -> Vec<Option<f64>> {
        let kappa = self.config.investor.cost;
        let tables = &self.tables;
        let advisor_tables = self.advisor_tables();
        let n = self.config.model.num_states();
        let u = |s: usize, w: f64| self.evaluator.utility(scenario.theta[s], s, w);
        let mut advisor = match policy {
            PolicyKind::Robo(c) => Some(AdvisorState::uniform(n, c).expect("budget ≥ 1")),
            _ => None,
        };
        for (t, (&s, &k_tilde)) in scenario.states.iter().zip(&scenario.tilde).enumerate() {
            let record = match policy {
                PolicyKind::Omniscient => {
                    let w = tables.g_index(scenario.theta_index[s], s);
                    MonthRecord {
                        t,
                        state: s,
                        action: ActionKind::Invest,
                        weight: w,
                        theta_tilde: None,
                        theta_hat: None,
                        reward: u(s, w),
                    }
                }
                PolicyKind::InvestorOnly { with_mistakes } => {
                    let k = if with_mistakes { k_tilde } else { scenario.theta_index[s] };
                    let w = tables.g_index(k, s);
                    MonthRecord {
                        t,
                        state: s,
                        action: ActionKind::Investor,
                        weight: w,
                        theta_tilde: Some(tables.grid().value(k)),
                        theta_hat: None,
                        reward: u(s, w) - kappa,
                    }
                }
                PolicyKind::Robo(_) => {
                    let adv = advisor.as_mut().expect("robo has an advisor");
                    match adv.decide(s, advisor_tables) {
                        AdvisorAction::Ask => {
                            let a_h = tables.g_index(k_tilde, s);
                            adv.observe(s, a_h, advisor_tables);
                            MonthRecord {
                                t,
                                state: s,
                                action: ActionKind::Ask,
                                weight: a_h,
                                theta_tilde: Some(tables.grid().value(k_tilde)),
                                theta_hat: adv.estimate(s),
                                reward: u(s, a_h) - kappa,
                            }
                        }
                        AdvisorAction::Invest(w) => MonthRecord {
                            t,
                            state: s,
                            action: ActionKind::Invest,
                            weight: w,
                            theta_tilde: None,
                            theta_hat: adv.estimate(s),
                            reward: u(s, w),
                        },
                    }
                }
            };
            sink(record);
        }
        advisor
            .map(|a| (0..n).map(|s| a.estimate(s)).collect())
            .unwrap_or_default()
    }

    pub fn run_trial(&self, policy: PolicyKind, trial: usize) -> TrialTrace {
        let scenario = self.scenario(trial);
        self.trace(&scenario, policy)
    }

    pub fn trace(&self, scenario: &Scenario, policy: PolicyKind) -> TrialTrace {
        let mut months = Vec::with_capacity(scenario.states.len());
        let final_estimates = self.play(scenario, policy, |m| months.push(m));
        TrialTrace {
            policy,
            theta_true: scenario.theta.clone(),
            months,
            final_estimates,
        }
    }

    /// Monthly rewards only.
    pub fn rewards(&self, scenario: &Scenario, policy: PolicyKind) -> Vec<f64> {
        let mut out = Vec::with_capacity(scenario.states.len());
        self.play(scenario, policy, |m| out.push(m.reward));
        out
    }

    pub fn num_years(&self) -> usize {
        self.config.months / 12
    }

    fn yearly(&self, monthly: &[f64]) -> Vec<f64> {
        monthly
            .chunks_exact(12)
            .map(|c| {
                let sum: f64 = c.iter().sum();
                match self.config.yearly {
                    YearlyAggregation::Sum => sum,
                    YearlyAggregation::Mean => sum / 12.0,
                }
            })
            .collect()
    }

    pub fn run_experiment(&self, policies: &[PolicyKind]) -> ExperimentResult {
        let per_trial: Vec<(Vec<Vec<f64>>, Vec<f64>)> = (0..self.config.trials)
            .into_par_iter()
            .map(|i| {
                let scenario = self.scenario(i);
                policies
                    .iter()
                    .map(|&p| {
                        let r = self.rewards(&scenario, p);
                        (self.yearly(&r), r.iter().sum::<f64>())
                    })
                    .unzip()
            })
            .collect();
        let (yearly, totals): (Vec<_>, Vec<_>) = per_trial.into_iter().unzip();
        let years = self.num_years();
        let series = policies
            .iter()
            .enumerate()
            .map(|(p, &policy)| PolicySeries {
                policy,
                years: (0..years)
                    .map(|y| Summary::of(yearly.iter().map(|t: &Vec<Vec<f64>>| t[p][y])))
                    .collect(),
                total: Summary::of(totals.iter().map(|t: &Vec<f64>| t[p])),
            })
            .collect();
        ExperimentResult {
            series: AggregateSeries {
                policies: series,
                trials: self.config.trials,
                seed: self.config.seed,
                months: self.config.months,
            },
            yearly,
            totals,
        }
    }
}

/// Mean and 95% half-width `1.96 s / √n` (zero for a single sample).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

impl Summary {
    pub fn of<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let half_width = if n > 1 {
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Z95 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, half_width, n }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySeries {
    pub policy: PolicyKind,
    /// One entry per complete year.
    pub years: Vec<Summary>,
    /// Sum of all monthly rewards over the horizon.
    pub total: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSeries {
    pub policies: Vec<PolicySeries>,
    pub trials: usize,
    pub seed: u64,
    pub months: usize,
}

impl AggregateSeries {
    pub fn get(&self, policy: PolicyKind) -> Option<&PolicySeries> {
        self.policies.iter().find(|p| p.policy == policy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub series: AggregateSeries,
    /// `[trial][policy][year]`
    pub yearly: Vec<Vec<Vec<f64>>>,
    /// `[trial][policy]`
    pub totals: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    C,
    R,
    Kappa,
    Xi,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::C => "C",
            SweepParameter::R => "r",
            SweepParameter::Kappa => "kappa",
            SweepParameter::Xi => "xi",
        }
    }

    pub fn default_values(&self) -> Vec<f64> {
        match self {
            SweepParameter::C => vec![1.0, 5.0, 20.0],
            SweepParameter::R => vec![0.0, 1.5, 3.0],
            SweepParameter::Kappa => vec![0.0, 0.0004, 0.0008, 0.0012],
            SweepParameter::Xi => vec![0.05, 0.1, 0.61],
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "C" | "c" => Ok(SweepParameter::C),
            "r" => Ok(SweepParameter::R),
            "kappa" => Ok(SweepParameter::Kappa),
            "xi" => Ok(SweepParameter::Xi),
            other => Err(SimError::Invalid(format!(
                "unknown sweep parameter {other:?} (expected C, r, kappa or xi)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub value: f64,
    pub result: ExperimentResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub entries: Vec<SweepEntry>,
}

/// Config and policies for one value of a sweep.
pub fn sweep_point(
    base: &SimConfig,
    parameter: SweepParameter,
    value: f64,
) -> Result<(SimConfig, Vec<PolicyKind>), SimError> {
    let mut cfg = base.clone();
    let mut policies = standard_policies(base.budget);
    match parameter {
        SweepParameter::C => {
            if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                return Err(SimError::Invalid(format!("C = {value} must be a positive integer")));
            }
            cfg.budget = value as u32;
            policies = standard_policies(cfg.budget);
        }
        SweepParameter::R => {
            cfg.investor.mistake_radius = value;
            policies.push(PolicyKind::InvestorOnly { with_mistakes: false });
        }
        SweepParameter::Kappa => {
            if !(value >= 0.0) {
                return Err(SimError::Invalid(format!("κ = {value} must be ≥ 0")));
            }
            cfg.investor.cost = value;
            cfg.months = KAPPA_SWEEP_MONTHS;
        }
        SweepParameter::Xi => {
            let (lo, hi) = (base.grid.theta_min(), base.grid.theta_max());
            cfg.advisor_grid = Some(RiskAversionGrid::new(lo, hi, value)?);
            cfg.grid = RiskAversionGrid::new(lo, hi, XI_SWEEP_INVESTOR_STEP)?;
        }
    }
    cfg.validate()?;
    Ok((cfg, policies))
}

pub fn sweep(base: &SimConfig, parameter: SweepParameter, values: &[f64]) -> Result<SweepResult, SimError> {
    if values.is_empty() {
        return Err(SimError::Invalid("sweep needs at least one value".into()));
    }
    let points = values
        .iter()
        .map(|&v| sweep_point(base, parameter, v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut entries = Vec::with_capacity(values.len());
    for (&value, (cfg, policies)) in values.iter().zip(points) {
        let sim = Simulator::new(cfg)?;
        entries.push(SweepEntry {
            value,
            result: sim.run_experiment(&policies),
        });
    }
    Ok(SweepResult { parameter, entries })
}
