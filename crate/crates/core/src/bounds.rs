//! Solicitation budgets and step-count bounds, plus a Monte Carlo estimate of
//! the true sample-complexity function `f(s, δ)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::choice::{ChoiceError, ChoiceTables, InvestorProfile, RiskAversionGrid};

/// Largest solicitation count the empirical search will try.
pub const EMPIRICAL_CAP: u64 = 100_000;
/// Fewest replicates accepted by the empirical search.
pub const MIN_REPLICATES: usize = 1_000;

const CHUNK: usize = 1_024;
const BLOCK: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("{name} = {value} is outside its domain ({domain})")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("need at least {MIN_REPLICATES} replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("success rate {achieved} still below {target} after {EMPIRICAL_CAP} solicitations")]
    NotReached { target: f64, achieved: f64 },
    #[error(transparent)]
    Choice(#[from] ChoiceError),
}

fn check(name: &'static str, value: f64, ok: bool, domain: &'static str) -> Result<(), BoundsError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::Domain { name, value, domain })
    }
}

fn check_delta(delta: f64) -> Result<(), BoundsError> {
    check("δ", delta, delta > 0.0 && delta < 1.0, "0 < δ < 1")
}

/// Ceiling that ignores floating-point noise just above an integer.
fn ceil(x: f64) -> u64 {
    let c = (x - 1e-9 * x.abs().max(1.0)).ceil();
    c.max(0.0) as u64
}

/// Chebyshev budget `⌈1 + 4σ² / (δ ξ²)⌉`.
pub fn chebyshev_budget(sigma2: f64, xi: f64, delta: f64) -> Result<u64, BoundsError> {
    check("σ²", sigma2, sigma2 >= 0.0, "σ² ≥ 0")?;
    check("ξ", xi, xi > 0.0, "ξ > 0")?;
    check_delta(delta)?;
    Ok(ceil(1.0 + 4.0 * sigma2 / (delta * xi * xi)))
}

/// Hoeffding budget for mistakes with range `R`, in two readings:
/// `(⌈(2R/ξ²) ln(2/δ)⌉, ⌈(2R²/ξ²) ln(2/δ)⌉)`. The second follows from the
/// exponent `Nξ²/(2R²)` of Hoeffding's inequality.
pub fn hoeffding_budget(range: f64, xi: f64, delta: f64) -> Result<(u64, u64), BoundsError> {
    check("R", range, range >= 0.0, "R ≥ 0")?;
    check("ξ", xi, xi > 0.0, "ξ > 0")?;
    check_delta(delta)?;
    let log = (2.0 / delta).ln();
    Ok((
        ceil(2.0 * range / (xi * xi) * log),
        ceil(2.0 * range * range / (xi * xi) * log),
    ))
}

/// Order bound on the number of non-ε-optimal steps,
/// `⌈τ² r_max ΣC / ε · ln(1/δ)⌉`, with unit constant.
pub fn pac_step_bound(
    tau: usize,
    r_max: f64,
    total_c: u64,
    epsilon: f64,
    delta: f64,
) -> Result<u64, BoundsError> {
    check("τ", tau as f64, tau > 0, "τ ≥ 1")?;
    check("r_max", r_max, r_max > 0.0, "r_max > 0")?;
    check("ΣC", total_c as f64, total_c > 0, "ΣC ≥ 1")?;
    check("ε", epsilon, epsilon > 0.0, "ε > 0")?;
    check_delta(delta)?;
    let t = tau as f64;
    Ok(ceil(t * t * r_max * total_c as f64 / epsilon * (1.0 / delta).ln()))
}

/// The generic PAC-MDP step bound `τ⁶ r_max |S| |A| / ε²`.
pub fn generic_step_bound(tau: usize, r_max: f64, num_states: usize, num_actions: usize, epsilon: f64) -> f64 {
    (tau as f64).powi(6) * r_max * (num_states * num_actions) as f64 / (epsilon * epsilon)
}

/// Truncation horizon `⌈ln(r_max / (ε(1-γ))) / (1-γ)⌉`, at least 1.
pub fn discounted_horizon(gamma: f64, epsilon: f64, r_max: f64) -> Result<u64, BoundsError> {
    check("γ", gamma, (0.0..1.0).contains(&gamma), "0 ≤ γ < 1")?;
    check("ε", epsilon, epsilon > 0.0, "ε > 0")?;
    check("r_max", r_max, r_max >= 0.0, "r_max ≥ 0")?;
    let x = r_max / (epsilon * (1.0 - gamma));
    if x <= 1.0 {
        return Ok(1);
    }
    Ok(ceil(x.ln() / (1.0 - gamma)).max(1))
}

/// Smallest `n` such that at least a `1 - δ` fraction of replicates snap
/// their `n`-observation estimate to `θ_s`.
pub fn empirical_sample_complexity<R: Rng + ?Sized>(
    profile: &InvestorProfile,
    grid: &RiskAversionGrid,
    tables: &ChoiceTables,
    s: usize,
    delta: f64,
    replicates: usize,
    rng: &mut R,
) -> Result<u64, BoundsError> {
    empirical_sample_complexities(profile, grid, tables, s, &[delta], replicates, rng)
        .map(|v| v[0])
}

/// [`empirical_sample_complexity`] for several `δ` from one set of runs.
pub fn empirical_sample_complexities<R: Rng + ?Sized>(
    profile: &InvestorProfile,
    grid: &RiskAversionGrid,
    tables: &ChoiceTables,
    s: usize,
    deltas: &[f64],
    replicates: usize,
    rng: &mut R,
) -> Result<Vec<u64>, BoundsError> {
    for &d in deltas {
        check_delta(d)?;
    }
    if replicates < MIN_REPLICATES {
        return Err(BoundsError::TooFewReplicates(replicates));
    }
    let support = profile.mistake_support(grid, s)?;
    let center = support.center as i64;

    // Each replicate keeps the sum of inferred grid indices; the estimate
    // snaps to θ_s iff center - 1/2 ≤ sum/n < center + 1/2 (ties go up).
    struct Chunk {
        rng: ChaCha8Rng,
        sums: Vec<i64>,
    }
    let mut chunks: Vec<Chunk> = (0..replicates.div_ceil(CHUNK))
        .map(|c| Chunk {
            rng: ChaCha8Rng::seed_from_u64(rng.random()),
            sums: vec![0; CHUNK.min(replicates - c * CHUNK)],
        })
        .collect();

    let mut answers: Vec<Option<u64>> = vec![None; deltas.len()];
    let mut best_rate = 0.0;
    let mut n0: u64 = 0;
    while n0 < EMPIRICAL_CAP && answers.iter().any(Option::is_none) {
        let block = BLOCK.min((EMPIRICAL_CAP - n0) as usize);
        let hits: Vec<u64> = chunks
            .par_iter_mut()
            .map(|chunk| {
                let mut hits = vec![0u64; block];
                for (b, h) in hits.iter_mut().enumerate() {
                    let n = (n0 + b as u64 + 1) as i64;
                    for sum in chunk.sums.iter_mut() {
                        let w = tables.g_index(support.draw(&mut chunk.rng), s);
                        *sum += tables.g_inverse_index(w, s) as i64;
                        if 2 * *sum >= (2 * center - 1) * n && 2 * *sum < (2 * center + 1) * n {
                            *h += 1;
                        }
                    }
                }
                hits
            })
            .reduce(
                || vec![0; block],
                |mut a, b| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        for (b, &h) in hits.iter().enumerate() {
            let rate = h as f64 / replicates as f64;
            best_rate = f64::max(best_rate, rate);
            for (ans, &d) in answers.iter_mut().zip(deltas) {
                if ans.is_none() && rate >= 1.0 - d {
                    *ans = Some(n0 + b as u64 + 1);
                }
            }
        }
        n0 += block as u64;
    }
    answers
        .into_iter()
        .zip(deltas)
        .map(|(a, &d)| {
            a.ok_or(BoundsError::NotReached {
                target: 1.0 - d,
                achieved: best_rate,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::{build_tables, WeightGrid};
    use crate::market::MarketModel;
    use crate::risk::DispersionKind;

    fn tables() -> ChoiceTables {
        build_tables(
            &MarketModel::calibrated(),
            &RiskAversionGrid::calibrated(),
            &WeightGrid::default(),
            DispersionKind::Variance,
        )
        .unwrap()
    }

    #[test]
    fn chebyshev_examples() {
        assert_eq!(chebyshev_budget(0.0, 0.1, 0.3).unwrap(), 1);
        assert_eq!(chebyshev_budget(0.04, 0.1, 0.5).unwrap(), 33);
        assert_eq!(chebyshev_budget(0.04, 0.1, 0.1 / 3.0).unwrap(), 481);
        assert!(chebyshev_budget(-0.1, 0.1, 0.5).is_err());
        assert!(chebyshev_budget(0.04, 0.0, 0.5).is_err());
        assert!(chebyshev_budget(0.04, 0.1, 1.0).is_err());
    }

    #[test]
    fn hoeffding_examples() {
        assert_eq!(hoeffding_budget(0.0, 0.1, 0.2).unwrap(), (0, 0));
        // 120 ln 60 = 491.3 and 72 ln 60 = 294.8
        assert_eq!(hoeffding_budget(0.6, 0.1, 0.1 / 3.0).unwrap(), (492, 295));
        assert!(hoeffding_budget(0.6, 0.1, 0.0).is_err());
    }

    #[test]
    fn hoeffding_grows_logarithmically() {
        let coef_stated = 2.0 * 0.6 / 0.01;
        let coef_proof = 2.0 * 0.36 / 0.01;
        let (a1, b1) = hoeffding_budget(0.6, 0.1, 0.2).unwrap();
        let (a2, b2) = hoeffding_budget(0.6, 0.1, 0.1).unwrap();
        let step = 2f64.ln();
        assert!((a2 as f64 - a1 as f64 - coef_stated * step).abs() <= 1.0);
        assert!((b2 as f64 - b1 as f64 - coef_proof * step).abs() <= 1.0);
    }

    #[test]
    fn pac_examples() {
        // 27000 ln 10 = 62169.76
        assert_eq!(pac_step_bound(12, 0.0125, 15, 0.001, 0.1).unwrap(), 62170);
        let one = pac_step_bound(12, 0.0125, 15, 0.001, 0.1).unwrap() as f64;
        let two = pac_step_bound(12, 0.0125, 30, 0.001, 0.1).unwrap() as f64;
        assert!((two - 2.0 * one).abs() <= 1.0);
        assert!(generic_step_bound(12, 0.0125, 3, 10_001, 0.001) > one);
        assert!(pac_step_bound(0, 0.0125, 15, 0.001, 0.1).is_err());
    }

    #[test]
    fn horizon_examples() {
        assert_eq!(discounted_horizon(0.99, 0.001, 0.01).unwrap(), 691);
        assert_eq!(discounted_horizon(0.0, 0.001, 0.01).unwrap(), 3);
        assert_eq!(discounted_horizon(0.5, 1.0, 0.01).unwrap(), 1);
        assert!(discounted_horizon(1.0, 0.001, 0.01).is_err());
        let mut prev = 0;
        for g in [0.0, 0.5, 0.9, 0.95, 0.99] {
            let t = discounted_horizon(g, 0.001, 0.01).unwrap();
            assert!(t >= prev);
            prev = t;
            assert!(g.powi(t as i32) * 0.01 / (1.0 - g) <= 0.001 + 1e-15);
        }
    }

    #[test]
    fn empirical_without_mistakes_is_one() {
        let t = tables();
        let grid = RiskAversionGrid::calibrated();
        let p = InvestorProfile {
            theta_true: vec![5.2; 3],
            mistake_radius: 0.0,
            cost: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in 0..3 {
            assert_eq!(
                empirical_sample_complexity(&p, &grid, &t, s, 0.1, 1_000, &mut rng).unwrap(),
                1
            );
        }
        assert_eq!(
            empirical_sample_complexity(&p, &grid, &t, 0, 0.1, 999, &mut rng),
            Err(BoundsError::TooFewReplicates(999))
        );
    }

    #[test]
    fn empirical_respects_chebyshev_and_is_monotone() {
        let t = tables();
        let grid = RiskAversionGrid::calibrated();
        let p = InvestorProfile {
            theta_true: vec![5.2; 3],
            mistake_radius: 0.3,
            cost: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let deltas = [0.01, 0.05, 0.1, 0.2, 0.4];
        let n = empirical_sample_complexities(&p, &grid, &t, 1, &deltas, 10_000, &mut rng).unwrap();
        assert!(n.windows(2).all(|w| w[0] >= w[1]), "{n:?}");
        // 1 + 0.16 / 0.001
        assert_eq!(chebyshev_budget(0.04, 0.1, 0.1).unwrap(), 161);
        assert!(n[2] <= 161);
    }

    #[test]
    fn empirical_is_reproducible() {
        let t = tables();
        let grid = RiskAversionGrid::calibrated();
        let p = InvestorProfile {
            theta_true: vec![5.2; 3],
            mistake_radius: 1.0,
            cost: 0.0,
        };
        let a = empirical_sample_complexity(&p, &grid, &t, 0, 0.1, 2_000, &mut ChaCha8Rng::seed_from_u64(9));
        let b = empirical_sample_complexity(&p, &grid, &t, 0, 0.1, 2_000, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }
}
