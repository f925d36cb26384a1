//! Mean-risk utilities `u = E[X] - θ·D[X]` over portfolio return distributions.
//!
//! Three dispersion functionals are supported: variance, central lower
//! semideviation of order `p ≥ 1`, and the weighted mean deviation from the
//! left `α`-quantile,
//!
//! ```text
//! D[X] = E[ max{ (1-α)(q_α - X), α(X - q_α) } ],   q_α = inf{x : H(x) ≥ α}
//! ```
//!
//! For Gaussian returns, variance and the semideviations of order 1 and 2 have
//! closed forms. Other orders and every quantile level go through adaptive
//! Simpson quadrature on the standardized density; both functionals are
//! translation invariant and positively homogeneous, so `D[μ + σZ] = σ·D[Z]`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::market::{MarketError, MarketModel, ReturnDistribution, ReturnFamily};

/// Absolute tolerance for quadrature-backed functionals.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Truncation of the standard normal support used by the quadratures.
const TAIL_CUTOFF: f64 = 40.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("unsupported return family `{0}`")]
    UnsupportedFamily(String),
    #[error("semideviation exponent p = {0} must be ≥ 1")]
    InvalidExponent(f64),
    #[error("quantile level α = {0} must lie in (0, 1)")]
    InvalidLevel(f64),
    #[error("risk aversion θ = {0} must be > 0")]
    NonPositiveRiskAversion(f64),
    #[error("portfolio weight {0} outside [0, 1] (no short selling or leverage)")]
    WeightOutOfRange(f64),
    #[error("negative standard deviation {0}")]
    NegativeStd(f64),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Dispersion functional `D` of the mean-risk utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DispersionKind {
    #[default]
    Variance,
    Semideviation {
        p: f64,
    },
    QuantileDeviation {
        alpha: f64,
    },
}

impl DispersionKind {
    pub fn validate(&self) -> Result<(), RiskError> {
        match *self {
            Self::Variance => Ok(()),
            Self::Semideviation { p } if p >= 1.0 && p.is_finite() => Ok(()),
            Self::Semideviation { p } => Err(RiskError::InvalidExponent(p)),
            Self::QuantileDeviation { alpha } if alpha > 0.0 && alpha < 1.0 => Ok(()),
            Self::QuantileDeviation { alpha } => Err(RiskError::InvalidLevel(alpha)),
        }
    }

    /// Whether `D[a·X] = a²·D[X]` (variance) rather than `a·D[X]`.
    pub fn is_quadratic(&self) -> bool {
        matches!(self, Self::Variance)
    }
}

impl std::str::FromStr for ReturnFamily {
    type Err = RiskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(ReturnFamily::Gaussian),
            other => Err(RiskError::UnsupportedFamily(other.to_string())),
        }
    }
}

/// Value of the dispersion functional on `dist`.
pub fn dispersion(dist: &ReturnDistribution, kind: DispersionKind) -> Result<f64, RiskError> {
    kind.validate()?;
    if dist.std < 0.0 {
        return Err(RiskError::NegativeStd(dist.std));
    }
    match dist.family {
        ReturnFamily::Gaussian => {
            if dist.is_degenerate() {
                return Ok(0.0);
            }
            Ok(match kind {
                DispersionKind::Variance => dist.std * dist.std,
                DispersionKind::Semideviation { p } => dist.std * standard_semideviation(p),
                DispersionKind::QuantileDeviation { alpha } => {
                    dist.std * standard_quantile_deviation(alpha)
                }
            })
        }
    }
}

/// `E[X] - θ·D[X]`.
pub fn utility(
    theta: f64,
    dist: &ReturnDistribution,
    kind: DispersionKind,
) -> Result<f64, RiskError> {
    if !(theta > 0.0) {
        return Err(RiskError::NonPositiveRiskAversion(theta));
    }
    Ok(dist.mean - theta * dispersion(dist, kind)?)
}

/// Return of holding share `w` in the risky asset and `1 - w` in cash:
/// mean `w μ_s + (1 - w) r`, std `w σ_s`.
pub fn portfolio_distribution(
    model: &MarketModel,
    s: usize,
    w: f64,
) -> Result<ReturnDistribution, RiskError> {
    if !(0.0..=1.0).contains(&w) {
        return Err(RiskError::WeightOutOfRange(w));
    }
    let risky = model.risky_distribution(s)?;
    Ok(ReturnDistribution::gaussian(
        w * risky.mean + (1.0 - w) * model.risk_free_rate,
        w * risky.std,
    ))
}

/// `(E[(μ - X)_+^p])^{1/p}` for `X ~ N(μ, 1)`.
fn standard_semideviation(p: f64) -> f64 {
    if p == 1.0 {
        INV_SQRT_2PI
    } else if p == 2.0 {
        std::f64::consts::FRAC_1_SQRT_2
    } else {
        let moment = adaptive_simpson(
            &|z: f64| z.powf(p) * std_normal_pdf(z),
            0.0,
            TAIL_CUTOFF,
            QUADRATURE_TOLERANCE,
        );
        moment.powf(1.0 / p)
    }
}

/// Weighted mean deviation from the `α`-quantile of `N(0, 1)`.
fn standard_quantile_deviation(alpha: f64) -> f64 {
    let q = standard_normal_quantile(alpha);
    let lower = q - TAIL_CUTOFF;
    let upper = q + TAIL_CUTOFF;
    // the integrand has a kink at q; integrate each side separately
    let left = adaptive_simpson(
        &|z: f64| (1.0 - alpha) * (q - z) * std_normal_pdf(z),
        lower,
        q,
        QUADRATURE_TOLERANCE / 2.0,
    );
    let right = adaptive_simpson(
        &|z: f64| alpha * (z - q) * std_normal_pdf(z),
        q,
        upper,
        QUADRATURE_TOLERANCE / 2.0,
    );
    left + right
}

pub(crate) fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub(crate) fn standard_normal_quantile(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(alpha)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 0)
}

/// Levels always subdivided, so narrow peaks are not skipped.
const SIMPSON_MIN_DEPTH: u32 = 8;
const SIMPSON_MAX_DEPTH: u32 = 60;

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth >= SIMPSON_MAX_DEPTH || (depth >= SIMPSON_MIN_DEPTH && delta.abs() <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth + 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth + 1)
}

/// Per-state cache for evaluating `u(θ, s, w)` on the risky/risk-free blend
/// without rebuilding distributions.
///
/// The blend `X_w = r + w(X - r)` has `D[X_w] = w²·D[X]` under variance and
/// `w·D[X]` under the other two kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanRiskEvaluator {
    kind: DispersionKind,
    risk_free: f64,
    excess_mean: Vec<f64>,
    unit_dispersion: Vec<f64>,
}

impl MeanRiskEvaluator {
    pub fn new(model: &MarketModel, kind: DispersionKind) -> Result<Self, RiskError> {
        kind.validate()?;
        model.validate().map_err(MarketError::from)?;
        let n = model.num_states();
        let mut unit_dispersion = Vec::with_capacity(n);
        for s in 0..n {
            unit_dispersion.push(dispersion(&model.risky_distribution(s)?, kind)?);
        }
        Ok(Self {
            kind,
            risk_free: model.risk_free_rate,
            excess_mean: (0..n)
                .map(|s| model.risky_mean[s] - model.risk_free_rate)
                .collect(),
            unit_dispersion,
        })
    }

    pub fn kind(&self) -> DispersionKind {
        self.kind
    }

    pub fn num_states(&self) -> usize {
        self.excess_mean.len()
    }

    pub fn mean(&self, s: usize, w: f64) -> f64 {
        self.risk_free + w * self.excess_mean[s]
    }

    pub fn dispersion(&self, s: usize, w: f64) -> f64 {
        if self.kind.is_quadratic() {
            w * w * self.unit_dispersion[s]
        } else {
            w * self.unit_dispersion[s]
        }
    }

    /// `u(θ, s, w)`. Inputs are assumed valid (checked in debug builds).
    pub fn utility(&self, theta: f64, s: usize, w: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&w));
        self.mean(s, w) - theta * self.dispersion(s, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn variance_is_sigma_squared() {
        let d = ReturnDistribution::gaussian(0.01, 0.04);
        assert_abs_diff_eq!(dispersion(&d, DispersionKind::Variance).unwrap(), 0.0016, epsilon = 1e-18);
    }

    #[test]
    fn closed_form_semideviations() {
        let d = ReturnDistribution::gaussian(-0.3, 2.5);
        let p1 = dispersion(&d, DispersionKind::Semideviation { p: 1.0 }).unwrap();
        assert_abs_diff_eq!(p1, 2.5 / (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-15);
        let p2 = dispersion(&d, DispersionKind::Semideviation { p: 2.0 }).unwrap();
        assert_abs_diff_eq!(p2, 2.5 / 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        // quadrature route against the closed form at p = 1, 2
        for p in [1.0, 2.0] {
            let quad = adaptive_simpson(
                &|z: f64| z.powf(p) * std_normal_pdf(z),
                0.0,
                TAIL_CUTOFF,
                QUADRATURE_TOLERANCE,
            )
            .powf(1.0 / p);
            assert_abs_diff_eq!(quad, standard_semideviation(p), epsilon = 1e-9);
        }
        // E[Z_+^3] = 2^{1/2} Γ(2) / √π
        let m3 = (2f64.sqrt() / std::f64::consts::PI.sqrt()).powf(1.0 / 3.0);
        assert_abs_diff_eq!(standard_semideviation(3.0), m3, epsilon = 1e-9);
    }

    #[test]
    fn median_deviation_is_half_mean_absolute_deviation() {
        let sigma = 0.04;
        let d = ReturnDistribution::gaussian(0.005, sigma);
        let q = dispersion(&d, DispersionKind::QuantileDeviation { alpha: 0.5 }).unwrap();
        assert_abs_diff_eq!(q, sigma * 0.5 * (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-11);
    }

    #[test]
    fn quantile_deviation_equals_sigma_times_density_at_quantile() {
        // E[(1-α)(q-Z)_+ + α(Z-q)_+] = φ(z_α) for the standard normal
        for alpha in [0.01, 0.05, 0.2, 0.5, 0.8, 0.99] {
            let z = standard_normal_quantile(alpha);
            assert_abs_diff_eq!(standard_quantile_deviation(alpha), std_normal_pdf(z), epsilon = 1e-9);
        }
    }

    #[test]
    fn degenerate_distribution_has_zero_dispersion() {
        let d = ReturnDistribution::degenerate(0.002);
        for kind in [
            DispersionKind::Variance,
            DispersionKind::Semideviation { p: 1.5 },
            DispersionKind::QuantileDeviation { alpha: 0.1 },
        ] {
            assert_eq!(dispersion(&d, kind).unwrap(), 0.0);
            assert_eq!(utility(7.0, &d, kind).unwrap(), 0.002);
        }
    }

    #[test]
    fn invalid_parameters() {
        let d = ReturnDistribution::gaussian(0.0, 1.0);
        assert_eq!(
            dispersion(&d, DispersionKind::Semideviation { p: 0.5 }),
            Err(RiskError::InvalidExponent(0.5))
        );
        assert_eq!(
            dispersion(&d, DispersionKind::QuantileDeviation { alpha: 1.0 }),
            Err(RiskError::InvalidLevel(1.0))
        );
        assert_eq!(
            utility(0.0, &d, DispersionKind::Variance),
            Err(RiskError::NonPositiveRiskAversion(0.0))
        );
        assert!(matches!(
            "student-t".parse::<ReturnFamily>(),
            Err(RiskError::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn medium_state_full_risky_utility() {
        let m = MarketModel::calibrated();
        let d = portfolio_distribution(&m, 1, 1.0).unwrap();
        let u = utility(2.2, &d, DispersionKind::Variance).unwrap();
        assert_abs_diff_eq!(u, 0.00875 - 2.2 * 0.0016, epsilon = 1e-15);
        assert_abs_diff_eq!(u, 0.00523, epsilon = 1e-15);
    }

    #[test]
    fn utility_is_decreasing_in_theta() {
        let d = ReturnDistribution::gaussian(0.01, 0.05);
        for kind in [
            DispersionKind::Variance,
            DispersionKind::Semideviation { p: 1.0 },
            DispersionKind::QuantileDeviation { alpha: 0.3 },
        ] {
            assert!(utility(2.0, &d, kind).unwrap() > utility(2.1, &d, kind).unwrap());
        }
    }

    #[test]
    fn portfolio_blends() {
        let m = MarketModel::calibrated();
        for s in 0..3 {
            let cash = portfolio_distribution(&m, s, 0.0).unwrap();
            assert_eq!(cash.mean, 0.002);
            assert_eq!(cash.std, 0.0);
        }
        let low = portfolio_distribution(&m, 0, 1.0).unwrap();
        assert_abs_diff_eq!(low.mean, 0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(low.std, 0.03, epsilon = 1e-15);
        let half = portfolio_distribution(&m, 2, 0.5).unwrap();
        assert_abs_diff_eq!(half.mean, 0.00725, epsilon = 1e-15);
        assert_abs_diff_eq!(half.std, 0.025, epsilon = 1e-15);
        assert_eq!(
            portfolio_distribution(&m, 0, 1.2),
            Err(RiskError::WeightOutOfRange(1.2))
        );
        assert_eq!(
            portfolio_distribution(&m, 0, -0.1),
            Err(RiskError::WeightOutOfRange(-0.1))
        );
    }

    #[test]
    fn evaluator_matches_direct_utility() {
        let m = MarketModel::calibrated();
        for kind in [
            DispersionKind::Variance,
            DispersionKind::Semideviation { p: 1.0 },
            DispersionKind::Semideviation { p: 2.7 },
            DispersionKind::QuantileDeviation { alpha: 0.05 },
        ] {
            let eval = MeanRiskEvaluator::new(&m, kind).unwrap();
            for s in 0..3 {
                for w in [0.0, 0.0001, 0.25, 0.5273, 1.0] {
                    for theta in [2.2, 4.0, 8.3] {
                        let direct =
                            utility(theta, &portfolio_distribution(&m, s, w).unwrap(), kind)
                                .unwrap();
                        assert_abs_diff_eq!(eval.utility(theta, s, w), direct, epsilon = 1e-15);
                    }
                }
            }
        }
    }
}
