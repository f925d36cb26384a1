//! Monte Carlo and quadrature oracles, written independently of the library.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use robo_advisor::market::{MarketModel, ReturnDistribution};
use robo_advisor::risk::{dispersion, DispersionKind};

const SAMPLES: usize = 10_000_000;

/// Mean and standard error of `f` over the samples.
fn mc<F: Fn(f64) -> f64>(xs: &[f64], f: F) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mut s, mut s2) = (0.0, 0.0);
    for &x in xs {
        let v = f(x);
        s += v;
        s2 += v * v;
    }
    let mean = s / n;
    let var = (s2 / n - mean * mean) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn gaussian_samples(mean: f64, std: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..SAMPLES)
        .map(|_| mean + std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[test]
fn dispersions_agree_with_monte_carlo() {
    let pairs = [(0.005, 0.03), (0.0125, 0.05), (-0.01, 0.1)];
    for (i, &(mu, sd)) in pairs.iter().enumerate() {
        let xs = gaussian_samples(mu, sd, 100 + i as u64);
        let dist = ReturnDistribution::gaussian(mu, sd);

        let (m, se) = mc(&xs, |x| (x - mu).powi(2));
        let d = dispersion(&dist, DispersionKind::Variance).unwrap();
        assert!((m - d).abs() <= 3.0 * se, "variance ({mu}, {sd}): {m} vs {d}");

        for p in [1.0, 1.5, 2.0, 3.0] {
            let (m, se) = mc(&xs, |x| (mu - x).max(0.0).powf(p));
            let d = dispersion(&dist, DispersionKind::Semideviation { p }).unwrap();
            assert!((m - d.powf(p)).abs() <= 3.0 * se, "semideviation p={p} ({mu}, {sd}): {m} vs {}", d.powf(p));
        }

        for alpha in [0.05, 0.25, 0.5, 0.9] {
            let q = Normal::new(mu, sd).unwrap().inverse_cdf(alpha);
            let (m, se) = mc(&xs, |x| ((1.0 - alpha) * (q - x)).max(alpha * (x - q)));
            let d = dispersion(&dist, DispersionKind::QuantileDeviation { alpha }).unwrap();
            assert!((m - d).abs() <= 3.0 * se, "quantile deviation α={alpha} ({mu}, {sd}): {m} vs {d}");
        }
    }
}

#[test]
fn first_order_semideviation_relative_error() {
    let (mu, sd) = (0.00875, 0.04);
    let xs = gaussian_samples(mu, sd, 7);
    let (m, _) = mc(&xs, |x| (mu - x).max(0.0));
    let d = dispersion(&ReturnDistribution::gaussian(mu, sd), DispersionKind::Semideviation { p: 1.0 }).unwrap();
    assert!(((m - d) / d).abs() < 1e-3, "{m} vs {d}");
    assert!((d - sd / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut sum = f(a) + f(b);
    for i in 1..panels {
        let x = a + i as f64 * h;
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    sum * h / 3.0
}

/// Tail expectation of a loss `L ~ N(μ, σ)`: `(1/α) ∫_{VaR}^∞ x f(x) dx`,
/// against `E[L] + D_{1-α}[L] / α`.
#[test]
fn cvar_identity_holds_for_gaussian_losses() {
    for &(mu, sd) in &[(0.0, 1.0), (-0.005, 0.03), (0.01, 0.05)] {
        let normal = Normal::new(mu, sd).unwrap();
        let density = |x: f64| {
            let z = (x - mu) / sd;
            (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
        };
        for alpha in [0.01, 0.05, 0.1, 0.25, 0.5] {
            let var = normal.inverse_cdf(1.0 - alpha);
            let cvar = simpson(|x| x * density(x), var, mu + 40.0 * sd, 200_000) / alpha;
            let d = dispersion(
                &ReturnDistribution::gaussian(mu, sd),
                DispersionKind::QuantileDeviation { alpha: 1.0 - alpha },
            )
            .unwrap();
            let identity = mu + d / alpha;
            assert!((cvar - identity).abs() < 1e-6, "α = {alpha}: {cvar} vs {identity}");
        }
    }
}

/// One step from the stationary law lands in the stationary law, so paired
/// draws give independent samples of it.
#[test]
fn transitions_preserve_the_stationary_law() {
    let random = MarketModel::new(
        vec!["a".into(), "b".into(), "c".into(), "d".into()],
        vec![
            vec![0.5, 0.2, 0.2, 0.1],
            vec![0.1, 0.6, 0.2, 0.1],
            vec![0.3, 0.3, 0.3, 0.1],
            vec![0.25, 0.25, 0.25, 0.25],
        ],
        0.002,
        vec![0.005, 0.006, 0.007, 0.008],
        vec![0.03, 0.03, 0.03, 0.03],
    )
    .unwrap();
    for (seed, model) in [(11, MarketModel::calibrated()), (12, random)] {
        let pi = model.stationary_distribution();
        let n = model.num_states();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0u64; n];
        let draws = 1_000_000;
        for _ in 0..draws {
            let u: f64 = rng.random();
            let mut s = n - 1;
            let mut acc = 0.0;
            for (j, &p) in pi.iter().enumerate() {
                acc += p;
                if u < acc {
                    s = j;
                    break;
                }
            }
            counts[model.sample_next_state(s, &mut rng).unwrap()] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(&pi)
            .map(|(&c, &p)| {
                let e = p * draws as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let critical = ChiSquared::new((n - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(chi2 < critical, "χ² = {chi2} ≥ {critical} for {counts:?}");
    }
}
